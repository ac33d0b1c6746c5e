//! Coordinate space of a Galerkin truncation: one C^n with two Gram
//! matrices.  `gram_h` induces the pivot-space inner product, `gram_v` the
//! form-domain inner product; duality pairings identify V' with the same
//! coordinates through `gram_h`.

use std::sync::Arc;

use nalgebra::{Cholesky, SymmetricEigen};

use crate::error::{Error, Result};
use crate::{c, CMat, CVec, C64};

/// Relative tolerance for "is Hermitian" checks on Gram matrices.
const HERM_TOL: f64 = 1e-12;

#[derive(Clone)]
pub struct GalerkinSpace {
    dim: usize,
    gram_h: CMat,
    gram_v: CMat,
    gram_h_inv: CMat,
    sqrt_h: CMat,
    sqrt_h_inv: CMat,
    sqrt_v: CMat,
    sqrt_v_inv: CMat,
    /// c with ||u||_H <= c ||u||_V for every u.
    embed_const: f64,
}

impl std::fmt::Debug for GalerkinSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GalerkinSpace")
            .field("dim", &self.dim)
            .field("embed_const", &self.embed_const)
            .finish()
    }
}

fn hermitian_defect(m: &CMat) -> f64 {
    let d = m - m.adjoint();
    d.norm() / m.norm().max(f64::MIN_POSITIVE)
}

/// Hermitian principal square root and its inverse, by eigendecomposition.
/// Fails when an eigenvalue is not strictly positive relative to the largest.
fn hermitian_sqrt_pair(m: &CMat, name: &str) -> Result<(CMat, CMat)> {
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    if max <= 0.0 {
        return Err(Error::invalid(format!("{name} is not positive definite")));
    }
    let floor = max * 1e-14;
    for &l in eig.eigenvalues.iter() {
        if l <= floor {
            return Err(Error::invalid(format!(
                "{name} is not (numerically) positive definite: eigenvalue {l:.3e} vs max {max:.3e}"
            )));
        }
    }
    let u = &eig.eigenvectors;
    let s = CMat::from_diagonal(&eig.eigenvalues.map(|l| c(l.sqrt())));
    let si = CMat::from_diagonal(&eig.eigenvalues.map(|l| c(1.0 / l.sqrt())));
    Ok((u * s * u.adjoint(), u * si * u.adjoint()))
}

impl GalerkinSpace {
    /// Build a space from its two Gram matrices.  Both must be Hermitian
    /// positive definite of the same dimension; the embedding constant is
    /// computed, not declared.
    pub fn new(gram_h: CMat, gram_v: CMat) -> Result<Arc<Self>> {
        if !gram_h.is_square() || !gram_v.is_square() || gram_h.nrows() != gram_v.nrows() {
            return Err(Error::invalid("Gram matrices must be square and of equal size"));
        }
        let dim = gram_h.nrows();
        if dim == 0 {
            return Err(Error::invalid("zero-dimensional space"));
        }
        if hermitian_defect(&gram_h) > HERM_TOL {
            return Err(Error::invalid("gram_h is not Hermitian"));
        }
        if hermitian_defect(&gram_v) > HERM_TOL {
            return Err(Error::invalid("gram_v is not Hermitian"));
        }
        // symmetrize exactly so later adjoint-based identities hold to rounding
        let gram_h = (&gram_h + gram_h.adjoint()) * c(0.5);
        let gram_v = (&gram_v + gram_v.adjoint()) * c(0.5);

        let (sqrt_h, sqrt_h_inv) = hermitian_sqrt_pair(&gram_h, "gram_h")?;
        let (sqrt_v, sqrt_v_inv) = hermitian_sqrt_pair(&gram_v, "gram_v")?;
        let gram_h_inv = Cholesky::new(gram_h.clone())
            .ok_or_else(|| Error::invalid("gram_h has no Cholesky factorization"))?
            .inverse();

        // largest generalized eigenvalue of (gram_h, gram_v)
        let m = &sqrt_v_inv * &gram_h * &sqrt_v_inv;
        let m = (&m + m.adjoint()) * c(0.5);
        let eig = SymmetricEigen::new(m);
        let lmax = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let embed_const = lmax.max(0.0).sqrt();

        Ok(Arc::new(GalerkinSpace {
            dim,
            gram_h,
            gram_v,
            gram_h_inv,
            sqrt_h,
            sqrt_h_inv,
            sqrt_v,
            sqrt_v_inv,
            embed_const,
        }))
    }

    /// Euclidean pivot pair: both Gram matrices the identity.
    pub fn euclidean(dim: usize) -> Result<Arc<Self>> {
        Self::new(CMat::identity(dim, dim), CMat::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn gram_h(&self) -> &CMat {
        &self.gram_h
    }
    pub fn gram_v(&self) -> &CMat {
        &self.gram_v
    }
    pub fn gram_h_inv(&self) -> &CMat {
        &self.gram_h_inv
    }
    pub fn sqrt_h(&self) -> &CMat {
        &self.sqrt_h
    }
    pub fn sqrt_h_inv(&self) -> &CMat {
        &self.sqrt_h_inv
    }
    pub fn sqrt_v(&self) -> &CMat {
        &self.sqrt_v
    }
    pub fn sqrt_v_inv(&self) -> &CMat {
        &self.sqrt_v_inv
    }
    /// c with ||u||_H <= c ||u||_V.
    pub fn embed_const(&self) -> f64 {
        self.embed_const
    }

    pub fn h_inner(&self, u: &CVec, v: &CVec) -> C64 {
        (v.adjoint() * &self.gram_h * u)[(0, 0)]
    }
    pub fn h_norm(&self, u: &CVec) -> f64 {
        self.h_inner(u, u).re.max(0.0).sqrt()
    }
    pub fn v_inner(&self, u: &CVec, v: &CVec) -> C64 {
        (v.adjoint() * &self.gram_v * u)[(0, 0)]
    }
    pub fn v_norm(&self, u: &CVec) -> f64 {
        self.v_inner(u, u).re.max(0.0).sqrt()
    }
    /// Norm of the functional [h | . ]_H on V, i.e. the V'-norm of an
    /// H-identified coordinate vector.
    pub fn vdual_norm(&self, h: &CVec) -> f64 {
        (&self.sqrt_v_inv * &self.gram_h * h).norm()
    }

    /// Spectral norm (largest singular value).
    pub fn spectral_norm(m: &CMat) -> f64 {
        if m.iter().all(|z| z.norm_sqr() == 0.0) {
            return 0.0;
        }
        m.clone().singular_values()[0]
    }

    /// Operator norm on H of a matrix acting on coordinates.
    pub fn opnorm_h(&self, m: &CMat) -> f64 {
        Self::spectral_norm(&(&self.sqrt_h * m * &self.sqrt_h_inv))
    }
    /// Operator norm H -> V.
    pub fn opnorm_h_to_v(&self, m: &CMat) -> f64 {
        Self::spectral_norm(&(&self.sqrt_v * m * &self.sqrt_h_inv))
    }
    /// Operator norm V' -> H (V' in the H-identified coordinates).
    pub fn opnorm_vdual_to_h(&self, m: &CMat) -> f64 {
        // ||h||_{V'} = ||W h|| with W = gram_v^{-1/2} gram_h
        Self::spectral_norm(&(&self.sqrt_h * m * &self.gram_h_inv * &self.sqrt_v))
    }
    /// Operator norm on V' of a coordinate matrix.
    pub fn opnorm_vdual(&self, m: &CMat) -> f64 {
        Self::spectral_norm(&(&self.sqrt_v_inv * &self.gram_h * m * &self.gram_h_inv * &self.sqrt_v))
    }
    /// V -> V' norm of a sesquilinear-form matrix F, i.e. the best constant in
    /// |v^* F u| <= c ||u||_V ||v||_V.
    pub fn form_dual_norm(&self, f: &CMat) -> f64 {
        Self::spectral_norm(&(&self.sqrt_v_inv * f * &self.sqrt_v_inv))
    }

    /// Coordinates of the H-orthonormal representation of an operator matrix:
    /// B = gram_h^{1/2} A gram_h^{-1/2}.  H-norms of A equal 2-norms of B and
    /// H-adjoints become ordinary conjugate transposes.
    pub fn orthonormalize_h(&self, a: &CMat) -> CMat {
        &self.sqrt_h * a * &self.sqrt_h_inv
    }
}
