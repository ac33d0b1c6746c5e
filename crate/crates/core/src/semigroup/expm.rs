//! Matrix exponential and cached semigroup propagators.
//!
//! General matrices go through scaling-and-squaring with diagonal Pade
//! approximants (degrees 3/5/7/9/13 chosen by 1-norm thresholds).  Operators
//! that are self-adjoint or normal in the H inner product take a spectral
//! route instead; `Propagator` picks the route once per operator and memoizes
//! repeated step sizes for the general route.

use nalgebra::SymmetricEigen;

use crate::{c, CMat, CVec, C64};

use super::schur::complex_schur;
use super::OperatorH;

/// 1-norm thresholds for the Pade degrees (double precision).
const THETA_3: f64 = 1.495585217958292e-2;
const THETA_5: f64 = 2.539_398_330_063_23e-1;
const THETA_7: f64 = 9.504178996162932e-1;
const THETA_9: f64 = 2.097847961257068e0;
const THETA_13: f64 = 5.371920351148152e0;

fn one_norm(m: &CMat) -> f64 {
    let mut best = 0.0f64;
    for j in 0..m.ncols() {
        let s: f64 = m.column(j).iter().map(|z| z.norm()).sum();
        best = best.max(s);
    }
    best
}

fn pade_from_even_odd(u: CMat, v: CMat) -> CMat {
    // r = (v - u)^{-1} (v + u)
    let denom = &v - &u;
    let numer = &v + &u;
    denom
        .lu()
        .solve(&numer)
        .expect("Pade denominator is singular; scaling should have prevented this")
}

fn pade_low(a: &CMat, b: &[f64]) -> CMat {
    // odd/even split for degrees 3..9, coefficients b[0..=m]
    let n = a.nrows();
    let id = CMat::identity(n, n);
    let a2 = a * a;
    let mut even = &id * c(b[0]);
    let mut odd = &id * c(b[1]);
    let mut pow = id.clone(); // a2^k
    for k in 1..=(b.len() - 1) / 2 {
        pow = &pow * &a2;
        even += &pow * c(b[2 * k]);
        if 2 * k + 1 < b.len() {
            odd += &pow * c(b[2 * k + 1]);
        }
    }
    pade_from_even_odd(a * odd, even)
}

fn pade_13(a: &CMat) -> CMat {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let id = CMat::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let u_inner = &a6 * c(B[13]) + &a4 * c(B[11]) + &a2 * c(B[9]);
    let u = a * (&a6 * u_inner + &a6 * c(B[7]) + &a4 * c(B[5]) + &a2 * c(B[3]) + &id * c(B[1]));
    let v_inner = &a6 * c(B[12]) + &a4 * c(B[10]) + &a2 * c(B[8]);
    let v = &a6 * v_inner + &a6 * c(B[6]) + &a4 * c(B[4]) + &a2 * c(B[2]) + &id * c(B[0]);
    pade_from_even_odd(u, v)
}

/// e^M for a square complex matrix, scaling-and-squaring with degree-13 Pade
/// (lower degrees when the 1-norm permits).
pub fn expm(m: &CMat) -> CMat {
    assert!(m.is_square(), "expm needs a square matrix");
    let norm = one_norm(m);
    if norm == 0.0 {
        return CMat::identity(m.nrows(), m.nrows());
    }
    if norm <= THETA_3 {
        return pade_low(m, &[120.0, 60.0, 12.0, 1.0]);
    }
    if norm <= THETA_5 {
        return pade_low(m, &[30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0]);
    }
    if norm <= THETA_7 {
        return pade_low(
            m,
            &[17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0],
        );
    }
    if norm <= THETA_9 {
        return pade_low(
            m,
            &[
                17643225600.0,
                8821612800.0,
                2075673600.0,
                302702400.0,
                30270240.0,
                2162160.0,
                110880.0,
                3960.0,
                90.0,
                1.0,
            ],
        );
    }
    let s = ((norm / THETA_13).log2().ceil()).max(0.0) as u32;
    let scaled = m * c((0.5f64).powi(s as i32));
    let mut r = pade_13(&scaled);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// How a propagator evaluates e^{-s A}.
enum Route {
    /// A is self-adjoint in H: real spectrum, unitary diagonalization in the
    /// orthonormalized coordinates.
    SelfAdjoint {
        basis: CMat,
        basis_inv: CMat,
        eigs: Vec<f64>,
    },
    /// A is normal in H: complex spectrum via a (diagonal) Schur form.
    Normal {
        basis: CMat,
        basis_inv: CMat,
        eigs: Vec<C64>,
    },
    /// General: Pade exponentials, memoized per step size.
    General {
        a: CMat,
        cache: Vec<(f64, CMat)>,
        phi_cache: Vec<(f64, f64, CMat)>,
    },
}

/// phi1(w) = (1 - e^{-w}) / w, regularized at w = 0 by its Taylor series.
fn phi1(w: C64) -> C64 {
    if w.norm() < 1e-3 {
        c(1.0) - w * c(0.5) + w * w * c(1.0 / 6.0) - w * w * w * c(1.0 / 24.0)
    } else {
        (c(1.0) - (-w).exp()) / w
    }
}

/// Evaluator for s -> e^{-s A} bound to one operator.  Repeated step sizes
/// (equal up to 1e-12 relative) reuse the cached matrix on the general route;
/// spectral routes are cheap per call.
pub struct Propagator {
    route: Route,
    dim: usize,
}

const ROUTE_TOL: f64 = 1e-12;
const STEP_TOL: f64 = 1e-12;

impl Propagator {
    pub fn new(op: &OperatorH) -> Self {
        let space = op.space();
        let a = op.matrix();
        let dim = a.nrows();
        let b = space.orthonormalize_h(a);
        let scale = b.norm().max(f64::MIN_POSITIVE);

        let herm_defect = (&b - b.adjoint()).norm() / scale;
        if herm_defect <= ROUTE_TOL {
            let sym = (&b + b.adjoint()) * c(0.5);
            let eig = SymmetricEigen::new(sym);
            return Propagator {
                route: Route::SelfAdjoint {
                    basis: space.sqrt_h_inv() * &eig.eigenvectors,
                    basis_inv: eig.eigenvectors.adjoint() * space.sqrt_h(),
                    eigs: eig.eigenvalues.iter().cloned().collect(),
                },
                dim,
            };
        }

        let comm = (&b * b.adjoint() - b.adjoint() * &b).norm() / (scale * scale);
        if comm <= ROUTE_TOL {
            if let Ok((q, t)) = complex_schur(&b) {
                let mut off = 0.0f64;
                for i in 0..dim {
                    for j in 0..dim {
                        if i != j {
                            off += t[(i, j)].norm_sqr();
                        }
                    }
                }
                if off.sqrt() <= 1e-10 * scale {
                    return Propagator {
                        route: Route::Normal {
                            basis: space.sqrt_h_inv() * &q,
                            basis_inv: q.adjoint() * space.sqrt_h(),
                            eigs: (0..dim).map(|i| t[(i, i)]).collect(),
                        },
                        dim,
                    };
                }
            }
        }

        Propagator {
            route: Route::General { a: a.clone(), cache: Vec::new(), phi_cache: Vec::new() },
            dim,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// e^{-s A} as a dense matrix.
    pub fn full(&mut self, s: f64) -> CMat {
        match &mut self.route {
            Route::SelfAdjoint { basis, basis_inv, eigs } => {
                let d = CMat::from_diagonal(&CVec::from_iterator(
                    eigs.len(),
                    eigs.iter().map(|&l| c((-s * l).exp())),
                ));
                &*basis * d * &*basis_inv
            }
            Route::Normal { basis, basis_inv, eigs } => {
                let d = CMat::from_diagonal(&CVec::from_iterator(
                    eigs.len(),
                    eigs.iter().map(|&l| (-l * c(s)).exp()),
                ));
                &*basis * d * &*basis_inv
            }
            Route::General { a, cache, .. } => {
                if let Some((_, m)) = cache
                    .iter()
                    .find(|(cs, _)| (cs - s).abs() <= STEP_TOL * cs.abs().max(s.abs()))
                {
                    return m.clone();
                }
                let m = expm(&(&*a * c(-s)));
                cache.push((s, m.clone()));
                m
            }
        }
    }

    /// e^{-s A} x.
    pub fn action(&mut self, s: f64, x: &CVec) -> CVec {
        match &mut self.route {
            Route::SelfAdjoint { basis, basis_inv, eigs } => {
                let mut w = &*basis_inv * x;
                for (i, &l) in eigs.iter().enumerate() {
                    w[i] *= c((-s * l).exp());
                }
                &*basis * w
            }
            Route::Normal { basis, basis_inv, eigs } => {
                let mut w = &*basis_inv * x;
                for (i, &l) in eigs.iter().enumerate() {
                    w[i] *= (-l * c(s)).exp();
                }
                &*basis * w
            }
            Route::General { .. } => {
                let m = self.full(s);
                m * x
            }
        }
    }

    /// A e^{-s A} x.
    pub fn action_aexp(&mut self, s: f64, x: &CVec) -> CVec {
        match &mut self.route {
            Route::SelfAdjoint { basis, basis_inv, eigs } => {
                let mut w = &*basis_inv * x;
                for (i, &l) in eigs.iter().enumerate() {
                    w[i] *= c(l * (-s * l).exp());
                }
                &*basis * w
            }
            Route::Normal { basis, basis_inv, eigs } => {
                let mut w = &*basis_inv * x;
                for (i, &l) in eigs.iter().enumerate() {
                    w[i] *= l * (-l * c(s)).exp();
                }
                &*basis * w
            }
            Route::General { a, .. } => {
                let ax = &*a * x;
                self.action(s, &ax)
            }
        }
    }

    /// Running load integral of the rate-relaxed generator:
    /// int_0^s e^{-sigma (A - rate I)} x dsigma, in closed form per route.
    /// Finite even where A - rate I is singular (the phi1 form never divides
    /// by an eigenvalue).  On the general route the integral comes from the
    /// top-right block of the augmented exponential
    /// exp([[-s(A - rate I), s I], [0, 0]]), memoized per (s, rate).
    pub fn load_integral_action(&mut self, s: f64, rate: f64, x: &CVec) -> CVec {
        match &mut self.route {
            Route::SelfAdjoint { basis, basis_inv, eigs } => {
                let mut w = &*basis_inv * x;
                for (i, &l) in eigs.iter().enumerate() {
                    w[i] *= c(s) * phi1(c(s * (l - rate)));
                }
                &*basis * w
            }
            Route::Normal { basis, basis_inv, eigs } => {
                let mut w = &*basis_inv * x;
                for (i, &l) in eigs.iter().enumerate() {
                    w[i] *= c(s) * phi1((l - c(rate)) * c(s));
                }
                &*basis * w
            }
            Route::General { a, cache: _, phi_cache } => {
                let close = |u: f64, v: f64| (u - v).abs() <= STEP_TOL * u.abs().max(v.abs());
                if let Some((_, _, m)) =
                    phi_cache.iter().find(|(cs, cr, _)| close(*cs, s) && close(*cr, rate))
                {
                    return m * x;
                }
                let n = a.nrows();
                let mut aug = CMat::zeros(2 * n, 2 * n);
                for i in 0..n {
                    for j in 0..n {
                        aug[(i, j)] = -c(s) * a[(i, j)];
                    }
                    aug[(i, i)] += c(s * rate);
                    aug[(i, n + i)] = c(s);
                }
                let e = expm(&aug);
                let m = e.view((0, n), (n, n)).into_owned();
                phi_cache.push((s, rate, m.clone()));
                &phi_cache.last().unwrap().2 * x
            }
        }
    }

    fn spectral(&self) -> Option<(&CMat, &CMat)> {
        match &self.route {
            Route::SelfAdjoint { basis, basis_inv, .. } => Some((basis, basis_inv)),
            Route::Normal { basis, basis_inv, .. } => Some((basis, basis_inv)),
            Route::General { .. } => None,
        }
    }

    /// True when a spectral (non-Pade) route was selected.
    pub fn is_spectral(&self) -> bool {
        self.spectral().is_some()
    }
}
