//! Semigroup calculus for a single operator A on a Galerkin space: decay and
//! smoothing constants of e^{-sA}, resolvent bounds, numerical range,
//! principal square root, and the square-function identity.  Everything is
//! measured in the norms induced by the space's Gram matrices.

pub mod expm;
pub mod schur;

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::SymmetricEigen;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::forms::FormFamily;
use crate::probe::seeded_rng;
use crate::space::GalerkinSpace;
use crate::{c, CMat, CVec, C64};

pub use expm::{expm, Propagator};
pub use schur::{complex_schur, lyapunov_adjoint_solve, sqrt_principal};

/// An operator on H-coordinates, A = gram_h^{-1} F, remembering the shift
/// delta that makes A + delta accretive.
#[derive(Clone)]
pub struct OperatorH {
    matrix: CMat,
    space: Arc<GalerkinSpace>,
    accretivity_shift: f64,
}

impl std::fmt::Debug for OperatorH {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorH")
            .field("dim", &self.matrix.nrows())
            .field("accretivity_shift", &self.accretivity_shift)
            .finish()
    }
}

impl OperatorH {
    pub fn new(matrix: CMat, space: Arc<GalerkinSpace>, accretivity_shift: f64) -> Self {
        assert_eq!(matrix.nrows(), space.dim(), "operator/space dimension mismatch");
        assert!(matrix.is_square());
        OperatorH { matrix, space, accretivity_shift }
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }
    pub fn space(&self) -> &Arc<GalerkinSpace> {
        &self.space
    }
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    pub fn accretivity_shift(&self) -> f64 {
        self.accretivity_shift
    }

    /// The sesquilinear-form matrix gram_h A that generated this operator.
    pub fn form_matrix(&self) -> CMat {
        self.space.gram_h() * &self.matrix
    }

    /// Adjoint with respect to the H inner product.
    pub fn h_adjoint(&self) -> OperatorH {
        let adj = self.space.gram_h_inv() * self.matrix.adjoint() * self.space.gram_h();
        OperatorH::new(adj, Arc::clone(&self.space), self.accretivity_shift)
    }

    pub fn is_h_self_adjoint(&self) -> bool {
        let f = self.form_matrix();
        (&f - f.adjoint()).norm() <= 1e-12 * f.norm().max(f64::MIN_POSITIVE)
    }

    /// A + mu on the same space.
    pub fn shifted(&self, mu: f64) -> OperatorH {
        let n = self.dim();
        OperatorH::new(
            &self.matrix + CMat::identity(n, n) * c(mu),
            Arc::clone(&self.space),
            (self.accretivity_shift - mu).max(0.0),
        )
    }

    /// e^{-sA} x for s >= 0.
    pub fn exp_action(&self, s: f64, x: &CVec) -> Result<CVec> {
        if s < 0.0 {
            return Err(Error::domain("semigroup parameter must be nonnegative"));
        }
        Ok(Propagator::new(self).action(s, x))
    }

    /// Dense e^{-sA} for s >= 0.
    pub fn exp_full(&self, s: f64) -> Result<CMat> {
        if s < 0.0 {
            return Err(Error::domain("semigroup parameter must be nonnegative"));
        }
        Ok(Propagator::new(self).full(s))
    }

    /// Dense A e^{-sA} for s > 0.
    pub fn aexp_full(&self, s: f64) -> Result<CMat> {
        if s <= 0.0 {
            return Err(Error::domain("analytic smoothing needs s > 0"));
        }
        Ok(&self.matrix * Propagator::new(self).full(s))
    }

    /// Resolvent (z - A)^{-1}.
    pub fn resolvent(&self, z: C64) -> Result<CMat> {
        let n = self.dim();
        let m = CMat::identity(n, n) * z - &self.matrix;
        m.lu()
            .try_inverse()
            .ok_or_else(|| Error::singular(format!("z = {z} lies in the spectrum")))
    }

    /// sqrt|z| * ||(z-A)^{-1}||_{H -> V}, the scaled resolvent smoothing norm.
    pub fn scaled_resolvent_h_to_v(&self, z: C64) -> Result<f64> {
        let r = self.resolvent(z)?;
        Ok(z.norm().sqrt() * self.space.opnorm_h_to_v(&r))
    }

    /// Principal square root.  Requires the spectrum to avoid (-inf, 0].
    pub fn sqrt(&self) -> Result<OperatorH> {
        let s = sqrt_principal(&self.matrix)?;
        Ok(OperatorH::new(s, Arc::clone(&self.space), 0.0))
    }

    /// Largest |arg [Au|u]_H| over H-unit vectors: seeded random directions
    /// plus the eigenvector systems of the Hermitian and skew parts.
    pub fn numerical_range_angle(&self, random_samples: usize, seed: u64) -> f64 {
        let b = self.space.orthonormalize_h(&self.matrix);
        let n = b.nrows();
        let scale = b.norm().max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        let mut consider = |w: &CVec| {
            let nrm2 = w.norm_squared();
            if nrm2 <= 1e-300 {
                return;
            }
            let q = (w.adjoint() * &b * w)[(0, 0)] / c(nrm2);
            if q.norm() > 1e-14 * scale {
                worst = worst.max(q.im.atan2(q.re).abs());
            }
        };
        let herm = (&b + b.adjoint()) * c(0.5);
        let skew = (&b - b.adjoint()) * C64::new(0.0, -0.5);
        for m in [herm, skew] {
            let eig = SymmetricEigen::new(m);
            for j in 0..n {
                let col = eig.eigenvectors.column(j).into_owned();
                consider(&col);
            }
        }
        let mut rng = seeded_rng(seed, 0x6e72);
        for _ in 0..random_samples {
            let w = CVec::from_fn(n, |_, _| {
                C64::new(rng.sample(rand_distr::StandardNormal), rng.sample(rand_distr::StandardNormal))
            });
            consider(&w);
        }
        worst
    }

    /// The square-function integral
    ///     int_0^inf || A^{1/2} e^{-rA} x ||_H^2 dr
    /// in closed form: with B the H-orthonormalized matrix and w the
    /// orthonormalized vector this equals w^* S w where S solves the Lyapunov
    /// identity B^* S + S B = (B^{1/2})^* B^{1/2}.  For self-adjoint A the
    /// right-hand side is B itself, S = I/2, and the value is ||x||_H^2 / 2.
    pub fn square_function_norm(&self, x: &CVec) -> Result<f64> {
        let b = self.space.orthonormalize_h(&self.matrix);
        let (_, t) = complex_schur(&b)?;
        let n = b.nrows();
        for i in 0..n {
            if t[(i, i)].re <= 0.0 {
                return Err(Error::domain(
                    "square-function integral diverges: spectrum leaves the open right half-plane",
                ));
            }
        }
        let sq = sqrt_principal(&b)?;
        let w_rhs = sq.adjoint() * &sq;
        let s = lyapunov_adjoint_solve(&b, &w_rhs)?;
        let w = self.space.sqrt_h() * x;
        Ok((w.adjoint() * s * w)[(0, 0)].re)
    }
}

/// Decay/smoothing constants of a family, measured over declared grids.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SectorReport {
    /// max over sampled t of the numerical range angle of A(t) + delta
    pub omega0: f64,
    /// the angle arctan(M/alpha) the constants certify
    pub arctan_m_over_alpha: f64,
    pub constants: BTreeMap<String, f64>,
    /// fitted slope of log ||e^{-sA}||_{H->V} against log s
    pub v_smoothing_slope: f64,
    /// fitted slope of log ||(z-A)^{-1}||_{H->V} against log |z| on the
    /// negative real ray
    pub resolvent_slope: f64,
    pub time_samples: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub z_moduli: Vec<f64>,
}

/// Sweep layout for `sector_report`.
#[derive(Clone, Debug)]
pub struct SectorScanConfig {
    pub time_samples: usize,
    pub s_points: usize,
    /// smoothing-parameter range (absolute)
    pub s_range: (f64, f64),
    pub z_points: usize,
    /// resolvent modulus range (absolute)
    pub z_range: (f64, f64),
    /// arguments of the resolvent rays; must avoid the numerical range
    pub ray_angles: Vec<f64>,
    pub range_samples: usize,
    pub seed: u64,
}

impl SectorScanConfig {
    pub fn for_horizon(tau: f64) -> Self {
        SectorScanConfig {
            time_samples: 9,
            s_points: 25,
            s_range: (1e-4 * tau, tau),
            z_points: 25,
            z_range: (1e-1 / tau, 1e4 / tau),
            ray_angles: vec![std::f64::consts::PI],
            range_samples: 200,
            seed: 0x5ec7,
        }
    }
}

fn log_spaced(n: usize, range: (f64, f64)) -> Vec<f64> {
    assert!(n >= 2 && range.0 > 0.0 && range.1 > range.0);
    let (a, b) = (range.0.ln(), range.1.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

fn lin_spaced(n: usize, a: f64, b: f64) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

/// Measure the semigroup/resolvent constants of a family over log-spaced
/// sweeps.  The constants correspond, in order, to: uniform boundedness of
/// e^{-sA} on H, the analytic-smoothing bound s ||A e^{-sA}||_H, the
/// half-smoothing bounds sqrt(s) ||e^{-sA}||_{H->V} and
/// sqrt(s) ||e^{-sA}||_{V'->H}, uniform boundedness on V', and the scaled
/// resolvent bound sqrt|z| ||(z-A)^{-1}||_{H->V} on the configured rays.
/// Operators are shifted by the family's delta before measuring, so the
/// constants describe the accretive normalization.
pub fn sector_report(family: &FormFamily, cfg: &SectorScanConfig) -> Result<SectorReport> {
    let space = family.space();
    let delta = family.shift_delta();
    let times = lin_spaced(cfg.time_samples, 0.0, family.horizon());
    let s_grid = log_spaced(cfg.s_points, cfg.s_range);
    let z_moduli = log_spaced(cfg.z_points, cfg.z_range);

    let mut c_exp = 0.0f64;
    let mut c_aexp = 0.0f64;
    let mut c_v_smooth = 0.0f64;
    let mut c_vdual_to_h = 0.0f64;
    let mut c_exp_vdual = 0.0f64;
    let mut c_res = 0.0f64;
    let mut omega0 = 0.0f64;

    // slope data from the last sampled time (any fixed time works; the
    // constants are sups over all)
    let mut v_smooth_log: Vec<(f64, f64)> = Vec::new();
    let mut res_log: Vec<(f64, f64)> = Vec::new();

    for (ti, &t) in times.iter().enumerate() {
        let op = family.assemble_operator(t).shifted(delta);
        omega0 = omega0.max(op.numerical_range_angle(cfg.range_samples, cfg.seed ^ ti as u64));
        let mut prop = Propagator::new(&op);
        let last_time = ti + 1 == times.len();
        for &s in &s_grid {
            let e = prop.full(s);
            c_exp = c_exp.max(space.opnorm_h(&e));
            let ae = op.matrix() * &e;
            c_aexp = c_aexp.max(s * space.opnorm_h(&ae));
            let hv = space.opnorm_h_to_v(&e);
            c_v_smooth = c_v_smooth.max(s.sqrt() * hv);
            c_vdual_to_h = c_vdual_to_h.max(s.sqrt() * space.opnorm_vdual_to_h(&e));
            c_exp_vdual = c_exp_vdual.max(space.opnorm_vdual(&e));
            if last_time && hv > 0.0 {
                v_smooth_log.push((s.ln(), hv.ln()));
            }
        }
        for &rho in &z_moduli {
            for &psi in &cfg.ray_angles {
                let z = C64::from_polar(rho, psi);
                let scaled = op.scaled_resolvent_h_to_v(z)?;
                c_res = c_res.max(scaled);
                if last_time && psi == std::f64::consts::PI && scaled > 0.0 {
                    res_log.push((rho.ln(), (scaled / rho.sqrt()).ln()));
                }
            }
        }
    }

    let (v_slope, _) = linear_fit(
        &v_smooth_log.iter().map(|p| p.0).collect::<Vec<_>>(),
        &v_smooth_log.iter().map(|p| p.1).collect::<Vec<_>>(),
    )?;
    let (r_slope, _) = linear_fit(
        &res_log.iter().map(|p| p.0).collect::<Vec<_>>(),
        &res_log.iter().map(|p| p.1).collect::<Vec<_>>(),
    )?;

    let mut constants = BTreeMap::new();
    constants.insert("C_exp".into(), c_exp);
    constants.insert("C_AsE".into(), c_aexp);
    constants.insert("C_V_smooth".into(), c_v_smooth);
    constants.insert("C_Vdual_to_H".into(), c_vdual_to_h);
    constants.insert("C_exp_Vdual".into(), c_exp_vdual);
    constants.insert("C_resolvent".into(), c_res);

    Ok(SectorReport {
        omega0,
        arctan_m_over_alpha: (family.bound_m() / family.coercivity_alpha()).atan(),
        constants,
        v_smoothing_slope: v_slope,
        resolvent_slope: r_slope,
        time_samples: times,
        s_grid,
        z_moduli,
    })
}

/// Calibrated constant for the resolvent-difference estimate
///     ||R(z,A(t)) - R(z,A(s))||_{B(H)} <= c_theta * omega(|t-s|) / |z|.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolventDiffCalibration {
    pub theta: f64,
    pub c_theta: f64,
}

/// Largest measured ratio over the calibration sweep; z values must lie
/// outside the sector of angle theta.
pub fn calibrate_resolvent_difference(
    family: &FormFamily,
    theta: f64,
    time_pairs: &[(f64, f64)],
    z_values: &[C64],
) -> Result<ResolventDiffCalibration> {
    if time_pairs.is_empty() || z_values.is_empty() {
        return Err(Error::invalid("calibration needs nonempty sweeps"));
    }
    let delta = family.shift_delta();
    let mut c_theta = 0.0f64;
    for &(s, t) in time_pairs {
        let w = family.modulus().eval(t - s);
        if w <= 0.0 {
            continue;
        }
        let op_s = family.assemble_operator(s).shifted(delta);
        let op_t = family.assemble_operator(t).shifted(delta);
        for &z in z_values {
            if z.im.atan2(z.re).abs() <= theta {
                return Err(Error::invalid("calibration point lies inside the sector"));
            }
            let diff = op_t.resolvent(z)? - op_s.resolvent(z)?;
            let measured = family.space().opnorm_h(&diff);
            c_theta = c_theta.max(measured * z.norm() / w);
        }
    }
    Ok(ResolventDiffCalibration { theta, c_theta })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResolventDiffCheck {
    pub measured: f64,
    pub bound: f64,
}

/// Measure one resolvent difference against the calibrated bound.
pub fn resolvent_difference_check(
    family: &FormFamily,
    s: f64,
    t: f64,
    z: C64,
    cal: &ResolventDiffCalibration,
) -> Result<ResolventDiffCheck> {
    let delta = family.shift_delta();
    let op_s = family.assemble_operator(s).shifted(delta);
    let op_t = family.assemble_operator(t).shifted(delta);
    let diff = op_t.resolvent(z)? - op_s.resolvent(z)?;
    let measured = family.space().opnorm_h(&diff);
    let bound = cal.c_theta * family.modulus().eval(t - s) / z.norm();
    Ok(ResolventDiffCheck { measured, bound })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::GalerkinSpace;

    fn diag_op(eigs: &[f64]) -> OperatorH {
        let n = eigs.len();
        let sp = GalerkinSpace::euclidean(n).unwrap();
        OperatorH::new(
            CMat::from_diagonal(&CVec::from_iterator(n, eigs.iter().map(|&l| c(l)))),
            sp,
            0.0,
        )
    }

    #[test]
    fn exp_action_matches_scalar_decay() {
        let op = diag_op(&[1.0, 3.0]);
        let x = CVec::from_vec(vec![c(2.0), c(-1.0)]);
        let y = op.exp_action(0.5, &x).unwrap();
        assert!((y[0].re - 2.0 * (-0.5f64).exp()).abs() < 1e-14);
        assert!((y[1].re + (-1.5f64).exp()).abs() < 1e-14);
        assert!(op.exp_action(-0.1, &x).is_err());
    }

    #[test]
    fn contraction_on_h_for_accretive() {
        // accretive but far from normal
        let sp = GalerkinSpace::euclidean(4).unwrap();
        let mut m = CMat::identity(4, 4) * c(2.0);
        m[(0, 3)] = C64::new(0.9, 0.4);
        m[(1, 2)] = C64::new(-0.7, 0.2);
        let op = OperatorH::new(m, sp, 0.0);
        // numerical range check: Herm part of B must be PSD for contraction
        let angle = op.numerical_range_angle(500, 7);
        assert!(angle < std::f64::consts::FRAC_PI_2);
        let x = CVec::from_vec(vec![c(1.0), c(1.0), C64::new(0.0, 1.0), c(-1.0)]);
        let nx = op.space().h_norm(&x);
        for s in [0.01, 0.1, 1.0, 10.0] {
            let y = op.exp_action(s, &x).unwrap();
            assert!(op.space().h_norm(&y) <= nx * (1.0 + 1e-10), "s = {s}");
        }
    }

    #[test]
    fn resolvent_inverts() {
        let op = diag_op(&[1.0, 2.0, 5.0]);
        let z = C64::new(-3.0, 4.0);
        let r = op.resolvent(z).unwrap();
        let n = 3;
        let err = ((CMat::identity(n, n) * z - op.matrix()) * r - CMat::identity(n, n)).norm();
        assert!(err < 1e-13);
        assert!(op.resolvent(c(2.0)).is_err(), "spectrum point must fail");
    }

    #[test]
    fn sqrt_of_operator() {
        let op = diag_op(&[4.0, 9.0]);
        let s = op.sqrt().unwrap();
        assert!((s.matrix()[(0, 0)].re - 2.0).abs() < 1e-13);
        assert!((s.matrix()[(1, 1)].re - 3.0).abs() < 1e-13);
        let zero = OperatorH::new(CMat::zeros(2, 2), GalerkinSpace::euclidean(2).unwrap(), 0.0);
        assert!(zero.sqrt().is_err());
    }

    #[test]
    fn numerical_range_of_rotated_scalar() {
        // e^{i phi} I has numerical range {e^{i phi}}
        let phi = 0.6f64;
        let sp = GalerkinSpace::euclidean(3).unwrap();
        let op = OperatorH::new(CMat::identity(3, 3) * C64::from_polar(1.0, phi), sp, 0.0);
        let angle = op.numerical_range_angle(100, 3);
        assert!((angle - phi).abs() < 1e-12);
    }

    #[test]
    fn square_function_half_norm_for_self_adjoint() {
        let op = diag_op(&[0.5, 2.0, 7.0]);
        let x = CVec::from_vec(vec![c(1.0), C64::new(-2.0, 1.0), c(0.25)]);
        let v = op.square_function_norm(&x).unwrap();
        let expect = 0.5 * op.space().h_norm(&x).powi(2);
        assert!((v - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn square_function_scalar_closed_form() {
        // A = b complex: integral = |b| |x|^2 / (2 Re b)
        let b = C64::new(1.5, 2.0);
        let sp = GalerkinSpace::euclidean(1).unwrap();
        let op = OperatorH::new(CMat::from_element(1, 1, b), sp, 0.0);
        let x = CVec::from_vec(vec![c(3.0)]);
        let v = op.square_function_norm(&x).unwrap();
        let expect = b.norm() * 9.0 / (2.0 * b.re);
        assert!((v - expect).abs() < 1e-12 * expect, "{v} vs {expect}");
    }

    #[test]
    fn square_function_rejects_left_spectrum() {
        let sp = GalerkinSpace::euclidean(2).unwrap();
        let m = CMat::from_diagonal(&CVec::from_vec(vec![C64::new(-1.0, 2.0), c(1.0)]));
        let op = OperatorH::new(m, sp, 0.0);
        assert!(op.square_function_norm(&CVec::from_element(2, c(1.0))).is_err());
    }
}
