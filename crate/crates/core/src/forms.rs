//! Non-autonomous sesquilinear form families on a fixed Galerkin space.
//!
//! A family holds a closure t -> F(t) of form matrices together with its
//! declared constants: bound M, quasi-coercivity pair (alpha, delta), time
//! horizon, and a modulus of continuity for t -> F(t) measured in the
//! V -> V' norm.  Positive shifts by mu [u|v]_H are tracked symbolically so
//! shifting twice equals shifting once by the sum, exactly.

use std::sync::Arc;

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::semigroup::OperatorH;
use crate::space::GalerkinSpace;
use crate::{c, CMat};

/// Modulus of continuity of t -> F(t) in the V->V' norm: nonnegative,
/// nondecreasing on [0, tau].  `eval` is conservative for tabulated data
/// (piecewise-linear between samples, constant beyond the last gap).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Modulus {
    /// omega(h) = constant * h^exponent with exponent in (0, 1].
    Hoelder { exponent: f64, constant: f64 },
    /// Piecewise in time: within each piece between consecutive breakpoints
    /// the family is Hoelder; across breakpoints it may jump.  `eval` returns
    /// the within-piece envelope max_j c_j h^{a_j}.
    PiecewiseHoelder {
        /// interior breakpoints, strictly increasing inside (0, tau)
        breakpoints: Vec<f64>,
        /// (exponent, constant) per piece; length = breakpoints.len() + 1
        pieces: Vec<(f64, f64)>,
    },
    /// Monotone table of (gap, value) samples, gaps strictly increasing.
    Tabulated { gaps: Vec<f64>, values: Vec<f64> },
}

impl Modulus {
    pub fn eval(&self, h: f64) -> f64 {
        let h = h.abs();
        match self {
            Modulus::Hoelder { exponent, constant } => constant * h.powf(*exponent),
            Modulus::PiecewiseHoelder { pieces, .. } => pieces
                .iter()
                .map(|&(a, cst)| cst * h.powf(a))
                .fold(0.0, f64::max),
            Modulus::Tabulated { gaps, values } => {
                if gaps.is_empty() {
                    return 0.0;
                }
                if h <= gaps[0] {
                    // no information below the first sampled gap; stay
                    // conservative (a positive limit at 0+ is recorded as-is)
                    return values[0];
                }
                if h >= *gaps.last().unwrap() {
                    return *values.last().unwrap();
                }
                let i = gaps.partition_point(|&g| g < h);
                let (g0, g1) = (gaps[i - 1], gaps[i]);
                let (v0, v1) = (values[i - 1], values[i]);
                v0 + (v1 - v0) * (h - g0) / (g1 - g0)
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Modulus::Hoelder { exponent, constant } => {
                if !(*exponent > 0.0 && *exponent <= 1.0) {
                    return Err(Error::invalid("Hoelder exponent must lie in (0, 1]"));
                }
                if !(*constant >= 0.0) {
                    return Err(Error::invalid("Hoelder constant must be nonnegative"));
                }
            }
            Modulus::PiecewiseHoelder { breakpoints, pieces } => {
                if pieces.len() != breakpoints.len() + 1 {
                    return Err(Error::invalid(
                        "piecewise modulus needs one piece more than breakpoints",
                    ));
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::invalid("breakpoints must be strictly increasing"));
                }
                for &(a, cst) in pieces {
                    if !(a > 0.0 && a <= 1.0) || !(cst >= 0.0) {
                        return Err(Error::invalid("piece exponents must lie in (0,1], constants >= 0"));
                    }
                }
            }
            Modulus::Tabulated { gaps, values } => {
                if gaps.len() != values.len() || gaps.is_empty() {
                    return Err(Error::invalid("tabulated modulus needs matching nonempty tables"));
                }
                if gaps.windows(2).any(|w| w[0] >= w[1]) || gaps[0] <= 0.0 {
                    return Err(Error::invalid("gaps must be positive and strictly increasing"));
                }
                if values.windows(2).any(|w| w[0] > w[1] + 1e-15) || values[0] < 0.0 {
                    return Err(Error::invalid("tabulated values must be nonnegative and nondecreasing"));
                }
            }
        }
        Ok(())
    }
}

/// A non-autonomous form family t -> F(t) on [0, tau].
///
/// The base closure is evaluated with t clamped to [0, tau]; the constant
/// extension beyond the horizon is part of the contract (the multiplier
/// symbol and the gluing solver rely on it).  Accumulated H-shifts are stored
/// separately from the base form.
#[derive(Clone)]
pub struct FormFamily {
    space: Arc<GalerkinSpace>,
    horizon: f64,
    base_form: Arc<dyn Fn(f64) -> CMat + Send + Sync>,
    shift_mu: f64,
    base_bound_m: f64,
    base_alpha: f64,
    base_delta: f64,
    modulus: Modulus,
}

impl std::fmt::Debug for FormFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FormFamily")
            .field("dim", &self.space.dim())
            .field("horizon", &self.horizon)
            .field("bound_m", &self.bound_m())
            .field("alpha", &self.coercivity_alpha())
            .field("delta", &self.shift_delta())
            .field("shift_mu", &self.shift_mu)
            .finish()
    }
}

impl FormFamily {
    pub fn new(
        space: Arc<GalerkinSpace>,
        horizon: f64,
        form: Arc<dyn Fn(f64) -> CMat + Send + Sync>,
        bound_m: f64,
        alpha: f64,
        delta: f64,
        modulus: Modulus,
    ) -> Result<Self> {
        if !(horizon > 0.0) {
            return Err(Error::invalid("horizon must be positive"));
        }
        if !(bound_m > 0.0) || !(alpha > 0.0) || !(delta >= 0.0) {
            return Err(Error::invalid(
                "constants must satisfy M > 0, alpha > 0, delta >= 0",
            ));
        }
        modulus.validate()?;
        let f0 = form(0.0);
        if f0.nrows() != space.dim() || f0.ncols() != space.dim() {
            return Err(Error::invalid("form matrix dimension does not match the space"));
        }
        Ok(FormFamily {
            space,
            horizon,
            base_form: form,
            shift_mu: 0.0,
            base_bound_m: bound_m,
            base_alpha: alpha,
            base_delta: delta,
            modulus,
        })
    }

    /// Constant (autonomous) family.
    pub fn constant(
        space: Arc<GalerkinSpace>,
        horizon: f64,
        f: CMat,
        bound_m: f64,
        alpha: f64,
        delta: f64,
    ) -> Result<Self> {
        Self::new(
            space,
            horizon,
            Arc::new(move |_| f.clone()),
            bound_m,
            alpha,
            delta,
            Modulus::Hoelder { exponent: 1.0, constant: 0.0 },
        )
    }

    pub fn space(&self) -> &Arc<GalerkinSpace> {
        &self.space
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }
    /// Accumulated H-shift applied to the base family.
    pub fn shift_mu(&self) -> f64 {
        self.shift_mu
    }
    /// Declared V->V' bound after the accumulated shift: M + mu c_V^2.
    pub fn bound_m(&self) -> f64 {
        self.base_bound_m + self.shift_mu * self.space.embed_const().powi(2)
    }
    /// Declared coercivity constant (unchanged by positive shifts).
    pub fn coercivity_alpha(&self) -> f64 {
        self.base_alpha
    }
    /// Declared quasi-coercivity shift after the accumulated shift.
    pub fn shift_delta(&self) -> f64 {
        (self.base_delta - self.shift_mu).max(0.0)
    }

    fn clamp_time(&self, t: f64) -> f64 {
        t.clamp(0.0, self.horizon)
    }

    /// Form matrix at time t (clamped to the horizon), including the shift.
    pub fn form_at(&self, t: f64) -> CMat {
        let base = (self.base_form)(self.clamp_time(t));
        if self.shift_mu == 0.0 {
            base
        } else {
            base + self.space.gram_h() * c(self.shift_mu)
        }
    }

    /// The operator A(t) = gram_h^{-1} F(t) acting on H-coordinates, tagged
    /// with the accretivity shift delta of the family.
    pub fn assemble_operator(&self, t: f64) -> OperatorH {
        let a = self.space.gram_h_inv() * self.form_at(t);
        OperatorH::new(a, Arc::clone(&self.space), self.shift_delta())
    }

    /// Family shifted by mu in the H inner product.  Repeated shifts
    /// accumulate: shifting by a then b gives exactly the shift by a + b.
    pub fn shifted(&self, mu: f64) -> Result<FormFamily> {
        if !(mu >= 0.0) {
            return Err(Error::invalid("shift must be nonnegative"));
        }
        let mut fam = self.clone();
        fam.shift_mu += mu;
        Ok(fam)
    }

    /// Restriction of the family to [t0, t1], re-parameterized to start at 0.
    /// Clamping of the restricted family happens at the sub-horizon.
    pub fn restricted(&self, t0: f64, t1: f64, modulus: Modulus) -> Result<FormFamily> {
        if !(t0 >= 0.0 && t1 <= self.horizon && t0 < t1) {
            return Err(Error::invalid("restriction interval must lie inside the horizon"));
        }
        let base = Arc::clone(&self.base_form);
        let shift = self.shift_mu;
        let gram = self.space.gram_h().clone();
        let form = Arc::new(move |t: f64| {
            let f = base(t0 + t.clamp(0.0, t1 - t0));
            if shift == 0.0 { f } else { &f + &gram * c(shift) }
        });
        FormFamily::new(
            Arc::clone(&self.space),
            t1 - t0,
            form,
            self.bound_m(),
            self.coercivity_alpha(),
            self.shift_delta(),
            modulus,
        )
    }
}

/// Result of checking the uniform V->V' bound over a time sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundCheck {
    pub m_est: f64,
    pub declared: f64,
    pub violated: bool,
    pub worst_time: f64,
}

/// Largest sampled V->V' norm of F(t); flags when it exceeds the declared
/// bound beyond rounding slack.
pub fn verify_bounded(family: &FormFamily, sample_times: &[f64]) -> Result<BoundCheck> {
    if sample_times.is_empty() {
        return Err(Error::invalid("need at least one sample time"));
    }
    let mut m_est = f64::MIN;
    let mut worst = sample_times[0];
    for &t in sample_times {
        let n = family.space().form_dual_norm(&family.form_at(t));
        if n > m_est {
            m_est = n;
            worst = t;
        }
    }
    let declared = family.bound_m();
    Ok(BoundCheck {
        m_est,
        declared,
        violated: m_est > declared * (1.0 + 1e-9),
        worst_time: worst,
    })
}

/// Result of checking quasi-coercivity over a time sample.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoercivityCheck {
    pub alpha_est: f64,
    pub delta_used: f64,
    pub declared_alpha: f64,
    pub violated: bool,
    pub worst_time: f64,
}

/// Smallest sampled generalized eigenvalue of Herm F(t) + delta gram_h
/// against gram_v; flags when it undercuts the declared alpha.
pub fn verify_coercive(family: &FormFamily, sample_times: &[f64]) -> Result<CoercivityCheck> {
    if sample_times.is_empty() {
        return Err(Error::invalid("need at least one sample time"));
    }
    let space = family.space();
    let delta = family.shift_delta();
    let mut alpha_est = f64::MAX;
    let mut worst = sample_times[0];
    for &t in sample_times {
        let f = family.form_at(t);
        let herm = (&f + f.adjoint()) * c(0.5) + space.gram_h() * c(delta);
        let m = space.sqrt_v_inv() * herm * space.sqrt_v_inv();
        let m = (&m + m.adjoint()) * c(0.5);
        let eig = SymmetricEigen::new(m);
        let lmin = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        if lmin < alpha_est {
            alpha_est = lmin;
            worst = t;
        }
    }
    let declared = family.coercivity_alpha();
    Ok(CoercivityCheck {
        alpha_est,
        delta_used: delta,
        declared_alpha: declared,
        violated: alpha_est < declared * (1.0 - 1e-9),
        worst_time: worst,
    })
}

/// Measure a tabulated modulus from sampled pairs: pairs are bucketed by gap
/// (1e-9 relative), each bucket records the largest V->V' defect, and the
/// table is monotonized by running maximum.
pub fn estimate_modulus(family: &FormFamily, pair_grid: &[(f64, f64)]) -> Result<Modulus> {
    if pair_grid.is_empty() {
        return Err(Error::invalid("need at least one sample pair"));
    }
    let space = family.space();
    let mut samples: Vec<(f64, f64)> = Vec::with_capacity(pair_grid.len());
    for &(s, t) in pair_grid {
        let h = (t - s).abs();
        if h == 0.0 {
            continue;
        }
        let defect = space.form_dual_norm(&(family.form_at(t) - family.form_at(s)));
        samples.push((h, defect));
    }
    if samples.is_empty() {
        return Err(Error::invalid("all sample pairs have zero gap"));
    }
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut gaps: Vec<f64> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    for (h, d) in samples {
        match gaps.last() {
            Some(&g) if (h - g).abs() <= 1e-9 * g.max(h) => {
                let v = values.last_mut().unwrap();
                *v = v.max(d);
            }
            _ => {
                gaps.push(h);
                values.push(d);
            }
        }
    }
    // running max makes the table a genuine modulus
    let mut run = 0.0f64;
    for v in values.iter_mut() {
        run = run.max(*v);
        *v = run;
    }
    let m = Modulus::Tabulated { gaps, values };
    m.validate()?;
    Ok(m)
}

/// Default pair grid for modulus estimation: log-spaced gaps from tau*1e-4 to
/// tau, several base points per gap.
pub fn default_pair_grid(tau: f64, n_gaps: usize, per_gap: usize) -> Vec<(f64, f64)> {
    let mut pairs = Vec::with_capacity(n_gaps * per_gap);
    for i in 0..n_gaps {
        let frac = if n_gaps == 1 { 1.0 } else { i as f64 / (n_gaps - 1) as f64 };
        let h = tau * 1e-4 * (1e4f64).powf(frac);
        for j in 0..per_gap {
            let smax = tau - h;
            let s = if per_gap == 1 { 0.0 } else { smax * j as f64 / (per_gap - 1) as f64 };
            pairs.push((s, s + h));
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::CVec;

    fn unit_space(n: usize) -> Arc<GalerkinSpace> {
        GalerkinSpace::euclidean(n).unwrap()
    }

    fn two_gram_space() -> Arc<GalerkinSpace> {
        let gh = CMat::from_diagonal(&CVec::from_vec(vec![c(1.0), c(2.0)]));
        let gv = CMat::from_diagonal(&CVec::from_vec(vec![c(3.0), c(5.0)]));
        GalerkinSpace::new(gh, gv).unwrap()
    }

    #[test]
    fn identity_family_has_unit_bound() {
        let sp = two_gram_space();
        let f = sp.gram_v().clone();
        let fam = FormFamily::constant(Arc::clone(&sp), 1.0, f, 1.0, 1.0, 0.0).unwrap();
        let chk = verify_bounded(&fam, &[0.0, 0.5, 1.0]).unwrap();
        assert!((chk.m_est - 1.0).abs() < 1e-12);
        assert!(!chk.violated);
        let coe = verify_coercive(&fam, &[0.0, 0.5, 1.0]).unwrap();
        assert!((coe.alpha_est - 1.0).abs() < 1e-12);
        assert!(!coe.violated);
    }

    #[test]
    fn bound_flags_violation() {
        let sp = unit_space(2);
        let f = CMat::identity(2, 2) * c(3.0);
        let fam = FormFamily::constant(sp, 1.0, f, 2.0, 1.0, 0.0).unwrap();
        let chk = verify_bounded(&fam, &[0.3]).unwrap();
        assert!(chk.violated);
        assert!((chk.m_est - 3.0).abs() < 1e-12);
    }

    #[test]
    fn coercivity_flags_violation() {
        let sp = unit_space(2);
        let f = CMat::from_diagonal(&CVec::from_vec(vec![c(0.25), c(2.0)]));
        let fam = FormFamily::constant(sp, 1.0, f, 2.0, 0.5, 0.0).unwrap();
        let coe = verify_coercive(&fam, &[0.0]).unwrap();
        assert!(coe.violated);
        assert!((coe.alpha_est - 0.25).abs() < 1e-12);
    }

    #[test]
    fn shift_accumulates_exactly() {
        let sp = two_gram_space();
        let f = sp.gram_v().clone();
        let fam = FormFamily::constant(Arc::clone(&sp), 1.0, f, 1.0, 1.0, 0.7).unwrap();
        let a = fam.shifted(0.3).unwrap().shifted(0.45).unwrap();
        let b = fam.shifted(0.75).unwrap();
        assert_eq!((a.form_at(0.4) - b.form_at(0.4)).norm(), 0.0);
        assert_eq!(a.bound_m(), b.bound_m());
        assert_eq!(a.shift_delta(), b.shift_delta());
        // delta decreases and floors at zero
        assert!((a.shift_delta() - 0.0).abs() < 1e-15);
        let half = fam.shifted(0.2).unwrap();
        assert!((half.shift_delta() - 0.5).abs() < 1e-15);
        // M grows by mu c_V^2
        let cv2 = sp.embed_const().powi(2);
        assert!((half.bound_m() - (1.0 + 0.2 * cv2)).abs() < 1e-14);
    }

    #[test]
    fn clamped_evaluation_beyond_horizon() {
        let sp = unit_space(1);
        let fam = FormFamily::new(
            sp,
            2.0,
            Arc::new(|t| CMat::from_element(1, 1, c(1.0 + t))),
            4.0,
            0.5,
            0.0,
            Modulus::Hoelder { exponent: 1.0, constant: 1.0 },
        )
        .unwrap();
        assert_eq!(fam.form_at(-3.0)[(0, 0)].re, 1.0);
        assert_eq!(fam.form_at(5.0)[(0, 0)].re, 3.0);
    }

    #[test]
    fn estimated_modulus_recovers_hoelder_slope() {
        let sp = unit_space(1);
        let a = 0.75;
        let fam = FormFamily::new(
            sp,
            1.0,
            Arc::new(move |t: f64| CMat::from_element(1, 1, c(2.0 + t.powf(a)))),
            4.0,
            0.5,
            0.0,
            Modulus::Hoelder { exponent: a, constant: 1.0 },
        )
        .unwrap();
        let grid = default_pair_grid(1.0, 40, 5);
        let m = estimate_modulus(&fam, &grid).unwrap();
        if let Modulus::Tabulated { gaps, values } = &m {
            // |t^a - s^a| <= |t-s|^a with near-equality at s = 0
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (g, v) in gaps.iter().zip(values) {
                if *v > 0.0 && *g < 0.05 {
                    xs.push(g.ln());
                    ys.push(v.ln());
                }
            }
            let (slope, _) = crate::fit::linear_fit(&xs, &ys).unwrap();
            assert!((slope - a).abs() < 0.02, "slope {slope} vs exponent {a}");
        } else {
            panic!("expected tabulated modulus");
        }
    }

    #[test]
    fn estimated_modulus_is_monotone() {
        let sp = unit_space(1);
        let fam = FormFamily::new(
            sp,
            1.0,
            Arc::new(|t: f64| CMat::from_element(1, 1, c(1.0 + (8.0 * t).sin()))),
            4.0,
            0.1,
            2.0,
            Modulus::Hoelder { exponent: 1.0, constant: 8.0 },
        )
        .unwrap();
        let m = estimate_modulus(&fam, &default_pair_grid(1.0, 30, 7)).unwrap();
        if let Modulus::Tabulated { values, .. } = &m {
            assert!(values.windows(2).all(|w| w[0] <= w[1]));
        } else {
            panic!("expected tabulated modulus");
        }
    }

    #[test]
    fn tabulated_eval_interpolates() {
        let m = Modulus::Tabulated {
            gaps: vec![0.1, 0.2, 0.4],
            values: vec![1.0, 3.0, 3.0],
        };
        assert_eq!(m.eval(0.05), 1.0);
        assert!((m.eval(0.15) - 2.0).abs() < 1e-15);
        assert_eq!(m.eval(0.9), 3.0);
    }
}
