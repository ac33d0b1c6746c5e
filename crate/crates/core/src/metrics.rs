//! Norms and integral conditions: discrete Lp norms of grid functions,
//! Dini-type integrals of a modulus of continuity, the semigroup
//! characterization of the initial-data interpolation norm, the a-priori
//! estimate ratio, scalar majorant kernel bounds, and the V-norm recovery
//! defect.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::Modulus;
use crate::grid::GridFunction;
use crate::quad::graded_toward_zero;
use crate::semigroup::{OperatorH, Propagator};
use crate::space::GalerkinSpace;
use crate::{c, CVec};

/// Levels of geometric refinement toward 0 used by every near-zero integral.
const GRADED_LEVELS: usize = 60;

/// Discrete Lp(0, tau; H) norm of a grid function: left-constant quadrature
/// with the cell widths; p = infinity takes the max over every node value.
pub fn lp_norm(space: &GalerkinSpace, g: &GridFunction, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid("Lp norm needs p >= 1"));
    }
    if p.is_infinite() {
        return Ok(g.values().iter().map(|v| space.h_norm(v)).fold(0.0, f64::max));
    }
    let grid = g.grid();
    let mut acc = 0.0;
    for k in 0..grid.cells() {
        acc += grid.cell_width(k) * space.h_norm(g.value(k)).powf(p);
    }
    Ok(acc.powf(1.0 / p))
}

/// One near-zero integral together with its convergence verdict.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegralVerdict {
    /// closed-form value where available (infinite when divergent); otherwise
    /// the 60-level graded partial sum
    pub value: f64,
    pub convergent: bool,
}

/// The three near-zero integral conditions on a modulus, at exponent p.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiniReport {
    pub p: f64,
    pub tau: f64,
    /// int_0^tau omega(s) s^{-3/2} ds
    pub integral_32: IntegralVerdict,
    /// int_0^tau (omega(s)/s)^p ds
    pub integral_p: IntegralVerdict,
    /// int_0^tau omega(s)^2 / s ds
    pub integral_2log: IntegralVerdict,
}

/// int_0^tau omega(s)^q s^{-r} ds with an analytic verdict for power-law
/// moduli and a graded-quadrature verdict otherwise.  A tabulated modulus is
/// constant below its first gap (it carries no decay information there), so
/// any r >= 1 is reported divergent for it — the conservative reading.
pub fn modulus_power_integral(modulus: &Modulus, q: f64, r: f64, tau: f64) -> Result<IntegralVerdict> {
    if !(tau > 0.0) || !(q > 0.0) {
        return Err(Error::invalid("integral needs tau > 0 and power q > 0"));
    }
    match modulus {
        Modulus::Hoelder { exponent, constant } => {
            if *constant == 0.0 {
                return Ok(IntegralVerdict { value: 0.0, convergent: true });
            }
            let e = exponent * q - r;
            if e > -1.0 {
                Ok(IntegralVerdict {
                    value: constant.powf(q) * tau.powf(e + 1.0) / (e + 1.0),
                    convergent: true,
                })
            } else {
                Ok(IntegralVerdict { value: f64::INFINITY, convergent: false })
            }
        }
        Modulus::PiecewiseHoelder { pieces, .. } => {
            // near zero the envelope is governed by the smallest exponent
            let min_a = pieces
                .iter()
                .filter(|(_, c)| *c > 0.0)
                .map(|(a, _)| *a)
                .fold(f64::INFINITY, f64::min);
            if min_a.is_infinite() {
                return Ok(IntegralVerdict { value: 0.0, convergent: true });
            }
            let convergent = min_a * q - r > -1.0;
            if !convergent {
                return Ok(IntegralVerdict { value: f64::INFINITY, convergent: false });
            }
            let quad = graded_toward_zero(
                &mut |s| modulus.eval(s).powf(q) * s.powf(-r),
                tau,
                GRADED_LEVELS,
            )?;
            Ok(IntegralVerdict { value: quad.value, convergent })
        }
        Modulus::Tabulated { .. } => {
            let quad = graded_toward_zero(
                &mut |s| modulus.eval(s).powf(q) * s.powf(-r),
                tau,
                GRADED_LEVELS,
            )?;
            Ok(IntegralVerdict { value: quad.value, convergent: !quad.divergent })
        }
    }
}

/// Evaluate the three integral conditions for a modulus at exponent p.
pub fn dini_report(modulus: &Modulus, tau: f64, p: f64) -> Result<DiniReport> {
    if !(p > 1.0) || p.is_infinite() {
        return Err(Error::invalid("the integral conditions need p in (1, infinity)"));
    }
    Ok(DiniReport {
        p,
        tau,
        integral_32: modulus_power_integral(modulus, 1.0, 1.5, tau)?,
        integral_p: modulus_power_integral(modulus, p, p, tau)?,
        integral_2log: modulus_power_integral(modulus, 2.0, 1.0, tau)?,
    })
}

/// Initial-data norm via the semigroup characterization:
/// (||u0||_H^p + int_0^tau ||A0 e^{-t A0} u0||_H^p dt)^{1/p}.
/// The integral is taken toward t = 0 on a geometric grid; `resolved` is
/// false when its partial sums keep growing, signaling data outside the
/// admissible class at this resolution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InterpolationNorm {
    pub value: f64,
    pub resolved: bool,
}

pub fn interpolation_norm(
    a0: &OperatorH,
    u0: &CVec,
    p: f64,
    tau: f64,
) -> Result<InterpolationNorm> {
    if !(p > 1.0) || p.is_infinite() || !(tau > 0.0) {
        return Err(Error::invalid("interpolation norm needs p in (1, infinity), tau > 0"));
    }
    a0.resolvent(c(0.0))
        .map_err(|_| Error::singular("interpolation norm needs an invertible operator"))?;
    let space = a0.space();
    let h0 = space.h_norm(u0);
    if h0 == 0.0 && u0.iter().all(|z| *z == c(0.0)) {
        return Ok(InterpolationNorm { value: 0.0, resolved: true });
    }
    let mut prop = Propagator::new(a0);
    let quad = graded_toward_zero(
        &mut |t| space.h_norm(&prop.action_aexp(t, u0)).powf(p),
        tau,
        GRADED_LEVELS,
    )?;
    Ok(InterpolationNorm {
        value: (h0.powf(p) + quad.value).powf(1.0 / p),
        resolved: !quad.divergent,
    })
}

/// The a-priori estimate ratio
/// (||u||_p + ||u'||_p + ||Au||_p) / (||f||_p + initial-data norm).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AprioriRatio {
    pub value: f64,
    pub numerator: f64,
    pub denominator: f64,
    /// true when both sides vanish (0/0 guarded to 0)
    pub degenerate: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn apriori_ratio(
    space: &GalerkinSpace,
    u: &GridFunction,
    du: &GridFunction,
    au: &GridFunction,
    f: &GridFunction,
    u0: &CVec,
    a0: &OperatorH,
    p: f64,
) -> Result<AprioriRatio> {
    if !u.same_grid(du) || !u.same_grid(au) || !u.same_grid(f) {
        return Err(Error::invalid("the a-priori ratio needs all data on one grid"));
    }
    let numerator = lp_norm(space, u, p)? + lp_norm(space, du, p)? + lp_norm(space, au, p)?;
    let denominator = lp_norm(space, f, p)? + interpolation_norm(a0, u0, p, u.grid().horizon())?.value;
    if denominator == 0.0 {
        if numerator == 0.0 {
            return Ok(AprioriRatio { value: 0.0, numerator, denominator, degenerate: true });
        }
        return Err(Error::degenerate(
            "zero data with a nonzero solution: the ratio is undefined",
        ));
    }
    Ok(AprioriRatio { value: numerator / denominator, numerator, denominator, degenerate: false })
}

/// Lp -> Lp bound for the scalar convolution kernel omega(t-s)/(t-s)^r via
/// the Schur test: both one-variable kernel integrals are bounded by
/// int_0^tau omega(s) s^{-r} ds, so the bound is the same for every p in
/// (1, infinity).  `convergent` is false when that integral diverges, in
/// which case no bound is claimed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MajorantBound {
    pub value: f64,
    pub convergent: bool,
    pub kernel_exponent: f64,
}

pub fn scalar_majorant_norm(
    modulus: &Modulus,
    kernel_exponent: f64,
    p: f64,
    tau: f64,
) -> Result<MajorantBound> {
    if kernel_exponent != 1.0 && kernel_exponent != 1.5 {
        return Err(Error::invalid("kernel exponent must be 1 or 3/2"));
    }
    if !(p > 1.0) || p.is_infinite() {
        return Err(Error::invalid("the kernel bound is stated for p in (1, infinity)"));
    }
    let iv = modulus_power_integral(modulus, 1.0, kernel_exponent, tau)?;
    Ok(MajorantBound { value: iv.value, convergent: iv.convergent, kernel_exponent })
}

/// Max over nodes of ||u(t)||_V^2 / (||u'(t)||_{V'}^2 + ||f(t)||_{V'}^2).
/// Nodes where both sides vanish are skipped; a nonzero numerator over a
/// zero denominator reports infinity.
pub fn v_norm_recovery_check(
    space: &GalerkinSpace,
    u: &GridFunction,
    du: &GridFunction,
    f: &GridFunction,
) -> Result<f64> {
    if !u.same_grid(du) || !u.same_grid(f) {
        return Err(Error::invalid("the recovery check needs all data on one grid"));
    }
    let mut worst = 0.0f64;
    for k in 0..u.values().len() {
        let num = space.v_norm(u.value(k)).powi(2);
        let den = space.vdual_norm(du.value(k)).powi(2) + space.vdual_norm(f.value(k)).powi(2);
        if den == 0.0 {
            if num == 0.0 {
                continue;
            }
            return Ok(f64::INFINITY);
        }
        worst = worst.max(num / den);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TimeGrid;
    use crate::probe::{random_cvec, seeded_rng};
    use crate::CMat;
    use std::sync::Arc;

    fn scalar_gf(tau: f64, n: usize, f: impl Fn(f64) -> f64) -> (Arc<GalerkinSpace>, GridFunction) {
        let sp = GalerkinSpace::euclidean(1).unwrap();
        let grid = TimeGrid::uniform(tau, n).unwrap();
        let g = GridFunction::sample(grid, |t| CVec::from_vec(vec![c(f(t))]));
        (sp, g)
    }

    #[test]
    fn lp_norm_basics() {
        let (sp, zero) = scalar_gf(2.0, 8, |_| 0.0);
        assert_eq!(lp_norm(&sp, &zero, 2.0).unwrap(), 0.0);

        let (sp, cst) = scalar_gf(2.0, 8, |_| 3.0);
        for p in [1.0, 2.0, 4.0] {
            let expect = 2.0f64.powf(1.0 / p) * 3.0;
            assert!((lp_norm(&sp, &cst, p).unwrap() - expect).abs() < 1e-13);
        }
        assert!((lp_norm(&sp, &cst, f64::INFINITY).unwrap() - 3.0).abs() < 1e-15);

        let (sp, ramp) = scalar_gf(1.0, 1000, |t| t);
        let got = lp_norm(&sp, &ramp, 2.0).unwrap();
        assert!((got - 1.0 / 3.0f64.sqrt()).abs() < 1e-3, "left-sum accuracy O(1/N): {got}");
    }

    #[test]
    fn lp_norm_is_a_norm() {
        let sp = GalerkinSpace::euclidean(3).unwrap();
        let grid = TimeGrid::uniform(1.0, 7).unwrap();
        let mut rng = seeded_rng(11, 0);
        let mk = |rng: &mut _| {
            GridFunction::new(
                Arc::clone(&grid),
                (0..8).map(|_| random_cvec(rng, 3)).collect(),
            )
            .unwrap()
        };
        let a = mk(&mut rng);
        let b = mk(&mut rng);
        for p in [1.5, 2.0, 4.0] {
            let na = lp_norm(&sp, &a, p).unwrap();
            let scaled = lp_norm(&sp, &a.scale(c(-2.5)), p).unwrap();
            assert!((scaled - 2.5 * na).abs() < 1e-12 * na, "homogeneity at p = {p}");
            let nsum = lp_norm(&sp, &a.add(&b).unwrap(), p).unwrap();
            assert!(nsum <= na + lp_norm(&sp, &b, p).unwrap() + 1e-12, "triangle at p = {p}");
        }
    }

    #[test]
    fn dini_closed_forms_for_lipschitz() {
        let ch = 0.7;
        let m = Modulus::Hoelder { exponent: 1.0, constant: ch };
        let r = dini_report(&m, 1.0, 2.0).unwrap();
        assert!(r.integral_32.convergent);
        assert!((r.integral_32.value - 2.0 * ch).abs() < 1e-14);
        assert!(r.integral_p.convergent);
        assert!((r.integral_p.value - ch * ch).abs() < 1e-14);
        assert!(r.integral_2log.convergent);
        assert!((r.integral_2log.value - ch * ch / 2.0).abs() < 1e-14);
    }

    #[test]
    fn dini_thresholds_match_analysis() {
        for &a in &[0.4, 0.5, 0.51, 0.75, 1.0] {
            for &p in &[1.5, 2.0, 4.0] {
                let m = Modulus::Hoelder { exponent: a, constant: 1.0 };
                let r = dini_report(&m, 1.0, p).unwrap();
                assert_eq!(r.integral_32.convergent, a > 0.5, "integral_32 at a = {a}");
                assert_eq!(
                    r.integral_p.convergent,
                    a > 1.0 - 1.0 / p,
                    "integral_p at a = {a}, p = {p}"
                );
                assert!(r.integral_2log.convergent, "integral_2log at a = {a}");
            }
        }
    }

    #[test]
    fn dini_zero_modulus() {
        let m = Modulus::Hoelder { exponent: 0.3, constant: 0.0 };
        let r = dini_report(&m, 1.0, 2.0).unwrap();
        assert!(r.integral_32.convergent && r.integral_32.value == 0.0);
        assert!(r.integral_p.convergent && r.integral_p.value == 0.0);
        assert!(r.integral_2log.convergent && r.integral_2log.value == 0.0);
    }

    #[test]
    fn dini_tabulated_is_conservative() {
        // positive floor below the first gap: s^{-3/2} mass is unbounded
        let m = Modulus::Tabulated {
            gaps: vec![0.1, 0.5, 1.0],
            values: vec![0.2, 0.4, 0.5],
        };
        let r = dini_report(&m, 1.0, 2.0).unwrap();
        assert!(!r.integral_32.convergent);
        assert!(!r.integral_p.convergent, "omega/s ~ 0.2/s is already L2-divergent");
    }

    #[test]
    fn interpolation_norm_eigenvector_closed_form() {
        let sp = GalerkinSpace::euclidean(3).unwrap();
        let eigs = [0.8, 2.0, 5.0];
        let a = OperatorH::new(
            CMat::from_diagonal(&CVec::from_iterator(3, eigs.iter().map(|&l| c(l)))),
            Arc::clone(&sp),
            0.0,
        );
        let (p, tau) = (2.0, 1.5);
        for (j, &lam) in eigs.iter().enumerate() {
            let mut u0 = CVec::zeros(3);
            u0[j] = c(2.0);
            let norm = interpolation_norm(&a, &u0, p, tau).unwrap();
            assert!(norm.resolved);
            let nu = 2.0f64;
            let expect = (nu.powf(p)
                + nu.powf(p) * lam.powf(p) * (1.0 - (-p * lam * tau).exp()) / (p * lam))
                .powf(1.0 / p);
            assert!((norm.value - expect).abs() < 1e-9 * expect, "lambda = {lam}");
        }
    }

    #[test]
    fn interpolation_norm_monotone_in_tau() {
        let sp = GalerkinSpace::euclidean(4).unwrap();
        let mut rng = seeded_rng(5, 0);
        let m = {
            let r = random_cvec(&mut rng, 4);
            CMat::from_diagonal(&CVec::from_iterator(4, (0..4).map(|i| c(1.0 + r[i].norm()))))
        };
        let a = OperatorH::new(m, sp, 0.0);
        let u0 = random_cvec(&mut rng, 4);
        let mut last = 0.0;
        for tau in [0.25, 0.5, 1.0, 2.0] {
            let v = interpolation_norm(&a, &u0, 2.0, tau).unwrap().value;
            assert!(v >= last - 1e-12, "monotone in tau");
            last = v;
        }
    }

    #[test]
    fn interpolation_norm_zero_vector() {
        let sp = GalerkinSpace::euclidean(2).unwrap();
        let a = OperatorH::new(CMat::identity(2, 2), sp, 0.0);
        let n = interpolation_norm(&a, &CVec::zeros(2), 2.0, 1.0).unwrap();
        assert_eq!(n.value, 0.0);
        assert!(n.resolved);
    }

    #[test]
    fn apriori_ratio_degenerate_guards() {
        let sp = GalerkinSpace::euclidean(2).unwrap();
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let z = GridFunction::zeros(Arc::clone(&grid), 2);
        let a0 = OperatorH::new(CMat::identity(2, 2), Arc::clone(&sp), 0.0);
        let r =
            apriori_ratio(&sp, &z, &z, &z, &z, &CVec::zeros(2), &a0, 2.0).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.value, 0.0);

        let ones = GridFunction::sample(Arc::clone(&grid), |_| CVec::from_element(2, c(1.0)));
        assert!(
            apriori_ratio(&sp, &ones, &z, &z, &z, &CVec::zeros(2), &a0, 2.0).is_err(),
            "nonzero solution over zero data must be refused"
        );
    }

    #[test]
    fn apriori_ratio_is_scale_invariant() {
        let sp = GalerkinSpace::euclidean(2).unwrap();
        let grid = TimeGrid::uniform(1.0, 6).unwrap();
        let mut rng = seeded_rng(9, 3);
        let mk = |rng: &mut _| {
            GridFunction::new(Arc::clone(&grid), (0..7).map(|_| random_cvec(rng, 2)).collect())
                .unwrap()
        };
        let (u, du, au, f) = (mk(&mut rng), mk(&mut rng), mk(&mut rng), mk(&mut rng));
        let u0 = random_cvec(&mut rng, 2);
        let a0 = OperatorH::new(CMat::identity(2, 2) * c(2.0), Arc::clone(&sp), 0.0);
        let r1 = apriori_ratio(&sp, &u, &du, &au, &f, &u0, &a0, 2.0).unwrap();
        let s = c(3.0);
        let r2 = apriori_ratio(
            &sp,
            &u.scale(s),
            &du.scale(s),
            &au.scale(s),
            &f.scale(s),
            &(&u0 * s),
            &a0,
            2.0,
        )
        .unwrap();
        assert!((r1.value - r2.value).abs() < 1e-10 * r1.value);
    }

    #[test]
    fn majorant_closed_forms() {
        let zero = Modulus::Hoelder { exponent: 0.5, constant: 0.0 };
        assert_eq!(scalar_majorant_norm(&zero, 1.5, 2.0, 1.0).unwrap().value, 0.0);

        let lip = Modulus::Hoelder { exponent: 1.0, constant: 1.0 };
        let b = scalar_majorant_norm(&lip, 1.5, 2.0, 1.0).unwrap();
        assert!(b.convergent);
        assert!((b.value - 2.0).abs() < 1e-14);

        let h34 = Modulus::Hoelder { exponent: 0.75, constant: 1.0 };
        for tau in [0.5, 1.0, 2.0] {
            let b = scalar_majorant_norm(&h34, 1.5, 3.0, tau).unwrap();
            assert!((b.value - tau.powf(0.25) / 0.25).abs() < 1e-13);
        }

        let rough = Modulus::Hoelder { exponent: 0.4, constant: 1.0 };
        assert!(!scalar_majorant_norm(&rough, 1.5, 2.0, 1.0).unwrap().convergent);
        assert!(scalar_majorant_norm(&rough, 1.0, 2.0, 1.0).unwrap().convergent);
        assert!(scalar_majorant_norm(&rough, 1.2, 2.0, 1.0).is_err(), "exponent outside {{1, 3/2}}");
    }

    #[test]
    fn recovery_check_trivial_and_spectral() {
        let gv = CMat::from_diagonal(&CVec::from_vec(vec![c(4.0), c(9.0)]));
        let sp = GalerkinSpace::new(CMat::identity(2, 2), gv).unwrap();
        let grid = TimeGrid::uniform(1.0, 3).unwrap();
        let z = GridFunction::zeros(Arc::clone(&grid), 2);
        assert_eq!(v_norm_recovery_check(&sp, &z, &z, &z).unwrap(), 0.0);

        // eigenvector data: u = e_j decaying, du = -lambda u, f = 0 gives
        // defect ||e_j||_V^2 / (lambda^2 ||e_j||_{V'}^2) = v_j^2 / lambda^2
        let lam = 3.0;
        let u = GridFunction::sample(Arc::clone(&grid), |t| {
            CVec::from_vec(vec![c((-lam * t).exp()), c(0.0)])
        });
        let du = u.scale(c(-lam));
        let defect = v_norm_recovery_check(&sp, &u, &du, &z).unwrap();
        let expect = 4.0f64 * 4.0 / (lam * lam); // v_j^2 / lambda^2 with v_j = 4
        assert!((defect - expect).abs() < 1e-12 * expect, "{defect} vs {expect}");

        // nonzero u against zero du and f: unbounded defect
        assert_eq!(v_norm_recovery_check(&sp, &u, &z, &z).unwrap(), f64::INFINITY);
    }
}
