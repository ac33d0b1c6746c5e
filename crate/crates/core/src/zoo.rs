//! Concrete problem builders: a synthetic rotating family with a modulus
//! known by construction, 1D P1 finite-element families (variable diffusion
//! coefficient, and Robin boundary terms), and the scalar ODE with a dense
//! family of integrable singularities whose regularity dichotomy is the
//! canonical stress test for the solver.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forms::{FormFamily, Modulus};
use crate::quad::adaptive_simpson;
use crate::space::GalerkinSpace;
use crate::{c, CMat};

/// Default eigenvalue scale of the rotating family.  Frozen so that the
/// shifted history-operator norms measured at mu in {1, 10, 100, 1000}
/// on a 256-cell unit-horizon grid sit in the crossover regime: the fitted
/// log-log slope is -0.498 at amplitude 0.5.
pub const ROTATING_SCALE: f64 = 200.0;
/// Default angular speed of the rotating perturbation.
pub const ROTATING_SPEED: f64 = 4.0;

/// Synthetic calibration family with defaults tuned for the regression
/// suite: horizon 1, rotation speed and stiffness scale frozen.
pub fn build_rotating_family(n: usize, hoelder_a: f64, amplitude: f64) -> Result<FormFamily> {
    build_rotating_family_scaled(n, hoelder_a, amplitude, 1.0, ROTATING_SPEED, ROTATING_SCALE)
}

/// Rotating family F(t) = G_V + amplitude t^a E(t) with
/// E(t) = G_V^{1/2} R(t)^T S R(t) G_V^{1/2}, R(t) plane rotations of angle
/// speed*t on consecutive coordinate pairs and S a fixed sign-alternating
/// diagonal with unit norm.  Everything about it is known in closed form:
///   * V->V' bound: M = 1 + amplitude * tau^a,
///   * coercivity: alpha = 1 - amplitude * tau^a (amplitude must keep it > 0),
///   * modulus: omega(h) = amplitude * (1 + 2 speed tau) * h^a.
pub fn build_rotating_family_scaled(
    n: usize,
    hoelder_a: f64,
    amplitude: f64,
    tau: f64,
    speed: f64,
    scale: f64,
) -> Result<FormFamily> {
    if n == 0 {
        return Err(Error::invalid("the rotating family needs dimension >= 1"));
    }
    if !(hoelder_a > 0.0 && hoelder_a <= 1.0) {
        return Err(Error::invalid("rotating family exponent must lie in (0, 1]"));
    }
    if !(amplitude >= 0.0) || !(tau > 0.0) || !(speed >= 0.0) || !(scale > 0.0) {
        return Err(Error::invalid("rotating family parameters out of range"));
    }
    let alpha = 1.0 - amplitude * tau.powf(hoelder_a);
    if !(alpha > 0.0) {
        return Err(Error::invalid(
            "amplitude too large: the perturbation destroys coercivity",
        ));
    }
    let lambdas: Vec<f64> = (0..n).map(|k| scale * (1.0 + 0.35 * k as f64)).collect();
    let gram_v = CMat::from_fn(n, n, |i, j| if i == j { c(lambdas[i]) } else { c(0.0) });
    let space = GalerkinSpace::new(CMat::identity(n, n), gram_v.clone())?;
    let sqrt_v: Vec<f64> = lambdas.iter().map(|l| l.sqrt()).collect();
    let s_diag: Vec<f64> = (0..n)
        .map(|k| {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sign * (1.0 - 0.5 * k as f64 / n as f64)
        })
        .collect();

    let form = {
        let sqrt_v = sqrt_v.clone();
        let s_diag = s_diag.clone();
        let gram_v = gram_v.clone();
        Arc::new(move |t: f64| {
            let n = sqrt_v.len();
            // R(t): plane rotation by speed*t on each consecutive pair
            let mut r = CMat::identity(n, n);
            let theta = speed * t;
            let (co, si) = (theta.cos(), theta.sin());
            for p in 0..n / 2 {
                let (i, j) = (2 * p, 2 * p + 1);
                r[(i, i)] = c(co);
                r[(i, j)] = c(-si);
                r[(j, i)] = c(si);
                r[(j, j)] = c(co);
            }
            let mut b = CMat::zeros(n, n);
            for k in 0..n {
                for l in 0..n {
                    let mut acc = 0.0;
                    for q in 0..n {
                        acc += r[(q, k)].re * s_diag[q] * r[(q, l)].re;
                    }
                    b[(k, l)] = c(acc);
                }
            }
            // E = G_V^{1/2} B G_V^{1/2}
            let mut e = b;
            for k in 0..n {
                for l in 0..n {
                    e[(k, l)] *= c(sqrt_v[k] * sqrt_v[l]);
                }
            }
            &gram_v + e * c(amplitude * t.powf(hoelder_a))
        })
    };
    FormFamily::new(
        space,
        tau,
        form,
        1.0 + amplitude * tau.powf(hoelder_a),
        alpha,
        0.0,
        Modulus::Hoelder {
            exponent: hoelder_a,
            constant: amplitude * (1.0 + 2.0 * speed * tau),
        },
    )
}

/// P1 mass matrix on [0,1] with `mesh` interior nodes (mesh+2 nodes total,
/// free boundary values).
pub fn p1_mass(mesh: usize) -> CMat {
    let n = mesh + 2;
    let h = 1.0 / (mesh + 1) as f64;
    let mut m = CMat::zeros(n, n);
    for e in 0..n - 1 {
        m[(e, e)] += c(h / 3.0);
        m[(e + 1, e + 1)] += c(h / 3.0);
        m[(e, e + 1)] += c(h / 6.0);
        m[(e + 1, e)] += c(h / 6.0);
    }
    m
}

/// P1 stiffness matrix on [0,1] with `mesh` interior nodes.
pub fn p1_stiffness(mesh: usize) -> CMat {
    let n = mesh + 2;
    let h = 1.0 / (mesh + 1) as f64;
    let mut k = CMat::zeros(n, n);
    for e in 0..n - 1 {
        k[(e, e)] += c(1.0 / h);
        k[(e + 1, e + 1)] += c(1.0 / h);
        k[(e, e + 1)] += c(-1.0 / h);
        k[(e + 1, e)] += c(-1.0 / h);
    }
    k
}

/// 1D diffusion family on [0,1]: F(t)[u,v] = int coeff(t,x) u' conj(v') dx,
/// P1 elements with `mesh` interior nodes, coefficient sampled at element
/// midpoints.  H = L2 (mass matrix), V = H^1 (mass + unit stiffness).
/// `nu` is the declared ellipticity floor Re coeff >= nu (checked on a
/// sample grid); `coeff_hoelder` = (exponent, constant) is the declared
/// uniform-in-x time regularity of the coefficient.
pub fn build_elliptic_1d(
    coeff: Arc<dyn Fn(f64, f64) -> crate::C64 + Send + Sync>,
    mesh: usize,
    nu: f64,
    tau: f64,
    coeff_hoelder: (f64, f64),
) -> Result<FormFamily> {
    if !(nu > 0.0) {
        return Err(Error::invalid("ellipticity floor nu must be positive"));
    }
    if mesh == 0 || !(tau > 0.0) {
        return Err(Error::invalid("need at least one interior node and tau > 0"));
    }
    let h = 1.0 / (mesh + 1) as f64;
    // ellipticity and boundedness on a sample grid
    let mut sup = 0.0f64;
    for it in 0..=64 {
        let t = tau * it as f64 / 64.0;
        for e in 0..mesh + 1 {
            let x = (e as f64 + 0.5) * h;
            let a = coeff(t, x);
            if a.re < nu * (1.0 - 1e-12) {
                return Err(Error::invalid(format!(
                    "coefficient violates ellipticity at t = {t}, x = {x}: Re = {}",
                    a.re
                )));
            }
            sup = sup.max(a.norm());
        }
    }
    let mass = p1_mass(mesh);
    let gram_v = &mass + p1_stiffness(mesh);
    let space = GalerkinSpace::new(mass, gram_v)?;
    let n = mesh + 2;
    let form = Arc::new(move |t: f64| {
        let mut f = CMat::zeros(n, n);
        for e in 0..n - 1 {
            let x = (e as f64 + 0.5) * h;
            let a = coeff(t, x) / c(h);
            f[(e, e)] += a;
            f[(e + 1, e + 1)] += a;
            f[(e, e + 1)] -= a;
            f[(e + 1, e)] -= a;
        }
        f
    });
    FormFamily::new(
        space,
        tau,
        form,
        sup * (1.0 + 1e-9),
        nu,
        nu,
        Modulus::Hoelder { exponent: coeff_hoelder.0, constant: coeff_hoelder.1 },
    )
}

/// Robin family on [0,1] with P1 elements:
///
/// ```text
/// F(t)[u,v] = int u' conj(v') + beta(t,0) u(0)conj(v(0)) + beta(t,1) u(1)conj(v(1))
/// ```
///
/// `beta(t, endpoint)` takes the endpoint coordinate (0.0 or 1.0).  Constants
/// come from the trace inequality |u(e)|^2 <= eps ||u'||^2 + (1 + 1/eps)||u||^2:
/// strictly positive beta gives delta = 0; otherwise eps = alpha/(2 sup|beta|)
/// with alpha = 1/2.  `beta_hoelder` = (exponent, constant) declares the time
/// regularity of beta, uniformly over the two endpoints.
pub fn build_robin(
    beta: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    mesh: usize,
    tau: f64,
    beta_hoelder: (f64, f64),
) -> Result<FormFamily> {
    if mesh == 0 || !(tau > 0.0) {
        return Err(Error::invalid("need at least one interior node and tau > 0"));
    }
    let mut b_abs = 0.0f64;
    let mut b_min = f64::INFINITY;
    for it in 0..=2048 {
        let t = tau * it as f64 / 2048.0;
        for endpoint in [0.0, 1.0] {
            let v = beta(t, endpoint);
            if !v.is_finite() {
                return Err(Error::invalid("beta must be finite on [0, tau]"));
            }
            b_abs = b_abs.max(v.abs());
            b_min = b_min.min(v);
        }
    }
    let (alpha, delta) = if b_min > 0.0 {
        (b_min.min(1.0) / 4.0, 0.0)
    } else {
        (0.5, 0.5 + 2.0 * b_abs * (1.0 + 4.0 * b_abs))
    };
    let mass = p1_mass(mesh);
    let gram_v = &mass + p1_stiffness(mesh);
    let space = GalerkinSpace::new(mass, gram_v)?;
    let n = mesh + 2;
    let stiff = p1_stiffness(mesh);
    let form = Arc::new(move |t: f64| {
        let mut f = stiff.clone();
        f[(0, 0)] += c(beta(t, 0.0));
        f[(n - 1, n - 1)] += c(beta(t, 1.0));
        f
    });
    FormFamily::new(
        space,
        tau,
        form,
        1.0 + 4.0 * b_abs * (1.0 + 1e-9),
        alpha,
        delta,
        Modulus::Hoelder { exponent: beta_hoelder.0, constant: 4.0 * beta_hoelder.1 },
    )
}

/// Scalar problem x'(t) + a(t) x(t) = 1, x(0) = 0 on [0,1], with
/// a(t) = 1 + sum_k c_k |t - t_k|^{-1/p}: integrable singularities on a
/// dense node set.  a is in L_q(0,1) for q < p but not in L_p.
#[derive(Clone, Debug)]
pub struct CounterexampleSpec {
    /// singularity exponent: each term is |t - t_k|^{-1/p}
    pub p: f64,
    /// singular nodes inside (0, 1)
    pub nodes: Vec<f64>,
    /// positive weights, geometrically decaying in the standard construction
    pub weights: Vec<f64>,
}

impl CounterexampleSpec {
    /// Standard construction: K bit-reversal (dyadic, dense) nodes and
    /// weights 0.02 * 0.997^k — geometric decay slow enough that all K
    /// terms carry comparable mass.
    pub fn standard(p: f64, k: usize) -> CounterexampleSpec {
        let nodes = (1..=k).map(van_der_corput).collect();
        let weights = (1..=k).map(|i| 0.02 * 0.997f64.powi(i as i32)).collect();
        CounterexampleSpec { p, nodes, weights }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0) {
            return Err(Error::invalid("singularity exponent p must exceed 1"));
        }
        if self.nodes.len() != self.weights.len() {
            return Err(Error::invalid("node and weight counts must match"));
        }
        if self.nodes.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(Error::invalid("singular nodes must lie inside (0, 1)"));
        }
        if self.weights.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::invalid("weights must be positive"));
        }
        Ok(())
    }
}

/// Bit-reversal sequence in base 2 (dense in (0,1), all dyadic rationals).
pub fn van_der_corput(mut n: usize) -> f64 {
    let mut v = 0.0;
    let mut denom = 1.0;
    while n > 0 {
        denom *= 2.0;
        v += (n % 2) as f64 / denom;
        n /= 2;
    }
    v
}

/// Evaluators for the singular scalar problem.  The coefficient evaluator
/// caps distances at 1e-12 (exact node hits stay finite); the running
/// integral of a has a closed form, so x(t) needs only one quadrature level.
#[derive(Clone, Debug)]
pub struct Counterexample {
    spec: CounterexampleSpec,
    cap: f64,
}

/// distance cap for coefficient evaluation near the singular nodes
const SINGULARITY_CAP: f64 = 1e-12;

pub fn build_counterexample(spec: CounterexampleSpec) -> Result<Counterexample> {
    spec.validate()?;
    Ok(Counterexample { spec, cap: SINGULARITY_CAP })
}

impl Counterexample {
    pub fn spec(&self) -> &CounterexampleSpec {
        &self.spec
    }

    /// a(t) = 1 + sum c_k max(|t - t_k|, cap)^{-1/p}.
    pub fn a(&self, t: f64) -> f64 {
        let inv_p = 1.0 / self.spec.p;
        let mut v = 1.0;
        for (tk, ck) in self.spec.nodes.iter().zip(&self.spec.weights) {
            let d = (t - tk).abs().max(self.cap);
            v += ck * d.powf(-inv_p);
        }
        v
    }

    /// Closed-form int_s^t a(r) dr via the signed antiderivative of each
    /// singular term (the cap changes the value only within O(cap^{1-1/p})).
    pub fn integral_a(&self, s: f64, t: f64) -> f64 {
        let qe = 1.0 - 1.0 / self.spec.p;
        let prim = |y: f64| y.signum() * y.abs().powf(qe) / qe;
        let mut v = t - s;
        for (tk, ck) in self.spec.nodes.iter().zip(&self.spec.weights) {
            v += ck * (prim(t - tk) - prim(s - tk));
        }
        v
    }

    /// x(t) = int_0^t exp(-int_s^t a) ds by adaptive quadrature split at the
    /// singular nodes (the integrand is continuous; only its derivative
    /// blows up there).
    pub fn x(&self, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        if !(t > 0.0 && t <= 1.0) {
            return Err(Error::domain("the solution is defined on (0, 1]"));
        }
        let splits: Vec<f64> = self
            .spec
            .nodes
            .iter()
            .copied()
            .filter(|&tk| tk > 0.0 && tk < t)
            .collect();
        let mut integrand = |s: f64| (-self.integral_a(s, t)).exp();
        adaptive_simpson(&mut integrand, 0.0, t, 1e-10, &splits)
    }

    /// L_q norm of a(t) x(t) over [lo, hi] by a composite two-point Gauss
    /// rule (nodes never hit the dyadic singular points) with `panels`
    /// subdivisions; refining panels 4x probes the integrability dichotomy.
    ///
    /// x is evaluated at all sample points in one cumulative sweep: with
    /// A(t) = int_0^t a exact, x(t) = e^{-A(t)} int_0^t e^{A(s)} ds, and the
    /// inner integral advances from sample to sample instead of restarting at
    /// 0 — point queries through `x` would make the rule quadratic in panels.
    pub fn ax_norm(&self, q: f64, lo: f64, hi: f64, panels: usize) -> Result<f64> {
        if !(q >= 1.0) || !(lo >= 0.0 && hi <= 1.0 && lo < hi) || panels == 0 {
            return Err(Error::invalid("norm needs q >= 1, 0 <= lo < hi <= 1, panels >= 1"));
        }
        let h = (hi - lo) / panels as f64;
        let off = 0.5 / 3.0f64.sqrt();
        let samples: Vec<f64> = (0..panels)
            .flat_map(|k| {
                let mid = lo + (k as f64 + 0.5) * h;
                [mid - off * h, mid + off * h]
            })
            .collect();
        let mut grown = |s: f64| self.integral_a(0.0, s).exp();
        let mut cum = 0.0;
        let mut prev = 0.0;
        let mut acc = 0.0;
        for &t in &samples {
            if t > prev {
                let splits: Vec<f64> = self
                    .spec
                    .nodes
                    .iter()
                    .copied()
                    .filter(|&tk| tk > prev && tk < t)
                    .collect();
                cum += adaptive_simpson(&mut grown, prev, t, 1e-11 * (1.0 + cum), &splits)?;
                prev = t;
            }
            let x = (-self.integral_a(0.0, t)).exp() * cum;
            let v = (self.a(t) * x).abs();
            acc += 0.5 * h * v.powf(q);
        }
        Ok(acc.powf(1.0 / q))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::linear_fit;
    use crate::forms::{default_pair_grid, estimate_modulus, verify_bounded, verify_coercive};
    use crate::probe::{random_unit_h, seeded_rng};
    use nalgebra::SymmetricEigen;

    fn sample_times(tau: f64, k: usize) -> Vec<f64> {
        (0..=k).map(|i| tau * i as f64 / k as f64).collect()
    }

    #[test]
    fn rotating_family_declared_constants_hold() {
        for (n, a, amp) in [(2, 0.75, 0.4), (4, 0.75, 0.5), (3, 0.8, 0.2), (1, 0.6, 0.3)] {
            let fam = build_rotating_family(n, a, amp).unwrap();
            let times = sample_times(fam.horizon(), 40);
            let b = verify_bounded(&fam, &times).unwrap();
            assert!(!b.violated, "bound violated for n={n}: {} > {}", b.m_est, b.declared);
            let co = verify_coercive(&fam, &times).unwrap();
            assert!(!co.violated, "coercivity violated for n={n}: {}", co.alpha_est);
        }
    }

    #[test]
    fn rotating_family_zero_amplitude_is_autonomous() {
        let fam = build_rotating_family(3, 0.75, 0.0).unwrap();
        let d = (fam.form_at(0.2) - fam.form_at(0.9)).norm();
        assert_eq!(d, 0.0);
        if let Modulus::Hoelder { constant, .. } = fam.modulus() {
            assert_eq!(*constant, 0.0);
        } else {
            panic!("expected a Hoelder modulus");
        }
    }

    #[test]
    fn rotating_family_rejects_bad_parameters() {
        assert!(build_rotating_family(2, 0.75, 1.5).is_err()); // kills coercivity
        assert!(build_rotating_family(2, 0.0, 0.1).is_err()); // exponent out of (0, 1]
        assert!(build_rotating_family(2, 1.2, 0.1).is_err());
        assert!(build_rotating_family(0, 0.75, 0.1).is_err());
        // exponents at or below 1/2 are constructible (they model hypothesis
        // failure); the form constants still hold there
        let fam = build_rotating_family(2, 0.4, 0.1).unwrap();
        let times = sample_times(fam.horizon(), 20);
        assert!(!verify_bounded(&fam, &times).unwrap().violated);
        assert!(!verify_coercive(&fam, &times).unwrap().violated);
    }

    #[test]
    fn rotating_family_modulus_recovers_exponent() {
        let a = 0.75;
        let fam = build_rotating_family_scaled(2, a, 0.4, 1.0, 4.0, 2.0).unwrap();
        // pairs anchored at t = 0, where the envelope amp * t^a binds the
        // increment exactly (away from 0 the rotation's Lipschitz drift
        // dominates small gaps and the measured slope tends to 1)
        let pairs: Vec<(f64, f64)> =
            (0..25).map(|i| (0.0, 1e-4 * (1e3f64).powf(i as f64 / 24.0))).collect();
        let m = estimate_modulus(&fam, &pairs).unwrap();
        if let Modulus::Tabulated { gaps, values } = &m {
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (g, v) in gaps.iter().zip(values) {
                if *v > 0.0 {
                    xs.push(g.ln());
                    ys.push(v.ln());
                }
            }
            let (slope, _) = linear_fit(&xs, &ys).unwrap();
            assert!((slope - a).abs() < 0.02, "measured exponent {slope} vs {a}");
        } else {
            panic!("expected tabulated modulus");
        }
        // and the declared modulus really bounds the measured one, both at
        // the anchor and in the Lipschitz-dominated interior
        for start in [0.0, 0.3] {
            for gap in [1e-4, 1e-3, 1e-2, 0.1] {
                let measured = {
                    let f1 = fam.form_at(start + gap);
                    let f0 = fam.form_at(start);
                    fam.space().form_dual_norm(&(f1 - f0))
                };
                assert!(measured <= fam.modulus().eval(gap) * (1.0 + 1e-9));
            }
        }
    }

    #[test]
    fn elliptic_unit_coefficient_is_stiffness() {
        let fam = build_elliptic_1d(Arc::new(|_, _| c(1.0)), 6, 1.0, 1.0, (1.0, 0.0)).unwrap();
        let d = (fam.form_at(0.5) - p1_stiffness(6)).norm();
        assert!(d < 1e-14);
        let times = sample_times(1.0, 8);
        assert!(!verify_bounded(&fam, &times).unwrap().violated);
        assert!(!verify_coercive(&fam, &times).unwrap().violated);
        assert!(build_elliptic_1d(Arc::new(|_, _| c(1.0)), 6, 0.0, 1.0, (1.0, 0.0)).is_err());
        // a coefficient dipping under nu is rejected
        assert!(build_elliptic_1d(
            Arc::new(|t: f64, _| c(1.0 - t)),
            6,
            0.5,
            1.0,
            (1.0, 1.0)
        )
        .is_err());
    }

    #[test]
    fn elliptic_eigenvalues_converge_second_order() {
        // Neumann eigenvalues of -d2/dx2 on (0,1): (k pi)^2
        let exact = std::f64::consts::PI.powi(2);
        let mut errs = Vec::new();
        for mesh in [8usize, 16, 32] {
            let mass = p1_mass(mesh);
            let stiff = p1_stiffness(mesh);
            let space = GalerkinSpace::new(mass, &stiff + p1_mass(mesh)).unwrap();
            let sym = space.sqrt_h_inv() * stiff * space.sqrt_h_inv();
            let sym = (&sym + sym.adjoint()) * c(0.5);
            let real = nalgebra::DMatrix::from_fn(sym.nrows(), sym.ncols(), |i, j| sym[(i, j)].re);
            let eig = SymmetricEigen::new(real);
            let mut vals: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
            vals.sort_by(f64::total_cmp);
            errs.push((vals[1] - exact).abs());
        }
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.0..5.5).contains(&ratio), "second-order convergence, got ratio {ratio}");
        }
    }

    #[test]
    fn elliptic_modulus_slope_matches_coefficient() {
        let fam = build_elliptic_1d(
            Arc::new(|t: f64, x: f64| c(1.0 + 0.5 * (2.0 * std::f64::consts::PI * x).sin() * t.powf(0.75))),
            16,
            0.25,
            1.0,
            (0.75, 0.5),
        )
        .unwrap();
        let m = estimate_modulus(&fam, &default_pair_grid(1.0, 40, 5)).unwrap();
        if let Modulus::Tabulated { gaps, values } = &m {
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            for (g, v) in gaps.iter().zip(values) {
                if *v > 0.0 && *g < 0.02 {
                    xs.push(g.ln());
                    ys.push(v.ln());
                }
            }
            let (slope, _) = linear_fit(&xs, &ys).unwrap();
            assert!((slope - 0.75).abs() < 0.03, "modulus slope {slope}");
        } else {
            panic!("expected tabulated modulus");
        }
    }

    #[test]
    fn robin_zero_beta_is_neumann() {
        let fam = build_robin(Arc::new(|_, _| 0.0), 6, 1.0, (1.0, 0.0)).unwrap();
        assert!((fam.form_at(0.3) - p1_stiffness(6)).norm() < 1e-14);
        assert!(fam.shift_delta() > 0.0, "pure Neumann needs a positive quasi-coercivity shift");
        let times = sample_times(1.0, 8);
        assert!(!verify_bounded(&fam, &times).unwrap().violated);
        assert!(!verify_coercive(&fam, &times).unwrap().violated);
    }

    #[test]
    fn robin_positive_beta_is_coercive_outright() {
        let fam = build_robin(Arc::new(|_, _| 1.0), 12, 1.0, (1.0, 0.0)).unwrap();
        assert_eq!(fam.shift_delta(), 0.0);
        let times = sample_times(1.0, 8);
        assert!(!verify_coercive(&fam, &times).unwrap().violated);
        assert!(!verify_bounded(&fam, &times).unwrap().violated);
        // form is Hermitian for real beta
        let f = fam.form_at(0.4);
        assert!((&f - f.adjoint()).norm() < 1e-14);

        // square-root domain is the V norm up to a uniform band
        let op = fam.assemble_operator(0.0);
        let sqrt = op.sqrt().unwrap();
        let space = fam.space();
        let mut rng = seeded_rng(7, 77);
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for _ in 0..50 {
            let u = random_unit_h(&mut rng, space);
            let ratio = space.h_norm(&(sqrt.matrix() * &u)) / space.v_norm(&u);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        assert!(hi / lo <= 10.0, "square-root vs V norm band too wide: {}", hi / lo);
    }

    #[test]
    fn robin_time_dependent_constants_hold() {
        let fam = build_robin(
            Arc::new(|t: f64, _| 1.0 + t.powf(0.6)),
            12,
            1.0,
            (0.6, 1.0),
        )
        .unwrap();
        let times = sample_times(1.0, 32);
        assert!(!verify_bounded(&fam, &times).unwrap().violated);
        assert!(!verify_coercive(&fam, &times).unwrap().violated);
        // measured modulus stays under the declared one
        for gap in [1e-3, 1e-2, 0.1] {
            let d = fam.space().form_dual_norm(&(fam.form_at(gap) - fam.form_at(0.0)));
            assert!(d <= fam.modulus().eval(gap) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn counterexample_trivial_case() {
        let ce = build_counterexample(CounterexampleSpec { p: 2.0, nodes: vec![], weights: vec![] })
            .unwrap();
        for t in [0.1, 0.5, 1.0] {
            assert_eq!(ce.a(t), 1.0);
            assert!((ce.x(t).unwrap() - (1.0 - (-t).exp())).abs() < 1e-8);
        }
    }

    #[test]
    fn counterexample_closed_form_integral_matches_quadrature() {
        let spec = CounterexampleSpec::standard(2.0, 5);
        let ce = build_counterexample(spec.clone()).unwrap();
        let splits: Vec<f64> = spec.nodes.clone();
        let mut f = |t: f64| ce.a(t);
        let quad = adaptive_simpson(&mut f, 0.05, 0.95, 1e-9, &splits).unwrap();
        let closed = ce.integral_a(0.05, 0.95);
        assert!(
            (quad - closed).abs() <= 1e-5 * closed.abs(),
            "closed form {closed} vs quadrature {quad}"
        );
    }

    #[test]
    fn counterexample_pointwise_structure() {
        let ce = build_counterexample(CounterexampleSpec::standard(2.0, 50)).unwrap();
        let c_lower = (-ce.integral_a(0.0, 1.0)).exp();
        for i in 1..=20 {
            let t = i as f64 / 20.0 - 0.013; // stay off the dyadic nodes
            let a = ce.a(t);
            let x = ce.x(t).unwrap();
            assert!(a >= 1.0);
            assert!(x > 0.0 && x < 1.0, "x({t}) = {x}");
            assert!(x <= 1.0 - (-t).exp() + 1e-9, "x must stay under the unit-coefficient solution");
            assert!(
                a * x >= c_lower * t * a - 1e-12,
                "lower bound failed at t = {t}: {} vs {}",
                a * x,
                c_lower * t * a
            );
        }
    }

    #[test]
    fn counterexample_integrability_dichotomy() {
        // the subcritical norm converges under refinement; the critical one
        // keeps climbing.  |a x|^2 integrates like sum_i c_i^2 x(t_i)^2 / d
        // near each node, so its quadrature value grows by a roughly constant
        // increment per 4x refinement (a log divergence) instead of settling.
        let ce = build_counterexample(CounterexampleSpec::standard(2.0, 50)).unwrap();
        let stable_a = ce.ax_norm(1.5, 0.0, 1.0, 256).unwrap();
        let stable_b = ce.ax_norm(1.5, 0.0, 1.0, 1024).unwrap();
        let rel = (stable_b - stable_a).abs() / stable_b;
        assert!(rel < 0.02, "integrable norm moved by {rel}");
        let ladder: Vec<f64> = [64usize, 256, 1024, 4096]
            .iter()
            .map(|&np| ce.ax_norm(2.0, 0.25, 0.75, np).unwrap())
            .collect();
        for w in ladder.windows(2) {
            let ratio = w[1] / w[0];
            assert!(
                ratio > 1.002,
                "critical norm must keep climbing under refinement: {ladder:?}"
            );
        }
        let total = ladder[3] / ladder[0];
        assert!(total > 1.015, "accumulated climb too small: {total}");
    }
}
