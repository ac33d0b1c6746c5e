//! `maxreg check` — verify the declared hypotheses of the configured
//! problem: form bound and coercivity constants, numerical-range sector,
//! calibrated resolvent differences, and the Dini integrals of the declared
//! modulus.  Exit 0 only when every check passes.

use maxreg_core::forms::{default_pair_grid, verify_bounded, verify_coercive, FormFamily};
use maxreg_core::metrics::dini_report;
use maxreg_core::semigroup::{
    calibrate_resolvent_difference, resolvent_difference_check, sector_report, SectorScanConfig,
};
use maxreg_core::zoo::Counterexample;
use maxreg_core::C64;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}
use serde_json::json;

use crate::commands::{failure, kv_rows, time_samples, CommandOutput, RunContext};
use crate::store::Cell;
use crate::CliError;

pub fn run(ctx: &mut RunContext) -> Result<CommandOutput, CliError> {
    if let Some(ce) = ctx.model.counterexample.clone() {
        return check_counterexample(ctx, &ce);
    }
    let family = ctx.model.require_family().map_err(failure)?.clone();
    check_family(ctx, &family)
}

fn check_family(ctx: &mut RunContext, family: &FormFamily) -> Result<CommandOutput, CliError> {
    let tau = family.horizon();
    let p = ctx.model.p;
    let mut violations = Vec::new();

    let times = time_samples(tau, 64);
    let bound = verify_bounded(family, &times).map_err(failure)?;
    if bound.violated {
        violations.push(format!(
            "form bound: measured {:.6e} at t = {:.3e} exceeds the declared {:.6e}",
            bound.m_est, bound.worst_time, bound.declared
        ));
    }
    println!("bound: measured {:.6e}, declared {:.6e}", bound.m_est, bound.declared);

    let coercivity = verify_coercive(family, &times).map_err(failure)?;
    if coercivity.violated {
        violations.push(format!(
            "coercivity: measured {:.6e} at t = {:.3e} undercuts the declared {:.6e}",
            coercivity.alpha_est, coercivity.worst_time, coercivity.declared_alpha
        ));
    }
    println!(
        "coercivity: measured {:.6e}, declared {:.6e}",
        coercivity.alpha_est, coercivity.declared_alpha
    );

    let mut scan = SectorScanConfig::for_horizon(tau);
    scan.seed = ctx.seed ^ 0x5ec7;
    let sector = sector_report(family, &scan).map_err(failure)?;
    if sector.omega0 > sector.arctan_m_over_alpha + 1e-9 {
        violations.push(format!(
            "sector: numerical-range angle {:.6} exceeds the certified {:.6}",
            sector.omega0, sector.arctan_m_over_alpha
        ));
    }
    println!(
        "sector: numerical-range angle {:.4}, certified {:.4}; smoothing slope {:+.3}, resolvent slope {:+.3}",
        sector.omega0, sector.arctan_m_over_alpha, sector.v_smoothing_slope, sector.resolvent_slope
    );

    // resolvent differences: calibrate the constant on one pair sweep, then
    // spot-check fresh pairs against the calibrated bound with 2x slack
    let theta = if sector.omega0 < std::f64::consts::FRAC_PI_2 {
        0.5 * (sector.omega0 + std::f64::consts::FRAC_PI_2)
    } else {
        0.5 * (sector.omega0 + std::f64::consts::PI)
    };
    let cal_pairs = default_pair_grid(tau, 4, 3);
    let z_values: Vec<_> =
        (0..8).map(|k| c(-(1.0 / tau) * 10f64.powf(k as f64 * 3.0 / 7.0))).collect();
    let calibration = calibrate_resolvent_difference(family, theta, &cal_pairs, &z_values)
        .map_err(failure)?;
    let mut checks = Vec::new();
    for &gap_rel in &[1e-3, 1e-2, 0.1] {
        let s = 0.13 * tau;
        let t = s + gap_rel * tau;
        let z = c(-7.0 / tau);
        let check = resolvent_difference_check(family, s, t, z, &calibration).map_err(failure)?;
        if check.measured > 2.0 * check.bound + 1e-12 {
            violations.push(format!(
                "resolvent difference at gap {:.1e}: measured {:.6e} exceeds twice the calibrated bound {:.6e}",
                gap_rel * tau,
                check.measured,
                check.bound
            ));
        }
        checks.push(json!({
            "s": s, "t": t, "z_re": z.re,
            "measured": check.measured, "bound": check.bound,
        }));
    }
    println!("resolvent difference: calibrated constant {:.6e}", calibration.c_theta);

    let dini = dini_report(family.modulus(), tau, p).map_err(failure)?;
    if !dini.integral_32.convergent {
        violations.push("dini integral (exponent 3/2) divergent: initial-data smoothing is uncontrolled".to_string());
    }
    if !dini.integral_p.convergent {
        violations.push(format!(
            "dini integral at p = {p} divergent: the modulus is too rough for this exponent"
        ));
    }
    println!(
        "dini: integral_32 {} ({:.6e}), integral_p {} ({:.6e}), integral_2log {} ({:.6e})",
        verdict(dini.integral_32.convergent),
        dini.integral_32.value,
        verdict(dini.integral_p.convergent),
        dini.integral_p.value,
        verdict(dini.integral_2log.convergent),
        dini.integral_2log.value,
    );

    let constants = kv_rows(&[
        ("m_measured", bound.m_est),
        ("m_declared", bound.declared),
        ("alpha_measured", coercivity.alpha_est),
        ("alpha_declared", coercivity.declared_alpha),
        ("delta", coercivity.delta_used),
        ("omega0", sector.omega0),
        ("arctan_m_over_alpha", sector.arctan_m_over_alpha),
        ("v_smoothing_slope", sector.v_smoothing_slope),
        ("resolvent_slope", sector.resolvent_slope),
        ("resolvent_diff_constant", calibration.c_theta),
    ]);
    let mut artifacts = Vec::new();
    artifacts.push(ctx.store.write_csv(
        &ctx.run_id,
        "check_constants.csv",
        &["name", "value"],
        &constants,
    )?);
    let dini_rows = vec![
        dini_row("integral_32", dini.integral_32.value, dini.integral_32.convergent),
        dini_row("integral_p", dini.integral_p.value, dini.integral_p.convergent),
        dini_row("integral_2log", dini.integral_2log.value, dini.integral_2log.convergent),
    ];
    artifacts.push(ctx.store.write_csv(
        &ctx.run_id,
        "dini.csv",
        &["integral", "value", "convergent"],
        &dini_rows,
    )?);

    Ok(CommandOutput {
        reports: json!({
            "bound": bound,
            "coercivity": coercivity,
            "sector": sector,
            "resolvent_difference": {
                "calibration": calibration,
                "checks": checks,
            },
            "dini": dini,
        }),
        artifacts,
        violations,
    })
}

fn verdict(convergent: bool) -> &'static str {
    if convergent { "finite" } else { "divergent" }
}

fn dini_row(name: &str, value: f64, convergent: bool) -> Vec<Cell> {
    vec![Cell::from(name), Cell::from(value), Cell::from(usize::from(convergent))]
}

/// The singular scalar problem: its structural invariants hold (coefficient
/// at least one, solution inside the unit band), but the coefficient lies
/// outside L_p by construction, which is reported as the named violation.
fn check_counterexample(
    ctx: &mut RunContext,
    ce: &Counterexample,
) -> Result<CommandOutput, CliError> {
    let p = ce.spec().p;
    let mut violations = Vec::new();

    let mut a_min = f64::INFINITY;
    for k in 0..=4000 {
        let t = k as f64 / 4000.0;
        a_min = a_min.min(ce.a(t));
    }
    if a_min < 1.0 {
        violations.push(format!("coefficient drops below one: min sampled value {a_min:.6e}"));
    }

    let mut x_max: f64 = 0.0;
    let mut envelope_ok = true;
    for k in 1..=100 {
        let t = k as f64 / 100.0;
        let x = ce.x(t).map_err(failure)?;
        x_max = x_max.max(x);
        if !(x > 0.0 && x <= 1.0 - (-t).exp() + 1e-9) {
            envelope_ok = false;
        }
    }
    if !envelope_ok {
        violations.push("solution leaves the unit-coefficient envelope".to_string());
    }
    println!("coefficient minimum {a_min:.6e}; solution maximum {x_max:.6e}");

    // the point of the construction: the coefficient is not p-integrable, so
    // the critical norm climbs under refinement instead of stabilizing
    let coarse = ce.ax_norm(p, 0.0, 1.0, 512).map_err(failure)?;
    let fine = ce.ax_norm(p, 0.0, 1.0, 2048).map_err(failure)?;
    violations.push(format!(
        "singular coefficient lies outside L_{p}: critical norm climbs {:.6e} -> {:.6e} under 4x refinement",
        coarse, fine
    ));

    let artifacts = vec![ctx.store.write_csv(
        &ctx.run_id,
        "check_constants.csv",
        &["name", "value"],
        &kv_rows(&[
            ("a_min", a_min),
            ("x_max", x_max),
            ("critical_norm_512", coarse),
            ("critical_norm_2048", fine),
        ]),
    )?];

    Ok(CommandOutput {
        reports: json!({
            "counterexample": {
                "p": p,
                "a_min": a_min,
                "x_max": x_max,
                "envelope_ok": envelope_ok,
                "critical_norm_coarse": coarse,
                "critical_norm_fine": fine,
            }
        }),
        artifacts,
        violations,
    })
}
