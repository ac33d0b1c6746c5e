//! `maxreg pdo-bench` — exercise the operator-valued multiplier engine on
//! the configured family's resolvent symbol: identity reproduction, a scalar
//! multiplier with known supremum, operator-norm stability under grid
//! refinement, the rough/smooth symbol splitting, and the finite-difference
//! smoothness report.

use std::sync::Arc;

use maxreg_core::pdo::{
    apply_t, check_symbol_conditions, mr_symbol, opnorm_estimate, split_quality, split_symbol,
    standard_bump, SampledField, Symbol,
};
use maxreg_core::probe::{random_cvec, seeded_rng};
use maxreg_core::{C64, CMat};

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}
use serde_json::json;

use crate::commands::{kv_rows, CommandOutput, RunContext};
use crate::CliError;

const FIELD_STREAM: u64 = 0x71_0000;

pub fn run(ctx: &mut RunContext) -> Result<CommandOutput, CliError> {
    let family = ctx
        .model
        .require_family()
        .map_err(|e| CliError::Usage(e.to_string()))?
        .clone();
    let tau = family.horizon();
    let m = family.space().dim();
    let mut violations = Vec::new();

    // the symbol needs invertible operators along the whole line; shift the
    // family once when A(0) is singular (pure Neumann stiffness)
    let symbol_family = if family.assemble_operator(0.0).resolvent(c(0.0)).is_ok() {
        family.clone()
    } else {
        family.shifted(1.0).map_err(|e| CliError::Failure(e.to_string()))?
    };
    let sigma = mr_symbol(&symbol_family);

    let half_width = tau;
    let points = 64;
    let probes = 2;

    // identity symbol reproduces a random field
    let identity = Symbol::identity(1, m).map_err(|e| CliError::Failure(e.to_string()))?;
    let mut field = SampledField::zeros(half_width, points, 1, m)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    {
        let mut rng = seeded_rng(ctx.seed, FIELD_STREAM);
        for v in field.values_mut() {
            *v = random_cvec(&mut rng, m);
        }
    }
    let reproduced = apply_t(&identity, &field).map_err(|e| CliError::Failure(e.to_string()))?;
    let defect: f64 = field
        .values()
        .iter()
        .zip(reproduced.field.values())
        .map(|(a, b)| (a - b).norm_squared())
        .sum::<f64>()
        .sqrt()
        / field.l2_norm().max(f64::MIN_POSITIVE);
    if defect > 1e-9 {
        violations.push(format!("identity symbol distorts the input: relative defect {defect:.3e}"));
    }

    // scalar multiplier with supremum 4 attained at frequency zero
    let scalar = Symbol::multiplier(
        1,
        m,
        Arc::new(move |xi: &[f64]| {
            CMat::identity(m, m) * c(1.0 + 3.0 / (1.0 + xi[0] * xi[0]))
        }),
        vec![4.0, 2.0, 6.0],
    )
    .map_err(|e| CliError::Failure(e.to_string()))?;
    let scalar_norm = opnorm_estimate(&scalar, half_width, points, probes, ctx.seed)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let scalar_ratio = scalar_norm / 4.0;

    // operator norm of the resolvent symbol, and its grid stability
    let mr_coarse = opnorm_estimate(&sigma, half_width, points, probes, ctx.seed)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let mr_fine = opnorm_estimate(&sigma, half_width, 2 * points, probes, ctx.seed)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    let stability = (mr_fine - mr_coarse).abs() / mr_coarse.max(f64::MIN_POSITIVE);

    // splitting: reconstruction must be exact, and the scaled bounds finite
    let (sigma1, sigma2) =
        split_symbol(&sigma, standard_bump(1)).map_err(|e| CliError::Failure(e.to_string()))?;
    let x_points: Vec<Vec<f64>> = (0..5).map(|k| vec![tau * k as f64 / 4.0]).collect();
    let xi_points: Vec<Vec<f64>> = (-4i32..=4)
        .map(|k| vec![if k == 0 { 0.0 } else { f64::from(k.signum()) * 10f64.powi(k.abs() - 1) }])
        .collect();
    let mut recon_defect: f64 = 0.0;
    for x in &x_points {
        for xi in &xi_points {
            let d = (sigma1.eval(x, xi) + sigma2.eval(x, xi) - sigma.eval(x, xi)).norm();
            recon_defect = recon_defect.max(d);
        }
    }
    if recon_defect > 1e-10 {
        violations.push(format!("symbol splitting is not exact: defect {recon_defect:.3e}"));
    }
    let split = split_quality(&sigma, &sigma1, &sigma2, &x_points, &xi_points)
        .map_err(|e| CliError::Failure(e.to_string()))?;

    let conditions = check_symbol_conditions(&sigma, &x_points, &xi_points, 2)
        .map_err(|e| CliError::Failure(e.to_string()))?;
    if !conditions.bounds_met {
        violations.push("declared symbol derivative bounds violated".to_string());
    }
    if !conditions.x_ratios_bounded {
        violations.push("symbol x-continuity ratios exceed the declared modulus".to_string());
    }

    println!("identity defect {defect:.3e}; scalar multiplier {scalar_norm:.6e} (ratio {scalar_ratio:.4})");
    println!("resolvent-symbol norm {mr_coarse:.6e} -> {mr_fine:.6e} under refinement (rel change {stability:.3e})");
    println!("splitting reconstruction defect {recon_defect:.3e}");

    let artifacts = vec![ctx.store.write_csv(
        &ctx.run_id,
        "pdo_bench.csv",
        &["name", "value"],
        &kv_rows(&[
            ("identity_defect", defect),
            ("scalar_multiplier_norm", scalar_norm),
            ("scalar_multiplier_ratio", scalar_ratio),
            ("mr_symbol_norm_coarse", mr_coarse),
            ("mr_symbol_norm_fine", mr_fine),
            ("refinement_rel_change", stability),
            ("split_reconstruction_defect", recon_defect),
            ("split_sigma1_xi_decay", split.sigma1_xi_decay),
            ("split_sigma1_x_growth", split.sigma1_x_growth),
            ("split_sigma2_size", split.sigma2_size),
            ("split_sigma2_xi_decay", split.sigma2_xi_decay),
            ("dini_2log_value", conditions.dini_2log_value),
        ]),
    )?];

    Ok(CommandOutput {
        reports: json!({
            "identity_defect": defect,
            "scalar_multiplier": {"estimate": scalar_norm, "supremum": 4.0, "ratio": scalar_ratio},
            "mr_symbol": {"coarse": mr_coarse, "fine": mr_fine, "rel_change": stability},
            "split": split,
            "split_reconstruction_defect": recon_defect,
            "conditions": conditions,
        }),
        artifacts,
        violations,
    })
}
