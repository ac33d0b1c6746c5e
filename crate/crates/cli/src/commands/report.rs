//! `maxreg report` — cross-run summary tables assembled from stored run
//! records: shift vs contraction estimate with a fitted log-log slope per
//! family, grid refinement vs a-priori ratio, and exponent vs norms.

use maxreg_core::fit::loglog_slope;
use serde_json::json;

use crate::store::{self, Cell, RunRecord, Store};
use crate::{CliError, ReportArgs};

pub fn run(args: &ReportArgs) -> Result<u8, CliError> {
    let store = Store::open(&args.out)?;
    let mut records = Vec::new();
    for id in &args.run_ids {
        records.push(store.load_record(id)?);
    }

    let solves: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.command == "solve" && r.reports.get("kind").and_then(|k| k.as_str()) == Some("evolution"))
        .collect();

    // group by family for the slope fits
    let mut family_ids: Vec<String> = solves.iter().map(|r| r.family_id.clone()).collect();
    family_ids.sort();
    family_ids.dedup();

    let mut mu_rows: Vec<Vec<Cell>> = Vec::new();
    let mut slopes = serde_json::Map::new();
    for fam in &family_ids {
        let group: Vec<&&RunRecord> = solves.iter().filter(|r| &r.family_id == fam).collect();
        let mut mus = Vec::new();
        let mut qs = Vec::new();
        for r in &group {
            let mu = number(&r.reports, "mu");
            let q = number(&r.reports, "q_norm_estimate");
            if mu > 0.0 && q > 0.0 {
                mus.push(mu);
                qs.push(q);
            }
        }
        let slope = if mus.len() >= 2 { loglog_slope(&mus, &qs).ok() } else { None };
        if let Some(s) = slope {
            slopes.insert(fam.clone(), json!(s));
        }
        for r in &group {
            mu_rows.push(vec![
                Cell::from(fam.clone()),
                Cell::from(r.run_id.clone()),
                Cell::from(number(&r.reports, "mu")),
                Cell::from(number(&r.reports, "q_norm_estimate")),
                match slope {
                    Some(s) => Cell::from(s),
                    None => Cell::from(""),
                },
            ]);
        }
    }

    let ratio_rows: Vec<Vec<Cell>> = solves
        .iter()
        .map(|r| {
            vec![
                Cell::from(r.family_id.clone()),
                Cell::from(r.run_id.clone()),
                Cell::Int(number(&r.reports, "cells") as i64),
                Cell::from(number(&r.reports, "apriori/value")),
            ]
        })
        .collect();

    let norm_rows: Vec<Vec<Cell>> = solves
        .iter()
        .map(|r| {
            vec![
                Cell::from(r.family_id.clone()),
                Cell::from(r.run_id.clone()),
                Cell::from(number(&r.reports, "p")),
                Cell::from(number(&r.reports, "norm_u")),
                Cell::from(number(&r.reports, "norm_du")),
                Cell::from(number(&r.reports, "norm_au")),
                Cell::from(number(&r.reports, "norm_f")),
            ]
        })
        .collect();

    // the report is itself a (re-runnable, content-addressed) run
    let config = json!({"run_ids": args.run_ids});
    let run_id = store::run_id("report", &config, 0);
    let started = store::now_unix_ms();
    let artifacts = vec![
        store.write_csv(
            &run_id,
            "mu_vs_contraction.csv",
            &["family_id", "run_id", "mu", "q_norm", "fitted_slope"],
            &mu_rows,
        )?,
        store.write_csv(
            &run_id,
            "refinement_vs_ratio.csv",
            &["family_id", "run_id", "cells", "apriori_ratio"],
            &ratio_rows,
        )?,
        store.write_csv(
            &run_id,
            "p_vs_norms.csv",
            &["family_id", "run_id", "p", "norm_u", "norm_du", "norm_au", "norm_f"],
            &norm_rows,
        )?,
    ];

    let record = RunRecord {
        run_id: run_id.clone(),
        command: "report".to_string(),
        family_id: "report".to_string(),
        seed: 0,
        started_unix_ms: started,
        finished_unix_ms: store::now_unix_ms(),
        config,
        reports: json!({
            "runs": records.len(),
            "solve_runs": solves.len(),
            "fitted_slopes": slopes,
        }),
        artifacts: artifacts.clone(),
        violations: Vec::new(),
        exit_status: 0,
    };
    store.write_record(&record)?;

    println!("run {run_id}");
    for path in &artifacts {
        println!("artifact {}", store.dir().join(path).display());
    }
    println!(
        "report: {} record(s), {} solve row(s), {} fitted slope(s)",
        records.len(),
        solves.len(),
        record.reports["fitted_slopes"].as_object().map_or(0, |m| m.len())
    );
    for (fam, slope) in record.reports["fitted_slopes"].as_object().into_iter().flatten() {
        println!("  {fam}: fitted log-log slope {:.4}", slope.as_f64().unwrap_or(f64::NAN));
    }
    Ok(0)
}

/// Numeric field lookup with a one-level path ("a/b" descends one object).
fn number(value: &serde_json::Value, path: &str) -> f64 {
    let mut cur = value;
    for part in path.split('/') {
        match cur.get(part) {
            Some(next) => cur = next,
            None => return f64::NAN,
        }
    }
    cur.as_f64().unwrap_or(f64::NAN)
}
