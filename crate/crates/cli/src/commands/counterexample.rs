//! `maxreg counterexample` — the refinement dichotomy of the singular
//! scalar problem: a subcritical norm of a(.)x(.) stabilizes under
//! quadrature refinement while the critical norm keeps climbing.  Emits the
//! norm ladder as CSV.

use serde_json::json;

use crate::commands::{failure, CommandOutput, RunContext};
use crate::store::Cell;
use crate::CliError;

const WINDOW: (f64, f64) = (0.25, 0.75);

pub fn run(ctx: &mut RunContext) -> Result<CommandOutput, CliError> {
    let ce = ctx
        .model
        .counterexample
        .clone()
        .ok_or_else(|| {
            CliError::Usage("this command needs the singular scalar family".to_string())
        })?;
    let q_critical = ce.spec().p;
    let q_stable = 0.5 * (1.0 + q_critical);
    let base = ctx.model.grid.cells().max(64);
    let ladder = [base, 4 * base, 16 * base];

    let mut stable = Vec::new();
    let mut critical = Vec::new();
    let mut rows = Vec::new();
    for &panels in &ladder {
        let s = ce.ax_norm(q_stable, 0.0, 1.0, panels).map_err(failure)?;
        let c_ = ce.ax_norm(q_critical, WINDOW.0, WINDOW.1, panels).map_err(failure)?;
        rows.push(vec![Cell::from(panels), Cell::from(s), Cell::from(c_)]);
        stable.push(s);
        critical.push(c_);
    }
    let stable_changes: Vec<f64> =
        stable.windows(2).map(|w| (w[1] - w[0]).abs() / w[0]).collect();
    let critical_ratios: Vec<f64> = critical.windows(2).map(|w| w[1] / w[0]).collect();

    println!(
        "subcritical L_{q_stable}(0,1): {} (rel changes {:?})",
        stable.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(" -> "),
        stable_changes.iter().map(|v| format!("{v:.2e}")).collect::<Vec<_>>()
    );
    println!(
        "critical L_{q_critical}({}, {}): {} (ratios {:?})",
        WINDOW.0,
        WINDOW.1,
        critical.iter().map(|v| format!("{v:.6e}")).collect::<Vec<_>>().join(" -> "),
        critical_ratios.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>()
    );

    let artifacts = vec![ctx.store.write_csv(
        &ctx.run_id,
        "refinement.csv",
        &["panels", "stable_norm", "critical_norm"],
        &rows,
    )?];

    Ok(CommandOutput {
        reports: json!({
            "q_stable": q_stable,
            "q_critical": q_critical,
            "window": [WINDOW.0, WINDOW.1],
            "panels": ladder.to_vec(),
            "stable_norms": stable,
            "critical_norms": critical,
            "stable_rel_changes": stable_changes,
            "critical_ratios": critical_ratios,
        }),
        artifacts,
        violations: Vec::new(),
    })
}
