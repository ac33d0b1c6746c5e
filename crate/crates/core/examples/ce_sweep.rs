//! Calibration sweep for the scalar singular-coefficient model: prints the
//! L_q norms of a(t) x(t) over panel ladders for several weight choices.
//! Run: cargo run -p maxreg-core --example ce_sweep

use maxreg_core::zoo::{build_counterexample, van_der_corput, CounterexampleSpec};
use std::time::Instant;

fn spec(p: f64, k: usize, c0: f64, decay: f64) -> CounterexampleSpec {
    CounterexampleSpec {
        p,
        nodes: (1..=k).map(van_der_corput).collect(),
        weights: (1..=k).map(|i| c0 * decay.powi(i as i32)).collect(),
    }
}

fn main() {
    let panels = [16usize, 64, 256, 1024, 4096];
    for &(k, c0, decay) in
        &[(200usize, 0.02, 0.997), (200, 0.05, 0.997), (200, 0.08, 0.99), (50, 0.02, 0.997)]
    {
        let ce = build_counterexample(spec(2.0, k, c0, decay)).unwrap();
        println!("== K={k} c0={c0} decay={decay}");
        let t0 = Instant::now();
        let s256 = ce.ax_norm(1.5, 0.0, 1.0, 256).unwrap();
        let s1024 = ce.ax_norm(1.5, 0.0, 1.0, 1024).unwrap();
        println!(
            "  L1.5[0,1]: 256 -> {s256:.6}  1024 -> {s1024:.6}  rel {:.4}  ({:.1?})",
            (s1024 - s256).abs() / s1024,
            t0.elapsed()
        );
        let mut prev: Option<f64> = None;
        for &np in &panels {
            let t1 = Instant::now();
            let v = ce.ax_norm(2.0, 0.25, 0.75, np).unwrap();
            let r = prev.map(|p| v / p).unwrap_or(f64::NAN);
            println!("  L2[.25,.75] panels {np:5}: {v:.6}  ratio {r:.4}  ({:.1?})", t1.elapsed());
            prev = Some(v);
        }
    }
}
