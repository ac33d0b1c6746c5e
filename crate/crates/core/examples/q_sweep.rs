//! Calibration sweep: shifted history-operator norm vs shift size for the
//! rotating family, for a grid of scale/amplitude candidates.  Prints the
//! fitted log-log slope at mu in {1, 10, 100, 1000}.

use std::time::Instant;

use maxreg_core::fit::loglog_slope;
use maxreg_core::grid::TimeGrid;
use maxreg_core::volterra::estimate_q_norm;
use maxreg_core::zoo::build_rotating_family_scaled;

fn main() {
    let mus = [1.0f64, 10.0, 100.0, 1000.0];
    for &cells in &[256usize] {
        let grid = TimeGrid::uniform(1.0, cells).unwrap();
        for &(probes, seed) in &[(1usize, 7u64), (1, 99), (2, 7)] {
            let fam = build_rotating_family_scaled(4, 0.75, 0.5, 1.0, 4.0, 200.0).unwrap();
            let t0 = Instant::now();
            let mut ests = Vec::new();
            for &mu in &mus {
                let shifted = fam.shifted(mu).unwrap();
                let est = estimate_q_norm(&shifted, &grid, 2.0, probes, seed).unwrap();
                ests.push(est);
            }
            let slope = loglog_slope(&mus, &ests).unwrap();
            println!(
                "cells={cells:4} probes={probes} seed={seed:3} ests={:?} slope={slope:+.3} ({:.1}s)",
                ests.iter().map(|e| (e * 1e6).round() / 1e6).collect::<Vec<_>>(),
                t0.elapsed().as_secs_f64()
            );
        }
    }
}
