//! Run a small comparison grid, print the CSV, the effective-noise tables
//! and the reference rate curves.
//!
//! Pass a path to write the CSV to a file instead:
//! `cargo run --release --example benchmark_grid -- results.csv`

use std::fs::File;

use upldp::harness::{
    effective_noise_report, run_experiment, theory_curves, write_csv, EstimatorKind, ExperimentSpec, Grid, Overrides,
};
use upldp::ModelConfig;

fn main() -> upldp::Result<()> {
    let mut spec = ExperimentSpec {
        grid: Grid { n: vec![], m: vec![5, 10, 20], d: vec![5], epsilon: vec![1.0, 8.0], total_items: Some(4_000) },
        delta: 1e-5,
        estimators: vec![EstimatorKind::Mle, EstimatorKind::Rr, EstimatorKind::Userwise, EstimatorKind::Aup],
        reps: 3,
        master_seed: 2024,
        bound: 1.0,
        feature_bound: 1.0,
        overrides: Overrides::default(),
        record_wall_time: false,
    };
    spec.overrides.fit.iterations = 200;
    spec.overrides.aup.t_cap = 200;
    spec.overrides.aup.tau_scale = Some(1.0);
    let rows = run_experiment(&spec)?;

    match std::env::args().nth(1) {
        Some(path) => write_csv(&rows, File::create(path)?)?,
        None => write_csv(&rows, std::io::stdout())?,
    }

    for table in effective_noise_report(&rows)? {
        println!("\neffective noise, {}\n{}", table.estimator, table.to_csv());
    }

    let model = ModelConfig::new(5, 1.0, 1.0, 2)?;
    let cells: Vec<_> = spec.data_cells().iter().map(|&(n, m, _)| (n, m, 1.0)).collect();
    for b in theory_curves(&model, &cells, 0.05) {
        println!(
            "n {:>4} m {:>3}: rr {:>9.3} aup {:>7.4} lower {:>7.4} ({})",
            b.n, b.m, b.rr_bound, b.aup_bound, b.lower_bound, b.note
        );
    }
    Ok(())
}
