//! Loads a profile, solves the mean-value model once and runs the
//! configured experiment.
//!
//!     cargo run --example case_study -- data/profiles/desk.toml

use std::path::PathBuf;
use std::time::Instant;

use anyhow::Context;
use biorefinery::milp::{write_stats, Variant};
use biorefinery::runner::{backend_for, compute_metrics, Experiment, MetricsRow, RunConfig};
use biorefinery::saa::solve_built;

fn main() -> anyhow::Result<()> {
    env_logger::init();
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data/profiles/desk.toml")));
    let cfg = RunConfig::load(&path).with_context(|| format!("loading {}", path.display()))?;
    let exp = Experiment::prepare(cfg)?;
    println!("{} bales, {} periods", exp.sequence.bales.len(), exp.config.horizon);
    let backend = backend_for(&exp.config)?;

    let mean_model = exp.factory.build(Variant::Deterministic, None, 0.0)?;
    print!("{}", write_stats(&mean_model.instance));
    let start = Instant::now();
    let solved = solve_built(backend.as_ref(), &exp.config.solve_options(), &mean_model)?;
    let m = compute_metrics(&solved.record)?;
    println!("mean-value model solved in {:.1}s", start.elapsed().as_secs_f64());
    let row = MetricsRow {
        problem: exp.config.problem.clone(),
        metrics: Some(m),
        feasible: 1,
        replications: 1,
    };
    println!("{}\n{}", MetricsRow::HEADER, row.to_line());

    let start = Instant::now();
    let bundle = exp.run(backend.as_ref())?;
    println!("{} replications in {:.1}s", exp.config.replications, start.elapsed().as_secs_f64());
    print!("{}", bundle.files["summary.csv"]);
    print!("{}", bundle.files["replications.csv"]);
    Ok(())
}
