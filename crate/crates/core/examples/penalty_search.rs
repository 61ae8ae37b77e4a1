//! Bisection on the shortfall penalty for one sample set of the tiny
//! profile, printing every step.

use std::path::Path;

use biorefinery::runner::{Experiment, RunConfig};
use biorefinery::saa::{solve_penalty, violation_rate};
use biorefinery::solver::HighsBackend;

fn main() -> anyhow::Result<()> {
    let profile = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/profiles/tiny.toml");
    let exp = Experiment::prepare(RunConfig::load(&profile)?)?;
    let cfg = &exp.config;
    let samples = exp.replication_samples(0)?;
    let penalty = cfg.penalty();
    let out = solve_penalty(
        &exp.factory,
        &samples,
        cfg.gamma_hat,
        &penalty,
        &HighsBackend::new(),
        &cfg.solve_options(),
    )?;
    print!("{}", out.state.trace_text());
    let report = violation_rate(&out.solved.record, &samples, cfg.f_star, cfg.tau_minutes)?;
    println!(
        "alpha {:.6}  makespan {} periods ({:.2} h)  violated {}/{} samples ({:.3}), {} of {} allowed steps used",
        out.alpha,
        out.solved.makespan(),
        out.solved.hours(),
        report.count(),
        samples.len(),
        report.per_sample,
        out.state.iterations(),
        penalty.max_iterations()
    );
    println!("target met: {}", out.target_met);
    Ok(())
}
