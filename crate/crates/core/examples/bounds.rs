//! Sample-size and posterior-risk formulas, then lower and upper bounds on
//! the processing time of the tiny profile.

use std::path::Path;

use biorefinery::runner::{Experiment, RunConfig};
use biorefinery::saa::{inverse_normal_cdf, lower_bound_sample_size, posterior_upper};
use biorefinery::solver::HighsBackend;

fn main() -> anyhow::Result<()> {
    println!("N for gamma 0.10, gamma_hat 0.15, delta 0.01: {}", lower_bound_sample_size(0.10, 0.15, 0.01)?);
    println!("z(0.99) = {:.5}", inverse_normal_cdf(0.99)?);
    println!("risk limit for 5% of 10000 draws: {:.5}", posterior_upper(0.05, 10_000, 0.01)?);

    let profile = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/profiles/tiny.toml");
    let mut cfg = RunConfig::load(&profile)?;
    cfg.gamma_hat = 0.15;
    let lower = Experiment::prepare(cfg.clone())?.lower_bound(&HighsBackend::new())?;
    print!("{}", lower.to_text());
    cfg.gamma_hat = 0.05;
    let upper = Experiment::prepare(cfg)?.upper_bound(&HighsBackend::new())?;
    print!("{}", upper.to_text());
    if let (Some(lo), Some(hi)) = (lower.value, upper.value) {
        println!("lower {lo:.2} h <= upper {hi:.2} h: {}", lo <= hi + 1e-9);
    }
    Ok(())
}
