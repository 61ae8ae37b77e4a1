//! Solves the tiny profile with HiGHS and with the reference oracle and
//! compares objectives, row feasibility and the linearised reactor feed.

use std::path::Path;

use biorefinery::milp::{VarRole, Variant};
use biorefinery::runner::{Experiment, RunConfig};
use biorefinery::solver::{
    oracle_solve, verify_solution, HighsBackend, MilpBackend, OracleLimits, SolveRequest,
};

fn main() -> anyhow::Result<()> {
    let profile = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/profiles/tiny.toml");
    let mut cfg = RunConfig::load(&profile)?;
    cfg.samples = 10;
    let exp = Experiment::prepare(cfg)?;
    let samples = exp.replication_samples(0)?;

    for variant in [Variant::Deterministic, Variant::ChanceSaa, Variant::AllSamples] {
        let model = exp.factory.build(variant, Some(&samples), 1.0)?;
        let inst = &model.instance;
        let highs = HighsBackend::new().solve(&SolveRequest::new(inst))?;
        let oracle = oracle_solve(inst, OracleLimits::default())?;
        println!(
            "{:<14} binaries {:>2}  highs {:?} {:?}  oracle {:?} {:?} ({} leaves, {} relaxations, {:.2}s)",
            variant.label(),
            inst.num_binaries(),
            highs.status,
            highs.objective,
            oracle.result.status,
            oracle.result.objective,
            oracle.enumerated,
            oracle.relaxations,
            oracle.result.wall_seconds
        );
        for (who, res) in [("highs", &highs), ("oracle", &oracle.result)] {
            if res.values.is_empty() {
                continue;
            }
            let bad = verify_solution(inst, &res.values, 1e-6);
            let u = res.values[inst.find_var(&VarRole::MaxFeed).expect("max feed")];
            let worst = (1..=exp.config.horizon)
                .map(|t| {
                    let w = res.values[inst.find_var(&VarRole::Linearized { t }).unwrap()];
                    let z = res.values[inst.find_var(&VarRole::ReactorOn { t }).unwrap()];
                    (w - u * z).abs()
                })
                .fold(0.0, f64::max);
            println!("  {who:<6} rows violated {}  max |W - U*Z| {worst:.2e}", bad.len());
        }
    }
    Ok(())
}
