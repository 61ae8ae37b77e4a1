//! Builds the mean-value model of the desk profile, writes it in LP format
//! and reads it back.
//!
//!     cargo run --example build_lp -- /tmp/desk.lp

use std::path::Path;

use biorefinery::milp::{export_lp_text, parse_lp_text, write_stats, Variant};
use biorefinery::runner::{Experiment, RunConfig};

fn main() -> anyhow::Result<()> {
    let profile = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/profiles/desk.toml");
    let exp = Experiment::prepare(RunConfig::load(&profile)?)?;
    let model = exp.factory.build(Variant::Deterministic, None, 0.0)?;
    print!("{}", write_stats(&model.instance));

    let text = export_lp_text(&model.instance);
    let back = parse_lp_text(&text)?;
    println!(
        "LP text: {} bytes; read back {} variables, {} rows",
        text.len(),
        back.variables.len(),
        back.constraints.len()
    );
    if let Some(path) = std::env::args().nth(1) {
        std::fs::write(&path, &text)?;
        println!("written to {path}");
    }
    Ok(())
}
