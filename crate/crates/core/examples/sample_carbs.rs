//! Draws carbohydrate samples from the shipped histograms and compares the
//! sample means with the listed feedstock means.

use std::path::Path;

use biorefinery::runner::ingest::{parse_distribution, parse_inventory};
use biorefinery::saa::sample;

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let (inv, names, means) = parse_inventory(&std::fs::read_to_string(data.join("inventory.csv"))?, "inventory.csv")?;
    let dists = inv
        .feedstocks
        .iter()
        .map(|f| {
            let text = std::fs::read_to_string(data.join(format!("distributions/{f}.csv")))?;
            Ok(parse_distribution(&text, f.as_str(), f.clone())?)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let draws = sample(&dists, 10_000, 42)?;
    let sample_means = draws.means();
    println!("feedstock            listed   histogram  10k draws  10th pct");
    for (i, d) in dists.iter().enumerate() {
        println!(
            "{:<20} {:.3}    {:.4}     {:.4}     {:.3}",
            names[i],
            means[i],
            d.mean(),
            sample_means[i],
            d.percentile(0.10)?
        );
    }
    let first: Vec<String> = draws.values[0].iter().map(|v| format!("{v:.3}")).collect();
    println!("first draw: {}", first.join(" "));
    Ok(())
}
