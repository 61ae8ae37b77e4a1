//! Builds bale orderings for the case inventory with the four sequencing
//! rules and prints them in pattern notation.

use std::collections::BTreeMap;
use std::path::Path;

use biorefinery::model::Moisture;
use biorefinery::runner::ingest::{parse_distribution, parse_inventory};
use biorefinery::sequencing::{
    classify_feedstocks, rule1_moisture, rule2_quality, rule3_distance, rule4_combined, Quality, QualityGroup,
};

const F_STAR: f64 = 0.591;

fn main() -> anyhow::Result<()> {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let (inv, names, _) = parse_inventory(&std::fs::read_to_string(data.join("inventory.csv"))?, "inventory.csv")?;
    let dists = inv
        .feedstocks
        .iter()
        .map(|f| {
            let text = std::fs::read_to_string(data.join(format!("distributions/{f}.csv")))?;
            Ok(parse_distribution(&text, f.as_str(), f.clone())?)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;

    let (l, m, h) = (
        inv.by_moisture(Moisture::Low),
        inv.by_moisture(Moisture::Medium),
        inv.by_moisture(Moisture::High),
    );
    let moisture = rule1_moisture(l, m, h)?;
    println!("moisture counts {l}/{m}/{h}: {moisture}");
    println!("awkward counts 7/11/5: {}", rule1_moisture(7, 11, 5)?);

    let quality = classify_feedstocks(&dists, F_STAR, 0.10)?;
    for (f, name) in inv.feedstocks.iter().zip(&names) {
        let d = dists.iter().find(|d| d.feedstock == *f).unwrap();
        println!(
            "{f:>3} {name:<18} mean {:.3}  10th pct {:.3}  {}",
            d.mean(),
            d.percentile(0.10)?,
            quality[f]
        );
    }
    let mut counts = BTreeMap::new();
    for f in &inv.feedstocks {
        *counts.entry(quality[f]).or_insert(0) += inv.by_feedstock(f);
    }
    let (q, nq) = (counts[&Quality::Meets], counts[&Quality::Fails]);
    let qpattern = rule2_quality(q, nq)?;
    println!("quality counts {q}/{nq}: {qpattern}");

    let groups: Vec<QualityGroup> = inv
        .feedstocks
        .iter()
        .zip(&dists)
        .map(|(f, d)| {
            Ok(QualityGroup {
                feedstock: f.clone(),
                percentile: d.percentile(0.10)?,
                bales: inv.by_feedstock(f),
            })
        })
        .collect::<biorefinery::Result<_>>()?;
    let r3 = rule3_distance(&groups, F_STAR)?;
    let head: Vec<String> = r3.order.iter().take(20).map(|(f, q)| format!("{f}({q})")).collect();
    println!("distance rule, first 20: {}", head.join(" "));

    let r4 = rule4_combined(&inv, &quality, &moisture.expand(), &qpattern.expand())?;
    println!("combined rule, {} swaps:", r4.swaps.len());
    for row in r4.order.chunks(10) {
        let cells: Vec<String> = row.iter().map(|k| format!("{:>5}", k.to_string())).collect();
        println!("  {}", cells.join(""));
    }
    Ok(())
}
