use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{ClassKey, FeedstockId, Moisture};

use super::Inventory;

/// One line of a sequence file: feedstock terms and the moisture pattern
/// cycled over them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceRow {
    pub feedstock: Vec<(u32, FeedstockId)>,
    pub moisture: Vec<(u32, Moisture)>,
}

/// How strictly a literal sequence must reproduce the inventory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClassCheck {
    /// Every (feedstock, moisture) count must match.
    Exact,
    /// Feedstock and moisture totals must match; class differences are
    /// logged.
    #[default]
    Marginals,
}

fn parse_terms<'a>(text: &'a str, source: &str, line: usize) -> Result<Vec<(u32, &'a str)>> {
    let mut depth = 0i32;
    let mut out = Vec::new();
    for raw in text.split('-') {
        let mut tok = raw.trim();
        while let Some(rest) = tok.strip_prefix('(') {
            depth += 1;
            tok = rest.trim_start();
        }
        while let Some(rest) = tok.strip_suffix(')') {
            depth -= 1;
            tok = rest.trim_end();
        }
        if !(0..=1).contains(&depth) {
            return Err(Error::parse(source, line, format!("unbalanced parentheses in `{text}`")));
        }
        let split = tok.find(|c: char| !c.is_ascii_digit()).unwrap_or(tok.len());
        let (count, code) = tok.split_at(split);
        let count: u32 = count
            .parse()
            .map_err(|_| Error::parse(source, line, format!("term `{}` lacks a count", raw.trim())))?;
        if code.is_empty() || !code.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err(Error::parse(source, line, format!("term `{}` lacks a class code", raw.trim())));
        }
        if count == 0 {
            return Err(Error::parse(source, line, format!("term `{}` has a zero count", raw.trim())));
        }
        out.push((count, code));
    }
    if depth != 0 {
        return Err(Error::parse(source, line, format!("unbalanced parentheses in `{text}`")));
    }
    Ok(out)
}

/// Parses `10S-40C2-10M-20C3` or `(2S-1C2)-(2S-3C2)`; parentheses only group.
pub fn parse_feedstock_pattern(text: &str) -> Result<Vec<(u32, FeedstockId)>> {
    Ok(parse_terms(text, "feedstock pattern", 1)?
        .into_iter()
        .map(|(n, c)| (n, FeedstockId::new(c)))
        .collect())
}

/// Parses `3L-5M-2H`.
pub fn parse_moisture_pattern(text: &str) -> Result<Vec<(u32, Moisture)>> {
    moisture_terms(text, "moisture pattern", 1)
}

fn moisture_terms(text: &str, source: &str, line: usize) -> Result<Vec<(u32, Moisture)>> {
    parse_terms(text, source, line)?
        .into_iter()
        .map(|(n, c)| {
            Moisture::from_code(c)
                .map(|m| (n, m))
                .ok_or_else(|| Error::parse(source, line, format!("unknown moisture code `{c}`")))
        })
        .collect()
}

/// Parses a sequence file: one `<feedstock-pattern> | <moisture-pattern>`
/// row per line, `#` comments.
pub fn parse_sequence_file(text: &str, source: &str) -> Result<Vec<SequenceRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (feed, moist) = line
            .split_once('|')
            .ok_or_else(|| Error::parse(source, i + 1, "expected `<feedstock pattern> | <moisture pattern>`"))?;
        let feedstock = parse_terms(feed, source, i + 1)?
            .into_iter()
            .map(|(n, c)| (n, FeedstockId::new(c)))
            .collect();
        let moisture = moisture_terms(moist, source, i + 1)?;
        rows.push(SequenceRow { feedstock, moisture });
    }
    if rows.is_empty() {
        return Err(Error::parse(source, 0, "no sequence rows"));
    }
    Ok(rows)
}

/// Expands rows into one class per bale. The moisture pattern restarts at
/// the beginning of each row and cycles over its bales. The result is
/// checked against `inventory`.
pub fn literal_sequence(rows: &[SequenceRow], inventory: &Inventory, check: ClassCheck) -> Result<Vec<ClassKey>> {
    let mut bales = Vec::new();
    for row in rows {
        let cycle: Vec<Moisture> = row
            .moisture
            .iter()
            .flat_map(|&(n, m)| std::iter::repeat_n(m, n as usize))
            .collect();
        let mut k = 0;
        for (n, f) in &row.feedstock {
            if !inventory.feedstocks.contains(f) {
                return Err(Error::UnknownClass(format!("feedstock {f} is not in the inventory")));
            }
            for _ in 0..*n {
                bales.push(ClassKey {
                    feedstock: f.clone(),
                    moisture: cycle[k % cycle.len()],
                });
                k += 1;
            }
        }
    }
    let got = Inventory::from_bales(&bales);
    let deltas = got.class_deltas(inventory);
    if deltas.is_empty() {
        return Ok(bales);
    }
    let mut marginal = Vec::new();
    for f in &inventory.feedstocks {
        if got.by_feedstock(f) != inventory.by_feedstock(f) {
            marginal.push(format!("{f}: {} vs {}", got.by_feedstock(f), inventory.by_feedstock(f)));
        }
    }
    for m in Moisture::ALL {
        if got.by_moisture(m) != inventory.by_moisture(m) {
            marginal.push(format!("{m}: {} vs {}", got.by_moisture(m), inventory.by_moisture(m)));
        }
    }
    if check == ClassCheck::Exact || !marginal.is_empty() {
        let mut parts = marginal;
        parts.extend(deltas);
        return Err(Error::InventoryMismatch(format!("sequence vs inventory: {}", parts.join("; "))));
    }
    log::warn!("sequence moves bales between moisture classes: {}", deltas.join("; "));
    Ok(bales)
}

/// The whole inventory in a uniformly random order.
pub fn random_sequence(inventory: &Inventory, seed: u64) -> Result<Vec<ClassKey>> {
    let mut bales = inventory.bales();
    if bales.is_empty() {
        return Err(Error::Sequencing("inventory is empty".into()));
    }
    bales.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(bales)
}

/// One bale per line: `feedstock,moisture,position`.
pub fn write_ordering(bales: &[ClassKey]) -> String {
    let mut out = String::from("feedstock,moisture,position\n");
    for (i, b) in bales.iter().enumerate() {
        out.push_str(&format!("{},{},{}\n", b.feedstock, b.moisture, i + 1));
    }
    out
}

/// Reads `feedstock,moisture[,extra]` lines; a header line starting with
/// `feedstock` is skipped.
pub fn parse_ordering(text: &str, source: &str) -> Result<Vec<ClassKey>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut bales = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(source, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let feed = rec.get(0).unwrap_or("");
        if feed.is_empty() || (bales.is_empty() && feed.eq_ignore_ascii_case("feedstock")) {
            continue;
        }
        let moist = rec
            .get(1)
            .ok_or_else(|| Error::parse(source, line, "missing moisture column"))?;
        let moisture =
            Moisture::from_code(moist).ok_or_else(|| Error::parse(source, line, format!("unknown moisture `{moist}`")))?;
        bales.push(ClassKey::new(feed, moisture));
    }
    if bales.is_empty() {
        return Err(Error::parse(source, 0, "no bales listed"));
    }
    Ok(bales)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inventory(rows: &[(&str, [u32; 3])]) -> Inventory {
        let mut inv = Inventory::default();
        for (f, counts) in rows {
            for (m, &n) in Moisture::ALL.iter().zip(counts) {
                if n > 0 {
                    inv.add(ClassKey::new(*f, *m), n);
                }
            }
        }
        inv
    }

    fn case_inventory() -> Inventory {
        inventory(&[("C3", [6, 10, 4]), ("C2", [12, 20, 8]), ("S", [3, 5, 2]), ("M", [3, 5, 2])])
    }

    #[test]
    fn feedstock_pattern_terms() {
        let t = parse_feedstock_pattern("10S-40C2-10M-20C3").unwrap();
        let total: u32 = t.iter().map(|x| x.0).sum();
        assert_eq!(total, 80);
        assert_eq!(t[1], (40, FeedstockId::new("C2")));
        let t = parse_feedstock_pattern("(2S-1C2)-(2S-3C2)-(1S-1C2)").unwrap();
        assert_eq!(t.iter().map(|x| x.0).sum::<u32>(), 10);
        assert!(parse_feedstock_pattern("(2S-1C2").is_err());
        assert!(parse_feedstock_pattern("S-2C2").is_err());
    }

    #[test]
    fn problem_one_row_matches_inventory() {
        let rows = parse_sequence_file("10S-40C2-10M-20C3 | 3L-5M-2H\n", "p1").unwrap();
        let bales = literal_sequence(&rows, &case_inventory(), ClassCheck::Exact).unwrap();
        assert_eq!(bales.len(), 80);
        let inv = Inventory::from_bales(&bales);
        for (f, n) in [("S", 10), ("C2", 40), ("M", 10), ("C3", 20)] {
            assert_eq!(inv.by_feedstock(&FeedstockId::new(f)), n);
        }
    }

    #[test]
    fn moisture_totals_must_match() {
        let rows = parse_sequence_file("10S-40C2-10M-20C3 | 3L-3M-2H\n", "p1").unwrap();
        let err = literal_sequence(&rows, &case_inventory(), ClassCheck::Marginals).unwrap_err();
        assert!(err.to_string().contains("L: 30 vs 24"), "{err}");
    }

    #[test]
    fn random_sequence_is_a_seeded_permutation() {
        let inv = case_inventory();
        let a = random_sequence(&inv, 5).unwrap();
        assert_eq!(a, random_sequence(&inv, 5).unwrap());
        assert_ne!(a, random_sequence(&inv, 6).unwrap());
        assert_eq!(Inventory::from_bales(&a).counts, inv.counts);
    }

    #[test]
    fn ordering_round_trip() {
        let bales = vec![ClassKey::new("S", Moisture::Low), ClassKey::new("C2", Moisture::High)];
        let text = write_ordering(&bales);
        assert_eq!(parse_ordering(&text, "o").unwrap(), bales);
        assert_eq!(parse_ordering("S,L\nC2,H,extra\n", "o").unwrap(), bales);
        assert!(parse_ordering("S,X\n", "o").is_err());
    }
}
