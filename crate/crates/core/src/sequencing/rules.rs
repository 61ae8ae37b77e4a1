use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassKey, FeedstockId, Moisture};
use crate::saa::EmpiricalDist;

use super::{check_nonempty, GcdPattern, Inventory, Quality};

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn gcd_all(xs: &[u32]) -> u32 {
    xs.iter().fold(0, |g, &x| gcd(g, x))
}

fn split<L: Copy>(counts: &[u32], labels: &[L], psi: u32) -> Vec<(u32, L)> {
    counts
        .iter()
        .zip(labels)
        .filter(|(n, _)| **n > 0)
        .map(|(&n, &l)| (n / psi, l))
        .collect()
}

/// Low, medium and high moisture blocks in the proportions of the counts.
///
/// When the counts share no divisor, every reduction of each count by 0, 1
/// or 2 bales is tried; the one with the largest common divisor wins (ties go
/// to fewer removed bales, then to the first in L, M, H order) and the
/// removed bales are appended at the end.
pub fn rule1_moisture(low: u32, medium: u32, high: u32) -> Result<GcdPattern<Moisture>> {
    let counts = [low, medium, high];
    check_nonempty(counts.iter().sum(), "moisture")?;
    let labels = Moisture::ALL;
    let mut best = (gcd_all(&counts), 0u32, [0u32; 3]);
    if best.0 == 1 {
        for r0 in 0..=2u32.min(low) {
            for r1 in 0..=2u32.min(medium) {
                for r2 in 0..=2u32.min(high) {
                    let r = [r0, r1, r2];
                    let reduced = [low - r0, medium - r1, high - r2];
                    if reduced.iter().all(|&n| n == 0) {
                        continue;
                    }
                    let g = gcd_all(&reduced);
                    let removed = r0 + r1 + r2;
                    if g > best.0 || (g == best.0 && g > 1 && removed < best.1) {
                        best = (g, removed, r);
                    }
                }
            }
        }
    }
    let (psi, _, r) = best;
    let r = if psi == 1 { [0; 3] } else { r };
    let reduced = [low - r[0], medium - r[1], high - r[2]];
    Ok(GcdPattern {
        unit: split(&reduced, &labels, psi),
        repeats: psi,
        leftovers: split(&r, &labels, 1),
    })
}

/// Quality blocks `q` then `nq` in the proportions of the counts. Without a
/// common divisor, `nq` is reduced by the fewest bales that produce one and
/// the removed bales go at the end.
pub fn rule2_quality(meets: u32, fails: u32) -> Result<GcdPattern<Quality>> {
    check_nonempty(meets + fails, "quality")?;
    if meets == 0 {
        log::warn!("no bales meet the carbohydrate threshold");
    }
    let labels = [Quality::Meets, Quality::Fails];
    let mut psi = gcd(meets, fails);
    let mut removed = 0;
    if psi == 1 {
        if let Some(r) = (1..=fails).find(|&r| gcd(meets, fails - r) > 1) {
            removed = r;
            psi = gcd(meets, fails - r);
        }
    }
    Ok(GcdPattern {
        unit: split(&[meets, fails - removed], &labels, psi),
        repeats: psi,
        leftovers: split(&[0, removed], &labels, 1),
    })
}

/// A feedstock with its carbohydrate percentile and available bales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityGroup {
    pub feedstock: FeedstockId,
    pub percentile: f64,
    pub bales: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule3Outcome {
    pub order: Vec<(FeedstockId, Quality)>,
    /// A distance was zero and its ratio was taken as 1.
    pub degenerate: bool,
}

/// Interleaves feedstocks above and below the threshold by their distance
/// to it. Works on the pair closest to the threshold: if the weakest good
/// feedstock clears the threshold by at least as much as the best poor one
/// misses it, two good bales are followed by `floor(over/under)` poor ones;
/// otherwise `ceil(under/over) + 1` good bales are followed by one poor one.
/// When one of the pair runs out it is dropped and the distances are
/// recomputed. Remaining bales are appended, good before poor.
pub fn rule3_distance(groups: &[QualityGroup], f_star: f64) -> Result<Rule3Outcome> {
    check_nonempty(groups.iter().map(|g| g.bales).sum(), "rule 3")?;
    if let Some(g) = groups.iter().find(|g| !(g.percentile > 0.0 && g.percentile < 1.0)) {
        return Err(Error::validation("percentile", format!("{}: {} outside (0,1)", g.feedstock, g.percentile)));
    }
    let mut left: Vec<u32> = groups.iter().map(|g| g.bales).collect();
    let mut good: Vec<usize> = (0..groups.len()).filter(|&i| groups[i].percentile >= f_star).collect();
    let mut poor: Vec<usize> = (0..groups.len()).filter(|&i| groups[i].percentile < f_star).collect();
    let mut order = Vec::new();
    let mut degenerate = false;
    let mut emit = |i: usize, n: u32, left: &mut Vec<u32>, q: Quality| {
        let n = n.min(left[i]);
        left[i] -= n;
        order.extend(std::iter::repeat_n((groups[i].feedstock.clone(), q), n as usize));
    };

    while !good.is_empty() && !poor.is_empty() {
        let lo = *good
            .iter()
            .min_by(|&&a, &&b| groups[a].percentile.total_cmp(&groups[b].percentile))
            .expect("non-empty");
        let hi = *poor
            .iter()
            .max_by(|&&a, &&b| groups[a].percentile.total_cmp(&groups[b].percentile).then(b.cmp(&a)))
            .expect("non-empty");
        let over = groups[lo].percentile - f_star;
        let under = f_star - groups[hi].percentile;
        while left[lo] > 0 && left[hi] > 0 {
            if over >= under {
                let k = if under == 0.0 {
                    degenerate = true;
                    1
                } else {
                    (over / under + 1e-9).floor() as u32
                };
                emit(lo, 2, &mut left, Quality::Meets);
                emit(hi, k, &mut left, Quality::Fails);
            } else {
                let k = if over == 0.0 {
                    degenerate = true;
                    1
                } else {
                    (under / over - 1e-9).ceil() as u32
                };
                emit(lo, k + 1, &mut left, Quality::Meets);
                emit(hi, 1, &mut left, Quality::Fails);
            }
        }
        if left[lo] == 0 {
            good.retain(|&i| i != lo);
        } else {
            poor.retain(|&i| i != hi);
        }
    }
    for i in good {
        emit(i, left[i], &mut left, Quality::Meets);
    }
    for i in poor {
        emit(i, left[i], &mut left, Quality::Fails);
    }
    if degenerate {
        log::warn!("a feedstock sits exactly at the threshold; its distance ratio was taken as 1");
    }
    Ok(Rule3Outcome { order, degenerate })
}

/// Splits feedstocks by whether their `level` percentile reaches `f_star`.
pub fn classify_feedstocks(dists: &[EmpiricalDist], f_star: f64, level: f64) -> Result<BTreeMap<FeedstockId, Quality>> {
    dists
        .iter()
        .map(|d| {
            let p = d.percentile(level)?;
            let q = if p >= f_star { Quality::Meets } else { Quality::Fails };
            Ok((d.feedstock.clone(), q))
        })
        .collect()
}

/// A label exchange made to find a bale for a position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Swap {
    Moisture { position: usize, with: usize },
    Quality { position: usize, with: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule4Outcome {
    pub order: Vec<ClassKey>,
    pub swaps: Vec<Swap>,
}

/// Follows a moisture label sequence and a quality label sequence at the
/// same time. Position `k` takes a bale whose moisture and quality match the
/// `k`-th labels; feedstocks within a (moisture, quality) cell rotate. When
/// a cell is empty, labels are exchanged with the nearest later position
/// that makes a bale available, and the exchange is recorded.
pub fn rule4_combined(
    inventory: &Inventory,
    quality: &BTreeMap<FeedstockId, Quality>,
    moisture_labels: &[Moisture],
    quality_labels: &[Quality],
) -> Result<Rule4Outcome> {
    let n = inventory.total() as usize;
    check_nonempty(n as u32, "rule 4")?;
    if moisture_labels.len() != n || quality_labels.len() != n {
        return Err(Error::Sequencing(format!(
            "{n} bales but {} moisture and {} quality labels",
            moisture_labels.len(),
            quality_labels.len()
        )));
    }
    let quality_of = |f: &FeedstockId| {
        quality
            .get(f)
            .copied()
            .ok_or_else(|| Error::Sequencing(format!("no quality class for feedstock {f}")))
    };
    for f in &inventory.feedstocks {
        quality_of(f)?;
    }
    for m in Moisture::ALL {
        let want = moisture_labels.iter().filter(|&&x| x == m).count() as u32;
        if want != inventory.by_moisture(m) {
            return Err(Error::Sequencing(format!(
                "moisture labels ask for {want} {m} bales, inventory has {}",
                inventory.by_moisture(m)
            )));
        }
    }
    for q in [Quality::Meets, Quality::Fails] {
        let want = quality_labels.iter().filter(|&&x| x == q).count() as u32;
        let have: u32 = inventory
            .feedstocks
            .iter()
            .filter(|f| quality_of(f).ok() == Some(q))
            .map(|f| inventory.by_feedstock(f))
            .sum();
        if want != have {
            return Err(Error::Sequencing(format!(
                "quality labels ask for {want} {q} bales, inventory has {have}"
            )));
        }
    }

    let mut mlab = moisture_labels.to_vec();
    let mut qlab = quality_labels.to_vec();
    let mut left = inventory.counts.clone();
    let mut rotation: BTreeMap<(Moisture, Quality), usize> = BTreeMap::new();
    let mut order = Vec::with_capacity(n);
    let mut swaps = Vec::new();
    let available = |left: &BTreeMap<ClassKey, u32>, m: Moisture, q: Quality| {
        left.iter()
            .any(|(k, &c)| c > 0 && k.moisture == m && quality.get(&k.feedstock) == Some(&q))
    };

    for k in 0..n {
        if !available(&left, mlab[k], qlab[k]) {
            let single = (k + 1..n).find_map(|j| {
                if qlab[j] != qlab[k] && available(&left, mlab[k], qlab[j]) {
                    Some(Swap::Quality { position: k, with: j })
                } else if mlab[j] != mlab[k] && available(&left, mlab[j], qlab[k]) {
                    Some(Swap::Moisture { position: k, with: j })
                } else {
                    None
                }
            });
            match single {
                Some(s) => {
                    apply(&s, &mut mlab, &mut qlab);
                    swaps.push(s);
                }
                None => {
                    // Exchange both labels, each with its own later position.
                    let target = left
                        .iter()
                        .find(|(_, &c)| c > 0)
                        .map(|(key, _)| (key.moisture, quality[&key.feedstock]));
                    let Some((m, q)) = target else {
                        return Err(Error::Sequencing(format!("stuck at position {}", k + 1)));
                    };
                    let jm = (k + 1..n).find(|&j| mlab[j] == m);
                    let jq = (k + 1..n).find(|&j| qlab[j] == q);
                    let (Some(jm), Some(jq)) = (jm, jq) else {
                        return Err(Error::Sequencing(format!("stuck at position {}", k + 1)));
                    };
                    for s in [
                        Swap::Moisture { position: k, with: jm },
                        Swap::Quality { position: k, with: jq },
                    ] {
                        apply(&s, &mut mlab, &mut qlab);
                        swaps.push(s);
                    }
                }
            }
        }
        let (m, q) = (mlab[k], qlab[k]);
        let cell: Vec<&FeedstockId> = inventory
            .feedstocks
            .iter()
            .filter(|f| quality.get(*f) == Some(&q))
            .collect();
        let start = rotation.entry((m, q)).or_insert(0);
        let pick = (0..cell.len())
            .map(|i| (*start + i) % cell.len())
            .find(|&i| {
                left.get(&ClassKey {
                    feedstock: cell[i].clone(),
                    moisture: m,
                })
                .is_some_and(|&c| c > 0)
            })
            .ok_or_else(|| Error::Sequencing(format!("stuck at position {}", k + 1)))?;
        *start = pick + 1;
        let key = ClassKey {
            feedstock: cell[pick].clone(),
            moisture: m,
        };
        *left.get_mut(&key).expect("available class") -= 1;
        order.push(key);
    }
    Ok(Rule4Outcome { order, swaps })
}

fn apply(s: &Swap, mlab: &mut [Moisture], qlab: &mut [Quality]) {
    match *s {
        Swap::Moisture { position, with } => mlab.swap(position, with),
        Swap::Quality { position, with } => qlab.swap(position, with),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule1_example_counts() {
        let p = rule1_moisture(24, 40, 16).unwrap();
        assert_eq!(p.unit_text(), "3L-5M-2H");
        assert_eq!(p.repeats, 8);
        assert!(p.leftovers.is_empty());
    }

    #[test]
    fn rule1_single_bale() {
        let p = rule1_moisture(1, 0, 0).unwrap();
        assert_eq!(p.expand(), vec![Moisture::Low]);
    }

    #[test]
    fn rule1_coprime_counts_take_largest_divisor() {
        // (7, 11, 5) -> (5, 10, 5) gives divisor 5 with 3 bales removed.
        let p = rule1_moisture(7, 11, 5).unwrap();
        assert_eq!(p.repeats, 5);
        assert_eq!(p.unit_text(), "1L-2M-1H");
        assert_eq!(p.to_string(), "1L-2M-1H x5 + 2L-1M");
        assert_eq!(p.total(), 23);
    }

    #[test]
    fn rule1_rejects_empty() {
        assert!(rule1_moisture(0, 0, 0).is_err());
    }

    #[test]
    fn rule2_examples() {
        let p = rule2_quality(20, 60).unwrap();
        assert_eq!((p.unit_text().as_str(), p.repeats), ("1q-3nq", 20));
        let p = rule2_quality(5, 0).unwrap();
        assert_eq!(p.expand(), vec![Quality::Meets; 5]);
        let p = rule2_quality(4, 7).unwrap();
        assert_eq!(p.to_string(), "2q-3nq x2 + 1nq");
    }

    fn group(f: &str, p: f64, n: u32) -> QualityGroup {
        QualityGroup {
            feedstock: FeedstockId::new(f),
            percentile: p,
            bales: n,
        }
    }

    fn codes(o: &Rule3Outcome) -> String {
        o.order.iter().map(|(f, _)| f.as_str()).collect::<Vec<_>>().join(",")
    }

    #[test]
    fn rule3_pairs_of_two() {
        let o = rule3_distance(&[group("A", 0.611, 4), group("B", 0.581, 4)], 0.591).unwrap();
        assert_eq!(codes(&o), "A,A,B,B,A,A,B,B");
        assert!(!o.degenerate);
    }

    #[test]
    fn rule3_close_good_feedstock() {
        let o = rule3_distance(&[group("A", 0.596, 5), group("B", 0.571, 1)], 0.591).unwrap();
        assert_eq!(codes(&o), "A,A,A,A,A,B");
    }

    #[test]
    fn rule3_only_good_bales() {
        let o = rule3_distance(&[group("A", 0.7, 3)], 0.591).unwrap();
        assert_eq!(codes(&o), "A,A,A");
    }

    #[test]
    fn rule3_zero_distance_is_flagged() {
        let o = rule3_distance(&[group("A", 0.62, 4), group("B", 0.591 - 0.0, 2)], 0.591).unwrap();
        // B sits on the threshold and therefore counts as good.
        assert!(o.order.iter().all(|(_, q)| *q == Quality::Meets));
        let o = rule3_distance(&[group("A", 0.591, 4), group("B", 0.58, 2)], 0.591).unwrap();
        assert!(o.degenerate);
        assert_eq!(o.order.len(), 6);
    }

    #[test]
    fn rule4_single_bale() {
        let mut inv = Inventory::default();
        inv.add(ClassKey::new("S", Moisture::Low), 1);
        let q = BTreeMap::from([(FeedstockId::new("S"), Quality::Meets)]);
        let o = rule4_combined(&inv, &q, &[Moisture::Low], &[Quality::Meets]).unwrap();
        assert_eq!(o.order, vec![ClassKey::new("S", Moisture::Low)]);
        assert!(o.swaps.is_empty());
    }

    #[test]
    fn rule4_rejects_marginal_mismatch() {
        let mut inv = Inventory::default();
        inv.add(ClassKey::new("S", Moisture::Low), 2);
        let q = BTreeMap::from([(FeedstockId::new("S"), Quality::Meets)]);
        let err = rule4_combined(&inv, &q, &[Moisture::Low, Moisture::High], &[Quality::Meets; 2]).unwrap_err();
        assert!(err.to_string().contains("moisture"));
    }
}
