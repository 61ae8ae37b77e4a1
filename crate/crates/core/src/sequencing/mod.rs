//! Bale orderings: rule-based heuristics, literal pattern files and seeded
//! random shuffles.

mod pattern;
mod rules;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassKey, FeedstockId, Moisture};

pub use pattern::{
    literal_sequence, parse_feedstock_pattern, parse_moisture_pattern, parse_ordering, parse_sequence_file,
    random_sequence, write_ordering, ClassCheck, SequenceRow,
};
pub use rules::{
    classify_feedstocks, rule1_moisture, rule2_quality, rule3_distance, rule4_combined, QualityGroup, Rule3Outcome,
    Rule4Outcome, Swap,
};

/// Whether a feedstock's carbohydrate percentile reaches the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quality {
    Meets,
    Fails,
}

impl fmt::Display for Quality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Quality::Meets => "q",
            Quality::Fails => "nq",
        })
    }
}

/// A block of labels repeated `repeats` times, followed by leftovers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GcdPattern<L> {
    pub unit: Vec<(u32, L)>,
    pub repeats: u32,
    pub leftovers: Vec<(u32, L)>,
}

impl<L: Copy> GcdPattern<L> {
    /// One label per bale.
    pub fn expand(&self) -> Vec<L> {
        let mut out = Vec::with_capacity(self.total() as usize);
        for _ in 0..self.repeats {
            for &(n, l) in &self.unit {
                out.extend(std::iter::repeat_n(l, n as usize));
            }
        }
        for &(n, l) in &self.leftovers {
            out.extend(std::iter::repeat_n(l, n as usize));
        }
        out
    }

    pub fn total(&self) -> u32 {
        let unit: u32 = self.unit.iter().map(|t| t.0).sum();
        unit * self.repeats + self.leftovers.iter().map(|t| t.0).sum::<u32>()
    }

    pub fn leftover_count(&self) -> u32 {
        self.leftovers.iter().map(|t| t.0).sum()
    }
}

fn terms_text<L: fmt::Display>(terms: &[(u32, L)]) -> String {
    terms
        .iter()
        .map(|(n, l)| format!("{n}{l}"))
        .collect::<Vec<_>>()
        .join("-")
}

impl<L: fmt::Display> GcdPattern<L> {
    /// The repeated block, e.g. `3L-5M-2H`.
    pub fn unit_text(&self) -> String {
        terms_text(&self.unit)
    }
}

impl<L: fmt::Display> fmt::Display for GcdPattern<L> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} x{}", self.unit_text(), self.repeats)?;
        if !self.leftovers.is_empty() {
            write!(f, " + {}", terms_text(&self.leftovers))?;
        }
        Ok(())
    }
}

/// Bale counts per class, with feedstocks kept in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Inventory {
    pub feedstocks: Vec<FeedstockId>,
    pub counts: BTreeMap<ClassKey, u32>,
}

impl Inventory {
    pub fn add(&mut self, key: ClassKey, count: u32) {
        if !self.feedstocks.contains(&key.feedstock) {
            self.feedstocks.push(key.feedstock.clone());
        }
        *self.counts.entry(key).or_insert(0) += count;
    }

    pub fn from_bales(bales: &[ClassKey]) -> Self {
        let mut inv = Inventory::default();
        for b in bales {
            inv.add(b.clone(), 1);
        }
        inv
    }

    pub fn count(&self, key: &ClassKey) -> u32 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u32 {
        self.counts.values().sum()
    }

    pub fn by_moisture(&self, m: Moisture) -> u32 {
        self.counts.iter().filter(|(k, _)| k.moisture == m).map(|(_, n)| n).sum()
    }

    pub fn by_feedstock(&self, f: &FeedstockId) -> u32 {
        self.counts.iter().filter(|(k, _)| k.feedstock == *f).map(|(_, n)| n).sum()
    }

    /// Every class of `self` and `other` whose counts differ, as
    /// `class: have -> want` fragments.
    pub fn class_deltas(&self, other: &Inventory) -> Vec<String> {
        let mut keys: Vec<&ClassKey> = self.counts.keys().chain(other.counts.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .filter(|k| self.count(k) != other.count(k))
            .map(|k| format!("{k}: {} vs {}", self.count(k), other.count(k)))
            .collect()
    }

    /// Bales one per class unit, in feedstock then moisture order.
    pub fn bales(&self) -> Vec<ClassKey> {
        let mut out = Vec::with_capacity(self.total() as usize);
        for f in &self.feedstocks {
            for m in Moisture::ALL {
                let key = ClassKey {
                    feedstock: f.clone(),
                    moisture: m,
                };
                out.extend(std::iter::repeat_n(key.clone(), self.count(&key) as usize));
            }
        }
        out
    }
}

fn check_nonempty(total: u32, what: &str) -> Result<()> {
    if total == 0 {
        return Err(Error::Sequencing(format!("no {what} bales to order")));
    }
    Ok(())
}
