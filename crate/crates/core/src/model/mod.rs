//! Domain types for bales, equipment and the processing network.
//!
//! Everything here is a plain value type. Quantities are in dry megagrams,
//! metres and periods; conversion from per-hour rates happens at ingest time.

mod params;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use params::{derive_bale_parameters, expand_sequence};
pub use validate::{validate_network, NetworkViolation};

/// Discrete moisture level of a bale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Moisture {
    Low,
    Medium,
    High,
}

impl Moisture {
    pub const ALL: [Moisture; 3] = [Moisture::Low, Moisture::Medium, Moisture::High];

    pub fn code(self) -> char {
        match self {
            Moisture::Low => 'L',
            Moisture::Medium => 'M',
            Moisture::High => 'H',
        }
    }

    pub fn from_code(code: &str) -> Option<Self> {
        match code {
            "L" | "l" | "Low" | "low" => Some(Moisture::Low),
            "M" | "m" | "Medium" | "medium" => Some(Moisture::Medium),
            "H" | "h" | "High" | "high" => Some(Moisture::High),
            _ => None,
        }
    }
}

impl fmt::Display for Moisture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Short feedstock code such as `C2` or `S`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FeedstockId(pub String);

impl FeedstockId {
    pub fn new(code: impl Into<String>) -> Self {
        FeedstockId(code.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for FeedstockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A (feedstock, moisture) pair. Every model parameter is indexed by it, and a
/// physical bale in a sequence is described by its class alone.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassKey {
    pub feedstock: FeedstockId,
    pub moisture: Moisture,
}

impl ClassKey {
    pub fn new(feedstock: impl Into<String>, moisture: Moisture) -> Self {
        ClassKey {
            feedstock: FeedstockId::new(feedstock),
            moisture,
        }
    }
}

impl fmt::Display for ClassKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.feedstock, self.moisture)
    }
}

impl FromStr for ClassKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (feed, moist) = s
            .split_once('/')
            .ok_or_else(|| Error::UnknownClass(s.to_string()))?;
        let moisture = Moisture::from_code(moist.trim()).ok_or_else(|| Error::UnknownClass(s.to_string()))?;
        Ok(ClassKey::new(feed.trim(), moisture))
    }
}

/// Bale dimensions and the length of one model period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaleGeometry {
    pub width: f64,
    pub height: f64,
    pub length: f64,
    /// Period length in minutes.
    pub period_minutes: f64,
}

impl BaleGeometry {
    pub fn new(width: f64, height: f64, length: f64, period_minutes: f64) -> Result<Self> {
        let g = BaleGeometry {
            width,
            height,
            length,
            period_minutes,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("width", self.width),
            ("height", self.height),
            ("length", self.length),
            ("period_minutes", self.period_minutes),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Converts a per-hour rate into a per-period amount.
    pub fn per_period(&self, per_hour: f64) -> f64 {
        per_hour * self.period_minutes / 60.0
    }
}

/// Bales of one class in the inventory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaleClass {
    pub key: ClassKey,
    /// Dry mass of one bale.
    pub bale_mass: f64,
    pub bale_count: u32,
    /// Dry bulk density of the bale.
    pub density: f64,
    /// Dry mass per metre of bale length, `width * height * density`.
    pub mass_per_meter: f64,
    /// Periods needed to feed one bale at the class's maximum infeed speed.
    pub processing_periods: u32,
}

impl BaleClass {
    /// Creates a class whose derived fields are not yet filled in; see
    /// [`derive_bale_parameters`].
    pub fn new(key: ClassKey, bale_mass: f64, bale_count: u32, density: f64) -> Result<Self> {
        if !(bale_mass > 0.0) {
            return Err(Error::validation("bale_mass", format!("{key}: must be positive")));
        }
        if !(density > 0.0) {
            return Err(Error::validation("density", format!("{key}: must be positive")));
        }
        Ok(BaleClass {
            key,
            bale_mass,
            bale_count,
            density,
            mass_per_meter: 0.0,
            processing_periods: 0,
        })
    }
}

/// Equipment categories appearing in the flowsheet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EquipmentKind {
    Conveyor,
    Grinder,
    Separator,
    MeteringBin,
    SurgeBin,
    Pelleter,
    ReactorFeeder,
}

impl EquipmentKind {
    pub fn is_bin(self) -> bool {
        matches!(self, EquipmentKind::MeteringBin | EquipmentKind::SurgeBin)
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "conveyor" => EquipmentKind::Conveyor,
            "grinder" => EquipmentKind::Grinder,
            "separator" => EquipmentKind::Separator,
            "metering-bin" | "meteringbin" => EquipmentKind::MeteringBin,
            "surge-bin" | "surgebin" | "storage-bin" => EquipmentKind::SurgeBin,
            "pelleter" => EquipmentKind::Pelleter,
            "reactor-feeder" | "reactorfeeder" => EquipmentKind::ReactorFeeder,
            _ => return None,
        })
    }
}

/// Index of a node in [`ProcessNetwork::nodes`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

/// Storage parameters of a bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinStorage {
    /// Mass capacity (dry Mg).
    pub mass_cap: f64,
    /// Volume capacity (m³).
    pub volume_cap: f64,
    /// Bulk density of stored material per class (dry Mg/m³).
    pub density: BTreeMap<ClassKey, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquipmentNode {
    pub name: String,
    pub kind: EquipmentKind,
    pub predecessors: Vec<NodeId>,
    /// Outflow capacity per class, dry Mg per period.
    pub capacity: BTreeMap<ClassKey, f64>,
    /// Fraction of dry matter lost in the node (grinders only).
    pub dry_matter_loss: Option<f64>,
    /// Fraction of separated material that skips the second grinding stage
    /// (separator only).
    pub bypass_ratio: BTreeMap<ClassKey, f64>,
    /// Bin parameters (bins only).
    pub storage: Option<BinStorage>,
    /// When set, the node only carries bales of this feedstock.
    pub feedstock: Option<FeedstockId>,
    /// Marks the separator successor that receives the bypass fraction.
    pub bypass: bool,
}

impl EquipmentNode {
    pub fn new(name: impl Into<String>, kind: EquipmentKind) -> Self {
        EquipmentNode {
            name: name.into(),
            kind,
            predecessors: Vec::new(),
            capacity: BTreeMap::new(),
            dry_matter_loss: None,
            bypass_ratio: BTreeMap::new(),
            storage: None,
            feedstock: None,
            bypass: false,
        }
    }

    pub fn carries(&self, class: &ClassKey) -> bool {
        self.feedstock.as_ref().is_none_or(|f| *f == class.feedstock)
    }
}

/// Directed equipment graph plus the time grid it is scheduled on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessNetwork {
    pub nodes: Vec<EquipmentNode>,
    /// Bale classes the network must be able to process.
    pub classes: Vec<ClassKey>,
    /// Nodes whose outflow enters the reactor.
    pub reactor_feeders: Vec<NodeId>,
    /// The conveyor that receives bales.
    pub infeed: NodeId,
    /// Number of periods in the planning horizon.
    pub horizon: u32,
    pub big_m: f64,
}

impl ProcessNetwork {
    pub fn node(&self, id: NodeId) -> &EquipmentNode {
        &self.nodes[id.0]
    }

    pub fn find(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    pub fn successors(&self, id: NodeId) -> Vec<NodeId> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.predecessors.contains(&id))
            .map(|(i, _)| NodeId(i))
            .collect()
    }

    pub fn class_index(&self, key: &ClassKey) -> Option<usize> {
        self.classes.iter().position(|c| c == key)
    }

    /// Default big-M: ten times the larger of bale length and horizon.
    pub fn default_big_m(bale_length: f64, horizon: u32) -> f64 {
        bale_length.max(horizon as f64) * 10.0
    }
}

/// An ordered list of physical bales together with their start periods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequencePlan {
    /// Class index (into the class list used for expansion) of each bale.
    pub bales: Vec<usize>,
    /// 1-based start period of each bale.
    pub starts: Vec<u32>,
    /// Total infeed periods occupied by the sequence.
    pub occupied: u32,
    pub horizon: u32,
}

impl SequencePlan {
    /// The start indicator `y` for class `class` at period `t` (1-based).
    pub fn start_indicator(&self, class: usize, t: u32) -> bool {
        self.bales
            .iter()
            .zip(&self.starts)
            .any(|(&c, &s)| c == class && s == t)
    }

    /// `(class, start)` pairs for every bale, in feeding order.
    pub fn starts_by_bale(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.bales.iter().copied().zip(self.starts.iter().copied())
    }

    pub fn indicator_count(&self) -> usize {
        self.bales.len()
    }
}

/// Reactor utilisation requirements and the bracket on the maximum feed rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilitySpec {
    /// Per-period minimum utilisation.
    pub min_utilization: f64,
    /// Average utilisation over the running time.
    pub avg_utilization: f64,
    /// Lower bound on the maximum feed rate (dry Mg per period).
    pub feed_lower: f64,
    /// Upper bound on the maximum feed rate; `None` lets the builder use the
    /// summed capacity of the reactor feeders.
    pub feed_upper: Option<f64>,
}

impl ReliabilitySpec {
    pub fn new(min_utilization: f64, avg_utilization: f64) -> Result<Self> {
        let spec = ReliabilitySpec {
            min_utilization,
            avg_utilization,
            feed_lower: 0.0,
            feed_upper: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_feed_bounds(mut self, lower: f64, upper: Option<f64>) -> Result<Self> {
        self.feed_lower = lower;
        self.feed_upper = upper;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.min_utilization && self.min_utilization < self.avg_utilization && self.avg_utilization <= 1.0) {
            return Err(Error::validation(
                "utilization",
                format!(
                    "need 0 <= q_min < q_avg <= 1, got {} and {}",
                    self.min_utilization, self.avg_utilization
                ),
            ));
        }
        if self.feed_lower < 0.0 {
            return Err(Error::validation("feed_lower", "must be non-negative"));
        }
        if let Some(up) = self.feed_upper {
            if !(up > self.feed_lower) {
                return Err(Error::validation("feed_upper", "must exceed feed_lower"));
            }
        }
        Ok(())
    }
}

/// Dense per-(node, class, period) storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid3 {
    pub nodes: usize,
    pub classes: usize,
    pub periods: usize,
    pub data: Vec<f64>,
}

impl Grid3 {
    pub fn zeros(nodes: usize, classes: usize, periods: usize) -> Self {
        Grid3 {
            nodes,
            classes,
            periods,
            data: vec![0.0; nodes * classes * periods],
        }
    }

    fn idx(&self, node: usize, class: usize, t: u32) -> usize {
        debug_assert!(t >= 1 && (t as usize) <= self.periods);
        (node * self.classes + class) * self.periods + (t as usize - 1)
    }

    pub fn get(&self, node: usize, class: usize, t: u32) -> f64 {
        self.data[self.idx(node, class, t)]
    }

    pub fn set(&mut self, node: usize, class: usize, t: u32, v: f64) {
        let i = self.idx(node, class, t);
        self.data[i] = v;
    }
}

/// Solved schedule in domain terms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionRecord {
    pub period_minutes: f64,
    pub classes: Vec<ClassKey>,
    /// Outflow of every node, `X`.
    pub flows: Grid3,
    /// Bin inventories, `M` (zero for non-bins).
    pub inventories: Grid3,
    /// Infeed speed per class and period (m/period), indexed `[class][t-1]`.
    pub infeed_speed: Vec<Vec<f64>>,
    pub class_active: Vec<Vec<bool>>,
    /// Reactor running indicator per period, indexed `[t-1]`.
    pub reactor_on: Vec<bool>,
    pub max_feed: f64,
    pub linearized: Vec<f64>,
    pub objective: f64,
    pub reactor_feeders: Vec<NodeId>,
    pub bins: Vec<NodeId>,
    /// Per-sample violation flags when the solution was checked against a
    /// sample set.
    pub violations: Vec<bool>,
}

impl SolutionRecord {
    pub fn periods(&self) -> u32 {
        self.reactor_on.len() as u32
    }

    /// Total reactor feed in period `t`.
    pub fn reactor_feed(&self, t: u32) -> f64 {
        let mut total = 0.0;
        for n in &self.reactor_feeders {
            for c in 0..self.classes.len() {
                total += self.flows.get(n.0, c, t);
            }
        }
        total
    }

    /// Reactor feed per feedstock (in `feedstocks` order) and period:
    /// `result[b][t-1]`.
    pub fn reactor_feed_by_feedstock(&self, feedstocks: &[FeedstockId]) -> Vec<Vec<f64>> {
        let t_max = self.periods();
        let mut out = vec![vec![0.0; t_max as usize]; feedstocks.len()];
        for (c, key) in self.classes.iter().enumerate() {
            let Some(b) = feedstocks.iter().position(|f| *f == key.feedstock) else {
                continue;
            };
            for n in &self.reactor_feeders {
                for t in 1..=t_max {
                    out[b][t as usize - 1] += self.flows.get(n.0, c, t);
                }
            }
        }
        out
    }

    /// Total inventory over all bins in period `t`.
    pub fn total_inventory(&self, t: u32) -> f64 {
        let mut total = 0.0;
        for n in &self.bins {
            for c in 0..self.classes.len() {
                total += self.inventories.get(n.0, c, t);
            }
        }
        total
    }

    pub fn running_periods(&self) -> u32 {
        self.reactor_on.iter().filter(|&&z| z).count() as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_key_round_trips_through_display() {
        let key = ClassKey::new("C2", Moisture::High);
        assert_eq!(key.to_string(), "C2/H");
        assert_eq!("C2/H".parse::<ClassKey>().unwrap(), key);
        assert!("C2-H".parse::<ClassKey>().is_err());
    }

    #[test]
    fn reliability_bounds_are_checked() {
        assert!(ReliabilitySpec::new(0.9, 0.95).is_ok());
        assert!(ReliabilitySpec::new(0.95, 0.9).is_err());
        assert!(ReliabilitySpec::new(0.9, 1.1).is_err());
        let spec = ReliabilitySpec::new(0.8, 0.9).unwrap();
        assert!(spec.with_feed_bounds(1.0, Some(0.5)).is_err());
    }

    #[test]
    fn geometry_rejects_non_positive_fields() {
        let err = BaleGeometry::new(1.2, 0.0, 2.4, 1.0).unwrap_err();
        assert!(err.to_string().contains("height"));
        assert!(BaleGeometry::new(1.2, 1.2, 2.4, -1.0).is_err());
    }
}
