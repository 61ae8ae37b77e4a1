//! Solver-neutral mixed-integer programs and the builders for the scheduling
//! model and its blending variants.

mod blend;
mod build;
mod lp_format;
mod stats;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ClassKey, FeedstockId, Grid3, SolutionRecord};

pub use blend::{add_blending, window_count, window_periods, Variant, VariantSpec};
pub use build::{build_core, BuiltModel, Layout};
pub use lp_format::{export_lp_text, parse_lp_text};
pub use stats::{tag_counts, write_stats};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

/// What a variable stands for in the scheduling model. Indices are model
/// indices: node, class, 1-based period, sample and window.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarRole {
    Flow { node: usize, class: usize, t: u32 },
    Inventory { node: usize, class: usize, t: u32 },
    Speed { class: usize, t: u32 },
    ClassActive { class: usize, t: u32 },
    ReactorOn { t: u32 },
    MaxFeed,
    Linearized { t: u32 },
    Surplus { sample: usize, window: usize },
    Shortfall { sample: usize, window: usize },
    Other(String),
}

impl VarRole {
    pub fn name(&self) -> String {
        match self {
            VarRole::Flow { node, class, t } => format!("x_{node}_{class}_{t}"),
            VarRole::Inventory { node, class, t } => format!("m_{node}_{class}_{t}"),
            VarRole::Speed { class, t } => format!("v_{class}_{t}"),
            VarRole::ClassActive { class, t } => format!("z_{class}_{t}"),
            VarRole::ReactorOn { t } => format!("zr_{t}"),
            VarRole::MaxFeed => "u".to_string(),
            VarRole::Linearized { t } => format!("w_{t}"),
            VarRole::Surplus { sample, window } => format!("bp_{sample}_{window}"),
            VarRole::Shortfall { sample, window } => format!("bm_{sample}_{window}"),
            VarRole::Other(name) => name.clone(),
        }
    }

    /// Inverse of [`VarRole::name`]. Names that do not follow the scheme map
    /// to [`VarRole::Other`].
    pub fn from_name(name: &str) -> VarRole {
        let parts: Vec<&str> = name.split('_').collect();
        let nums: Option<Vec<u64>> = parts[1..].iter().map(|p| canonical_number(p)).collect();
        let other = || VarRole::Other(name.to_string());
        let Some(nums) = nums else {
            return other();
        };
        let u = |i: usize| nums[i] as usize;
        let t = |i: usize| u32::try_from(nums[i]).ok().filter(|&t| t >= 1);
        match (parts[0], nums.len()) {
            ("x", 3) => t(2).map_or_else(other, |t| VarRole::Flow { node: u(0), class: u(1), t }),
            ("m", 3) => t(2).map_or_else(other, |t| VarRole::Inventory { node: u(0), class: u(1), t }),
            ("v", 2) => t(1).map_or_else(other, |t| VarRole::Speed { class: u(0), t }),
            ("z", 2) => t(1).map_or_else(other, |t| VarRole::ClassActive { class: u(0), t }),
            ("zr", 1) => t(0).map_or_else(other, |t| VarRole::ReactorOn { t }),
            ("u", 0) => VarRole::MaxFeed,
            ("w", 1) => t(0).map_or_else(other, |t| VarRole::Linearized { t }),
            ("bp", 2) => VarRole::Surplus { sample: u(0), window: u(1) },
            ("bm", 2) => VarRole::Shortfall { sample: u(0), window: u(1) },
            _ => other(),
        }
    }
}

// Only digit strings without leading zeros, so that name -> role -> name is
// the identity.
fn canonical_number(s: &str) -> Option<u64> {
    if s.is_empty() || (s.len() > 1 && s.starts_with('0')) || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    /// `f64::INFINITY` when unbounded above.
    pub upper: f64,
    /// Objective coefficient (minimisation).
    pub obj: f64,
    pub role: VarRole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

impl RowSense {
    pub fn symbol(self) -> &'static str {
        match self {
            RowSense::Le => "<=",
            RowSense::Ge => ">=",
            RowSense::Eq => "=",
        }
    }
}

/// Constraint family a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RowTag {
    InfeedCapacity,
    EquipmentCapacity,
    BinMassCapacity,
    BinVolumeCapacity,
    SequenceExclusive,
    InfeedSpeed,
    BaleSupply,
    TraverseMin,
    TraverseMax,
    ReactorMonotone,
    GrinderLoss,
    SeparatorRetained,
    SeparatorBypass,
    FlowBalance,
    InventoryBalance,
    InventoryInitial,
    InventoryFinal,
    ReactorMaxFeed,
    ReactorMinFeed,
    ReactorAvgFeed,
    McCormickFloor,
    McCormickCap,
    McCormickOnLower,
    McCormickOnUpper,
    ShortfallBalance,
    MeanBlend,
    SampleBlend,
    Plumbing,
}

impl RowTag {
    pub const ALL: [RowTag; 28] = [
        RowTag::InfeedCapacity,
        RowTag::EquipmentCapacity,
        RowTag::BinMassCapacity,
        RowTag::BinVolumeCapacity,
        RowTag::SequenceExclusive,
        RowTag::InfeedSpeed,
        RowTag::BaleSupply,
        RowTag::TraverseMin,
        RowTag::TraverseMax,
        RowTag::ReactorMonotone,
        RowTag::GrinderLoss,
        RowTag::SeparatorRetained,
        RowTag::SeparatorBypass,
        RowTag::FlowBalance,
        RowTag::InventoryBalance,
        RowTag::InventoryInitial,
        RowTag::InventoryFinal,
        RowTag::ReactorMaxFeed,
        RowTag::ReactorMinFeed,
        RowTag::ReactorAvgFeed,
        RowTag::McCormickFloor,
        RowTag::McCormickCap,
        RowTag::McCormickOnLower,
        RowTag::McCormickOnUpper,
        RowTag::ShortfallBalance,
        RowTag::MeanBlend,
        RowTag::SampleBlend,
        RowTag::Plumbing,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RowTag::InfeedCapacity => "infeed-capacity",
            RowTag::EquipmentCapacity => "equipment-capacity",
            RowTag::BinMassCapacity => "bin-mass-capacity",
            RowTag::BinVolumeCapacity => "bin-volume-capacity",
            RowTag::SequenceExclusive => "sequence-exclusive",
            RowTag::InfeedSpeed => "infeed-speed",
            RowTag::BaleSupply => "bale-supply",
            RowTag::TraverseMin => "traverse-min",
            RowTag::TraverseMax => "traverse-max",
            RowTag::ReactorMonotone => "reactor-monotone",
            RowTag::GrinderLoss => "grinder-loss",
            RowTag::SeparatorRetained => "separator-retained",
            RowTag::SeparatorBypass => "separator-bypass",
            RowTag::FlowBalance => "flow-balance",
            RowTag::InventoryBalance => "inventory-balance",
            RowTag::InventoryInitial => "inventory-initial",
            RowTag::InventoryFinal => "inventory-final",
            RowTag::ReactorMaxFeed => "reactor-max-feed",
            RowTag::ReactorMinFeed => "reactor-min-feed",
            RowTag::ReactorAvgFeed => "reactor-avg-feed",
            RowTag::McCormickFloor => "mccormick-floor",
            RowTag::McCormickCap => "mccormick-cap",
            RowTag::McCormickOnLower => "mccormick-on-lower",
            RowTag::McCormickOnUpper => "mccormick-on-upper",
            RowTag::ShortfallBalance => "shortfall-balance",
            RowTag::MeanBlend => "mean-blend",
            RowTag::SampleBlend => "sample-blend",
            RowTag::Plumbing => "plumbing",
        }
    }
}

impl fmt::Display for RowTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RowTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RowTag::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| Error::validation("row tag", format!("unknown tag `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub tag: RowTag,
    /// `(variable index, coefficient)` pairs.
    pub terms: Vec<(usize, f64)>,
    pub sense: RowSense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * values[j]).sum()
    }

    /// Amount by which `values` violates the row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            RowSense::Le => (lhs - self.rhs).max(0.0),
            RowSense::Ge => (self.rhs - lhs).max(0.0),
            RowSense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A minimisation MILP with tagged rows.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MilpInstance {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    /// Diagnostics gathered while building (not constraints).
    pub warnings: Vec<String>,
}

impl MilpInstance {
    pub fn add_var(&mut self, role: VarRole, kind: VarKind, lower: f64, upper: f64, obj: f64) -> usize {
        self.variables.push(Variable {
            name: role.name(),
            kind,
            lower,
            upper,
            obj,
            role,
        });
        self.variables.len() - 1
    }

    pub fn add_row(&mut self, tag: RowTag, terms: Vec<(usize, f64)>, sense: RowSense, rhs: f64) {
        self.constraints.push(Constraint { tag, terms, sense, rhs });
    }

    pub fn num_binaries(&self) -> usize {
        self.variables.iter().filter(|v| v.kind == VarKind::Binary).count()
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.variables.iter().zip(values).map(|(v, x)| v.obj * x).sum()
    }

    pub fn find_var(&self, role: &VarRole) -> Option<usize> {
        self.variables.iter().position(|v| v.role == *role)
    }

    /// Sets the objective coefficient of every shortfall variable.
    pub fn set_penalty(&mut self, alpha: f64) {
        for v in &mut self.variables {
            if matches!(v.role, VarRole::Shortfall { .. }) {
                v.obj = alpha;
            }
        }
    }

    /// Sorts variables by name (remapping row indices) and the terms of every
    /// row by variable name. Exported text follows this order, so a canonical
    /// instance survives an export/parse round trip unchanged.
    pub fn canonicalize(&mut self) {
        let mut order: Vec<usize> = (0..self.variables.len()).collect();
        order.sort_by(|&a, &b| self.variables[a].name.cmp(&self.variables[b].name));
        let mut new_index = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            new_index[old] = new;
        }
        let mut vars: Vec<Option<Variable>> = std::mem::take(&mut self.variables).into_iter().map(Some).collect();
        self.variables = order.iter().map(|&old| vars[old].take().expect("permutation")).collect();
        for row in &mut self.constraints {
            for term in &mut row.terms {
                term.0 = new_index[term.0];
            }
            row.terms.sort_by_key(|t| t.0);
        }
    }

    /// Checks the structural conditions every backend relies on.
    pub fn check_well_formed(&self) -> Result<()> {
        let n = self.variables.len();
        let mut seen = std::collections::HashSet::with_capacity(n);
        for v in &self.variables {
            if !seen.insert(v.name.as_str()) {
                return Err(Error::Solver(format!("duplicate variable {}", v.name)));
            }
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper || v.lower == f64::INFINITY {
                return Err(Error::Solver(format!("variable {} has bounds [{}, {}]", v.name, v.lower, v.upper)));
            }
            if !v.obj.is_finite() {
                return Err(Error::Solver(format!("variable {} has objective {}", v.name, v.obj)));
            }
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(Error::Solver(format!("binary {} has bounds [{}, {}]", v.name, v.lower, v.upper)));
            }
        }
        for (i, row) in self.constraints.iter().enumerate() {
            let name = format!("row r{i} [{}]", row.tag);
            if row.terms.is_empty() {
                return Err(Error::Solver(format!("{name} has no terms")));
            }
            if !row.rhs.is_finite() {
                return Err(Error::Solver(format!("{name} has rhs {}", row.rhs)));
            }
            for &(j, a) in &row.terms {
                if j >= n {
                    return Err(Error::Solver(format!("{name} references variable #{j}")));
                }
                if !a.is_finite() {
                    return Err(Error::Solver(format!("{name} has coefficient {a}")));
                }
            }
        }
        Ok(())
    }
}

/// Decodes a value vector of a built model into domain terms.
pub fn decode_solution(layout: &Layout, instance: &MilpInstance, values: &[f64], objective: f64) -> SolutionRecord {
    let periods = layout.periods as usize;
    let nclasses = layout.classes.len();
    let mut flows = Grid3::zeros(layout.nodes, nclasses, periods);
    let mut inventories = Grid3::zeros(layout.nodes, nclasses, periods);
    let mut speed = vec![vec![0.0; periods]; nclasses];
    let mut active = vec![vec![false; periods]; nclasses];
    let mut on = vec![false; periods];
    let mut lin = vec![0.0; periods];
    let mut max_feed = 0.0;
    for (v, &x) in instance.variables.iter().zip(values) {
        match v.role {
            VarRole::Flow { node, class, t } => flows.set(node, class, t, x),
            VarRole::Inventory { node, class, t } => inventories.set(node, class, t, x),
            VarRole::Speed { class, t } => speed[class][t as usize - 1] = x,
            VarRole::ClassActive { class, t } => active[class][t as usize - 1] = x > 0.5,
            VarRole::ReactorOn { t } => on[t as usize - 1] = x > 0.5,
            VarRole::Linearized { t } => lin[t as usize - 1] = x,
            VarRole::MaxFeed => max_feed = x,
            _ => {}
        }
    }
    SolutionRecord {
        period_minutes: layout.period_minutes,
        classes: layout.classes.clone(),
        flows,
        inventories,
        infeed_speed: speed,
        class_active: active,
        reactor_on: on,
        max_feed,
        linearized: lin,
        objective,
        reactor_feeders: layout.reactor_feeders.clone(),
        bins: layout.bins.clone(),
        violations: Vec::new(),
    }
}

/// Feedstocks appearing in a class list, in first-appearance order.
pub fn feedstocks_of(classes: &[ClassKey]) -> Vec<FeedstockId> {
    let mut out: Vec<FeedstockId> = Vec::new();
    for c in classes {
        if !out.contains(&c.feedstock) {
            out.push(c.feedstock.clone());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn role_names_are_bijective() {
        let roles = [
            VarRole::Flow { node: 3, class: 1, t: 12 },
            VarRole::Inventory { node: 0, class: 0, t: 1 },
            VarRole::Speed { class: 2, t: 7 },
            VarRole::ClassActive { class: 2, t: 7 },
            VarRole::ReactorOn { t: 40 },
            VarRole::MaxFeed,
            VarRole::Linearized { t: 3 },
            VarRole::Surplus { sample: 0, window: 2 },
            VarRole::Shortfall { sample: 49, window: 0 },
        ];
        for r in roles {
            assert_eq!(VarRole::from_name(&r.name()), r);
        }
        assert_eq!(VarRole::from_name("x_01_1_1"), VarRole::Other("x_01_1_1".into()));
        assert_eq!(VarRole::from_name("zr_0"), VarRole::Other("zr_0".into()));
        assert_eq!(VarRole::from_name("foo"), VarRole::Other("foo".into()));
    }

    #[test]
    fn tags_parse_back() {
        for tag in RowTag::ALL {
            assert_eq!(tag.label().parse::<RowTag>().unwrap(), tag);
        }
    }

    #[test]
    fn well_formedness_names_the_row() {
        let mut inst = MilpInstance::default();
        let x = inst.add_var(VarRole::MaxFeed, VarKind::Continuous, 0.0, 1.0, 1.0);
        inst.add_row(RowTag::Plumbing, vec![(x, 1.0)], RowSense::Le, 1.0);
        inst.add_row(RowTag::ReactorMonotone, vec![], RowSense::Le, 0.0);
        let err = inst.check_well_formed().unwrap_err().to_string();
        assert!(err.contains("r1") && err.contains("reactor-monotone"), "{err}");
    }

    proptest! {
        #[test]
        fn canonicalize_preserves_activities(vals in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let mut inst = MilpInstance::default();
            let names = ["w_3", "u", "x_0_0_2", "zr_1", "bm_0_0", "v_1_1"];
            let roles: Vec<_> = names.iter().map(|n| VarRole::from_name(n)).collect();
            for r in &roles {
                inst.add_var(r.clone(), VarKind::Continuous, 0.0, 1.0, 0.0);
            }
            inst.add_row(RowTag::Plumbing, (0..6).map(|j| (j, j as f64 + 1.0)).collect(), RowSense::Le, 0.0);
            let before = inst.constraints[0].activity(&vals);
            let mut canon = inst.clone();
            canon.canonicalize();
            let mut remapped = vec![0.0; 6];
            for (old, v) in inst.variables.iter().enumerate() {
                let new = canon.variables.iter().position(|w| w.name == v.name).unwrap();
                remapped[new] = vals[old];
            }
            prop_assert!((canon.constraints[0].activity(&remapped) - before).abs() < 1e-12);
            prop_assert!(canon.variables.windows(2).all(|w| w[0].name < w[1].name));
        }
    }
}
