use crate::error::{Error, Result};
use crate::model::{
    validate_network, BaleClass, BaleGeometry, ClassKey, EquipmentKind, FeedstockId, NodeId, ProcessNetwork,
    ReliabilitySpec, SequencePlan, SolutionRecord,
};

use super::{decode_solution, feedstocks_of, MilpInstance, RowSense, RowTag, VarKind, VarRole};

/// Index information needed to interpret a model's variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub nodes: usize,
    pub classes: Vec<ClassKey>,
    /// Classes with at least one bale in the plan; only these get variables.
    pub active_classes: Vec<usize>,
    pub feedstocks: Vec<FeedstockId>,
    pub periods: u32,
    pub period_minutes: f64,
    pub reactor_feeders: Vec<NodeId>,
    pub bins: Vec<NodeId>,
    pub feed_upper: f64,
}

/// A built instance together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltModel {
    pub instance: MilpInstance,
    pub layout: Layout,
}

impl BuiltModel {
    pub fn decode(&self, values: &[f64], objective: f64) -> SolutionRecord {
        decode_solution(&self.layout, &self.instance, values, objective)
    }
}

struct Index {
    classes: usize,
    periods: usize,
    flow: Vec<Option<usize>>,
    inv: Vec<Option<usize>>,
}

impl Index {
    fn slot(&self, node: usize, class: usize, t: u32) -> usize {
        (node * self.classes + class) * self.periods + t as usize - 1
    }
    fn x(&self, node: usize, class: usize, t: u32) -> Option<usize> {
        self.flow[self.slot(node, class, t)]
    }
    fn m(&self, node: usize, class: usize, t: u32) -> Option<usize> {
        self.inv[self.slot(node, class, t)]
    }
}

/// Builds the deterministic scheduling model: minimise the number of periods
/// the reactor runs while every bale in `plan` is pushed through the network.
///
/// `classes` gives the bale parameters; `plan` refers to classes by their
/// position in that slice. Variables are created only for classes that occur
/// in the plan.
pub fn build_core(
    net: &ProcessNetwork,
    plan: &SequencePlan,
    geometry: &BaleGeometry,
    classes: &[BaleClass],
    reliability: &ReliabilitySpec,
) -> Result<BuiltModel> {
    let violations = validate_network(net);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::validation("network", text.join("; ")));
    }
    geometry.validate()?;
    reliability.validate()?;
    for c in classes {
        if net.class_index(&c.key).is_none() {
            return Err(Error::UnknownClass(c.key.to_string()));
        }
        if c.processing_periods == 0 {
            return Err(Error::validation("processing_periods", format!("{}: not derived", c.key)));
        }
    }
    let horizon = net.horizon;
    if plan.occupied > horizon {
        return Err(Error::HorizonOverflow {
            required: plan.occupied,
            horizon,
        });
    }
    if let Some(&bad) = plan.bales.iter().find(|&&b| b >= classes.len()) {
        return Err(Error::validation("plan", format!("bale refers to class #{bad}")));
    }

    let nc = classes.len();
    let nn = net.nodes.len();
    let mut counts = vec![0u32; nc];
    for &b in &plan.bales {
        counts[b] += 1;
    }
    let active: Vec<usize> = (0..nc).filter(|&c| counts[c] > 0).collect();
    let keys: Vec<ClassKey> = classes.iter().map(|c| c.key.clone()).collect();
    let infeed = net.infeed.0;
    let bins: Vec<NodeId> = (0..nn).filter(|&i| net.nodes[i].kind.is_bin()).map(NodeId).collect();
    let carries = |i: usize, c: usize| net.nodes[i].carries(&keys[c]);

    let mut warnings = Vec::new();
    let feed_upper = match reliability.feed_upper {
        Some(u) => u,
        None => net
            .reactor_feeders
            .iter()
            .map(|r| {
                active
                    .iter()
                    .filter(|&&c| carries(r.0, c))
                    .map(|&c| net.nodes[r.0].capacity[&keys[c]])
                    .fold(0.0, f64::max)
            })
            .sum(),
    };
    let feed_lower = reliability.feed_lower;
    if !(feed_upper > feed_lower) {
        return Err(Error::validation(
            "feed_upper",
            format!("upper feed bound {feed_upper} must exceed lower bound {feed_lower}"),
        ));
    }

    let total_mass: f64 = active.iter().map(|&c| classes[c].bale_mass * counts[c] as f64).sum();
    if total_mass > feed_upper * horizon as f64 {
        warnings.push(format!(
            "bale mass {total_mass} exceeds what the reactor can take in {horizon} periods at {feed_upper} per period"
        ));
    }
    for (k, w) in plan.starts.windows(2).enumerate() {
        let p = classes[plan.bales[k]].processing_periods;
        if w[0] + p > w[1] && plan.bales[k] != plan.bales[k + 1] {
            warnings.push(format!(
                "bales {k} and {} overlap; exclusivity and traverse rows conflict",
                k + 1
            ));
        }
    }
    for (k, (c, s)) in plan.starts_by_bale().enumerate() {
        if s + classes[c].processing_periods - 1 > horizon {
            warnings.push(format!("bale {k} traverse window is cut off by the horizon"));
        }
    }

    let mut inst = MilpInstance::default();
    let periods = horizon as usize;
    let mut idx = Index {
        classes: nc,
        periods,
        flow: vec![None; nn * nc * periods],
        inv: vec![None; nn * nc * periods],
    };
    for i in 0..nn {
        for &c in active.iter().filter(|&&c| carries(i, c)) {
            for t in 1..=horizon {
                let slot = idx.slot(i, c, t);
                idx.flow[slot] = Some(inst.add_var(
                    VarRole::Flow { node: i, class: c, t },
                    VarKind::Continuous,
                    0.0,
                    f64::INFINITY,
                    0.0,
                ));
                if net.nodes[i].kind.is_bin() {
                    idx.inv[slot] = Some(inst.add_var(
                        VarRole::Inventory { node: i, class: c, t },
                        VarKind::Continuous,
                        0.0,
                        f64::INFINITY,
                        0.0,
                    ));
                }
            }
        }
    }
    let mut speed = vec![Vec::new(); nc];
    let mut zact = vec![Vec::new(); nc];
    for &c in &active {
        for t in 1..=horizon {
            speed[c].push(inst.add_var(VarRole::Speed { class: c, t }, VarKind::Continuous, 0.0, f64::INFINITY, 0.0));
            zact[c].push(inst.add_var(VarRole::ClassActive { class: c, t }, VarKind::Binary, 0.0, 1.0, 0.0));
        }
    }
    let on: Vec<usize> = (1..=horizon)
        .map(|t| inst.add_var(VarRole::ReactorOn { t }, VarKind::Binary, 0.0, 1.0, 1.0))
        .collect();
    let u = inst.add_var(VarRole::MaxFeed, VarKind::Continuous, feed_lower, feed_upper, 0.0);
    let w: Vec<usize> = (1..=horizon)
        .map(|t| inst.add_var(VarRole::Linearized { t }, VarKind::Continuous, 0.0, f64::INFINITY, 0.0))
        .collect();
    let ti = |t: u32| t as usize - 1;

    // Infeed throughput only while the class is active.
    for &c in &active {
        let cap = net.nodes[infeed].capacity[&keys[c]];
        for t in 1..=horizon {
            let x = idx.x(infeed, c, t).expect("infeed carries every class");
            inst.add_row(RowTag::InfeedCapacity, vec![(x, 1.0), (zact[c][ti(t)], -cap)], RowSense::Le, 0.0);
        }
    }
    for i in (0..nn).filter(|&i| i != infeed) {
        for &c in active.iter().filter(|&&c| carries(i, c)) {
            let cap = net.nodes[i].capacity[&keys[c]];
            for t in 1..=horizon {
                inst.add_row(RowTag::EquipmentCapacity, vec![(idx.x(i, c, t).unwrap(), 1.0)], RowSense::Le, cap);
            }
        }
    }
    for b in &bins {
        let storage = net.nodes[b.0].storage.as_ref().expect("validated bin");
        let held: Vec<usize> = active.iter().copied().filter(|&c| carries(b.0, c)).collect();
        if held.is_empty() {
            continue;
        }
        for t in 1..=horizon {
            let terms = held.iter().map(|&c| (idx.m(b.0, c, t).unwrap(), 1.0)).collect();
            inst.add_row(RowTag::BinMassCapacity, terms, RowSense::Le, storage.mass_cap);
        }
        for t in 1..=horizon {
            let terms = held
                .iter()
                .map(|&c| (idx.m(b.0, c, t).unwrap(), 1.0 / storage.density[&keys[c]]))
                .collect();
            inst.add_row(RowTag::BinVolumeCapacity, terms, RowSense::Le, storage.volume_cap);
        }
    }
    // Only rows for bale starts are written; with no start the right-hand
    // side is big-M and the row cannot bind.
    for (c, s) in plan.starts_by_bale() {
        let end = (s + classes[c].processing_periods - 1).min(horizon);
        let mut terms = Vec::new();
        for &o in active.iter().filter(|&&o| o != c) {
            for t in s..=end {
                terms.push((zact[o][ti(t)], 1.0));
            }
        }
        if !terms.is_empty() {
            inst.add_row(RowTag::SequenceExclusive, terms, RowSense::Le, 0.0);
        }
    }
    for &c in &active {
        for t in 1..=horizon {
            let x = idx.x(infeed, c, t).unwrap();
            inst.add_row(
                RowTag::InfeedSpeed,
                vec![(x, 1.0), (speed[c][ti(t)], -classes[c].mass_per_meter)],
                RowSense::Le,
                0.0,
            );
        }
    }
    for &c in &active {
        let terms = (1..=horizon).map(|t| (idx.x(infeed, c, t).unwrap(), 1.0)).collect();
        inst.add_row(
            RowTag::BaleSupply,
            terms,
            RowSense::Eq,
            classes[c].bale_mass * counts[c] as f64,
        );
    }
    for (tag, sense) in [(RowTag::TraverseMin, RowSense::Ge), (RowTag::TraverseMax, RowSense::Le)] {
        for (c, s) in plan.starts_by_bale() {
            let end = (s + classes[c].processing_periods - 1).min(horizon);
            let terms = (s..=end).map(|t| (speed[c][ti(t)], 1.0)).collect();
            inst.add_row(tag, terms, sense, geometry.length);
        }
    }
    for t in 2..=horizon {
        inst.add_row(
            RowTag::ReactorMonotone,
            vec![(on[ti(t)], 1.0), (on[ti(t - 1)], -1.0)],
            RowSense::Le,
            0.0,
        );
    }

    // Mass balances.
    for i in (0..nn).filter(|&i| i != infeed) {
        let node = &net.nodes[i];
        let sep_parent = node
            .predecessors
            .iter()
            .find(|p| net.nodes[p.0].kind == EquipmentKind::Separator)
            .copied();
        for &c in active.iter().filter(|&&c| carries(i, c)) {
            for t in 1..=horizon {
                let x = idx.x(i, c, t).unwrap();
                let inflow: Vec<(usize, f64)> = node
                    .predecessors
                    .iter()
                    .filter_map(|p| idx.x(p.0, c, t))
                    .map(|j| (j, -1.0))
                    .collect();
                if let Some(sep) = sep_parent {
                    let theta = net.nodes[sep.0].bypass_ratio[&keys[c]];
                    let (tag, share) = if node.bypass {
                        (RowTag::SeparatorBypass, theta)
                    } else {
                        (RowTag::SeparatorRetained, 1.0 - theta)
                    };
                    let mut terms = vec![(x, 1.0)];
                    if let Some(xs) = idx.x(sep.0, c, t) {
                        if share != 0.0 {
                            terms.push((xs, -share));
                        }
                    }
                    inst.add_row(tag, terms, RowSense::Eq, 0.0);
                } else if node.kind == EquipmentKind::Grinder {
                    let keep = 1.0 - node.dry_matter_loss.expect("validated grinder");
                    let mut terms = vec![(x, 1.0)];
                    terms.extend(inflow.iter().map(|&(j, a)| (j, a * keep)));
                    inst.add_row(RowTag::GrinderLoss, terms, RowSense::Eq, 0.0);
                } else if node.kind.is_bin() {
                    let m = idx.m(i, c, t).unwrap();
                    let mut terms = vec![(m, 1.0), (x, 1.0)];
                    terms.extend(inflow.iter().copied());
                    if t == 1 {
                        inst.add_row(RowTag::InventoryInitial, terms, RowSense::Eq, 0.0);
                    } else {
                        terms.push((idx.m(i, c, t - 1).unwrap(), -1.0));
                        inst.add_row(RowTag::InventoryBalance, terms, RowSense::Eq, 0.0);
                    }
                } else {
                    let mut terms = vec![(x, 1.0)];
                    terms.extend(inflow.iter().copied());
                    inst.add_row(RowTag::FlowBalance, terms, RowSense::Eq, 0.0);
                }
            }
        }
    }
    for b in &bins {
        for &c in active.iter().filter(|&&c| carries(b.0, c)) {
            inst.add_row(
                RowTag::InventoryFinal,
                vec![(idx.m(b.0, c, horizon).unwrap(), 1.0)],
                RowSense::Eq,
                0.0,
            );
        }
    }

    // Reactor feed and its linearised maximum.
    let reactor_terms = |t: u32| -> Vec<(usize, f64)> {
        let mut terms = Vec::new();
        for r in &net.reactor_feeders {
            for &c in &active {
                if let Some(x) = idx.x(r.0, c, t) {
                    terms.push((x, 1.0));
                }
            }
        }
        terms
    };
    for t in 1..=horizon {
        let mut terms = reactor_terms(t);
        terms.push((w[ti(t)], -1.0));
        inst.add_row(RowTag::ReactorMaxFeed, terms, RowSense::Le, 0.0);
    }
    for t in 1..=horizon {
        let mut terms = reactor_terms(t);
        if reliability.min_utilization != 0.0 {
            terms.push((w[ti(t)], -reliability.min_utilization));
        }
        inst.add_row(RowTag::ReactorMinFeed, terms, RowSense::Ge, 0.0);
    }
    let mut avg: Vec<(usize, f64)> = (1..=horizon).flat_map(reactor_terms).collect();
    avg.extend(w.iter().map(|&j| (j, -reliability.avg_utilization)));
    inst.add_row(RowTag::ReactorAvgFeed, avg, RowSense::Ge, 0.0);

    let with_coef = |terms: &[(usize, f64)]| -> Vec<(usize, f64)> { terms.iter().copied().filter(|t| t.1 != 0.0).collect() };
    for t in 1..=horizon {
        let (wt, zt) = (w[ti(t)], on[ti(t)]);
        inst.add_row(RowTag::McCormickFloor, with_coef(&[(wt, 1.0), (zt, -feed_lower)]), RowSense::Ge, 0.0);
        inst.add_row(RowTag::McCormickCap, vec![(wt, 1.0), (zt, -feed_upper)], RowSense::Le, 0.0);
        inst.add_row(
            RowTag::McCormickOnLower,
            vec![(wt, 1.0), (u, -1.0), (zt, -feed_upper)],
            RowSense::Ge,
            -feed_upper,
        );
        inst.add_row(
            RowTag::McCormickOnUpper,
            with_coef(&[(wt, 1.0), (u, -1.0), (zt, -feed_lower)]),
            RowSense::Le,
            -feed_lower,
        );
    }

    inst.warnings = warnings;
    for w in &inst.warnings {
        log::warn!("{w}");
    }
    inst.canonicalize();

    Ok(BuiltModel {
        instance: inst,
        layout: Layout {
            nodes: nn,
            feedstocks: feedstocks_of(&keys),
            classes: keys,
            active_classes: active,
            periods: horizon,
            period_minutes: geometry.period_minutes,
            reactor_feeders: net.reactor_feeders.clone(),
            bins,
            feed_upper,
        },
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::{derive_bale_parameters, expand_sequence, EquipmentNode, Moisture};

    fn one_node(horizon: u32) -> (ProcessNetwork, Vec<BaleClass>, BaleGeometry) {
        let key = ClassKey::new("S", Moisture::Low);
        let mut node = EquipmentNode::new("feed", EquipmentKind::ReactorFeeder);
        node.capacity = BTreeMap::from([(key.clone(), 1.0)]);
        let net = ProcessNetwork {
            nodes: vec![node],
            classes: vec![key.clone()],
            reactor_feeders: vec![NodeId(0)],
            infeed: NodeId(0),
            horizon,
            big_m: 100.0,
        };
        let g = BaleGeometry::new(1.0, 1.0, 1.0, 1.0).unwrap();
        let class = BaleClass::new(key, 1.0, 1, 1.0).unwrap();
        let class = derive_bale_parameters(&g, &class, 1.0).unwrap();
        (net, vec![class], g)
    }

    #[test]
    fn smallest_instance_has_monotone_rows_from_period_two() {
        let (net, classes, g) = one_node(3);
        assert_eq!(classes[0].processing_periods, 1);
        let plan = expand_sequence(&[classes[0].key.clone()], &classes, 3).unwrap();
        let rel = ReliabilitySpec::new(0.9, 0.95).unwrap();
        let built = build_core(&net, &plan, &g, &classes, &rel).unwrap();
        let inst = &built.instance;
        let mono: Vec<_> = inst.constraints.iter().filter(|r| r.tag == RowTag::ReactorMonotone).collect();
        assert_eq!(mono.len(), 2);
        let names: Vec<Vec<&str>> = mono
            .iter()
            .map(|r| r.terms.iter().map(|&(j, _)| inst.variables[j].name.as_str()).collect())
            .collect();
        assert_eq!(names, vec![vec!["zr_1", "zr_2"], vec!["zr_2", "zr_3"]]);
        let objective: Vec<&str> = inst
            .variables
            .iter()
            .filter(|v| v.obj != 0.0)
            .map(|v| v.name.as_str())
            .collect();
        assert_eq!(objective, vec!["zr_1", "zr_2", "zr_3"]);
    }

    #[test]
    fn utilisation_rows_use_linearised_feed() {
        let (net, classes, g) = one_node(3);
        let plan = expand_sequence(&[classes[0].key.clone()], &classes, 3).unwrap();
        let rel = ReliabilitySpec::new(0.9, 0.95).unwrap();
        let built = build_core(&net, &plan, &g, &classes, &rel).unwrap();
        let inst = &built.instance;
        let coef_of = |row: &super::super::Constraint, name: &str| {
            row.terms
                .iter()
                .find(|&&(j, _)| inst.variables[j].name == name)
                .map(|&(_, a)| a)
        };
        let min_rows: Vec<_> = inst.constraints.iter().filter(|r| r.tag == RowTag::ReactorMinFeed).collect();
        assert_eq!(min_rows.len(), 3);
        assert_eq!(coef_of(min_rows[0], "w_1"), Some(-0.9));
        let avg: Vec<_> = inst.constraints.iter().filter(|r| r.tag == RowTag::ReactorAvgFeed).collect();
        assert_eq!(avg.len(), 1);
        for t in 1..=3 {
            assert_eq!(coef_of(avg[0], &format!("w_{t}")), Some(-0.95));
        }
    }

    #[test]
    fn invalid_network_is_rejected() {
        let (mut net, classes, g) = one_node(3);
        net.nodes[0].capacity.clear();
        let plan = expand_sequence(&[], &classes, 3).unwrap();
        let rel = ReliabilitySpec::new(0.9, 0.95).unwrap();
        assert!(build_core(&net, &plan, &g, &classes, &rel).is_err());
    }
}
