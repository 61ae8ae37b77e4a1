use std::fmt;

use super::{EquipmentKind, ProcessNetwork};

/// One problem found by [`validate_network`].
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkViolation {
    Cycle { node: String },
    Orphan { node: String },
    BadPredecessor { node: String, index: usize },
    InfeedHasPredecessors { node: String },
    MissingCapacity { node: String, class: String },
    MissingField { node: String, field: &'static str },
    UnexpectedField { node: String, field: &'static str },
    OutOfRange { node: String, field: &'static str, value: f64 },
    SeparatorOutlets { node: String, reason: String },
    BadReactorFeeder { index: usize },
    NoReactorFeeder,
    ZeroHorizon,
    BigMTooSmall { big_m: f64, needed: f64 },
    OutletCount { node: String, class: String, count: usize },
}

impl fmt::Display for NetworkViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use NetworkViolation::*;
        match self {
            Cycle { node } => write!(f, "cycle through {node}"),
            Orphan { node } => write!(f, "{node} has no predecessor"),
            BadPredecessor { node, index } => write!(f, "{node} lists unknown predecessor #{index}"),
            InfeedHasPredecessors { node } => write!(f, "infeed {node} must not have predecessors"),
            MissingCapacity { node, class } => write!(f, "{node} has no capacity for {class}"),
            MissingField { node, field } => write!(f, "{node} is missing {field}"),
            UnexpectedField { node, field } => write!(f, "{node} must not define {field}"),
            OutOfRange { node, field, value } => write!(f, "{node}: {field} = {value} is out of range"),
            SeparatorOutlets { node, reason } => write!(f, "separator {node}: {reason}"),
            BadReactorFeeder { index } => write!(f, "reactor feeder #{index} does not exist"),
            NoReactorFeeder => write!(f, "no reactor feeder declared"),
            ZeroHorizon => write!(f, "horizon is zero"),
            BigMTooSmall { big_m, needed } => write!(f, "big-M {big_m} is below {needed}"),
            OutletCount { node, class, count } => {
                write!(f, "{node} passes {class} to {count} successors, expected exactly one")
            }
        }
    }
}

/// Structural checks on a network. Returns an empty list when the network is
/// usable by the model builder.
pub fn validate_network(net: &ProcessNetwork) -> Vec<NetworkViolation> {
    let mut out = Vec::new();
    let n = net.nodes.len();

    if net.horizon == 0 {
        out.push(NetworkViolation::ZeroHorizon);
    }
    if net.big_m < net.horizon as f64 {
        out.push(NetworkViolation::BigMTooSmall {
            big_m: net.big_m,
            needed: net.horizon as f64,
        });
    }
    if net.reactor_feeders.is_empty() {
        out.push(NetworkViolation::NoReactorFeeder);
    }
    for r in &net.reactor_feeders {
        if r.0 >= n {
            out.push(NetworkViolation::BadReactorFeeder { index: r.0 });
        }
    }

    for (i, node) in net.nodes.iter().enumerate() {
        let name = || node.name.clone();
        for p in &node.predecessors {
            if p.0 >= n {
                out.push(NetworkViolation::BadPredecessor { node: name(), index: p.0 });
            }
        }
        if i == net.infeed.0 {
            if !node.predecessors.is_empty() {
                out.push(NetworkViolation::InfeedHasPredecessors { node: name() });
            }
        } else if node.predecessors.is_empty() {
            out.push(NetworkViolation::Orphan { node: name() });
        }

        for class in net.classes.iter().filter(|c| node.carries(c)) {
            match node.capacity.get(class) {
                Some(&u) if u > 0.0 && u.is_finite() => {}
                Some(&u) => out.push(NetworkViolation::OutOfRange {
                    node: name(),
                    field: "capacity",
                    value: u,
                }),
                None => out.push(NetworkViolation::MissingCapacity {
                    node: name(),
                    class: class.to_string(),
                }),
            }
        }

        match (node.kind == EquipmentKind::Grinder, node.dry_matter_loss) {
            (true, None) => out.push(NetworkViolation::MissingField {
                node: name(),
                field: "dry_matter_loss",
            }),
            (true, Some(mu)) if !(0.0..1.0).contains(&mu) => out.push(NetworkViolation::OutOfRange {
                node: name(),
                field: "dry_matter_loss",
                value: mu,
            }),
            (false, Some(_)) => out.push(NetworkViolation::UnexpectedField {
                node: name(),
                field: "dry_matter_loss",
            }),
            _ => {}
        }

        if node.kind == EquipmentKind::Separator {
            for class in net.classes.iter().filter(|c| node.carries(c)) {
                match node.bypass_ratio.get(class) {
                    None => out.push(NetworkViolation::MissingField {
                        node: name(),
                        field: "bypass_ratio",
                    }),
                    Some(&th) if !(0.0..=1.0).contains(&th) => out.push(NetworkViolation::OutOfRange {
                        node: name(),
                        field: "bypass_ratio",
                        value: th,
                    }),
                    _ => {}
                }
            }
            check_separator_outlets(net, i, &mut out);
        } else if !node.bypass_ratio.is_empty() {
            out.push(NetworkViolation::UnexpectedField {
                node: name(),
                field: "bypass_ratio",
            });
        }

        match (&node.storage, node.kind.is_bin()) {
            (None, true) => out.push(NetworkViolation::MissingField {
                node: name(),
                field: "storage",
            }),
            (Some(_), false) => out.push(NetworkViolation::UnexpectedField {
                node: name(),
                field: "storage",
            }),
            (Some(st), true) => {
                for (field, v) in [("storage_mass_cap", st.mass_cap), ("storage_volume_cap", st.volume_cap)] {
                    if !(v > 0.0) {
                        out.push(NetworkViolation::OutOfRange { node: name(), field, value: v });
                    }
                }
                for class in net.classes.iter().filter(|c| node.carries(c)) {
                    match st.density.get(class) {
                        None => out.push(NetworkViolation::MissingField {
                            node: name(),
                            field: "processed_density",
                        }),
                        Some(&d) if !(d > 0.0) => out.push(NetworkViolation::OutOfRange {
                            node: name(),
                            field: "processed_density",
                            value: d,
                        }),
                        _ => {}
                    }
                }
            }
            (None, false) => {}
        }

        if node.bypass {
            let from_separator = node
                .predecessors
                .iter()
                .any(|p| net.nodes.get(p.0).is_some_and(|pn| pn.kind == EquipmentKind::Separator));
            if !from_separator {
                out.push(NetworkViolation::UnexpectedField {
                    node: name(),
                    field: "bypass",
                });
            }
        }
    }

    if out.iter().all(|v| !matches!(v, NetworkViolation::BadPredecessor { .. })) {
        find_cycles(net, &mut out);
        check_outlets(net, &mut out);
    }
    out
}

// Outflow of a class is handed whole to each successor that carries it, so
// outside the separator exactly one successor may take it. Reactor feeders
// discharge into the reactor and need none.
fn check_outlets(net: &ProcessNetwork, out: &mut Vec<NetworkViolation>) {
    for (i, node) in net.nodes.iter().enumerate() {
        if node.kind == EquipmentKind::Separator || net.reactor_feeders.contains(&super::NodeId(i)) {
            continue;
        }
        let succ = net.successors(super::NodeId(i));
        for class in net.classes.iter().filter(|c| node.carries(c)) {
            let count = succ.iter().filter(|s| net.node(**s).carries(class)).count();
            if count != 1 {
                out.push(NetworkViolation::OutletCount {
                    node: node.name.clone(),
                    class: class.to_string(),
                    count,
                });
            }
        }
    }
}

fn check_separator_outlets(net: &ProcessNetwork, sep: usize, out: &mut Vec<NetworkViolation>) {
    let succ = net.successors(super::NodeId(sep));
    let bypass = succ.iter().filter(|s| net.node(**s).bypass).count();
    let retained = succ.len() - bypass;
    let name = net.nodes[sep].name.clone();
    if bypass != 1 || retained != 1 {
        out.push(NetworkViolation::SeparatorOutlets {
            node: name.clone(),
            reason: format!("needs one bypass and one retained outlet, found {bypass} and {retained}"),
        });
    }
    for s in succ {
        if net.node(s).predecessors.len() != 1 {
            out.push(NetworkViolation::SeparatorOutlets {
                node: name.clone(),
                reason: format!("outlet {} has other inflows", net.node(s).name),
            });
        }
    }
}

fn find_cycles(net: &ProcessNetwork, out: &mut Vec<NetworkViolation>) {
    // Iterative three-colour DFS over predecessor edges.
    let n = net.nodes.len();
    let mut state = vec![0u8; n];
    for root in 0..n {
        if state[root] != 0 {
            continue;
        }
        let mut stack = vec![(root, 0usize)];
        state[root] = 1;
        while let Some(top) = stack.last_mut() {
            let (v, k) = *top;
            top.1 += 1;
            let preds = &net.nodes[v].predecessors;
            if k < preds.len() {
                let w = preds[k].0;
                match state[w] {
                    0 => {
                        state[w] = 1;
                        stack.push((w, 0));
                    }
                    1 => out.push(NetworkViolation::Cycle {
                        node: net.nodes[w].name.clone(),
                    }),
                    _ => {}
                }
            } else {
                state[v] = 2;
                stack.pop();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::model::{ClassKey, EquipmentNode, Moisture, NodeId};

    fn chain() -> ProcessNetwork {
        let class = ClassKey::new("S", Moisture::Low);
        let mut nodes = Vec::new();
        for (i, kind) in [EquipmentKind::Conveyor, EquipmentKind::Grinder, EquipmentKind::ReactorFeeder]
            .into_iter()
            .enumerate()
        {
            let mut node = EquipmentNode::new(format!("n{i}"), kind);
            node.capacity = BTreeMap::from([(class.clone(), 1.0)]);
            if i > 0 {
                node.predecessors.push(NodeId(i - 1));
            }
            nodes.push(node);
        }
        nodes[1].dry_matter_loss = Some(0.02);
        ProcessNetwork {
            nodes,
            classes: vec![class],
            reactor_feeders: vec![NodeId(2)],
            infeed: NodeId(0),
            horizon: 10,
            big_m: 100.0,
        }
    }

    #[test]
    fn valid_chain_has_no_violations() {
        assert_eq!(validate_network(&chain()), vec![]);
    }

    #[test]
    fn self_loop_is_a_cycle() {
        let mut net = chain();
        net.nodes[1].predecessors.push(NodeId(1));
        let report = validate_network(&net);
        assert!(report.iter().any(|v| matches!(v, NetworkViolation::Cycle { node } if node == "n1")));
    }

    #[test]
    fn grinder_without_loss_is_reported() {
        let mut net = chain();
        net.nodes[1].dry_matter_loss = None;
        let report = validate_network(&net);
        assert_eq!(
            report,
            vec![NetworkViolation::MissingField {
                node: "n1".into(),
                field: "dry_matter_loss"
            }]
        );
    }

    #[test]
    fn missing_capacity_and_orphan() {
        let mut net = chain();
        net.nodes[2].capacity.clear();
        net.nodes[2].predecessors.clear();
        let report = validate_network(&net);
        assert!(report.contains(&NetworkViolation::Orphan { node: "n2".into() }));
        assert!(report
            .iter()
            .any(|v| matches!(v, NetworkViolation::MissingCapacity { node, .. } if node == "n2")));
    }
}
