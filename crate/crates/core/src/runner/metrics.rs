use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BaleClass, BaleGeometry, ClassKey, EquipmentKind, ProcessNetwork, SolutionRecord};

/// Rows whose `rate * time` differs from `flow` by more than this fraction
/// are inconsistent.
pub const RATE_TOLERANCE: f64 = 0.005;

/// Performance figures of one schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub time_hours: f64,
    /// Mg per hour.
    pub rate: f64,
    /// Dry Mg delivered to the reactor.
    pub flow: f64,
    pub avg_inventory: f64,
    pub max_inventory: f64,
    pub cov: f64,
}

impl Metrics {
    /// `rate * time` matches `flow` within [`RATE_TOLERANCE`].
    pub fn is_consistent(&self) -> bool {
        rate_matches(self.rate, self.time_hours, self.flow)
    }
}

pub fn rate_matches(rate: f64, time_hours: f64, flow: f64) -> bool {
    (rate * time_hours - flow).abs() <= RATE_TOLERANCE * flow.abs()
}

/// Metrics from per-period series. `feed` is total reactor flow, `on` the
/// reactor indicator and `inventory` the total bin inventory, all indexed by
/// period. Average inventory and the variation of flow shares are taken over
/// running periods; maximum inventory over all periods.
pub fn metrics_from_series(feed: &[f64], on: &[bool], inventory: &[f64], period_minutes: f64) -> Result<Metrics> {
    if feed.len() != on.len() || inventory.len() != on.len() {
        return Err(Error::validation("series", "flow, indicator and inventory lengths differ"));
    }
    let running: Vec<usize> = (0..on.len()).filter(|&t| on[t]).collect();
    if running.is_empty() {
        return Err(Error::validation("process_time", "the reactor never runs"));
    }
    let time_hours = running.len() as f64 * period_minutes / 60.0;
    let flow: f64 = feed.iter().sum();
    let n = running.len() as f64;
    let avg_inventory = running.iter().map(|&t| inventory[t]).sum::<f64>() / n;
    let max_inventory = inventory.iter().copied().fold(0.0, f64::max);
    let cov = if flow > 0.0 {
        let shares: Vec<f64> = running.iter().map(|&t| feed[t] / flow).collect();
        let mean = shares.iter().sum::<f64>() / n;
        (shares.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n).sqrt()
    } else {
        0.0
    };
    Ok(Metrics {
        time_hours,
        rate: flow / time_hours,
        flow,
        avg_inventory,
        max_inventory,
        cov,
    })
}

pub fn compute_metrics(record: &SolutionRecord) -> Result<Metrics> {
    let periods = record.periods();
    let feed: Vec<f64> = (1..=periods).map(|t| record.reactor_feed(t)).collect();
    let inventory: Vec<f64> = (1..=periods).map(|t| record.total_inventory(t)).collect();
    metrics_from_series(&feed, &record.reactor_on, &inventory, record.period_minutes)
}

/// Dry mass that should reach the reactor feeders when every bale in
/// `bales` is fed, traced through the network by share propagation rather
/// than by the model rows.
pub fn trace_reactor_mass(net: &ProcessNetwork, classes: &[BaleClass], geometry: &BaleGeometry, bales: &[ClassKey]) -> Result<f64> {
    let nn = net.nodes.len();
    let mut total = 0.0;
    for key in bales {
        let class = classes
            .iter()
            .find(|c| c.key == *key)
            .ok_or_else(|| Error::UnknownClass(key.to_string()))?;
        let mut share: Vec<Option<f64>> = vec![None; nn];
        share[net.infeed.0] = Some(1.0);
        let mut pending = nn - 1;
        while pending > 0 {
            let mut progressed = false;
            for i in 0..nn {
                if share[i].is_some() {
                    continue;
                }
                let node = &net.nodes[i];
                if node.predecessors.iter().any(|p| share[p.0].is_none()) {
                    continue;
                }
                let value = if !node.carries(key) {
                    0.0
                } else {
                    let inflow: f64 = node
                        .predecessors
                        .iter()
                        .filter(|p| net.nodes[p.0].carries(key))
                        .map(|p| share[p.0].unwrap_or(0.0))
                        .sum();
                    match node.predecessors.iter().find(|p| net.nodes[p.0].kind == EquipmentKind::Separator) {
                        Some(sep) => {
                            let theta = net.nodes[sep.0].bypass_ratio.get(key).copied().unwrap_or(0.0);
                            let s = share[sep.0].unwrap_or(0.0);
                            if node.bypass { theta * s } else { (1.0 - theta) * s }
                        }
                        None => match node.kind {
                            EquipmentKind::Grinder => inflow * (1.0 - node.dry_matter_loss.unwrap_or(0.0)),
                            _ => inflow,
                        },
                    }
                };
                share[i] = Some(value);
                pending -= 1;
                progressed = true;
            }
            if !progressed {
                return Err(Error::validation("network", "cycle while tracing mass"));
            }
        }
        let at_reactor: f64 = net.reactor_feeders.iter().map(|r| share[r.0].unwrap_or(0.0)).sum();
        total += class.mass_per_meter * geometry.length * at_reactor;
    }
    Ok(total)
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub problem: String,
    /// `None` when no replication produced a schedule.
    pub metrics: Option<Metrics>,
    pub feasible: usize,
    pub replications: usize,
}

impl MetricsRow {
    pub const HEADER: &'static str =
        "problem,process_time_h,reactor_rate_mg_h,flow_to_reactor_mg,avg_inventory_mg,max_inventory_mg,cov,feasible";

    pub fn to_line(&self) -> String {
        let mut out = String::new();
        match &self.metrics {
            Some(m) => {
                let _ = write!(
                    out,
                    "{},{:.2},{:.3},{:.3},{:.3},{:.3},{:.4},{}/{}",
                    self.problem,
                    m.time_hours,
                    m.rate,
                    m.flow,
                    m.avg_inventory,
                    m.max_inventory,
                    m.cov,
                    self.feasible,
                    self.replications
                );
            }
            None => {
                let _ = write!(out, "{},Infeasible,,,,,,{}/{}", self.problem, self.feasible, self.replications);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn constant_flow_has_no_variation() {
        let m = metrics_from_series(&[2.0; 4], &[true; 4], &[0.0; 4], 60.0).unwrap();
        assert_abs_diff_eq!(m.cov, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.rate, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m.time_hours, 4.0, epsilon = 1e-12);
    }

    #[test]
    fn two_period_shares() {
        let m = metrics_from_series(&[1.0, 3.0], &[true, true], &[0.5, 0.0], 60.0).unwrap();
        assert_abs_diff_eq!(m.cov, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(m.avg_inventory, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(m.max_inventory, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn idle_reactor_is_an_error() {
        assert!(metrics_from_series(&[0.0], &[false], &[0.0], 1.0).is_err());
    }

    #[test]
    fn infeasible_row_text() {
        let row = MetricsRow {
            problem: "4".into(),
            metrics: None,
            feasible: 0,
            replications: 10,
        };
        assert_eq!(row.to_line(), "4,Infeasible,,,,,,0/10");
    }
}
