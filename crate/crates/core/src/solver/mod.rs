//! Solving contract shared by all MILP backends, plus a substitute-and-check
//! verifier for returned solutions.

mod external;
mod highs;
mod oracle;
mod simplex;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::milp::{MilpInstance, RowSense, VarKind};

pub use self::external::{read_solution_file, write_solution_file, ExternalLpBackend};
pub use self::highs::HighsBackend;
pub use self::oracle::{oracle_solve, OracleBackend, OracleLimits, OracleOutcome};
pub use self::simplex::{solve_lp, LpOutcome, LpProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    TimeLimit,
    Error,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }

    pub fn label(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::TimeLimit => "time_limit",
            SolveStatus::Error => "error",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            SolveStatus::Optimal,
            SolveStatus::Feasible,
            SolveStatus::Infeasible,
            SolveStatus::TimeLimit,
            SolveStatus::Error,
        ]
        .into_iter()
        .find(|st| st.label().eq_ignore_ascii_case(s.trim()))
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Options handed to a backend along with the instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// Seconds.
    pub time_limit: f64,
    pub mip_gap: f64,
    /// 0 leaves the backend's default.
    pub threads: u32,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            time_limit: 3600.0,
            mip_gap: 1e-4,
            threads: 1,
            seed: 0,
        }
    }
}

pub struct SolveRequest<'a> {
    pub instance: &'a MilpInstance,
    pub options: SolveOptions,
}

impl<'a> SolveRequest<'a> {
    pub fn new(instance: &'a MilpInstance) -> Self {
        SolveRequest {
            instance,
            options: SolveOptions::default(),
        }
    }

    pub fn with_options(instance: &'a MilpInstance, options: SolveOptions) -> Self {
        SolveRequest { instance, options }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub objective: Option<f64>,
    /// One value per instance variable, empty when there is no solution.
    pub values: Vec<f64>,
    pub wall_seconds: f64,
    pub gap: Option<f64>,
    pub message: Option<String>,
}

impl SolveResult {
    pub fn without_solution(status: SolveStatus, message: impl Into<String>) -> Self {
        SolveResult {
            status,
            objective: None,
            values: Vec::new(),
            wall_seconds: 0.0,
            gap: None,
            message: Some(message.into()),
        }
    }

    /// Values keyed by variable name.
    pub fn values_by_name(&self, instance: &MilpInstance) -> BTreeMap<String, f64> {
        instance
            .variables
            .iter()
            .zip(&self.values)
            .map(|(v, &x)| (v.name.clone(), x))
            .collect()
    }
}

/// A MILP engine. Implementations create a fresh session per call so one
/// backend value can serve several worker threads.
pub trait MilpBackend: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, request: &SolveRequest<'_>) -> Result<SolveResult>;
}

/// Substitutes `values` into every row, bound and integrality requirement.
/// Returns one message per violated item; an empty list means the point is
/// feasible within `tol` (absolute, scaled by the largest term magnitude
/// when that exceeds one).
pub fn verify_solution(instance: &MilpInstance, values: &[f64], tol: f64) -> Vec<String> {
    let mut problems = Vec::new();
    if values.len() != instance.variables.len() {
        problems.push(format!(
            "expected {} values, got {}",
            instance.variables.len(),
            values.len()
        ));
        return problems;
    }
    for (v, &x) in instance.variables.iter().zip(values) {
        if !x.is_finite() {
            problems.push(format!("{} = {x}", v.name));
            continue;
        }
        if x < v.lower - tol || x > v.upper + tol {
            problems.push(format!("{} = {x} outside [{}, {}]", v.name, v.lower, v.upper));
        }
        if v.kind == VarKind::Binary && (x - x.round()).abs() > tol {
            problems.push(format!("{} = {x} is not integral", v.name));
        }
    }
    for (i, row) in instance.constraints.iter().enumerate() {
        let mut lhs = 0.0;
        let mut scale: f64 = 1.0;
        for &(j, a) in &row.terms {
            let term = a * values[j];
            lhs += term;
            scale = scale.max(term.abs());
        }
        scale = scale.max(row.rhs.abs());
        let excess = match row.sense {
            RowSense::Le => lhs - row.rhs,
            RowSense::Ge => row.rhs - lhs,
            RowSense::Eq => (lhs - row.rhs).abs(),
        };
        if excess > tol * scale {
            problems.push(format!(
                "row r{i} [{}]: {lhs} {} {} violated by {excess}",
                row.tag,
                row.sense.symbol(),
                row.rhs
            ));
        }
    }
    problems
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{RowTag, VarRole};

    #[test]
    fn verifier_flags_rows_bounds_and_integrality() {
        let mut inst = MilpInstance::default();
        let x = inst.add_var(VarRole::Other("x".into()), VarKind::Continuous, 0.0, 5.0, 1.0);
        let z = inst.add_var(VarRole::Other("z".into()), VarKind::Binary, 0.0, 1.0, 0.0);
        inst.add_row(RowTag::Plumbing, vec![(x, 1.0), (z, -2.0)], RowSense::Le, 0.0);
        assert!(verify_solution(&inst, &[2.0, 1.0], 1e-6).is_empty());
        let bad = verify_solution(&inst, &[6.0, 0.5], 1e-6);
        assert_eq!(bad.len(), 3, "{bad:?}");
        assert!(bad[2].starts_with("row r0 [plumbing]"));
    }

    #[test]
    fn status_labels_round_trip() {
        for s in ["optimal", "feasible", "infeasible", "time_limit", "error"] {
            assert_eq!(SolveStatus::parse(s).unwrap().label(), s);
        }
    }
}
