//! Exact reference solver for tiny instances: enumerate binary assignments
//! depth first and solve the remaining LP with the dense simplex. Subtrees
//! are cut by pure-binary rows and, unless disabled, by the LP relaxation.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::milp::{MilpInstance, RowSense, VarKind};

use super::simplex::{solve_lp, LpOutcome, LpProblem};
use super::{MilpBackend, SolveRequest, SolveResult, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleLimits {
    pub max_binaries: usize,
    pub max_continuous: usize,
    /// Solve the relaxation at inner nodes and drop subtrees that cannot
    /// improve on the incumbent. Off means plain enumeration.
    pub bound_pruning: bool,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits {
            max_binaries: 24,
            max_continuous: 2000,
            bound_pruning: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub result: SolveResult,
    /// Complete binary assignments that survived the logical checks and had
    /// their LP solved.
    pub enumerated: u64,
    /// Relaxations solved at inner nodes.
    pub relaxations: u64,
}

const ROW_TOL: f64 = 1e-9;

/// Solves `instance` exactly by enumeration. Rows whose variables are all
/// binary are checked on partial assignments to cut the search short.
pub fn oracle_solve(instance: &MilpInstance, limits: OracleLimits) -> Result<OracleOutcome> {
    instance.check_well_formed()?;
    let started = Instant::now();
    let binaries: Vec<usize> = (0..instance.variables.len())
        .filter(|&j| instance.variables[j].kind == VarKind::Binary)
        .collect();
    let continuous: Vec<usize> = (0..instance.variables.len())
        .filter(|&j| instance.variables[j].kind == VarKind::Continuous)
        .collect();
    if binaries.len() > limits.max_binaries || continuous.len() > limits.max_continuous {
        return Err(Error::Solver(format!(
            "oracle limit exceeded: {} binaries (max {}), {} continuous (max {})",
            binaries.len(),
            limits.max_binaries,
            continuous.len(),
            limits.max_continuous
        )));
    }
    let mut position = vec![usize::MAX; instance.variables.len()];
    for (k, &j) in binaries.iter().enumerate() {
        position[j] = k;
    }
    let mut cont_pos = vec![usize::MAX; instance.variables.len()];
    for (k, &j) in continuous.iter().enumerate() {
        cont_pos[j] = k;
    }
    // Pure-binary rows, listed under each binary they contain so a row is
    // rechecked whenever one of its variables is fixed.
    let mut binary_rows: Vec<Vec<usize>> = vec![Vec::new(); binaries.len()];
    let mut mixed_rows = Vec::new();
    for (i, row) in instance.constraints.iter().enumerate() {
        if row.terms.iter().all(|&(j, _)| position[j] != usize::MAX) {
            for &(j, _) in &row.terms {
                binary_rows[position[j]].push(i);
            }
        } else {
            mixed_rows.push(i);
        }
    }
    for list in &mut binary_rows {
        list.sort_unstable();
        list.dedup();
    }

    let mut search = Search {
        instance,
        binaries: &binaries,
        continuous: &continuous,
        position: &position,
        cont_pos: &cont_pos,
        binary_rows: &binary_rows,
        mixed_rows: &mixed_rows,
        assignment: vec![None; binaries.len()],
        best: None,
        enumerated: 0,
        relaxations: 0,
        unbounded: false,
        prune: limits.bound_pruning,
    };
    search.descend(0)?;
    let (enumerated, relaxations) = (search.enumerated, search.relaxations);
    let wall_seconds = started.elapsed().as_secs_f64();
    if search.unbounded {
        return Ok(OracleOutcome {
            result: SolveResult {
                wall_seconds,
                ..SolveResult::without_solution(SolveStatus::Error, "LP relaxation is unbounded")
            },
            enumerated,
            relaxations,
        });
    }
    let result = match search.best {
        Some((objective, values)) => SolveResult {
            status: SolveStatus::Optimal,
            objective: Some(objective),
            values,
            wall_seconds,
            gap: Some(0.0),
            message: None,
        },
        None => SolveResult {
            wall_seconds,
            ..SolveResult::without_solution(SolveStatus::Infeasible, "no binary assignment admits a feasible LP")
        },
    };
    Ok(OracleOutcome {
        result,
        enumerated,
        relaxations,
    })
}

struct Search<'a> {
    instance: &'a MilpInstance,
    binaries: &'a [usize],
    continuous: &'a [usize],
    position: &'a [usize],
    cont_pos: &'a [usize],
    binary_rows: &'a [Vec<usize>],
    mixed_rows: &'a [usize],
    assignment: Vec<Option<f64>>,
    best: Option<(f64, Vec<f64>)>,
    enumerated: u64,
    relaxations: u64,
    unbounded: bool,
    prune: bool,
}

impl Search<'_> {
    fn row_possible(&self, i: usize) -> bool {
        let row = &self.instance.constraints[i];
        let (mut lo, mut hi) = (0.0, 0.0);
        for &(j, a) in &row.terms {
            match self.assignment[self.position[j]] {
                Some(v) => {
                    lo += a * v;
                    hi += a * v;
                }
                None => {
                    let v = &self.instance.variables[j];
                    let (l, u) = (a * v.lower, a * v.upper);
                    lo += l.min(u);
                    hi += l.max(u);
                }
            }
        }
        match row.sense {
            RowSense::Le => lo <= row.rhs + ROW_TOL,
            RowSense::Ge => hi >= row.rhs - ROW_TOL,
            RowSense::Eq => lo <= row.rhs + ROW_TOL && hi >= row.rhs - ROW_TOL,
        }
    }

    fn descend(&mut self, depth: usize) -> Result<()> {
        if self.unbounded {
            return Ok(());
        }
        if depth == self.binaries.len() {
            return self.leaf();
        }
        if self.prune && !self.relaxation_open()? {
            return Ok(());
        }
        let var = &self.instance.variables[self.binaries[depth]];
        let lo = var.lower.ceil() as i64;
        let hi = var.upper.floor() as i64;
        for value in lo..=hi {
            self.assignment[depth] = Some(value as f64);
            if self.binary_rows[depth].iter().all(|&i| self.row_possible(i)) {
                self.descend(depth + 1)?;
            }
        }
        self.assignment[depth] = None;
        Ok(())
    }

    /// Solves the problem with the unfixed binaries relaxed. Returns false
    /// when the subtree is infeasible, cannot beat the incumbent, or has an
    /// integral relaxation that was taken as incumbent. A relaxation the
    /// simplex cannot finish leaves the subtree open.
    fn relaxation_open(&mut self) -> Result<bool> {
        self.relaxations += 1;
        let inst = self.instance;
        let n = inst.variables.len();
        let mut lp = LpProblem {
            cost: inst.variables.iter().map(|v| v.obj).collect(),
            rows: inst
                .constraints
                .iter()
                .map(|r| (r.terms.clone(), r.sense, r.rhs))
                .collect(),
            lower: inst.variables.iter().map(|v| v.lower).collect(),
            upper: inst.variables.iter().map(|v| v.upper).collect(),
        };
        for (k, &j) in self.binaries.iter().enumerate() {
            if let Some(v) = self.assignment[k] {
                lp.lower[j] = v;
                lp.upper[j] = v;
            }
        }
        let outcome = match solve_lp(&lp) {
            Ok(o) => o,
            Err(e) => {
                log::debug!("relaxation skipped: {e}");
                return Ok(true);
            }
        };
        match outcome {
            LpOutcome::Infeasible => Ok(false),
            LpOutcome::Unbounded => Ok(true),
            LpOutcome::Optimal { x, objective } => {
                if self.best.as_ref().is_some_and(|(b, _)| objective >= *b - 1e-9) {
                    return Ok(false);
                }
                let integral = self.binaries.iter().all(|&j| (x[j] - x[j].round()).abs() <= 1e-9);
                if !integral {
                    return Ok(true);
                }
                let mut values = x;
                for &j in self.binaries {
                    values[j] = values[j].round();
                }
                debug_assert_eq!(values.len(), n);
                self.best = Some((objective, values));
                Ok(false)
            }
        }
    }

    fn leaf(&mut self) -> Result<()> {
        self.enumerated += 1;
        let inst = self.instance;
        let nc = self.continuous.len();
        let mut lp = LpProblem {
            cost: self.continuous.iter().map(|&j| inst.variables[j].obj).collect(),
            rows: Vec::with_capacity(self.mixed_rows.len()),
            lower: self.continuous.iter().map(|&j| inst.variables[j].lower).collect(),
            upper: self.continuous.iter().map(|&j| inst.variables[j].upper).collect(),
        };
        let mut fixed_obj = 0.0;
        for (k, &j) in self.binaries.iter().enumerate() {
            fixed_obj += inst.variables[j].obj * self.assignment[k].unwrap();
        }
        for &i in self.mixed_rows {
            let row = &inst.constraints[i];
            let mut rhs = row.rhs;
            let mut terms = Vec::with_capacity(row.terms.len());
            for &(j, a) in &row.terms {
                if self.position[j] != usize::MAX {
                    rhs -= a * self.assignment[self.position[j]].unwrap();
                } else {
                    terms.push((self.cont_pos[j], a));
                }
            }
            lp.rows.push((terms, row.sense, rhs));
        }
        let outcome = if nc == 0 {
            let ok = lp.rows.iter().all(|(_, sense, rhs)| match sense {
                RowSense::Le => 0.0 <= *rhs + ROW_TOL,
                RowSense::Ge => 0.0 >= *rhs - ROW_TOL,
                RowSense::Eq => rhs.abs() <= ROW_TOL,
            });
            if ok {
                LpOutcome::Optimal {
                    x: Vec::new(),
                    objective: 0.0,
                }
            } else {
                LpOutcome::Infeasible
            }
        } else {
            solve_lp(&lp)?
        };
        match outcome {
            LpOutcome::Infeasible => {}
            LpOutcome::Unbounded => self.unbounded = true,
            LpOutcome::Optimal { x, objective } => {
                let total = fixed_obj + objective;
                if self.best.as_ref().is_none_or(|(b, _)| total < *b - 1e-9) {
                    let mut values = vec![0.0; inst.variables.len()];
                    for (k, &j) in self.binaries.iter().enumerate() {
                        values[j] = self.assignment[k].unwrap();
                    }
                    for (k, &j) in self.continuous.iter().enumerate() {
                        values[j] = x[k];
                    }
                    self.best = Some((total, values));
                }
            }
        }
        Ok(())
    }
}

/// [`oracle_solve`] behind the backend interface.
#[derive(Debug, Clone, Copy, Default)]
pub struct OracleBackend {
    pub limits: OracleLimits,
}

impl MilpBackend for OracleBackend {
    fn name(&self) -> &str {
        "oracle"
    }

    fn solve(&self, request: &SolveRequest<'_>) -> Result<SolveResult> {
        oracle_solve(request.instance, self.limits).map(|o| o.result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{RowTag, VarRole};
    use crate::solver::verify_solution;

    fn var(inst: &mut MilpInstance, name: &str, kind: VarKind, lo: f64, hi: f64, obj: f64) -> usize {
        inst.add_var(VarRole::Other(name.into()), kind, lo, hi, obj)
    }

    fn exhaustive() -> OracleLimits {
        OracleLimits {
            bound_pruning: false,
            ..OracleLimits::default()
        }
    }

    #[test]
    fn three_free_binaries_enumerate_eight_assignments() {
        let mut inst = MilpInstance::default();
        for name in ["a", "b", "c"] {
            var(&mut inst, name, VarKind::Binary, 0.0, 1.0, 1.0);
        }
        let out = oracle_solve(&inst, exhaustive()).unwrap();
        assert_eq!(out.enumerated, 8);
        assert_eq!(out.result.objective, Some(0.0));
    }

    #[test]
    fn binary_rows_prune_partial_assignments() {
        // a + b + c >= 2 leaves four complete assignments.
        let mut inst = MilpInstance::default();
        let v: Vec<_> = ["a", "b", "c"]
            .iter()
            .map(|n| var(&mut inst, n, VarKind::Binary, 0.0, 1.0, 1.0))
            .collect();
        inst.add_row(RowTag::Plumbing, v.iter().map(|&j| (j, 1.0)).collect(), RowSense::Ge, 2.0);
        let out = oracle_solve(&inst, exhaustive()).unwrap();
        assert_eq!(out.enumerated, 4);
        assert_eq!(out.result.objective, Some(2.0));
    }

    #[test]
    fn integral_relaxation_matches_lp() {
        // min -x - y with x + y <= 1.5 and z gating nothing: optimum -1.5.
        let mut inst = MilpInstance::default();
        let x = var(&mut inst, "x", VarKind::Continuous, 0.0, 1.0, -1.0);
        let y = var(&mut inst, "y", VarKind::Continuous, 0.0, 1.0, -1.0);
        let z = var(&mut inst, "z", VarKind::Binary, 0.0, 1.0, 0.0);
        inst.add_row(RowTag::Plumbing, vec![(x, 1.0), (y, 1.0), (z, 0.5)], RowSense::Le, 2.0);
        let out = oracle_solve(&inst, OracleLimits::default()).unwrap();
        assert!((out.result.objective.unwrap() + 2.0).abs() < 1e-9);
        assert!(verify_solution(&inst, &out.result.values, 1e-9).is_empty());
    }

    #[test]
    fn limits_are_enforced() {
        let mut inst = MilpInstance::default();
        for k in 0..3 {
            var(&mut inst, &format!("b{k}"), VarKind::Binary, 0.0, 1.0, 0.0);
        }
        let limits = OracleLimits {
            max_binaries: 2,
            max_continuous: 10,
            bound_pruning: true,
        };
        assert!(oracle_solve(&inst, limits).is_err());
    }

    #[test]
    fn pruning_agrees_with_enumeration() {
        // Knapsack: max 5a + 4b + 3c + 2d with 4a + 3b + 2c + d <= 6, plus a
        // continuous slack paid for in the objective.
        let mut inst = MilpInstance::default();
        let w = [(5.0, 4.0), (4.0, 3.0), (3.0, 2.0), (2.0, 1.0)];
        let b: Vec<_> = (0..4)
            .map(|k| var(&mut inst, &format!("b{k}"), VarKind::Binary, 0.0, 1.0, -w[k].0))
            .collect();
        let s = var(&mut inst, "s", VarKind::Continuous, 0.0, 2.0, 0.5);
        let mut terms: Vec<_> = b.iter().zip(&w).map(|(&j, &(_, c))| (j, c)).collect();
        terms.push((s, -1.0));
        inst.add_row(RowTag::Plumbing, terms, RowSense::Le, 6.0);
        let full = oracle_solve(&inst, exhaustive()).unwrap();
        let pruned = oracle_solve(&inst, OracleLimits::default()).unwrap();
        let (a, p) = (full.result.objective.unwrap(), pruned.result.objective.unwrap());
        assert!((a - p).abs() < 1e-9, "{a} vs {p}");
        assert!(pruned.enumerated < full.enumerated);
        assert!(verify_solution(&inst, &pruned.result.values, 1e-9).is_empty());
    }
}
