use std::collections::BTreeMap;
use std::time::Instant;

use ::highs::{HighsModelStatus, HighsSolutionStatus, RowProblem, Sense};

use crate::error::{Error, Result};
use crate::milp::{RowSense, VarKind};

use super::{MilpBackend, SolveRequest, SolveResult, SolveStatus};

/// In-process HiGHS solver.
#[derive(Debug, Clone, Default)]
pub struct HighsBackend {
    /// Feasibility tolerance passed to HiGHS for rows, bounds and integrality.
    pub feasibility_tol: Option<f64>,
}

impl HighsBackend {
    pub fn new() -> Self {
        HighsBackend {
            feasibility_tol: Some(1e-9),
        }
    }
}

impl MilpBackend for HighsBackend {
    fn name(&self) -> &str {
        "highs"
    }

    fn solve(&self, request: &SolveRequest<'_>) -> Result<SolveResult> {
        let inst = request.instance;
        inst.check_well_formed()?;
        let opts = request.options;
        if !(opts.time_limit > 0.0) || !(opts.mip_gap >= 0.0) {
            return Err(Error::Solver("time limit and gap must be positive".into()));
        }
        let started = Instant::now();
        if inst.variables.is_empty() {
            return Ok(SolveResult {
                status: SolveStatus::Optimal,
                objective: Some(0.0),
                values: Vec::new(),
                wall_seconds: started.elapsed().as_secs_f64(),
                gap: Some(0.0),
                message: None,
            });
        }

        let mut pb = RowProblem::default();
        let cols: Vec<_> = inst
            .variables
            .iter()
            .map(|v| match v.kind {
                VarKind::Binary => pb.add_integer_column(v.obj, v.lower..=v.upper),
                VarKind::Continuous => pb.add_column(v.obj, v.lower..=v.upper),
            })
            .collect();
        for row in &inst.constraints {
            // Merge repeated columns; HiGHS rejects duplicate entries.
            let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
            for &(j, a) in &row.terms {
                *merged.entry(j).or_insert(0.0) += a;
            }
            let factors: Vec<_> = merged.into_iter().map(|(j, a)| (cols[j], a)).collect();
            match row.sense {
                RowSense::Le => pb.add_row(..=row.rhs, factors),
                RowSense::Ge => pb.add_row(row.rhs.., factors),
                RowSense::Eq => pb.add_row(row.rhs..=row.rhs, factors),
            }
        }

        let mut model = pb.optimise(Sense::Minimise);
        model.make_quiet();
        model.set_option("time_limit", opts.time_limit);
        model.set_option("mip_rel_gap", opts.mip_gap);
        model.set_option("random_seed", (opts.seed % (i32::MAX as u64)) as i32);
        if let Some(tol) = self.feasibility_tol {
            model.set_option("primal_feasibility_tolerance", tol);
            model.set_option("mip_feasibility_tolerance", tol);
        }
        if opts.threads > 0 {
            model.set_option("threads", opts.threads as i32);
        }
        let solved = model
            .try_solve()
            .map_err(|e| Error::Solver(format!("HiGHS run failed: {e:?}")))?;
        let wall_seconds = started.elapsed().as_secs_f64();
        let has_binaries = inst.num_binaries() > 0;
        let status = solved.status();
        let primal = solved.primal_solution_status();
        let mapped = match status {
            HighsModelStatus::Optimal => SolveStatus::Optimal,
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => SolveStatus::Infeasible,
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedInterrupt => {
                if primal == HighsSolutionStatus::Feasible {
                    SolveStatus::Feasible
                } else {
                    SolveStatus::TimeLimit
                }
            }
            HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
            other => {
                return Ok(SolveResult {
                    wall_seconds,
                    ..SolveResult::without_solution(SolveStatus::Error, format!("HiGHS status {other:?}"))
                })
            }
        };
        if !mapped.has_solution() {
            return Ok(SolveResult {
                wall_seconds,
                ..SolveResult::without_solution(mapped, format!("HiGHS status {status:?}"))
            });
        }
        let mut values = solved.get_solution().columns().to_vec();
        for (v, x) in inst.variables.iter().zip(values.iter_mut()) {
            if v.kind == VarKind::Binary {
                *x = x.round().clamp(v.lower, v.upper);
            } else {
                *x = x.clamp(v.lower, v.upper);
            }
        }
        let gap = if has_binaries { solved.mip_gap() } else { 0.0 };
        Ok(SolveResult {
            status: mapped,
            objective: Some(inst.objective_value(&values)),
            values,
            wall_seconds,
            gap: Some(if gap.is_finite() { gap } else { 0.0 }),
            message: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{MilpInstance, RowTag, VarRole};
    use crate::solver::verify_solution;

    fn var(inst: &mut MilpInstance, name: &str, kind: VarKind, lo: f64, hi: f64, obj: f64) -> usize {
        inst.add_var(VarRole::Other(name.into()), kind, lo, hi, obj)
    }

    #[test]
    fn single_bounded_variable() {
        let mut inst = MilpInstance::default();
        var(&mut inst, "x", VarKind::Continuous, 0.0, 5.0, 1.0);
        let res = HighsBackend::new().solve(&SolveRequest::new(&inst)).unwrap();
        assert_eq!(res.status, SolveStatus::Optimal);
        assert_eq!(res.objective, Some(0.0));
    }

    #[test]
    fn contradictory_rows_are_infeasible() {
        let mut inst = MilpInstance::default();
        let x = var(&mut inst, "x", VarKind::Continuous, 0.0, f64::INFINITY, 1.0);
        inst.add_row(RowTag::Plumbing, vec![(x, 1.0)], RowSense::Ge, 2.0);
        inst.add_row(RowTag::Plumbing, vec![(x, 1.0)], RowSense::Le, 1.0);
        let res = HighsBackend::new().solve(&SolveRequest::new(&inst)).unwrap();
        assert_eq!(res.status, SolveStatus::Infeasible);
        assert!(res.values.is_empty());
    }

    #[test]
    fn small_knapsack() {
        // min -(5a + 4b + 3c) s.t. 2a + 3b + c <= 4
        let mut inst = MilpInstance::default();
        let a = var(&mut inst, "a", VarKind::Binary, 0.0, 1.0, -5.0);
        let b = var(&mut inst, "b", VarKind::Binary, 0.0, 1.0, -4.0);
        let c = var(&mut inst, "c", VarKind::Binary, 0.0, 1.0, -3.0);
        inst.add_row(RowTag::Plumbing, vec![(a, 2.0), (b, 3.0), (c, 1.0)], RowSense::Le, 4.0);
        let res = HighsBackend::new().solve(&SolveRequest::new(&inst)).unwrap();
        assert_eq!(res.objective, Some(-8.0));
        assert!(verify_solution(&inst, &res.values, 1e-9).is_empty());
    }

    #[test]
    fn malformed_instance_names_row() {
        let mut inst = MilpInstance::default();
        var(&mut inst, "x", VarKind::Continuous, 0.0, 1.0, 1.0);
        inst.add_row(RowTag::BaleSupply, vec![(7, 1.0)], RowSense::Le, 1.0);
        let err = HighsBackend::new().solve(&SolveRequest::new(&inst)).unwrap_err();
        assert!(err.to_string().contains("bale-supply"), "{err}");
    }
}
