//! Adapter for MILP engines run as separate programs that read LP text and
//! write a solution file.
//!
//! Solution files are plain text:
//!
//! ```text
//! # status: optimal
//! # objective: 42
//! x_0_0_1 1.5
//! zr_1 1
//! ```
//!
//! Variables that are not listed take the value 0.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::milp::{export_lp_text, MilpInstance};

use super::{MilpBackend, SolveRequest, SolveResult, SolveStatus};

static RUN_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Runs `program` with `args`, replacing `{lp}` and `{sol}` by the paths of
/// the model file and the expected solution file. `{time_limit}`, `{gap}`
/// and `{seed}` are replaced by the request options.
#[derive(Debug, Clone)]
pub struct ExternalLpBackend {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub work_dir: Option<PathBuf>,
    /// Keep model and solution files after the run.
    pub keep_files: bool,
}

impl ExternalLpBackend {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        ExternalLpBackend {
            program: program.into(),
            args: vec!["{lp}".into(), "{sol}".into()],
            work_dir: None,
            keep_files: false,
        }
    }

    pub fn with_args(mut self, args: Vec<String>) -> Self {
        self.args = args;
        self
    }
}

impl MilpBackend for ExternalLpBackend {
    fn name(&self) -> &str {
        "external"
    }

    fn solve(&self, request: &SolveRequest<'_>) -> Result<SolveResult> {
        let inst = request.instance;
        inst.check_well_formed()?;
        let started = Instant::now();
        let dir = self.work_dir.clone().unwrap_or_else(std::env::temp_dir);
        let tag = format!(
            "biorefinery-{}-{}",
            std::process::id(),
            RUN_COUNTER.fetch_add(1, Ordering::Relaxed)
        );
        let lp_path = dir.join(format!("{tag}.lp"));
        let sol_path = dir.join(format!("{tag}.sol"));
        std::fs::write(&lp_path, export_lp_text(inst)).map_err(|e| Error::io(&lp_path, e))?;

        let opts = request.options;
        let args: Vec<String> = self
            .args
            .iter()
            .map(|a| {
                a.replace("{lp}", &lp_path.to_string_lossy())
                    .replace("{sol}", &sol_path.to_string_lossy())
                    .replace("{time_limit}", &opts.time_limit.to_string())
                    .replace("{gap}", &opts.mip_gap.to_string())
                    .replace("{seed}", &opts.seed.to_string())
            })
            .collect();
        let output = Command::new(&self.program).args(&args).output();
        let cleanup = || {
            if !self.keep_files {
                let _ = std::fs::remove_file(&lp_path);
                let _ = std::fs::remove_file(&sol_path);
            }
        };
        let output = match output {
            Ok(o) => o,
            Err(e) => {
                cleanup();
                return Err(Error::Solver(format!(
                    "cannot start backend {}: {e}",
                    self.program.display()
                )));
            }
        };
        if !output.status.success() {
            cleanup();
            return Err(Error::Solver(format!(
                "backend {} exited with {}: {}",
                self.program.display(),
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let text = std::fs::read_to_string(&sol_path);
        cleanup();
        let text = text.map_err(|e| Error::Solver(format!("backend wrote no solution file: {e}")))?;
        let mut result = read_solution_file(&text, inst)?;
        result.wall_seconds = started.elapsed().as_secs_f64();
        Ok(result)
    }
}

/// Renders a result in the solution-file format.
pub fn write_solution_file(result: &SolveResult, instance: &MilpInstance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# status: {}", result.status);
    if let Some(obj) = result.objective {
        let _ = writeln!(out, "# objective: {obj}");
    }
    if let Some(gap) = result.gap {
        let _ = writeln!(out, "# gap: {gap}");
    }
    for (v, x) in instance.variables.iter().zip(&result.values) {
        let _ = writeln!(out, "{} {x}", v.name);
    }
    out
}

/// Parses a solution file against the instance it solves.
pub fn read_solution_file(text: &str, instance: &MilpInstance) -> Result<SolveResult> {
    let index: HashMap<&str, usize> = instance
        .variables
        .iter()
        .enumerate()
        .map(|(j, v)| (v.name.as_str(), j))
        .collect();
    let mut status = None;
    let mut objective = None;
    let mut gap = None;
    let mut values = vec![0.0; instance.variables.len()];
    let mut any_value = false;
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(meta) = line.strip_prefix('#') {
            let Some((key, val)) = meta.split_once(':') else {
                continue;
            };
            let val = val.trim();
            match key.trim() {
                "status" => {
                    status = Some(
                        SolveStatus::parse(val)
                            .ok_or_else(|| Error::parse("solution", ln + 1, format!("unknown status `{val}`")))?,
                    )
                }
                "objective" => {
                    objective = Some(
                        val.parse::<f64>()
                            .map_err(|_| Error::parse("solution", ln + 1, "bad objective"))?,
                    )
                }
                "gap" => gap = val.parse::<f64>().ok(),
                _ => {}
            }
            continue;
        }
        let mut parts = line.split_whitespace();
        let (Some(name), Some(val), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse("solution", ln + 1, "expected `name value`"));
        };
        let j = *index
            .get(name)
            .ok_or_else(|| Error::parse("solution", ln + 1, format!("unknown variable `{name}`")))?;
        values[j] = val
            .parse()
            .map_err(|_| Error::parse("solution", ln + 1, format!("bad value `{val}`")))?;
        any_value = true;
    }
    let status = status.unwrap_or(if any_value {
        SolveStatus::Feasible
    } else {
        SolveStatus::Error
    });
    if !status.has_solution() {
        return Ok(SolveResult::without_solution(status, "reported by backend"));
    }
    let objective = objective.or_else(|| Some(instance.objective_value(&values)));
    Ok(SolveResult {
        status,
        objective,
        values,
        wall_seconds: 0.0,
        gap,
        message: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::{VarKind, VarRole};

    #[test]
    fn solution_file_round_trip() {
        let mut inst = MilpInstance::default();
        inst.add_var(VarRole::MaxFeed, VarKind::Continuous, 0.0, 5.0, 1.0);
        inst.add_var(VarRole::ReactorOn { t: 1 }, VarKind::Binary, 0.0, 1.0, 1.0);
        let res = SolveResult {
            status: SolveStatus::Optimal,
            objective: Some(1.25),
            values: vec![0.25, 1.0],
            wall_seconds: 0.0,
            gap: Some(0.0),
            message: None,
        };
        let text = write_solution_file(&res, &inst);
        assert_eq!(read_solution_file(&text, &inst).unwrap(), res);
    }

    #[test]
    fn infeasible_file_has_no_values() {
        let inst = MilpInstance::default();
        let res = read_solution_file("# status: infeasible\n", &inst).unwrap();
        assert_eq!(res.status, SolveStatus::Infeasible);
        assert!(res.values.is_empty());
    }

    #[test]
    fn unknown_variable_is_reported_with_line() {
        let inst = MilpInstance::default();
        let err = read_solution_file("# status: optimal\nq 1\n", &inst).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }

    #[test]
    fn missing_program_is_a_backend_error() {
        let mut inst = MilpInstance::default();
        inst.add_var(VarRole::MaxFeed, VarKind::Continuous, 0.0, 5.0, 1.0);
        let backend = ExternalLpBackend::new("/nonexistent/solver-binary");
        let err = backend.solve(&SolveRequest::new(&inst)).unwrap_err();
        assert!(matches!(err, Error::Solver(_)));
    }
}
