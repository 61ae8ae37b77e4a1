use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::Variant;
use crate::solver::{MilpBackend, SolveOptions};

use super::{solve_built, violation_rate, ModelFactory, SampleSet, SolvedModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub alpha_lower: f64,
    pub alpha_upper: f64,
    /// Tolerance when comparing the violation count with `gamma_hat * N`.
    pub epsilon: f64,
    /// Stop once the bracket midpoint moves by at most this much.
    pub phi: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            alpha_lower: 1e-3,
            alpha_upper: 1e3,
            epsilon: 1e-4,
            phi: 1e-4,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha_lower > 0.0 && self.alpha_lower < self.alpha_upper && self.alpha_upper.is_finite()) {
            return Err(Error::validation(
                "alpha bracket",
                format!("need 0 < lower < upper, got [{}, {}]", self.alpha_lower, self.alpha_upper),
            ));
        }
        if !(self.epsilon >= 0.0 && self.phi > 0.0) {
            return Err(Error::validation("phi", "must be positive"));
        }
        Ok(())
    }

    /// Worst-case number of bisection steps.
    pub fn max_iterations(&self) -> u32 {
        ((self.alpha_upper - self.alpha_lower) / self.phi).log2().ceil().max(1.0) as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltyIteration {
    pub alpha: f64,
    pub violations: usize,
    /// Periods with the reactor running.
    pub makespan: u32,
    /// Objective including the penalty term.
    pub penalised: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySearchState {
    pub alpha: f64,
    pub alpha_lower: f64,
    pub alpha_upper: f64,
    pub epsilon: f64,
    pub phi: f64,
    /// Violation count at the last bisection step.
    pub violations: usize,
    pub trace: Vec<PenaltyIteration>,
    /// Extra solve at the upper bracket end when no step met the target.
    pub fallback: Option<PenaltyIteration>,
}

impl PenaltySearchState {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    /// One line per solve: `alpha,violations,makespan,penalised`.
    pub fn trace_text(&self) -> String {
        let mut out = String::from("alpha,violations,makespan,penalised\n");
        for it in self.trace.iter().chain(&self.fallback) {
            let _ = writeln!(out, "{},{},{},{}", it.alpha, it.violations, it.makespan, it.penalised);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct PenaltyOutcome {
    /// Penalty of the returned solution.
    pub alpha: f64,
    pub solved: SolvedModel,
    pub violations: usize,
    pub state: PenaltySearchState,
    /// Whether the returned solution violates at most `gamma_hat * N` samples.
    pub target_met: bool,
}

/// Bisection on the shortfall penalty. Each step solves the penalised model
/// and counts samples with a shortfall in any window; too many violations
/// raise the lower end of the bracket, too few lower the upper end.
///
/// Among the solutions visited, the one with the shortest makespan that
/// violates at most `gamma_hat * N` samples is returned (ties go to the
/// smaller penalty). If no step meets the target, the model is solved once
/// more at the upper end of the initial bracket.
pub fn solve_penalty(
    factory: &ModelFactory,
    samples: &SampleSet,
    gamma_hat: f64,
    config: &PenaltyConfig,
    backend: &dyn MilpBackend,
    options: &SolveOptions,
) -> Result<PenaltyOutcome> {
    config.validate()?;
    if !(0.0..1.0).contains(&gamma_hat) {
        return Err(Error::validation("gamma_hat", format!("must lie in [0,1), got {gamma_hat}")));
    }
    let n = samples.len() as f64;
    let target = gamma_hat * n;
    let base = factory.build(Variant::ChanceSaa, Some(samples), config.alpha_lower)?;
    let blend = &factory.blend;

    let run = |alpha: f64| -> Result<(SolvedModel, PenaltyIteration)> {
        let mut model = base.clone();
        model.instance.set_penalty(alpha);
        let solved = solve_built(backend, options, &model)?;
        let report = violation_rate(&solved.record, samples, blend.f_star, blend.tau_minutes)?;
        let it = PenaltyIteration {
            alpha,
            violations: report.count(),
            makespan: solved.makespan(),
            penalised: solved.result.objective.unwrap_or(f64::NAN),
        };
        log::debug!("penalty {alpha}: {} violations, makespan {}", it.violations, it.makespan);
        Ok((solved, it))
    };

    let mut state = PenaltySearchState {
        alpha: (config.alpha_lower + config.alpha_upper) / 2.0,
        alpha_lower: config.alpha_lower,
        alpha_upper: config.alpha_upper,
        epsilon: config.epsilon,
        phi: config.phi,
        violations: 0,
        trace: Vec::new(),
        fallback: None,
    };
    let mut best: Option<(SolvedModel, PenaltyIteration)> = None;
    let mut least_violating: Option<(SolvedModel, PenaltyIteration)> = None;
    loop {
        let alpha = (state.alpha_lower + state.alpha_upper) / 2.0;
        state.alpha = alpha;
        let (solved, it) = run(alpha)?;
        let c = it.violations as f64;
        state.violations = it.violations;
        if c >= target + config.epsilon {
            state.alpha_lower = alpha;
        } else if c < target - config.epsilon {
            state.alpha_upper = alpha;
        }
        state.trace.push(it.clone());

        if c <= target + config.epsilon {
            let better = best.as_ref().is_none_or(|(_, b)| {
                it.makespan < b.makespan || (it.makespan == b.makespan && it.alpha < b.alpha)
            });
            if better {
                best = Some((solved.clone(), it.clone()));
            }
        }
        if least_violating.as_ref().is_none_or(|(_, b)| it.violations < b.violations) {
            least_violating = Some((solved, it));
        }
        if (alpha - (state.alpha_lower + state.alpha_upper) / 2.0).abs() <= config.phi {
            break;
        }
    }

    if best.is_none() {
        let (solved, it) = run(config.alpha_upper)?;
        state.fallback = Some(it.clone());
        if it.violations as f64 <= target + config.epsilon {
            best = Some((solved, it));
        } else if it.violations < least_violating.as_ref().map_or(usize::MAX, |(_, b)| b.violations) {
            least_violating = Some((solved, it));
        }
    }
    let target_met = best.is_some();
    let (solved, it) = best.or(least_violating).expect("at least one solve");
    if !target_met {
        log::warn!(
            "penalty search ended with {} violations for a target of {target}",
            it.violations
        );
    }
    Ok(PenaltyOutcome {
        alpha: it.alpha,
        solved,
        violations: it.violations,
        state,
        target_met,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_bracket_needs_at_most_24_steps() {
        assert_eq!(PenaltyConfig::default().max_iterations(), 24);
    }

    #[test]
    fn bad_brackets_are_rejected() {
        let mut c = PenaltyConfig::default();
        c.alpha_lower = 0.0;
        assert!(c.validate().is_err());
        c.alpha_lower = 5.0;
        c.alpha_upper = 1.0;
        assert!(c.validate().is_err());
    }
}
