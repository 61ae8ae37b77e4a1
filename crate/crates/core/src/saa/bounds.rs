use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pool::run_indexed;
use crate::solver::{MilpBackend, SolveOptions};

use super::{
    derive_seed, inverse_normal_cdf, sample, solve_penalty, violation_rate, EmpiricalDist, ModelFactory, PenaltyConfig,
};

/// Gaps between the two risk levels below this make the sample size explode.
const MIN_RISK_GAP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundKind {
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSettings {
    /// Risk level of the true problem.
    pub gamma: f64,
    /// Risk level used in the sampled problems.
    pub gamma_hat: f64,
    pub delta: f64,
    /// Replications per round.
    pub replications: usize,
    /// Initial sample size (upper bound only).
    pub samples: usize,
    /// Evaluation sample size (upper bound only).
    pub eval_samples: usize,
    /// Sample size increment between rounds (upper bound only).
    pub step: usize,
    pub max_rounds: usize,
    pub seed: u64,
    pub pool_size: usize,
    pub penalty: PenaltyConfig,
}

impl Default for BoundSettings {
    fn default() -> Self {
        BoundSettings {
            gamma: 0.10,
            gamma_hat: 0.05,
            delta: 0.01,
            replications: 10,
            samples: 400,
            eval_samples: 10_000,
            step: 50,
            max_rounds: 10,
            seed: 0,
            pool_size: 1,
            penalty: PenaltyConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    /// `None` when the replication failed; see `error`.
    pub hours: Option<f64>,
    pub makespan: Option<u32>,
    pub alpha: Option<f64>,
    /// Violated in-sample draws of the returned solution.
    pub violations: Option<usize>,
    /// Out-of-sample violation rate (upper bound only).
    pub eval_rate: Option<f64>,
    /// Posterior upper confidence limit on the risk (upper bound only).
    pub risk_limit: Option<f64>,
    pub feasible: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub kind: BoundKind,
    /// Bound on the optimal processing time in hours.
    pub value: Option<f64>,
    pub gamma: f64,
    pub gamma_hat: f64,
    pub delta: f64,
    pub samples: usize,
    pub eval_samples: usize,
    pub replications: Vec<Replication>,
    pub rounds: usize,
    pub converged: bool,
    /// Some replication failed or was infeasible.
    pub flagged: bool,
}

impl BoundCertificate {
    pub fn feasible_count(&self) -> usize {
        self.replications.iter().filter(|r| r.feasible).count()
    }

    /// Key-value header followed by one CSV line per replication.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let kind = match self.kind {
            BoundKind::Lower => "lower",
            BoundKind::Upper => "upper",
        };
        let _ = writeln!(out, "kind = {kind}");
        match self.value {
            Some(v) => {
                let _ = writeln!(out, "value_hours = {v:.4}");
            }
            None => out.push_str("value_hours = none\n"),
        }
        let _ = writeln!(out, "gamma = {}", self.gamma);
        let _ = writeln!(out, "gamma_hat = {}", self.gamma_hat);
        let _ = writeln!(out, "delta = {}", self.delta);
        let _ = writeln!(out, "samples = {}", self.samples);
        let _ = writeln!(out, "eval_samples = {}", self.eval_samples);
        let _ = writeln!(out, "rounds = {}", self.rounds);
        let _ = writeln!(out, "converged = {}", self.converged);
        let _ = writeln!(out, "flagged = {}", self.flagged);
        out.push_str("replication,seed,hours,makespan,alpha,violations,eval_rate,risk_limit,feasible,error\n");
        let opt = |v: Option<String>| v.unwrap_or_default();
        for r in &self.replications {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.index,
                r.seed,
                opt(r.hours.map(|h| format!("{h:.4}"))),
                opt(r.makespan.map(|m| m.to_string())),
                opt(r.alpha.map(|a| format!("{a:.6}"))),
                opt(r.violations.map(|v| v.to_string())),
                opt(r.eval_rate.map(|v| format!("{v:.6}"))),
                opt(r.risk_limit.map(|v| format!("{v:.6}"))),
                r.feasible,
                opt(r.error.as_ref().map(|e| e.replace([',', '\n'], ";"))),
            );
        }
        out
    }
}

/// Smallest `N` with `N >= ln(1/delta) / (2 (gamma_hat - gamma)^2)`.
pub fn lower_bound_sample_size(gamma: f64, gamma_hat: f64, delta: f64) -> Result<usize> {
    check_delta(delta)?;
    if !(0.0..1.0).contains(&gamma) || !(gamma_hat < 1.0) {
        return Err(Error::validation("gamma", "risk levels must lie in [0,1)"));
    }
    let gap = gamma_hat - gamma;
    if gap < MIN_RISK_GAP {
        return Err(Error::validation(
            "gamma_hat",
            format!("must exceed gamma by at least {MIN_RISK_GAP}, got a gap of {gap}"),
        ));
    }
    let n = (1.0 / delta).ln() / (2.0 * gap * gap);
    Ok((n - 1e-9).ceil().max(1.0) as usize)
}

/// Upper `1 - delta` confidence limit on a risk estimated as `h_bar` from
/// `n_prime` draws (normal approximation).
pub fn posterior_upper(h_bar: f64, n_prime: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if !(0.0..=1.0).contains(&h_bar) || n_prime == 0 {
        return Err(Error::validation("h_bar", "needs a rate in [0,1] and at least one draw"));
    }
    let z = inverse_normal_cdf(1.0 - delta)?;
    Ok(h_bar + z * (h_bar * (1.0 - h_bar) / n_prime as f64).sqrt())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::validation("delta", format!("must lie in (0,1), got {delta}")));
    }
    Ok(())
}

/// Solves `replications` sampled problems of size given by
/// [`lower_bound_sample_size`] and returns the smallest processing time as a
/// lower bound. Failed replications are reported and excluded.
pub fn lower_bound(
    factory: &ModelFactory,
    dists: &[EmpiricalDist],
    settings: &BoundSettings,
    backend: &dyn MilpBackend,
    options: &SolveOptions,
) -> Result<BoundCertificate> {
    if settings.replications == 0 {
        return Err(Error::validation("replications", "must be at least 1"));
    }
    let n = lower_bound_sample_size(settings.gamma, settings.gamma_hat, settings.delta)?;
    let reps = run_indexed(settings.replications, settings.pool_size, |j| {
        let seed = derive_seed(settings.seed, &[1, j as u64]);
        let mut rep = empty_replication(j, seed);
        let outcome = sample(dists, n, seed).and_then(|s| {
            solve_penalty(factory, &s, settings.gamma_hat, &settings.penalty, backend, options)
        });
        match outcome {
            Ok(out) => {
                rep.hours = Some(out.solved.hours());
                rep.makespan = Some(out.solved.makespan());
                rep.alpha = Some(out.alpha);
                rep.violations = Some(out.violations);
                rep.feasible = out.target_met;
                if !out.target_met {
                    rep.error = Some("penalty search missed the violation target".into());
                }
            }
            Err(e) => rep.error = Some(e.to_string()),
        }
        rep
    });
    let value = reps
        .iter()
        .filter(|r| r.feasible)
        .filter_map(|r| r.hours)
        .min_by(f64::total_cmp);
    let flagged = reps.iter().any(|r| !r.feasible);
    Ok(BoundCertificate {
        kind: BoundKind::Lower,
        value,
        gamma: settings.gamma,
        gamma_hat: settings.gamma_hat,
        delta: settings.delta,
        samples: n,
        eval_samples: 0,
        replications: reps,
        rounds: 1,
        converged: value.is_some(),
        flagged,
    })
}

/// Solves sampled problems at the stricter risk `gamma_hat`, checks each
/// solution on fresh draws and accepts it when the posterior risk limit is
/// at most `gamma`. Rounds grow the sample size by `step` until every
/// replication is accepted or `max_rounds` is reached. The bound is the
/// smallest processing time among accepted solutions of the last round.
pub fn upper_bound(
    factory: &ModelFactory,
    dists: &[EmpiricalDist],
    settings: &BoundSettings,
    backend: &dyn MilpBackend,
    options: &SolveOptions,
) -> Result<BoundCertificate> {
    check_delta(settings.delta)?;
    if !(settings.gamma_hat < settings.gamma) || settings.gamma_hat < 0.0 {
        return Err(Error::validation("gamma_hat", "must satisfy 0 <= gamma_hat < gamma"));
    }
    if settings.replications == 0 || settings.samples == 0 || settings.eval_samples == 0 {
        return Err(Error::validation("replications", "replications and sample sizes must be positive"));
    }
    if settings.step == 0 || settings.max_rounds == 0 {
        return Err(Error::validation("step", "step and max_rounds must be positive"));
    }
    let blend = &factory.blend;
    let mut n = settings.samples;
    let mut reps = Vec::new();
    let mut rounds = 0;
    let mut converged = false;
    while rounds < settings.max_rounds {
        let round = rounds as u64;
        reps = run_indexed(settings.replications, settings.pool_size, |j| {
            let seed = derive_seed(settings.seed, &[2, round, j as u64]);
            let mut rep = empty_replication(j, seed);
            let outcome = (|| {
                let s = sample(dists, n, seed)?;
                let out = solve_penalty(factory, &s, settings.gamma_hat, &settings.penalty, backend, options)?;
                let fresh = sample(dists, settings.eval_samples, derive_seed(seed, &[0xe7a1]))?;
                let rate = violation_rate(&out.solved.record, &fresh, blend.f_star, blend.tau_minutes)?.per_sample;
                let limit = posterior_upper(rate, settings.eval_samples, settings.delta)?;
                Ok::<_, Error>((out, rate, limit))
            })();
            match outcome {
                Ok((out, rate, limit)) => {
                    rep.hours = Some(out.solved.hours());
                    rep.makespan = Some(out.solved.makespan());
                    rep.alpha = Some(out.alpha);
                    rep.violations = Some(out.violations);
                    rep.eval_rate = Some(rate);
                    rep.risk_limit = Some(limit);
                    rep.feasible = limit <= settings.gamma;
                }
                Err(e) => rep.error = Some(e.to_string()),
            }
            rep
        });
        rounds += 1;
        if reps.iter().all(|r| r.feasible) {
            converged = true;
            break;
        }
        if rounds < settings.max_rounds {
            n += settings.step;
        }
    }
    let value = reps
        .iter()
        .filter(|r| r.feasible)
        .filter_map(|r| r.hours)
        .min_by(f64::total_cmp);
    let flagged = reps.iter().any(|r| r.error.is_some());
    Ok(BoundCertificate {
        kind: BoundKind::Upper,
        value,
        gamma: settings.gamma,
        gamma_hat: settings.gamma_hat,
        delta: settings.delta,
        samples: n,
        eval_samples: settings.eval_samples,
        replications: reps,
        rounds,
        converged,
        flagged,
    })
}

fn empty_replication(index: usize, seed: u64) -> Replication {
    Replication {
        index,
        seed,
        hours: None,
        makespan: None,
        alpha: None,
        violations: None,
        eval_rate: None,
        risk_limit: None,
        feasible: false,
        error: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_size_for_ten_and_fifteen_percent() {
        assert_eq!(lower_bound_sample_size(0.10, 0.15, 0.01).unwrap(), 922);
    }

    #[test]
    fn sample_size_rejects_tiny_gaps() {
        assert!(lower_bound_sample_size(0.10, 0.1005, 0.01).is_err());
        assert!(lower_bound_sample_size(0.10, 0.05, 0.01).is_err());
        assert!(lower_bound_sample_size(0.10, 0.15, 1.0).is_err());
    }

    #[test]
    fn posterior_limit() {
        let u = posterior_upper(0.05, 10_000, 0.01).unwrap();
        assert!((u - 0.05507).abs() < 1e-5, "{u}");
        assert_eq!(posterior_upper(0.0, 10_000, 0.01).unwrap(), 0.0);
    }
}
