//! Sample average approximation of the carbohydrate chance constraint:
//! empirical distributions, seeded sampling, violation counting, the
//! penalty search and the confidence-bound procedures.

mod bounds;
mod normal;
mod penalty;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{add_blending, window_count, window_periods, BuiltModel, Variant, VariantSpec};
use crate::model::{FeedstockId, SolutionRecord};
use crate::solver::{MilpBackend, SolveOptions, SolveRequest, SolveResult, SolveStatus};

pub use self::bounds::{
    lower_bound, lower_bound_sample_size, posterior_upper, upper_bound, BoundCertificate, BoundKind, BoundSettings,
    Replication,
};
pub use self::normal::inverse_normal_cdf;
pub use self::penalty::{solve_penalty, PenaltyConfig, PenaltyIteration, PenaltyOutcome, PenaltySearchState};

/// Shortfalls at or below this amount do not count as violations.
pub const VIOLATION_TOL: f64 = 1e-7;

/// Discrete carbohydrate distribution of one feedstock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDist {
    pub feedstock: FeedstockId,
    pub support: Vec<f64>,
    pub weights: Vec<f64>,
}

impl EmpiricalDist {
    /// Weights are normalised; they must be non-negative with a positive sum.
    pub fn new(feedstock: FeedstockId, support: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        let field = format!("distribution {feedstock}");
        if support.is_empty() {
            return Err(Error::validation(field, "empty support"));
        }
        if support.len() != weights.len() {
            return Err(Error::validation(field, "support and weights differ in length"));
        }
        if let Some(v) = support.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::validation(field, format!("value {v} outside (0,1)")));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::validation(field, "negative or non-finite weight"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::validation(field, "weights sum to zero"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(EmpiricalDist {
            feedstock,
            support,
            weights,
        })
    }

    /// Equal weight on each observed value.
    pub fn from_observations(feedstock: FeedstockId, values: Vec<f64>) -> Result<Self> {
        let w = vec![1.0; values.len()];
        Self::new(feedstock, values, w)
    }

    pub fn point_mass(feedstock: FeedstockId, value: f64) -> Result<Self> {
        Self::new(feedstock, vec![value], vec![1.0])
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    /// Nearest-rank percentile: the smallest support value whose cumulative
    /// weight reaches `level`.
    pub fn percentile(&self, level: f64) -> Result<f64> {
        if !(level > 0.0 && level <= 1.0) {
            return Err(Error::validation("percentile level", format!("must lie in (0,1], got {level}")));
        }
        let mut order: Vec<usize> = (0..self.support.len()).collect();
        order.sort_by(|&a, &b| self.support[a].total_cmp(&self.support[b]));
        let mut acc = 0.0;
        for &i in &order {
            acc += self.weights[i];
            if acc >= level - 1e-12 {
                return Ok(self.support[i]);
            }
        }
        Ok(self.support[*order.last().expect("non-empty support")])
    }
}

/// `values[n][b]` is the carbohydrate fraction of `feedstocks[b]` in draw `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub feedstocks: Vec<FeedstockId>,
    pub values: Vec<Vec<f64>>,
    pub seed: u64,
}

impl SampleSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn means(&self) -> Vec<f64> {
        let n = self.values.len().max(1) as f64;
        (0..self.feedstocks.len())
            .map(|b| self.values.iter().map(|s| s[b]).sum::<f64>() / n)
            .collect()
    }
}

/// Draws `n` independent samples from every distribution. Draws are taken
/// sample by sample, feedstock by feedstock, from one ChaCha8 stream.
pub fn sample(dists: &[EmpiricalDist], n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::validation("sample size", "must be at least 1"));
    }
    if dists.is_empty() {
        return Err(Error::validation("distributions", "none given"));
    }
    let pickers = dists
        .iter()
        .map(|d| {
            WeightedIndex::new(&d.weights)
                .map_err(|e| Error::validation(format!("distribution {}", d.feedstock), e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = (0..n)
        .map(|_| {
            dists
                .iter()
                .zip(&pickers)
                .map(|(d, w)| d.support[w.sample(&mut rng)])
                .collect()
        })
        .collect();
    Ok(SampleSet {
        feedstocks: dists.iter().map(|d| d.feedstock.clone()).collect(),
        values,
        seed,
    })
}

/// Derives an independent stream seed from a base seed and a path of
/// labels (replication index, round, purpose) with SplitMix64 mixing.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    path.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    /// Fraction of samples with a shortfall in at least one window.
    pub per_sample: f64,
    /// Fraction of (sample, window) pairs with a shortfall.
    pub per_window: f64,
    pub violated: Vec<bool>,
    pub windows: usize,
}

impl ViolationReport {
    pub fn count(&self) -> usize {
        self.violated.iter().filter(|v| **v).count()
    }
}

/// Checks every sample against the blend threshold in every window of
/// `tau_minutes` (0 for one window over the horizon).
pub fn violation_rate(
    record: &SolutionRecord,
    samples: &SampleSet,
    f_star: f64,
    tau_minutes: f64,
) -> Result<ViolationReport> {
    if let Some(key) = record.classes.iter().find(|k| !samples.feedstocks.contains(&k.feedstock)) {
        return Err(Error::UnknownClass(format!("no samples for feedstock {}", key.feedstock)));
    }
    let horizon = record.periods();
    let wp = window_periods(tau_minutes, record.period_minutes, horizon)?;
    let nwin = window_count(wp, horizon);
    let feed = record.reactor_feed_by_feedstock(&samples.feedstocks);
    let window_feed: Vec<Vec<f64>> = feed
        .iter()
        .map(|series| {
            let mut w = vec![0.0; nwin];
            for (t, x) in series.iter().enumerate() {
                w[t / wp as usize] += x;
            }
            w
        })
        .collect();
    let mut violated = Vec::with_capacity(samples.len());
    let mut bad_windows = 0usize;
    for draw in &samples.values {
        let mut any = false;
        for k in 0..nwin {
            let shortfall: f64 = draw
                .iter()
                .zip(&window_feed)
                .map(|(f, w)| (f_star - f) * w[k])
                .sum();
            if shortfall > VIOLATION_TOL {
                any = true;
                bad_windows += 1;
            }
        }
        violated.push(any);
    }
    let n = samples.len().max(1) as f64;
    Ok(ViolationReport {
        per_sample: violated.iter().filter(|v| **v).count() as f64 / n,
        per_window: bad_windows as f64 / (n * nwin.max(1) as f64),
        violated,
        windows: nwin,
    })
}

/// Blending parameters shared by every model built from one core.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendSettings {
    pub f_star: f64,
    pub tau_minutes: f64,
    pub feedstocks: Vec<FeedstockId>,
    /// Mean carbohydrate fraction per feedstock, used by the deterministic variant.
    pub means: Vec<f64>,
}

/// Produces blended models from one core scheduling model.
#[derive(Debug, Clone)]
pub struct ModelFactory {
    core: BuiltModel,
    pub blend: BlendSettings,
}

impl ModelFactory {
    pub fn new(core: BuiltModel, blend: BlendSettings) -> Self {
        ModelFactory { core, blend }
    }

    pub fn core(&self) -> &BuiltModel {
        &self.core
    }

    pub fn period_minutes(&self) -> f64 {
        self.core.layout.period_minutes
    }

    pub fn build(&self, variant: Variant, samples: Option<&SampleSet>, alpha: f64) -> Result<BuiltModel> {
        let (feedstocks, values) = match (variant, samples) {
            (Variant::Deterministic, _) => (self.blend.feedstocks.clone(), Vec::new()),
            (_, Some(s)) => (s.feedstocks.clone(), s.values.clone()),
            (_, None) => return Err(Error::validation("samples", format!("{} needs samples", variant.label()))),
        };
        let spec = VariantSpec {
            variant,
            tau_minutes: self.blend.tau_minutes,
            f_star: self.blend.f_star,
            feedstocks,
            samples: values,
            alpha,
            means: self.blend.means.clone(),
        };
        add_blending(self.core.clone(), &spec)
    }
}

/// A solved model decoded into domain terms.
#[derive(Debug, Clone)]
pub struct SolvedModel {
    pub result: SolveResult,
    pub record: SolutionRecord,
}

impl SolvedModel {
    /// Periods with the reactor running.
    pub fn makespan(&self) -> u32 {
        self.record.running_periods()
    }

    pub fn hours(&self) -> f64 {
        self.makespan() as f64 * self.record.period_minutes / 60.0
    }
}

/// Solves `model`, mapping infeasibility and backend failures to errors.
pub fn solve_built(backend: &dyn MilpBackend, options: &SolveOptions, model: &BuiltModel) -> Result<SolvedModel> {
    let result = backend.solve(&SolveRequest::with_options(&model.instance, *options))?;
    match result.status {
        SolveStatus::Optimal | SolveStatus::Feasible => {
            let obj = result.objective.unwrap_or_else(|| model.instance.objective_value(&result.values));
            let record = model.decode(&result.values, obj);
            Ok(SolvedModel { result, record })
        }
        SolveStatus::Infeasible => Err(Error::Infeasible(
            result.message.unwrap_or_else(|| "backend reported infeasible".into()),
        )),
        SolveStatus::TimeLimit => Err(Error::Solver("time limit reached without a feasible point".into())),
        SolveStatus::Error => Err(Error::Solver(
            result.message.unwrap_or_else(|| "backend error".into()),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fid(s: &str) -> FeedstockId {
        FeedstockId::new(s)
    }

    #[test]
    fn point_mass_samples_are_constant() {
        let d = EmpiricalDist::point_mass(fid("S"), 0.591).unwrap();
        let s = sample(&[d], 100, 7).unwrap();
        assert!(s.values.iter().all(|v| v[0] == 0.591));
    }

    #[test]
    fn two_point_mean_within_three_sigma() {
        let d = EmpiricalDist::new(fid("S"), vec![0.5, 0.7], vec![0.5, 0.5]).unwrap();
        let n = 100_000;
        let s = sample(&[d], n, 11).unwrap();
        let mean = s.means()[0];
        assert!((mean - 0.6).abs() < 3.0 * 0.1 / (n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn seed_replay_is_bitwise_identical() {
        let d = EmpiricalDist::new(fid("C2"), vec![0.55, 0.6, 0.65], vec![1.0, 2.0, 1.0]).unwrap();
        let a = sample(std::slice::from_ref(&d), 500, 3).unwrap();
        let b = sample(std::slice::from_ref(&d), 500, 3).unwrap();
        let c = sample(&[d], 500, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn invalid_distributions_are_rejected() {
        assert!(EmpiricalDist::new(fid("S"), vec![], vec![]).is_err());
        assert!(EmpiricalDist::new(fid("S"), vec![1.2], vec![1.0]).is_err());
        assert!(EmpiricalDist::new(fid("S"), vec![0.5], vec![-1.0]).is_err());
        assert!(EmpiricalDist::new(fid("S"), vec![0.5], vec![0.0]).is_err());
        assert!(sample(&[], 5, 0).is_err());
    }

    #[test]
    fn nearest_rank_percentile() {
        let d = EmpiricalDist::from_observations(fid("S"), vec![0.60, 0.58, 0.62, 0.59, 0.61]).unwrap();
        assert_eq!(d.percentile(0.1).unwrap(), 0.58);
        assert_eq!(d.percentile(0.2).unwrap(), 0.58);
        assert_eq!(d.percentile(0.21).unwrap(), 0.59);
        assert_eq!(d.percentile(1.0).unwrap(), 0.62);
        assert!((d.mean() - 0.60).abs() < 1e-12);
    }

    #[test]
    fn derived_seeds_differ_by_path() {
        let a = derive_seed(1, &[0, 0]);
        assert_eq!(a, derive_seed(1, &[0, 0]));
        assert_ne!(a, derive_seed(1, &[0, 1]));
        assert_ne!(a, derive_seed(1, &[1, 0]));
        assert_ne!(a, derive_seed(2, &[0, 0]));
    }
}
