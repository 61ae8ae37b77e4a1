use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::Variant;
use crate::saa::{BoundSettings, PenaltyConfig};
use crate::solver::SolveOptions;

pub const ENV_BACKEND_PATH: &str = "BIOREFINERY_BACKEND_PATH";
pub const ENV_POOL_SIZE: &str = "BIOREFINERY_POOL_SIZE";

/// How the bale ordering is produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SequenceSource {
    /// A pattern file with `<feedstock pattern> | <moisture pattern>` rows.
    Pattern(PathBuf),
    /// A bale list with one `feedstock,moisture` pair per line.
    Ordering(PathBuf),
    /// Uniform shuffle of the inventory.
    Random,
    /// Moisture and quality rules followed together.
    Rules,
}

/// Flat key-value experiment configuration. Relative paths are resolved
/// against the directory of the file they were read from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub network: PathBuf,
    pub equipment: PathBuf,
    pub inventory: PathBuf,
    /// Directory holding one `<feedstock>.csv` distribution per feedstock.
    pub distributions: PathBuf,
    /// Path of a pattern or ordering file, or `random` / `rules`.
    pub sequence: String,

    pub bale_width: f64,
    pub bale_height: f64,
    pub bale_length: f64,
    pub period_minutes: f64,
    pub horizon: u32,

    pub variant: String,
    pub tau_minutes: f64,
    pub f_star: f64,
    pub gamma: f64,
    pub gamma_hat: f64,
    pub delta: f64,
    pub samples: usize,
    pub eval_samples: usize,
    pub replications: usize,
    pub step: usize,
    pub max_rounds: usize,
    /// Percentile level used to split feedstocks into quality classes.
    pub quality_level: f64,

    pub min_utilization: f64,
    pub avg_utilization: f64,
    pub feed_lower: f64,
    /// 0 derives the bound from the reactor feeder capacities.
    pub feed_upper: f64,

    pub alpha_lower: f64,
    pub alpha_upper: f64,
    pub epsilon: f64,
    pub phi: f64,

    pub seed: u64,
    pub pool_size: usize,
    /// `highs`, `oracle` or `external`.
    pub backend: String,
    pub backend_path: String,
    pub backend_args: Vec<String>,
    pub time_limit: f64,
    pub mip_gap: f64,
    pub threads: u32,
    /// Check every accepted solution against the model rows.
    pub verify: bool,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            problem: "1".into(),
            network: PathBuf::from("network.csv"),
            equipment: PathBuf::from("equipment.txt"),
            inventory: PathBuf::from("inventory.csv"),
            distributions: PathBuf::from("distributions"),
            sequence: "random".into(),
            bale_width: 1.22,
            bale_height: 0.91,
            bale_length: 2.44,
            period_minutes: 1.0,
            horizon: 120,
            variant: "chance-saa".into(),
            tau_minutes: 15.0,
            f_star: 0.591,
            gamma: 0.10,
            gamma_hat: 0.05,
            delta: 0.01,
            samples: 50,
            eval_samples: 10_000,
            replications: 3,
            step: 50,
            max_rounds: 10,
            quality_level: 0.10,
            min_utilization: 0.90,
            avg_utilization: 0.95,
            feed_lower: 0.0,
            feed_upper: 0.0,
            alpha_lower: 1e-3,
            alpha_upper: 1e3,
            epsilon: 1e-4,
            phi: 1e-4,
            seed: 1,
            pool_size: 1,
            backend: "highs".into(),
            backend_path: String::new(),
            backend_args: vec!["{lp}".into(), "{sol}".into()],
            time_limit: 3600.0,
            mip_gap: 1e-4,
            threads: 1,
            verify: true,
            output: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve(base);
        Ok(cfg)
    }

    /// Reads a config file and applies environment overrides.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::from_toml(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.network);
        join(&mut self.equipment);
        join(&mut self.inventory);
        join(&mut self.distributions);
        join(&mut self.output);
        if !matches!(self.sequence.as_str(), "random" | "rules") && Path::new(&self.sequence).is_relative() {
            self.sequence = base.join(&self.sequence).to_string_lossy().into_owned();
        }
    }

    /// Overrides the backend path and pool size from the environment.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(p) = get(ENV_BACKEND_PATH).filter(|p| !p.is_empty()) {
            self.backend_path = p;
        }
        if let Some(n) = get(ENV_POOL_SIZE).filter(|n| !n.is_empty()) {
            self.pool_size = n
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{ENV_POOL_SIZE}={n} is not a positive integer")))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.replications == 0 {
            return fail("replications must be at least 1".into());
        }
        if self.pool_size == 0 {
            return fail("pool_size must be at least 1".into());
        }
        if self.horizon == 0 || !(self.period_minutes > 0.0) {
            return fail("horizon and period_minutes must be positive".into());
        }
        if self.samples == 0 || self.eval_samples == 0 {
            return fail("samples and eval_samples must be positive".into());
        }
        if Variant::parse(&self.variant).is_none() {
            return fail(format!("unknown variant `{}`", self.variant));
        }
        if !matches!(self.backend.as_str(), "highs" | "oracle" | "external") {
            return fail(format!("unknown backend `{}`", self.backend));
        }
        if self.backend == "external" && self.backend_path.is_empty() {
            return fail(format!("backend `external` needs backend_path or {ENV_BACKEND_PATH}"));
        }
        for (name, path) in [
            ("network", &self.network),
            ("equipment", &self.equipment),
            ("inventory", &self.inventory),
            ("distributions", &self.distributions),
        ] {
            if !path.exists() {
                return fail(format!("{name} file {} does not exist", path.display()));
            }
        }
        if let SequenceSource::Pattern(p) | SequenceSource::Ordering(p) = self.sequence_source() {
            if !p.exists() {
                return fail(format!("sequence file {} does not exist", p.display()));
            }
        }
        Ok(())
    }

    pub fn variant(&self) -> Variant {
        Variant::parse(&self.variant).unwrap_or(Variant::ChanceSaa)
    }

    /// `.csv` files are bale lists; anything else is a pattern file.
    pub fn sequence_source(&self) -> SequenceSource {
        match self.sequence.as_str() {
            "random" => SequenceSource::Random,
            "rules" => SequenceSource::Rules,
            p if p.ends_with(".csv") => SequenceSource::Ordering(PathBuf::from(p)),
            p => SequenceSource::Pattern(PathBuf::from(p)),
        }
    }

    pub fn penalty(&self) -> PenaltyConfig {
        PenaltyConfig {
            alpha_lower: self.alpha_lower,
            alpha_upper: self.alpha_upper,
            epsilon: self.epsilon,
            phi: self.phi,
        }
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            time_limit: self.time_limit,
            mip_gap: self.mip_gap,
            threads: self.threads,
            seed: self.seed,
        }
    }

    pub fn bound_settings(&self) -> BoundSettings {
        BoundSettings {
            gamma: self.gamma,
            gamma_hat: self.gamma_hat,
            delta: self.delta,
            replications: self.replications,
            samples: self.samples,
            eval_samples: self.eval_samples,
            step: self.step,
            max_rounds: self.max_rounds,
            seed: self.seed,
            pool_size: self.pool_size,
            penalty: self.penalty(),
        }
    }
}
