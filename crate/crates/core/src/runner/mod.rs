//! Experiment orchestration: data ingest, sequencing, replicated solves and
//! report files.

mod config;
pub mod ingest;
pub mod metrics;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::milp::{build_core, BuiltModel, Variant};
use crate::model::{expand_sequence, ClassKey, FeedstockId, ReliabilitySpec, SolutionRecord};
use crate::pool::run_indexed;
use crate::saa::{
    derive_seed, lower_bound, posterior_upper, sample, solve_built, solve_penalty, upper_bound, violation_rate,
    BlendSettings, BoundCertificate, ModelFactory, SampleSet, SolvedModel,
};
use crate::sequencing::{
    classify_feedstocks, literal_sequence, parse_ordering, parse_sequence_file, random_sequence, rule1_moisture,
    rule2_quality, rule4_combined, ClassCheck, Inventory, Quality,
};
use crate::solver::{
    read_solution_file, verify_solution, write_solution_file, ExternalLpBackend, HighsBackend, MilpBackend,
    OracleBackend, SolveResult,
};

pub use config::{RunConfig, SequenceSource, ENV_BACKEND_PATH, ENV_POOL_SIZE};
pub use ingest::{load_case, CaseData};
pub use metrics::{compute_metrics, metrics_from_series, rate_matches, trace_reactor_mass, Metrics, MetricsRow, RATE_TOLERANCE};

/// Row-check tolerance for accepted solutions.
pub const VERIFY_TOL: f64 = 1e-6;

/// Seed path of the shared out-of-sample draws.
const EVAL_STREAM: u64 = 0xe7a1;

/// The ordering used for a run and notes on how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    pub bales: Vec<ClassKey>,
    pub notes: Vec<String>,
}

/// Builds the bale ordering named by the configuration.
pub fn make_sequence(cfg: &RunConfig, case: &CaseData) -> Result<Sequence> {
    let inv = &case.inventory;
    match cfg.sequence_source() {
        SequenceSource::Random => Ok(Sequence {
            bales: random_sequence(inv, derive_seed(cfg.seed, &[3]))?,
            notes: vec!["uniform shuffle of the inventory".into()],
        }),
        SequenceSource::Pattern(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let rows = parse_sequence_file(&text, &path.display().to_string())?;
            let bales = literal_sequence(&rows, inv, ClassCheck::Marginals)?;
            let mut notes = vec![format!("pattern file {}", file_name(&path))];
            notes.extend(Inventory::from_bales(&bales).class_deltas(inv));
            Ok(Sequence { bales, notes })
        }
        SequenceSource::Ordering(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let bales = parse_ordering(&text, &path.display().to_string())?;
            for b in &bales {
                if !inv.feedstocks.contains(&b.feedstock) {
                    return Err(Error::UnknownClass(format!("{b} is not in the inventory")));
                }
            }
            Ok(Sequence {
                bales,
                notes: vec![format!("bale list {}", file_name(&path))],
            })
        }
        SequenceSource::Rules => rules_sequence(cfg, case),
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Moisture and quality patterns followed together.
pub fn rules_sequence(cfg: &RunConfig, case: &CaseData) -> Result<Sequence> {
    let inv = &case.inventory;
    let moisture = rule1_moisture(
        inv.by_moisture(crate::model::Moisture::Low),
        inv.by_moisture(crate::model::Moisture::Medium),
        inv.by_moisture(crate::model::Moisture::High),
    )?;
    let quality = classify_feedstocks(&case.dists, cfg.f_star, cfg.quality_level)?;
    let count = |q: Quality| -> u32 {
        inv.feedstocks
            .iter()
            .filter(|f| quality.get(*f) == Some(&q))
            .map(|f| inv.by_feedstock(f))
            .sum()
    };
    let qpattern = rule2_quality(count(Quality::Meets), count(Quality::Fails))?;
    let out = rule4_combined(inv, &quality, &moisture.expand(), &qpattern.expand())?;
    let mut notes = vec![format!("moisture {moisture}"), format!("quality {qpattern}")];
    for (f, q) in &quality {
        notes.push(format!("{f} is {q}"));
    }
    notes.extend(out.swaps.iter().map(|s| format!("{s:?}")));
    Ok(Sequence {
        bales: out.order,
        notes,
    })
}

/// Backend named by the configuration.
pub fn backend_for(cfg: &RunConfig) -> Result<Box<dyn MilpBackend>> {
    match cfg.backend.as_str() {
        "highs" => Ok(Box::new(HighsBackend::new())),
        "oracle" => Ok(Box::new(OracleBackend::default())),
        "external" => {
            if cfg.backend_path.is_empty() {
                return Err(Error::Config(format!("backend `external` needs backend_path or {ENV_BACKEND_PATH}")));
            }
            Ok(Box::new(ExternalLpBackend::new(&cfg.backend_path).with_args(cfg.backend_args.clone())))
        }
        other => Err(Error::Config(format!("unknown backend `{other}`"))),
    }
}

/// A configured case with its ordering and scheduling model.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub case: CaseData,
    pub sequence: Sequence,
    pub factory: ModelFactory,
}

impl Experiment {
    pub fn prepare(config: RunConfig) -> Result<Self> {
        let case = load_case(&config)?;
        Self::from_case(config, case)
    }

    pub fn from_case(config: RunConfig, case: CaseData) -> Result<Self> {
        let sequence = make_sequence(&config, &case)?;
        Self::with_sequence(config, case, sequence)
    }

    pub fn with_sequence(config: RunConfig, case: CaseData, sequence: Sequence) -> Result<Self> {
        let plan = expand_sequence(&sequence.bales, &case.classes, config.horizon)?;
        let upper = (config.feed_upper > 0.0).then_some(config.feed_upper);
        let reliability = ReliabilitySpec::new(config.min_utilization, config.avg_utilization)?
            .with_feed_bounds(config.feed_lower, upper)?;
        let core = build_core(&case.network, &plan, &case.geometry, &case.classes, &reliability)?;
        let blend = BlendSettings {
            f_star: config.f_star,
            tau_minutes: config.tau_minutes,
            feedstocks: case.inventory.feedstocks.clone(),
            means: case.means.clone(),
        };
        Ok(Experiment {
            factory: ModelFactory::new(core, blend),
            config,
            case,
            sequence,
        })
    }

    pub fn feedstocks(&self) -> &[FeedstockId] {
        &self.case.inventory.feedstocks
    }

    /// Seed of replication `j`.
    pub fn replication_seed(&self, j: usize) -> u64 {
        derive_seed(self.config.seed, &[0, j as u64])
    }

    /// In-sample draws of replication `j`.
    pub fn replication_samples(&self, j: usize) -> Result<SampleSet> {
        sample(&self.case.dists, self.config.samples, self.replication_seed(j))
    }

    /// Draws shared by every replication for out-of-sample checks.
    pub fn eval_samples(&self) -> Result<SampleSet> {
        sample(&self.case.dists, self.config.eval_samples, derive_seed(self.config.seed, &[EVAL_STREAM]))
    }

    /// The model solved in replication `j`, before any penalty search.
    pub fn replication_model(&self, j: usize) -> Result<BuiltModel> {
        let variant = self.config.variant();
        match variant {
            Variant::Deterministic => self.factory.build(variant, None, 0.0),
            _ => {
                let s = self.replication_samples(j)?;
                self.factory.build(variant, Some(&s), self.config.alpha_lower)
            }
        }
    }

    /// Solves replication `j` with the configured variant.
    pub fn solve_replication(&self, j: usize, backend: &dyn MilpBackend) -> Result<ReplicationSolve> {
        let cfg = &self.config;
        let options = cfg.solve_options();
        let variant = cfg.variant();
        let (model, solved, alpha, trace) = match variant {
            Variant::ChanceSaa => {
                let s = self.replication_samples(j)?;
                let out = solve_penalty(&self.factory, &s, cfg.gamma_hat, &cfg.penalty(), backend, &options)?;
                let mut model = self.factory.build(variant, Some(&s), out.alpha)?;
                model.instance.set_penalty(out.alpha);
                if !out.target_met {
                    log::warn!("replication {j}: penalty search missed the violation target");
                }
                let trace = out.state.trace_text();
                (model, out.solved, Some(out.alpha), Some((trace, out.target_met)))
            }
            _ => {
                let model = self.replication_model(j)?;
                let solved = solve_built(backend, &options, &model)?;
                (model, solved, None, None)
            }
        };
        let problems = if cfg.verify {
            verify_solution(&model.instance, &solved.result.values, VERIFY_TOL)
        } else {
            Vec::new()
        };
        let mut solution_text = String::new();
        if let Some(a) = alpha {
            solution_text = format!("# alpha: {a}\n");
        }
        solution_text.push_str(&write_solution_file(&solved.result, &model.instance));
        Ok(ReplicationSolve {
            solution_text,
            solved,
            alpha,
            penalty_trace: trace.as_ref().map(|t| t.0.clone()),
            target_met: trace.is_none_or(|t| t.1),
            row_problems: problems,
        })
    }
}

/// Output of one replication solve.
#[derive(Debug, Clone)]
pub struct ReplicationSolve {
    pub solved: SolvedModel,
    pub alpha: Option<f64>,
    pub penalty_trace: Option<String>,
    pub target_met: bool,
    pub row_problems: Vec<String>,
    pub solution_text: String,
}

/// One line of the replication table.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRow {
    pub index: usize,
    pub seed: u64,
    pub status: String,
    pub feasible: bool,
    pub alpha: Option<f64>,
    pub in_sample_rate: Option<f64>,
    pub eval_rate: Option<f64>,
    pub risk_limit: Option<f64>,
    pub metrics: Option<Metrics>,
    /// Reactor mass from the schedule minus the traced expectation.
    pub mass_gap: Option<f64>,
    pub note: String,
}

impl ReplicationRow {
    pub const HEADER: &'static str = "replication,seed,status,feasible,alpha,in_sample_risk,eval_risk,risk_limit,process_time_h,reactor_rate_mg_h,flow_to_reactor_mg,avg_inventory_mg,max_inventory_mg,cov,mass_gap,note";

    pub fn to_line(&self) -> String {
        let f = |v: Option<f64>, p: usize| v.map(|x| format!("{x:.p$}")).unwrap_or_default();
        let m = self.metrics;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.index,
            self.seed,
            self.status,
            self.feasible,
            f(self.alpha, 6),
            f(self.in_sample_rate, 4),
            f(self.eval_rate, 4),
            f(self.risk_limit, 4),
            f(m.map(|m| m.time_hours), 2),
            f(m.map(|m| m.rate), 3),
            f(m.map(|m| m.flow), 3),
            f(m.map(|m| m.avg_inventory), 3),
            f(m.map(|m| m.max_inventory), 3),
            f(m.map(|m| m.cov), 4),
            f(self.mass_gap.map(|g| if g.abs() < 5e-10 { 0.0 } else { g }), 9),
            self.note.replace([',', '\n'], ";"),
        )
    }
}

/// Files produced by a run, keyed by relative path.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportBundle {
    pub summary: Option<MetricsRow>,
    pub replications: Vec<ReplicationRow>,
    pub files: BTreeMap<String, String>,
}

impl ReportBundle {
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (name, text) in &self.files {
            let path = dir.join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn all_infeasible(&self) -> bool {
        !self.replications.is_empty() && self.replications.iter().all(|r| r.status == "infeasible")
    }
}

struct Evaluated {
    row: ReplicationRow,
    record: Option<SolutionRecord>,
}

impl Experiment {
    fn evaluate(&self, j: usize, solve: Result<ReplicationSolve>, eval: &SampleSet, expected_mass: f64) -> Evaluated {
        let cfg = &self.config;
        let mut row = ReplicationRow {
            index: j,
            seed: self.replication_seed(j),
            status: "solved".into(),
            feasible: false,
            alpha: None,
            in_sample_rate: None,
            eval_rate: None,
            risk_limit: None,
            metrics: None,
            mass_gap: None,
            note: String::new(),
        };
        let solve = match solve {
            Ok(s) => s,
            Err(e) => {
                row.status = match e {
                    Error::Infeasible(_) => "infeasible".into(),
                    _ => "error".into(),
                };
                row.note = e.to_string();
                return Evaluated { row, record: None };
            }
        };
        let record = solve.solved.record;
        row.alpha = solve.alpha;
        let mut notes = Vec::new();
        row.feasible = solve.target_met && solve.row_problems.is_empty();
        if !solve.target_met {
            notes.push("violation target missed".to_string());
        }
        if !solve.row_problems.is_empty() {
            notes.push(format!("{} rows violated, first: {}", solve.row_problems.len(), solve.row_problems[0]));
        }
        if cfg.variant() != Variant::Deterministic {
            if let Ok(s) = self.replication_samples(j) {
                row.in_sample_rate = violation_rate(&record, &s, cfg.f_star, cfg.tau_minutes).ok().map(|r| r.per_sample);
            }
        }
        match violation_rate(&record, eval, cfg.f_star, cfg.tau_minutes) {
            Ok(r) => {
                row.eval_rate = Some(r.per_sample);
                row.risk_limit = posterior_upper(r.per_sample, eval.len(), cfg.delta).ok();
            }
            Err(e) => notes.push(format!("evaluation failed: {e}")),
        }
        match compute_metrics(&record) {
            Ok(m) => {
                row.mass_gap = Some(m.flow - expected_mass);
                if (m.flow - expected_mass).abs() > VERIFY_TOL * expected_mass.max(1.0) {
                    log::error!("replication {j}: reactor mass {} differs from traced {}", m.flow, expected_mass);
                    notes.push("mass trace mismatch".into());
                }
                row.metrics = Some(m);
            }
            Err(e) => {
                notes.push(e.to_string());
                row.feasible = false;
            }
        }
        row.note = notes.join("; ");
        Evaluated { row, record: Some(record) }
    }

    fn assemble(&self, evaluated: Vec<Evaluated>, extra: BTreeMap<String, String>) -> ReportBundle {
        let cfg = &self.config;
        let best = evaluated
            .iter()
            .filter(|e| e.row.feasible && e.row.metrics.is_some())
            .min_by(|a, b| {
                let ta = a.row.metrics.map_or(f64::INFINITY, |m| m.time_hours);
                let tb = b.row.metrics.map_or(f64::INFINITY, |m| m.time_hours);
                ta.total_cmp(&tb).then(a.row.index.cmp(&b.row.index))
            });
        let summary = MetricsRow {
            problem: cfg.problem.clone(),
            metrics: best.and_then(|e| e.row.metrics),
            feasible: evaluated.iter().filter(|e| e.row.feasible).count(),
            replications: evaluated.len(),
        };
        if let Some(m) = &summary.metrics {
            if !m.is_consistent() {
                log::error!("summary row fails the rate check: {m:?}");
            }
        }
        let mut files = extra;
        files.insert("summary.csv".into(), format!("{}\n{}\n", MetricsRow::HEADER, summary.to_line()));
        let mut reps = String::from(ReplicationRow::HEADER);
        reps.push('\n');
        for e in &evaluated {
            reps.push_str(&e.row.to_line());
            reps.push('\n');
        }
        files.insert("replications.csv".into(), reps);
        if let Some(rec) = best.and_then(|e| e.record.as_ref()) {
            files.insert("plot.csv".into(), plot_data(rec, self.feedstocks()));
        }
        files.insert("ordering.csv".into(), crate::sequencing::write_ordering(&self.sequence.bales));
        files.insert("sequence_notes.txt".into(), self.sequence.notes.join("\n") + "\n");
        ReportBundle {
            summary: Some(summary),
            replications: evaluated.into_iter().map(|e| e.row).collect(),
            files,
        }
    }

    fn expected_mass(&self) -> Result<f64> {
        trace_reactor_mass(&self.case.network, &self.case.classes, &self.case.geometry, &self.sequence.bales)
    }

    /// Solves every replication on the configured pool and collects the
    /// report files. The result depends only on the configuration and seeds.
    pub fn run(&self, backend: &dyn MilpBackend) -> Result<ReportBundle> {
        let cfg = &self.config;
        let eval = self.eval_samples()?;
        let expected = self.expected_mass()?;
        let solves = run_indexed(cfg.replications, cfg.pool_size, |j| self.solve_replication(j, backend));
        let mut extra = BTreeMap::new();
        let mut evaluated = Vec::with_capacity(solves.len());
        for (j, s) in solves.into_iter().enumerate() {
            if let Ok(s) = &s {
                extra.insert(format!("solutions/rep-{j:03}.sol"), s.solution_text.clone());
                if let Some(t) = &s.penalty_trace {
                    extra.insert(format!("penalty/rep-{j:03}.csv"), t.clone());
                }
            }
            evaluated.push(self.evaluate(j, s, &eval, expected));
        }
        Ok(self.assemble(evaluated, extra))
    }

    /// Recomputes the report from solution files written by [`Experiment::run`].
    pub fn report_from(&self, dir: &Path) -> Result<ReportBundle> {
        let eval = self.eval_samples()?;
        let expected = self.expected_mass()?;
        let mut evaluated = Vec::new();
        for j in 0..self.config.replications {
            let path = dir.join(format!("solutions/rep-{j:03}.sol"));
            let solve = if path.exists() {
                self.load_solution(j, &path)
            } else {
                Err(Error::Solver(format!("no saved solution {}", path.display())))
            };
            evaluated.push(self.evaluate(j, solve, &eval, expected));
        }
        Ok(self.assemble(evaluated, BTreeMap::new()))
    }

    fn load_solution(&self, j: usize, path: &Path) -> Result<ReplicationSolve> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut model = self.replication_model(j)?;
        let result: SolveResult = read_solution_file(&text, &model.instance)?;
        if !result.status.has_solution() {
            return Err(Error::Infeasible(format!("saved status {}", result.status.label())));
        }
        let alpha = text
            .lines()
            .filter_map(|l| l.strip_prefix("# alpha:"))
            .find_map(|v| v.trim().parse::<f64>().ok());
        if let Some(a) = alpha {
            model.instance.set_penalty(a);
        }
        let obj = result.objective.unwrap_or_else(|| model.instance.objective_value(&result.values));
        let record = model.decode(&result.values, obj);
        let problems = if self.config.verify {
            verify_solution(&model.instance, &result.values, VERIFY_TOL)
        } else {
            Vec::new()
        };
        let target_met = match self.config.variant() {
            Variant::ChanceSaa => {
                let s = self.replication_samples(j)?;
                let r = violation_rate(&record, &s, self.config.f_star, self.config.tau_minutes)?;
                r.count() as f64 <= self.config.gamma_hat * s.len() as f64 + self.config.epsilon
            }
            _ => true,
        };
        Ok(ReplicationSolve {
            solution_text: text,
            solved: SolvedModel { result, record },
            alpha,
            penalty_trace: None,
            target_met,
            row_problems: problems,
        })
    }

    pub fn lower_bound(&self, backend: &dyn MilpBackend) -> Result<BoundCertificate> {
        lower_bound(
            &self.factory,
            &self.case.dists,
            &self.config.bound_settings(),
            backend,
            &self.config.solve_options(),
        )
    }

    pub fn upper_bound(&self, backend: &dyn MilpBackend) -> Result<BoundCertificate> {
        upper_bound(
            &self.factory,
            &self.case.dists,
            &self.config.bound_settings(),
            backend,
            &self.config.solve_options(),
        )
    }
}

/// Per-period reactor feed by feedstock and bin inventory.
pub fn plot_data(record: &SolutionRecord, feedstocks: &[FeedstockId]) -> String {
    let by_feed = record.reactor_feed_by_feedstock(feedstocks);
    let mut out = String::from("period,reactor_on,reactor_feed");
    for f in feedstocks {
        let _ = write!(out, ",feed_{f}");
    }
    out.push_str(",inventory\n");
    for t in 1..=record.periods() {
        let i = t as usize - 1;
        let _ = write!(out, "{t},{},{:.6}", u8::from(record.reactor_on[i]), record.reactor_feed(t));
        for series in &by_feed {
            let _ = write!(out, ",{:.6}", series[i]);
        }
        let _ = writeln!(out, ",{:.6}", record.total_inventory(t));
    }
    out
}
