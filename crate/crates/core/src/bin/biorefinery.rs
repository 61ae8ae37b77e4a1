use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use biorefinery::milp::{export_lp_text, parse_lp_text, write_stats, Variant};
use biorefinery::runner::{backend_for, compute_metrics, Experiment, MetricsRow, RunConfig};
use biorefinery::sequencing::write_ordering;
use biorefinery::solver::{write_solution_file, HighsBackend, MilpBackend, OracleBackend, SolveRequest};
use biorefinery::Error;

#[derive(Parser)]
#[command(name = "biorefinery", version, about = "Biomass preprocessing schedules under carbohydrate uncertainty")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the bale ordering named by the config.
    Sequence {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the model of one replication in LP format.
    Build {
        config: PathBuf,
        #[arg(long)]
        variant: Option<String>,
        #[arg(long, default_value_t = 0)]
        replication: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print row and variable counts instead of the model.
        #[arg(long)]
        stats: bool,
    },
    /// Solve one replication and print its metrics.
    Solve {
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        replication: usize,
        /// Where to write the solution file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Statistical bounds on the optimal processing time.
    Bounds {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = BoundArg::Both)]
        kind: BoundArg,
    },
    /// Solve every replication and write the report files.
    Run {
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Recompute the report from saved solutions.
    Report {
        config: PathBuf,
        #[arg(long)]
        from: Option<PathBuf>,
    },
    /// Solve an LP file and write a solution file.
    #[command(hide = true)]
    SolveLp {
        lp: PathBuf,
        sol: PathBuf,
        #[arg(long, default_value = "highs")]
        engine: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundArg {
    Lower,
    Upper,
    Both,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::Infeasible(_)) => 2,
        Some(Error::Solver(_)) => 4,
        _ => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load(path: &Path) -> anyhow::Result<Experiment> {
    let cfg = RunConfig::load(path)?;
    Ok(Experiment::prepare(cfg)?)
}

fn emit(text: &str, out: Option<&Path>) -> anyhow::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Sequence { config, out } => {
            let exp = load(&config)?;
            for note in &exp.sequence.notes {
                eprintln!("{note}");
            }
            emit(&write_ordering(&exp.sequence.bales), out.as_deref())
        }
        Command::Build {
            config,
            variant,
            replication,
            out,
            stats,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(v) = variant {
                if Variant::parse(&v).is_none() {
                    return Err(Error::Config(format!("unknown variant `{v}`")).into());
                }
                cfg.variant = v;
            }
            let exp = Experiment::prepare(cfg)?;
            let model = exp.replication_model(replication)?;
            let text = if stats {
                write_stats(&model.instance)
            } else {
                export_lp_text(&model.instance)
            };
            emit(&text, out.as_deref())
        }
        Command::Solve {
            config,
            replication,
            out,
        } => {
            let exp = load(&config)?;
            let backend = backend_for(&exp.config)?;
            let solve = exp.solve_replication(replication, backend.as_ref())?;
            for p in &solve.row_problems {
                eprintln!("row check: {p}");
            }
            let row = MetricsRow {
                problem: exp.config.problem.clone(),
                metrics: Some(compute_metrics(&solve.solved.record)?),
                feasible: usize::from(solve.target_met && solve.row_problems.is_empty()),
                replications: 1,
            };
            println!("{}\n{}", MetricsRow::HEADER, row.to_line());
            if let Some(p) = out {
                emit(&solve.solution_text, Some(&p))?;
            }
            Ok(())
        }
        Command::Bounds { config, kind } => {
            let exp = load(&config)?;
            let backend = backend_for(&exp.config)?;
            if matches!(kind, BoundArg::Lower | BoundArg::Both) {
                print!("{}", exp.lower_bound(backend.as_ref())?.to_text());
            }
            if matches!(kind, BoundArg::Upper | BoundArg::Both) {
                print!("{}", exp.upper_bound(backend.as_ref())?.to_text());
            }
            Ok(())
        }
        Command::Run { config, output } => {
            let exp = load(&config)?;
            let backend = backend_for(&exp.config)?;
            let bundle = exp.run(backend.as_ref())?;
            let dir = output.unwrap_or_else(|| exp.config.output.clone());
            bundle.write_to(&dir)?;
            print!("{}", bundle.files["summary.csv"]);
            if bundle.all_infeasible() {
                return Err(Error::Infeasible("every replication is infeasible".into()).into());
            }
            Ok(())
        }
        Command::Report { config, from } => {
            let exp = load(&config)?;
            let dir = from.unwrap_or_else(|| exp.config.output.clone());
            let bundle = exp.report_from(&dir)?;
            print!("{}", bundle.files["summary.csv"]);
            print!("{}", bundle.files["replications.csv"]);
            Ok(())
        }
        Command::SolveLp { lp, sol, engine } => {
            let text = std::fs::read_to_string(&lp).map_err(|e| Error::Config(format!("{}: {e}", lp.display())))?;
            let instance = parse_lp_text(&text)?;
            let backend: Box<dyn MilpBackend> = match engine.as_str() {
                "highs" => Box::new(HighsBackend::new()),
                "oracle" => Box::new(OracleBackend::default()),
                other => return Err(Error::Config(format!("unknown engine `{other}`")).into()),
            };
            let result = backend.solve(&SolveRequest::new(&instance))?;
            std::fs::write(&sol, write_solution_file(&result, &instance))
                .with_context(|| format!("writing {}", sol.display()))?;
            Ok(())
        }
    }
}
