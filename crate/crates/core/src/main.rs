use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use floatctl::bench::{self, BenchError, BenchmarkTable, Condition};
use floatctl::config::{ConfigError, SuiteConfig};
use floatctl::controller::Controller;
use floatctl::env::TaskKind;
use floatctl::lqr::{LqrController, LqrError};
use floatctl::ppo::{self, Policy, PolicyParams, PpoError};
use floatctl::tracker::{PathSpec, ShapeKind, TrackerError};

#[derive(Parser)]
#[command(name = "floatctl", version, about = "Floating-platform simulation, control and benchmarking")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Dotted config override, e.g. `--set ppo.epochs=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a PPO policy.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        task: Option<TaskKind>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Evaluate one controller under the configured disturbance profile.
    Eval {
        #[command(flatten)]
        common: Common,
        /// `lqr` or `rl:<checkpoint>`.
        #[arg(long, default_value = "lqr")]
        controller: String,
    },
    /// Run a condition sweep.
    Bench {
        #[command(flatten)]
        common: Common,
        /// `lqr` or `rl:<checkpoint>`.
        #[arg(long, default_value = "lqr")]
        controller: String,
        /// `ideal` or `table2`.
        #[arg(long, default_value = "table2")]
        conditions: String,
    },
    /// Follow a reference shape with the look-ahead tracker.
    Track {
        #[command(flatten)]
        common: Common,
        /// `lqr` or `rl:<checkpoint>`.
        #[arg(long, default_value = "lqr")]
        controller: String,
        #[arg(long, value_enum)]
        shape: ShapeKind,
        /// Commanded speed, m/s.
        #[arg(long)]
        speed: Option<f64>,
        /// Control steps.
        #[arg(long)]
        steps: Option<u64>,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Solver(#[from] LqrError),
    #[error("{0} solver failures during the run (controller idled on those steps)")]
    SolverFailures(u64),
    #[error(transparent)]
    Ppo(#[from] PpoError),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Tracker(#[from] TrackerError),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Ppo(PpoError::Io(_)) | CliError::Ppo(PpoError::Checkpoint(_)) => 4,
            CliError::Ppo(PpoError::Config(_)) => 3,
            CliError::Bench(BenchError::UnknownPreset(_)) => 3,
            CliError::Solver(_) | CliError::SolverFailures(_) => 5,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(io_err(path))
}

/// Loads the config, applies flag overrides and prepares the output directory.
fn setup(common: &Common, extra: &[String]) -> Result<SuiteConfig, CliError> {
    let mut overrides = common.overrides.clone();
    overrides.extend_from_slice(extra);
    if let Some(s) = common.seed {
        overrides.push(format!("seed={s}"));
    }
    let mut cfg = SuiteConfig::load(common.config.as_deref(), &overrides)?;
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("--threads: {e}")))?;
    }
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    Ok(cfg)
}

enum ControllerSpec {
    Lqr,
    Rl(PathBuf),
}

impl ControllerSpec {
    fn parse(s: &str) -> Result<Self, CliError> {
        match s.split_once(':') {
            None if s == "lqr" => Ok(Self::Lqr),
            Some(("rl", path)) if !path.is_empty() => Ok(Self::Rl(path.into())),
            _ => Err(CliError::Usage(format!("unknown controller {s:?} (expected lqr or rl:<checkpoint>)"))),
        }
    }

    fn factory(&self, cfg: &SuiteConfig) -> Result<Box<dyn Fn() -> Box<dyn Controller> + Sync>, CliError> {
        match self {
            Self::Lqr => {
                let proto = LqrController::new(cfg.platform.clone(), cfg.lqr.clone())?;
                Ok(Box::new(move || Box::new(proto.clone())))
            }
            Self::Rl(path) => {
                let params = PolicyParams::load_file(path)?;
                Ok(Box::new(move || Box::new(Policy::new(params.clone()))))
            }
        }
    }
}

fn save_snapshot(cfg: &SuiteConfig, name: &str) -> Result<(), CliError> {
    write_text(&cfg.out.join(name), &cfg.snapshot())
}

fn cmd_train(common: &Common, task: Option<TaskKind>, epochs: Option<usize>) -> Result<(), CliError> {
    let mut extra = Vec::new();
    if let Some(t) = task {
        extra.push(format!(
            "env.task=\"{}\"",
            match t {
                TaskKind::GoToPose => "go-to-pose",
                TaskKind::TrackVelocity => "track-velocity",
            }
        ));
    }
    if let Some(e) = epochs {
        extra.push(format!("ppo.epochs={e}"));
    }
    let cfg = setup(common, &extra)?;
    save_snapshot(&cfg, "train_config.toml")?;
    let total = cfg.ppo.epochs;
    let (params, logs) = ppo::train(
        cfg.platform.clone(),
        cfg.env.clone(),
        cfg.disturbance.clone(),
        cfg.ppo.clone(),
        cfg.seed,
        |log, _| {
            if log.epoch == 1 || log.epoch % 10 == 0 || log.epoch == total {
                info!(
                    "epoch {}/{} return {:.2} kl {:.4} lr {:.2e}",
                    log.epoch, total, log.mean_return, log.approx_kl, log.lr
                );
            }
            Ok(())
        },
    )?;
    let ckpt = cfg.out.join("policy.fcp");
    params.save_file(&ckpt)?;
    let log_path = cfg.out.join("train_log.csv");
    ppo::train::write_log(&logs, create(&log_path)?)?;
    println!("wrote {} and {}", ckpt.display(), log_path.display());
    Ok(())
}

fn write_table(cfg: &SuiteConfig, stem: &str, table: &BenchmarkTable) -> Result<(), CliError> {
    let csv_path = cfg.out.join(format!("{stem}.csv"));
    table.write_csv(create(&csv_path)?).map_err(io_err(&csv_path))?;
    write_text(&cfg.out.join(format!("{stem}.json")), &table.to_json())?;
    let text = table.render();
    write_text(&cfg.out.join(format!("{stem}.txt")), &text)?;
    print!("{text}");
    let failures: u64 = table.rows.iter().map(|r| r.solver_failures).sum();
    if failures > 0 {
        return Err(CliError::SolverFailures(failures));
    }
    Ok(())
}

fn cmd_eval(common: &Common, controller: &str) -> Result<(), CliError> {
    let cfg = setup(common, &[])?;
    let spec = ControllerSpec::parse(controller)?;
    let make = spec.factory(&cfg)?;
    save_snapshot(&cfg, "eval_config.toml")?;
    let cond = Condition {
        label: "configured".into(),
        profile: cfg.disturbance.clone(),
    };
    let table = bench::run_benchmark(make.as_ref(), &[cond], &cfg.platform, &cfg.bench, cfg.seed)?;
    write_table(&cfg, "eval", &table)
}

fn cmd_bench(common: &Common, controller: &str, conditions: &str) -> Result<(), CliError> {
    let cfg = setup(common, &[])?;
    let spec = ControllerSpec::parse(controller)?;
    let conds = bench::preset(conditions)?;
    let make = spec.factory(&cfg)?;
    save_snapshot(&cfg, "bench_config.toml")?;
    let table = bench::run_benchmark(make.as_ref(), &conds, &cfg.platform, &cfg.bench, cfg.seed)?;
    write_table(&cfg, "bench", &table)
}

fn cmd_track(
    common: &Common,
    controller: &str,
    shape: ShapeKind,
    speed: Option<f64>,
    steps: Option<u64>,
) -> Result<(), CliError> {
    let mut extra = Vec::new();
    if let Some(v) = speed {
        extra.push(format!("tracker.target_speed={v:?}"));
    }
    if let Some(n) = steps {
        extra.push(format!("tracker.steps={n}"));
    }
    let cfg = setup(common, &extra)?;
    let spec = ControllerSpec::parse(controller)?;
    let make = spec.factory(&cfg)?;
    save_snapshot(&cfg, "track_config.toml")?;
    let path = PathSpec::shape(shape, &cfg.tracker)?;
    let mut ctrl = make();
    let run = bench::run_tracking(
        ctrl.as_mut(),
        shape,
        &path,
        &cfg.platform,
        &cfg.env,
        &cfg.disturbance,
        cfg.tracker.steps,
        cfg.seed,
    )?;
    let traj = cfg.out.join(format!("track_{}.csv", shape.name()));
    run.write_csv(create(&traj)?).map_err(io_err(&traj))?;
    let report = bench::velocity_report(std::slice::from_ref(&run));
    let summary_path = cfg.out.join(format!("track_{}_summary.csv", shape.name()));
    let mut w = csv::Writer::from_writer(create(&summary_path)?);
    for row in &report {
        w.serialize(row).map_err(|e| CliError::Io {
            path: summary_path.clone(),
            source: std::io::Error::other(e),
        })?;
    }
    w.flush().map_err(io_err(&summary_path))?;
    for row in &report {
        println!(
            "{:<10} {}  (path error {:.3} m over {} steps)",
            row.shape,
            row.summary(),
            row.mean_path_error,
            row.steps
        );
    }
    let failures = ctrl.failures();
    if failures > 0 {
        return Err(CliError::SolverFailures(failures));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Command::Train { common, task, epochs } => cmd_train(common, *task, *epochs),
        Command::Eval { common, controller } => cmd_eval(common, controller),
        Command::Bench {
            common,
            controller,
            conditions,
        } => cmd_bench(common, controller, conditions),
        Command::Track {
            common,
            controller,
            shape,
            speed,
            steps,
        } => cmd_track(common, controller, *shape, *speed, *steps),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if matches!(e, CliError::SolverFailures(_)) {
                warn!("outputs were written, but {e}");
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.code())
        }
    }
}
