//! Command-line front end for wave-function ensemble experiments.
//!
//! An experiment is a JSON config; `run` writes CSV tables plus a
//! `manifest.json` into the output directory. Results depend only on the
//! config and seed, never on the worker count.

pub mod config;
pub mod output;
pub mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use config::{parse_config, ConfigIssue, ExperimentConfig, Plan};
use run::RunOutput;

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_INCONCLUSIVE: u8 = 4;
pub const EXIT_IO: u8 = 1;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "wfens", version, about = "Wave-function ensembles and quantum fluctuation relations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write its CSV tables and manifest.
    Run(RunArgs),
    /// Check a config without running it.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, env = "WFENS_SEED")]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, env = "WFENS_WORKERS")]
    pub workers: Option<usize>,
    /// Output directory; overrides the config `output` field.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum Failure {
    Config(Vec<ConfigIssue>),
    Io(String),
    Numerical(wfens_core::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Io(_) => EXIT_IO,
            Failure::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub fn report(&self) -> String {
        match self {
            Failure::Config(issues) => {
                let mut s = String::from("invalid config:");
                for i in issues {
                    s.push_str(&format!("\n  {i}"));
                }
                s
            }
            Failure::Io(e) => format!("i/o error: {e}"),
            Failure::Numerical(e) => format!("numerical failure: {e}"),
        }
    }
}

/// Outcome of a completed run.
#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
    pub inconclusive: Option<String>,
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text).map_err(Failure::Config)
}

pub fn validate_config(config: &ExperimentConfig) -> Result<Plan, Failure> {
    config.validate().map_err(Failure::Config)
}

/// Runs `config` on a pool of `workers` threads and writes results under `out`.
pub fn run_experiment(
    config: &ExperimentConfig,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<&Path>,
) -> Result<RunSummary, Failure> {
    let mut config = config.clone();
    if let Some(s) = seed {
        config.seed = s;
    }
    let plan = validate_config(&config)?;
    let out_dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.output.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("wfens-out"));
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Failure::Config(vec![ConfigIssue {
                path: "--workers".into(),
                message: "must be >= 1".into(),
            }]));
        }
        pool = pool.num_threads(w);
    }
    let pool = pool.build().map_err(|e| Failure::Io(e.to_string()))?;
    let started = Instant::now();
    let result: RunOutput = pool
        .install(|| run::execute(&plan, config.seed))
        .map_err(Failure::Numerical)?;
    let wall = started.elapsed().as_secs_f64();

    let files = output::write_tables(&out_dir, &result.tables).map_err(|e| Failure::Io(e.to_string()))?;
    let manifest = json!({
        "manifest_version": MANIFEST_VERSION,
        "tool": "wfens",
        "version": env!("CARGO_PKG_VERSION"),
        "core_version": wfens_core::VERSION,
        "config": config,
        "seed": config.seed,
        "workers": pool.current_num_threads(),
        "wall_time_seconds": wall,
        "outputs": result.tables.iter().map(|t| t.file_name()).collect::<Vec<_>>(),
        "status": if result.inconclusive.is_some() { "inconclusive" } else { "ok" },
        "inconclusive_reason": result.inconclusive,
        "diagnostics": result.diagnostics,
    });
    let mut files = files;
    files.push(output::write_manifest(&out_dir, &manifest).map_err(|e| Failure::Io(e.to_string()))?);
    Ok(RunSummary {
        out_dir,
        files,
        inconclusive: result.inconclusive,
    })
}

/// Entry point shared by the binary and tests.
pub fn main_with(cli: Cli) -> ExitCode {
    match cli.command {
        Command::Validate(args) => match load_config(&args.config).and_then(|c| validate_config(&c)) {
            Ok(_) => {
                println!("ok");
                ExitCode::from(EXIT_OK)
            }
            Err(f) => {
                eprintln!("{}", f.report());
                ExitCode::from(f.exit_code())
            }
        },
        Command::Run(args) => {
            let outcome = load_config(&args.config)
                .and_then(|c| run_experiment(&c, args.seed, args.workers, args.out.as_deref()));
            match outcome {
                Ok(summary) => {
                    for f in &summary.files {
                        println!("{}", f.display());
                    }
                    match summary.inconclusive {
                        Some(reason) => {
                            eprintln!("statistically inconclusive: {reason}");
                            ExitCode::from(EXIT_INCONCLUSIVE)
                        }
                        None => ExitCode::from(EXIT_OK),
                    }
                }
                Err(f) => {
                    eprintln!("{}", f.report());
                    ExitCode::from(f.exit_code())
                }
            }
        }
    }
}
