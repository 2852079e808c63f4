//! `csl-lab`: run collapse-model experiments from JSON configs.
//!
//! Exit codes: 0 pass, 1 scientific or statistical failure, 2 usage or
//! configuration error.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};

use commands::{execute, RunOptions};
use config::{read_json, Overrides};
use manifest::{write_json, Recipe, RunManifest};

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, unreadable or invalid configuration.
    Usage(String),
    /// Output could not be written.
    Io(String),
    /// The computation itself could not produce a verdict.
    Failed(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Io(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Io(m) | CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<csl_core::Error> for CliError {
    fn from(e: csl_core::Error) -> Self {
        use csl_core::Error::*;
        match e {
            InvalidArgument(_) | Invalid(_) | BranchesNotDisjoint(_) => CliError::Usage(e.to_string()),
            _ => CliError::Failed(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "csl-lab", version, about = "Numerical laboratory for the CSL collapse model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Replace the trial count of every run in the config.
    #[arg(long)]
    trials_override: Option<usize>,
    /// Replace the master seed of every run in the config.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Also write per-trial trajectories as CSV.
    #[arg(long)]
    emit_trajectories: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Outcome frequencies against |a_k|².
    Born(RunArgs),
    /// Mean squared norm or mean branch probabilities stay at their initial values.
    Martingale(RunArgs),
    /// Raw-weighted and physical-drift ensembles agree.
    Equivalence(RunArgs),
    /// Collapse-time scaling study and hook catalog.
    Timing(RunArgs),
    /// Born rule under amplitude-blind noise, and the three-way scheme table.
    Nogo(RunArgs),
    /// Branch isolation on a unitary lattice.
    Branchlab(RunArgs),
    /// Experimental bounds on coupling constants.
    Constraints(RunArgs),
    /// Repeat a run from its manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run every recipe in a directory, each into its own subdirectory.
    Recipes {
        #[arg(long, default_value = "recipes")]
        dir: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        trials_override: Option<usize>,
        #[arg(long)]
        seed_override: Option<u64>,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("CSL_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("CSL_LAB_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Runs one command into `out`, writes its manifest and returns the exit code.
fn run_and_record(
    command: &str,
    config: serde_json::Value,
    out: &Path,
    overrides: Overrides,
    emit_trajectories: bool,
) -> Result<u8, CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))?;
    let started_at = now();
    let opts = RunOptions { out, overrides, emit_trajectories };
    let outcome = execute(command, config, &opts)?;
    print!("{}", outcome.summary);
    let code = if outcome.pass { 0 } else { 1 };
    let mut outputs = outcome.outputs;
    outputs.push("manifest.json".into());
    let manifest = RunManifest {
        command: command.into(),
        config: outcome.config,
        emit_trajectories,
        scenario: outcome.scenario,
        master_seed: outcome.master_seed,
        version: env!("CARGO_PKG_VERSION").into(),
        started_at,
        finished_at: now(),
        outputs,
        exit_code: code as i32,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(code)
}

fn run_recipes(dir: &Path, out: &Path, overrides: Overrides) -> Result<u8, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::Usage(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::Usage(format!("no recipes in {}", dir.display())));
    }
    let mut worst = 0u8;
    let mut lines = Vec::new();
    for path in &files {
        let stem = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
        println!("== {stem}");
        let recipe = match read_json::<Recipe>(path) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: {e}");
                worst = 2;
                lines.push(format!("{stem:<28} unreadable"));
                continue;
            }
        };
        let code = run_and_record(&recipe.command, recipe.config, &out.join(&stem), overrides, recipe.emit_trajectories)
            .unwrap_or_else(|e| {
                eprintln!("error: {e}");
                e.code()
            });
        let matched = i32::from(code) == recipe.expect_exit;
        if !matched {
            worst = worst.max(if code == 2 { 2 } else { 1 });
        }
        let status = if matched { "ok" } else { "MISMATCH" };
        lines.push(format!("{stem:<28} exit {code} (expected {}) {status}", recipe.expect_exit));
    }
    println!("== summary");
    for l in lines {
        println!("{l}");
    }
    Ok(worst)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    configure_threads()?;
    match cli.command {
        Command::Rerun { manifest, out } => {
            let r: Recipe = read_json(&manifest)?;
            run_and_record(&r.command, r.config, &out, Overrides::default(), r.emit_trajectories)
        }
        Command::Recipes { dir, out, trials_override, seed_override } => {
            run_recipes(&dir, &out, Overrides { trials: trials_override, seed: seed_override })
        }
        Command::Born(a) => single("born", a),
        Command::Martingale(a) => single("martingale", a),
        Command::Equivalence(a) => single("equivalence", a),
        Command::Timing(a) => single("timing", a),
        Command::Nogo(a) => single("nogo", a),
        Command::Branchlab(a) => single("branchlab", a),
        Command::Constraints(a) => single("constraints", a),
    }
}

fn single(command: &str, a: RunArgs) -> Result<u8, CliError> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| CliError::Usage(format!("{}: {e}", a.config.display())))?;
    let config = commands::parse_config(command, &text, &a.config.display().to_string())?;
    let overrides = Overrides { trials: a.trials_override, seed: a.seed_override };
    run_and_record(command, config, &a.out, overrides, a.emit_trajectories)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
