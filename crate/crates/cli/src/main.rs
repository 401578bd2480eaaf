use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use learned_gc::harness::{
    calibrate_threshold, compare_variants, write_comparison_csv, write_detail_csv, write_epoch_csv,
    write_summary_json, RunResult,
};
use learned_gc::policy::snapshot::write_snapshot;
use learned_gc::{run, WorkloadKind};
use thiserror::Error;

mod config;

#[derive(Parser)]
#[command(
    name = "learned-gc",
    version,
    about = "Generational GC simulator with a learned collection policy"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its epoch CSV and JSON summary.
    Run(Common),
    /// Run a variant matrix and write the comparison table.
    Compare(Common),
    /// Print the calibrated memory threshold in bytes.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        workload: Option<WorkloadKind>,
    },
    /// Run a learned variant and write its final Q table as CSV.
    ExportPolicy(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "LEARNED_GC_OUT", default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Dotted config key override, e.g. `learner.alpha=0.2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<config::LoadError> for CliError {
    fn from(e: config::LoadError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<learned_gc::RunError> for CliError {
    fn from(e: learned_gc::RunError) -> Self {
        match e {
            learned_gc::RunError::Config(c) => CliError::Config(c.to_string()),
            other => CliError::runtime(other),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load(common: &Common, workload: Option<WorkloadKind>) -> Result<config::Loaded, CliError> {
    let mut overrides = common.overrides.clone();
    if let Some(w) = workload {
        overrides.push(format!("workload.kind=\"{w}\""));
    }
    if let Some(s) = common.seed {
        overrides.push(format!("seed={s}"));
    }
    Ok(config::load(common.config.as_deref(), &overrides)?)
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(common) => {
            let loaded = load(&common, None)?;
            let result = run(&loaded.config)?;
            write_run(&common.out, &result)
        }
        Command::Compare(common) => {
            let loaded = load(&common, None)?;
            let matrix = loaded
                .matrix
                .ok_or_else(|| CliError::Config("compare needs a [matrix] section".into()))?;
            let configs = matrix
                .expand(&loaded.config)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let table = compare_variants(&configs)?;
            for r in &table.runs {
                write_run(&common.out, r)?;
            }
            let out = &common.out;
            write_csv(out, "table1.csv", |w| write_comparison_csv(&table, w))?;
            write_csv(out, "table1_detail.csv", |w| write_detail_csv(&table, w))?;
            eprintln!("wrote {}", out.join("table1.csv").display());
            Ok(())
        }
        Command::Calibrate { common, workload } => {
            let loaded = load(&common, workload)?;
            println!("{}", calibrate_threshold(&loaded.config)?);
            Ok(())
        }
        Command::ExportPolicy(common) => {
            let loaded = load(&common, None)?;
            if !loaded.config.variant.is_learned() {
                return Err(CliError::Config(format!(
                    "variant {} has no Q table to export",
                    loaded.config.variant
                )));
            }
            let result = run(&loaded.config)?;
            let table = result
                .table
                .as_ref()
                .expect("learned variants keep their table");
            let name = format!("{}_policy.csv", result.config.file_stem());
            write_csv(&common.out, &name, |w| write_snapshot(table, w))?;
            eprintln!("wrote {}", common.out.join(name).display());
            Ok(())
        }
    }
}

fn write_csv<E: std::fmt::Display>(
    dir: &Path,
    name: &str,
    f: impl FnOnce(BufWriter<File>) -> Result<(), E>,
) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::runtime(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    let file =
        File::create(&path).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))?;
    f(BufWriter::new(file)).map_err(|e| CliError::runtime(format!("{}: {e}", path.display())))
}

fn write_run(dir: &Path, result: &RunResult) -> Result<(), CliError> {
    let stem = result.config.file_stem();
    write_csv(dir, &format!("{stem}.csv"), |w| write_epoch_csv(result, w))?;
    write_csv(dir, &format!("{stem}.json"), |w| {
        write_summary_json(result, w)
    })?;
    eprintln!("wrote {}", dir.join(format!("{stem}.csv")).display());
    Ok(())
}
