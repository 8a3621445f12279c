//! Command-line interface: argument parsing, dispatch, output writing, and
//! exit-code mapping.
//!
//! Exit codes: 0 success, 1 configuration/usage error, 2 numerical failure
//! (the manifest is still written, partial outputs flagged), 3 a
//! verification check failed.

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{ArgAction, Parser, Subcommand};

use crate::config::{load_config, resolve, ExperimentKind, RawConfig, ResolvedConfig};
use crate::experiments::{run_diff_grid, run_diff_p, run_variance};
use crate::manifest::{
    assert_unique_stream_ids, write_manifest, write_output, Manifest, OutputFile, RunStatus,
    SEED_DERIVATION_RULE,
};
use crate::train::run_ac_train;
use crate::verify::{run_ac_verify, run_autocov, run_kernel_check};
use crate::{experiments::DriverOutput, HarnessError, Result};

/// Deterministic experiment harness for replay-buffer estimators.
#[derive(Debug, Parser)]
#[command(name = "replaylab", version, disable_help_subcommand = true)]
pub struct Cli {
    /// JSON experiment configuration (strict keys; omitted keys take
    /// defaults).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Output directory for CSV/SVG artifacts and the manifest.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    pub out: PathBuf,

    /// Worker threads for parallel seed sweeps (default: all cores).
    #[arg(long, global = true, value_name = "INT")]
    pub jobs: Option<usize>,

    /// Emit companion SVG plots next to the CSV data.
    #[arg(
        long,
        global = true,
        value_name = "BOOL",
        action = ArgAction::Set,
        num_args = 0..=1,
        default_missing_value = "true",
        default_value_t = false
    )]
    pub svg: bool,

    /// Root seed every stream is derived from (overrides the config file).
    #[arg(long, global = true, value_name = "INT")]
    pub base_seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare the enumerated time-difference distribution against the
    /// triangular kernel, exactly, for all capacities up to --n-max.
    KernelCheck {
        /// Largest buffer capacity to enumerate (1..=10).
        #[arg(long, default_value_t = 7)]
        n_max: usize,
    },
    /// Empirical vs predicted autocovariance of the batch signal on
    /// two-state chains.
    Autocov,
    /// Estimate traces at fixed capacity across batch sizes.
    DiffN,
    /// Estimate traces at fixed batch size across capacities.
    DiffK,
    /// Online vs replay traces across mixing speeds of the block chain.
    DiffP,
    /// Across-seed variance curves of the running-mean estimators.
    Variance,
    /// Train the actor-critic on the built-in fixture and record snapshots.
    AcTrain,
    /// Closed-form, Monte-Carlo, identity, and convergence checks for the
    /// actor-critic.
    AcVerify,
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::KernelCheck { .. } => ExperimentKind::KernelCheck,
            Command::Autocov => ExperimentKind::Autocov,
            Command::DiffN => ExperimentKind::DiffN,
            Command::DiffK => ExperimentKind::DiffK,
            Command::DiffP => ExperimentKind::DiffP,
            Command::Variance => ExperimentKind::Variance,
            Command::AcTrain => ExperimentKind::AcTrain,
            Command::AcVerify => ExperimentKind::AcVerify,
        }
    }
}

/// Parse `argv` and run the selected subcommand, returning the process exit
/// code. Usage errors print to stderr and map to exit code 1.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let start = Instant::now();
    let kind = cli.command.kind();

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(HarnessError::Config(
                "--jobs must be at least 1".into(),
            ));
        }
        // Ignore the error when a pool already exists (only possible when
        // embedding the CLI in a test process).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }

    let raw = match &cli.config {
        Some(path) => load_config(path)?,
        None => RawConfig::default(),
    };
    let cfg = resolve(kind, &raw, cli.base_seed)?;

    let (output, mut echo) = dispatch(cli, &cfg)?;
    assert_unique_stream_ids(&output.runs)?;

    std::fs::create_dir_all(&cli.out).map_err(|source| HarnessError::Io {
        path: cli.out.display().to_string(),
        source,
    })?;
    let any_failures = !output.failures.is_empty();
    let mut outputs: Vec<OutputFile> = Vec::with_capacity(output.files.len());
    for (file, partial) in &output.files {
        outputs.push(write_output(&cli.out, file, *partial)?);
    }

    for check in &output.checks {
        println!("{}", check.stdout_line());
    }
    for failure in &output.failures {
        eprintln!("numerical failure: {failure}");
    }

    let failed_checks: Vec<String> = output
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.clone())
        .collect();
    let status = if any_failures {
        RunStatus::NumericalFailure
    } else if kind.is_verify() && !failed_checks.is_empty() {
        RunStatus::CheckFailure
    } else {
        RunStatus::Ok
    };

    if let Command::KernelCheck { n_max } = &cli.command {
        if let serde_json::Value::Object(map) = &mut echo {
            map.insert("n_max".into(), serde_json::json!(n_max));
        }
    }
    let manifest = Manifest {
        tool: "replaylab",
        version: env!("CARGO_PKG_VERSION"),
        command: kind.name().to_string(),
        status,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        seed_derivation: SEED_DERIVATION_RULE,
        config: echo,
        runs: output.runs,
        checks: output.checks,
        failures: output.failures,
        outputs,
    };
    write_manifest(&cli.out, &manifest)?;

    println!(
        "{}: {} file(s) written to {} ({:.1}s)",
        kind.name(),
        manifest.outputs.len(),
        cli.out.display(),
        manifest.wall_clock_seconds
    );

    match status {
        RunStatus::Ok => Ok(()),
        RunStatus::NumericalFailure => Err(HarnessError::Numerical(format!(
            "{} grid point(s) failed; see the manifest",
            manifest.failures.len()
        ))),
        RunStatus::CheckFailure => Err(HarnessError::CheckFailed(format!(
            "checks failed: {}",
            failed_checks.join(", ")
        ))),
    }
}

fn dispatch(cli: &Cli, cfg: &ResolvedConfig) -> Result<(DriverOutput, serde_json::Value)> {
    let echo = cfg.echo();
    let output = match &cli.command {
        Command::KernelCheck { n_max } => run_kernel_check(*n_max)?,
        Command::Autocov => run_autocov(cfg, cli.svg)?.output,
        Command::DiffN | Command::DiffK => run_diff_grid(cfg, cli.svg)?.output,
        Command::DiffP => run_diff_p(cfg, cli.svg)?.output,
        Command::Variance => run_variance(cfg, cli.svg)?.output,
        Command::AcTrain => run_ac_train(cfg, cli.svg)?,
        Command::AcVerify => run_ac_verify(cfg)?,
    };
    Ok((output, echo))
}
