//! `provenance`: simulate, ingest, label, train, score, extract, report,
//! evaluate and attribute from the command line.

mod commands;
mod config;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use provenance_core::monitors::MonitorKind;
use provenance_core::{Error, ErrorCategory};

use commands::{Ran, MODELS_DIR};
use config::{Overrides, RunConfig};
use manifest::{hash_paths, now_ms, RunManifest};

#[derive(Debug, Parser)]
#[command(name = "provenance", version, about = "Trace monitoring and responsibility attribution for agent runs")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Warning horizon in steps.
    #[arg(long, global = true)]
    horizon: Option<usize>,
    /// Output directory; every run appends to its manifests.jsonl.
    #[arg(long, global = true, env = "PROVENANCE_OUT", default_value = "provenance-out")]
    out: PathBuf,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate raw logs from a scenario and split them into train and test.
    Simulate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        trajectories: Option<usize>,
    },
    /// Convert raw logs to trajectories with a frozen adapter.
    Ingest {
        #[arg(long = "in")]
        input: PathBuf,
        /// Adapter spec to apply, or to write when inducing.
        #[arg(long)]
        spec: PathBuf,
        /// Induce the adapter from this input; only for training logs.
        #[arg(long)]
        induce: bool,
    },
    /// Write horizon warning labels for every prefix.
    Label {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Train monitors and extract the automaton from training runs.
    Train {
        #[arg(long = "in")]
        input: PathBuf,
        /// Adapter used to ingest the training runs, recorded for hygiene.
        #[arg(long)]
        adapter: Option<PathBuf>,
    },
    /// Score every prefix with every (or one) frozen monitor.
    Score {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long)]
        monitor: Option<String>,
    },
    /// Extract an automaton from a trained monitor's projection.
    ExtractDfa {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
        #[arg(long, default_value = "soft-fsm")]
        from: MonitorKind,
    },
    /// Print the warning/normal state table of an automaton.
    Report {
        #[arg(long)]
        dfa: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Compare frozen monitors on held-out runs.
    Evaluate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        models: Option<PathBuf>,
        /// Adapter used to ingest the test runs.
        #[arg(long)]
        adapter: Option<PathBuf>,
    },
    /// Assign responsibility for a harm from an evidence bundle.
    Attribute {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        harm: String,
    },
    /// Measure the shift in causal contribution from adding a component.
    DeltaKappa {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Component addition (TOML).
        #[arg(long)]
        addition: PathBuf,
        #[arg(long)]
        bound: Option<f64>,
    },
    /// Check the deployment readiness conditions of an evidence bundle.
    Readiness {
        #[arg(long)]
        bundle: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Ingest { .. } => "ingest",
            Command::Label { .. } => "label",
            Command::Train { .. } => "train",
            Command::Score { .. } => "score",
            Command::ExtractDfa { .. } => "extract-dfa",
            Command::Report { .. } => "report",
            Command::Evaluate { .. } => "evaluate",
            Command::Attribute { .. } => "attribute",
            Command::DeltaKappa { .. } => "delta-kappa",
            Command::Readiness { .. } => "readiness",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        ErrorCategory::Config => 2,
        ErrorCategory::Data => 3,
        ErrorCategory::Hygiene => 4,
        ErrorCategory::Compute => 5,
    }
}

fn execute(cli: &Cli, config: &RunConfig) -> provenance_core::Result<Ran> {
    let out = &cli.out;
    let models = |m: &Option<PathBuf>| m.clone().unwrap_or_else(|| out.join(MODELS_DIR));
    match &cli.command {
        Command::Simulate { scenario, trajectories } => {
            commands::simulate(config, scenario.as_deref(), *trajectories, out)
        }
        Command::Ingest { input, spec, induce } => commands::ingest(input, spec, *induce, out),
        Command::Label { input } => commands::label(config, input, out),
        Command::Train { input, adapter } => commands::train_cmd(config, input, adapter.as_deref(), out),
        Command::Score { input, models: m, monitor } => {
            commands::score(config, &models(m), input, monitor.as_deref(), out)
        }
        Command::ExtractDfa { input, models: m, from } => commands::extract(config, &models(m), input, *from, out),
        Command::Report { dfa, .. } => commands::report(config, dfa, out),
        Command::Evaluate { input, models: m, adapter } => {
            commands::evaluate(config, &models(m), input, adapter.as_deref(), out)
        }
        Command::Attribute { bundle, harm } => commands::attribute(config, bundle, harm, out),
        Command::DeltaKappa { scenario, addition, bound } => {
            commands::delta_kappa(config, scenario.as_deref(), addition, *bound, out)
        }
        Command::Readiness { bundle } => commands::readiness(bundle, out),
    }
}

fn run(cli: &Cli) -> provenance_core::Result<u8> {
    let started = now_ms();
    let threshold = match &cli.command {
        Command::Report { threshold, .. } => *threshold,
        _ => None,
    };
    let overrides = Overrides {
        seed: cli.seed,
        horizon: cli.horizon,
        threshold,
    };
    let config = RunConfig::load(cli.config.as_deref(), &overrides);
    let result = config.as_ref().map_err(clone_error).and_then(|c| execute(cli, c));
    let ran = result.as_ref().ok();
    let mut inputs: Vec<&Path> = ran.map(|r| r.inputs.iter().map(PathBuf::as_path).collect()).unwrap_or_default();
    inputs.extend(cli.config.as_deref());
    let manifest = RunManifest {
        command: cli.command.name().into(),
        arguments: std::env::args().skip(1).collect(),
        config: match &config {
            Ok(c) => serde_json::to_value(c).map_err(|e| Error::Json {
                context: "config echo".into(),
                source: e,
            })?,
            Err(_) => serde_json::Value::Null,
        },
        seeds: ran.map(|r| r.seeds.clone()).unwrap_or_default(),
        inputs: hash_paths(inputs)?,
        outputs: hash_paths(ran.into_iter().flat_map(|r| r.outputs.iter().map(PathBuf::as_path)))?,
        exit_code: match &result {
            Ok(r) => r.verdict,
            Err(e) => exit_code(e),
        },
        error: result.as_ref().err().map(ToString::to_string),
        started_unix_ms: started,
        finished_unix_ms: now_ms(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        previous: None,
        hash: String::new(),
    }
    .append(&cli.out)?;
    log::info!("run manifest {}", manifest.hash);
    result.map(|r| r.verdict)
}

/// Config errors are reported twice: in the manifest and on exit.
fn clone_error(e: &Error) -> Error {
    match e {
        Error::Toml { context, source } => Error::Toml {
            context: context.clone(),
            source: source.clone(),
        },
        Error::Io { path, source } => Error::Io {
            path: path.clone(),
            source: std::io::Error::new(source.kind(), source.to_string()),
        },
        other => Error::Config(other.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
