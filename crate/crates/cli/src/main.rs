//! `fpp-lab`: first-passage percolation experiments from TOML configs.
//!
//! Each subcommand runs one experiment kind and writes `report.json`,
//! `records.jsonl`, and kind-specific artifacts into the output
//! directory.  Exit codes: 0 on success, 1 for configuration problems,
//! 2 when the run itself fails an invariant or an I/O step.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use fpp_core::FppError;
use fpp_lab::config::{ExperimentConfig, ExperimentKind, ProxyConfig};
use fpp_lab::{experiments, report};

#[derive(Parser)]
#[command(name = "fpp-lab", version, about = "First-passage percolation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the replica count from the config.
    #[arg(long)]
    replicas: Option<u64>,
    /// Override the worker-thread count from the config.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for report.json, records.jsonl, and artifacts.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ProxyArgs {
    /// Override the coexistence proxy: "boundary" or "volume".
    #[arg(long)]
    proxy: Option<String>,
    /// Cell-volume fraction for the volume proxy.
    #[arg(long)]
    theta: Option<f64>,
}

#[derive(Args)]
struct CompetitionArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    proxy: ProxyArgs,
}

#[derive(Subcommand)]
enum Command {
    /// Sample environments and compare realized weights to the family.
    Env(CommonArgs),
    /// Metric checks: oracle, axioms, tree ends, coalescence.
    Metric(CommonArgs),
    /// Limit-shape estimate with side count and support line.
    Shape(CommonArgs),
    /// Busemann linearity fit over ring probes.
    Busemann(CommonArgs),
    /// Multi-type competition from explicit sources.
    Compete(CompetitionArgs),
    /// Placement-driven k-type coexistence and disjoint geodesics.
    Duality(CompetitionArgs),
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::Env(_) => ExperimentKind::Env,
            Command::Metric(_) => ExperimentKind::Metric,
            Command::Shape(_) => ExperimentKind::Shape,
            Command::Busemann(_) => ExperimentKind::Busemann,
            Command::Compete(_) => ExperimentKind::Compete,
            Command::Duality(_) => ExperimentKind::Duality,
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Env(c) | Command::Metric(c) | Command::Shape(c) | Command::Busemann(c) => c,
            Command::Compete(c) | Command::Duality(c) => &c.common,
        }
    }

    fn proxy(&self) -> Option<&ProxyArgs> {
        match self {
            Command::Compete(c) | Command::Duality(c) => Some(&c.proxy),
            _ => None,
        }
    }
}

fn parse_proxy_override(args: &ProxyArgs) -> Result<Option<ProxyConfig>, FppError> {
    match (args.proxy.as_deref(), args.theta) {
        (None, None) => Ok(None),
        (Some("boundary"), None) => Ok(Some(ProxyConfig::Boundary)),
        (Some("boundary"), Some(_)) => {
            Err(FppError::Config("--theta only applies to the volume proxy".into()))
        }
        (Some("volume"), Some(theta)) => Ok(Some(ProxyConfig::Volume { theta })),
        (Some("volume"), None) => {
            Err(FppError::Config("the volume proxy needs --theta".into()))
        }
        (Some(other), _) => Err(FppError::Config(format!(
            "unknown proxy {other:?}; expected \"boundary\" or \"volume\""
        ))),
        (None, Some(_)) => Err(FppError::Config("--theta needs --proxy volume".into())),
    }
}

/// Loads the config, applies CLI overrides, and revalidates.
fn effective_config(command: &Command) -> Result<ExperimentConfig, FppError> {
    let common = command.common();
    let mut config = ExperimentConfig::load(&common.config)?;
    if config.kind != command.kind() {
        return Err(FppError::Config(format!(
            "config kind {} does not match the {} subcommand",
            config.kind.name(),
            command.kind().name()
        )));
    }
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(replicas) = common.replicas {
        config.replicas = replicas;
    }
    if let Some(workers) = common.workers {
        config.workers = workers;
    }
    if let Some(args) = command.proxy() {
        if let Some(proxy) = parse_proxy_override(args)? {
            match (&config.kind, &mut config.compete, &mut config.duality) {
                (ExperimentKind::Compete, Some(section), _) => section.proxy = proxy,
                (ExperimentKind::Duality, _, Some(section)) => section.proxy = proxy,
                _ => {
                    return Err(FppError::Config(
                        "proxy override needs the matching config section".into(),
                    ))
                }
            }
        }
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match effective_config(&cli.command) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("fpp-lab: {e}");
            return ExitCode::from(1);
        }
    };
    let started = Instant::now();
    let output = match experiments::run_experiment(&config) {
        Ok(output) => output,
        Err(e) => {
            eprintln!("fpp-lab: {e}");
            return ExitCode::from(2);
        }
    };
    let wall = started.elapsed().as_secs_f64();
    let out_dir = &cli.command.common().out;
    if let Err(e) = report::write_report(out_dir, &config, &output, wall) {
        eprintln!("fpp-lab: {e}");
        return ExitCode::from(2);
    }
    println!(
        "{}: {} replicas in {:.2}s -> {}",
        config.kind.name(),
        output.replicas_aggregated,
        wall,
        out_dir.join("report.json").display()
    );
    ExitCode::SUCCESS
}
