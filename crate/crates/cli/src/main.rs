//! `ssc`: describe, match and evaluate labeled LiDAR scans.
//!
//! Machine-readable results go to stdout; logs and errors go to stderr. Set
//! `RUST_LOG=info` for progress messages.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ssc_core::synthetic::{OracleTransform, PlantedSequenceSpec, SceneSpec};

use commands::{BenchSpec, PairSpec};
use config::{DatasetArgs, MatchArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "ssc", version, about = "Semantic scan context place recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode one labeled scan and print occupancy statistics.
    Describe {
        scan: PathBuf,
        labels: PathBuf,
        /// Descriptor file; a `.csv` extension writes text. Defaults to the
        /// scan path with extension `.ssc`.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Estimate the relative pose of two labeled scans and score them.
    Match {
        scan_a: PathBuf,
        labels_a: PathBuf,
        scan_b: PathBuf,
        labels_b: PathBuf,
        #[command(flatten)]
        matching: MatchArgs,
    },
    /// Sample labeled pairs from a sequence, score them and write the report.
    Eval {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        matching: MatchArgs,
        /// Report directory (default `ssc-eval`).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export synthetic scans with known ground truth.
    #[command(subcommand)]
    Synth(SynthCommand),
    /// Time description, retrieval and pose estimation.
    Bench {
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        matching: MatchArgs,
        #[arg(long, default_value_t = 5)]
        scans: usize,
        /// Operations timed per stage.
        #[arg(long, default_value_t = 100)]
        iterations: usize,
        /// Also write the timing table to this CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
enum SynthCommand {
    /// One scene `a` and a moved copy `b`, plus `gt.json`.
    Pair {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        dx: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        dy: f64,
        /// Rotation in degrees.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        theta: f64,
        /// Gaussian noise sigma in meters.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        /// Fraction of points dropped from `b`, at most 0.9.
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
        /// Dense scene of roughly 120k points.
        #[arg(long)]
        scan_sized: bool,
    },
    /// A 20-frame drive with a same-direction and a reverse revisit, in the
    /// SemanticKITTI directory layout.
    Sequence {
        /// Dataset root to create.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "00")]
        sequence: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0.0)]
        dropout: f64,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Describe {
            scan,
            labels,
            out,
            matching,
        } => {
            let cfg = RunConfig::resolve(&matching, None, None)?;
            commands::cmd_describe(&scan, &labels, out, &cfg)
        }
        Command::Match {
            scan_a,
            labels_a,
            scan_b,
            labels_b,
            matching,
        } => {
            let cfg = RunConfig::resolve(&matching, None, None)?;
            commands::cmd_match((&scan_a, &labels_a), (&scan_b, &labels_b), &cfg)
        }
        Command::Eval { dataset, matching, out } => {
            let cfg = RunConfig::resolve(&matching, Some(&dataset), out)?;
            commands::cmd_eval(&cfg)
        }
        Command::Synth(SynthCommand::Pair {
            out,
            seed,
            dx,
            dy,
            theta,
            noise,
            dropout,
            scan_sized,
        }) => {
            let scene = if scan_sized {
                SceneSpec::scan_sized(seed)
            } else {
                SceneSpec::default().with_seed(seed)
            };
            let transform = OracleTransform {
                noise_sigma: noise,
                dropout_rate: dropout,
                ..OracleTransform::rigid(dx, dy, theta)
            };
            commands::cmd_synth_pair(&PairSpec { scene, transform }, &out)
        }
        Command::Synth(SynthCommand::Sequence {
            out,
            sequence,
            seed,
            noise,
            dropout,
        }) => {
            let spec = PlantedSequenceSpec {
                noise_sigma: noise,
                dropout_rate: dropout,
                seed,
                ..PlantedSequenceSpec::default()
            };
            commands::cmd_synth_sequence(&spec, &out, &sequence)
        }
        Command::Bench {
            dataset,
            matching,
            scans,
            iterations,
            out,
        } => {
            let cfg = RunConfig::resolve(&matching, Some(&dataset), out)?;
            commands::cmd_bench(&BenchSpec { scans, iterations }, &cfg)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
