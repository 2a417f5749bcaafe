use std::path::PathBuf;
use std::process::ExitCode;

use aen_cli::{run, Command, Overrides, RunConfig};
use aen_core::metrics::MetricPreset;
use aen_core::supervision::DurationPolicy;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "aen", version, about = "Agent-environment temporal action proposal pipeline")]
struct Cli {
    /// JSON run config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Skip failing videos and exit with status 2 instead of 1.
    #[arg(long, global = true)]
    keep_going: bool,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Activitynet,
    Thumos,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    Full,
    Half,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic corpus with oracle score grids.
    Synth {
        #[arg(long)]
        n_videos: Option<usize>,
        #[arg(long)]
        max_actions: Option<usize>,
        #[arg(long, value_enum)]
        duration: Option<Policy>,
    },
    /// Compute fused snippet features for every manifest.
    Featurize {
        #[arg(long)]
        manifests: Option<PathBuf>,
        /// Directory of backbone feature maps named in the manifests.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Write boundary and duration labels for every manifest.
    Labels {
        #[arg(long)]
        manifests: Option<PathBuf>,
        #[arg(long, value_enum)]
        duration: Option<Policy>,
    },
    /// Turn score grids into ranked proposals.
    Infer {
        #[arg(long)]
        manifests: Option<PathBuf>,
        #[arg(long)]
        grids: Option<PathBuf>,
    },
    /// Compute AR@AN and AUC of proposals against manifest annotations.
    Eval {
        #[arg(long)]
        manifests: Option<PathBuf>,
        #[arg(long)]
        proposals: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
    },
}

fn policy(p: Option<Policy>) -> Option<DurationPolicy> {
    p.map(|p| match p {
        Policy::Full => DurationPolicy::Full,
        Policy::Half => DurationPolicy::Half,
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut o = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        keep_going: cli.keep_going,
        out_dir: cli.out,
        ..Overrides::default()
    };
    let command = match cli.command {
        Cmd::Synth {
            n_videos,
            max_actions,
            duration,
        } => {
            o.n_videos = n_videos;
            o.max_actions = max_actions;
            o.duration_policy = policy(duration);
            Command::Synth
        }
        Cmd::Featurize {
            manifests,
            features,
            weights,
        } => {
            o.manifest_dir = manifests;
            o.feature_dir = features;
            o.weights_dir = weights;
            Command::Featurize
        }
        Cmd::Labels { manifests, duration } => {
            o.manifest_dir = manifests;
            o.duration_policy = policy(duration);
            Command::Labels
        }
        Cmd::Infer { manifests, grids } => {
            o.manifest_dir = manifests;
            o.grids_dir = grids;
            Command::Infer
        }
        Cmd::Eval {
            manifests,
            proposals,
            preset,
        } => {
            o.manifest_dir = manifests;
            o.proposals_dir = proposals;
            o.metric_preset = preset.map(|p| match p {
                Preset::Activitynet => MetricPreset::ActivityNet,
                Preset::Thumos => MetricPreset::Thumos,
            });
            Command::Eval
        }
    };
    let mut cfg = match &cli.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("aen: {e}");
                return ExitCode::from(1);
            }
        },
        None => RunConfig::default(),
    };
    cfg.apply(&o);
    let summary = run(command, &cfg);
    for f in &summary.failed {
        eprintln!("aen {}: {}: {}", command.name(), f.video_id, f.error);
    }
    if let Some(e) = &summary.error {
        eprintln!("aen {}: {e}", command.name());
    }
    println!(
        "{}: {} processed, {} failed, {} warnings",
        command.name(),
        summary.processed.len(),
        summary.failed.len(),
        summary.warnings.len()
    );
    ExitCode::from(summary.status.code() as u8)
}
