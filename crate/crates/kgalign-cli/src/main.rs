//! `kgalign`: end-to-end pipeline for graph/text embedding alignment,
//! instruction assembly, adapter tuning, and KGC evaluation.

mod commands;
mod config;
mod manifest;
mod pipeline;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Errors caused by how the tool was invoked (missing inputs, contradictory
/// flags); they exit with code 2 instead of 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Parser)]
#[command(
    name = "kgalign",
    version,
    about = "Knowledge-graph alignment, instruction tuning and evaluation pipeline",
    propagate_version = true
)]
struct Cli {
    /// JSON config file; flags override individual fields.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Run directory where artifacts and manifests are written.
    #[arg(long, global = true, value_name = "DIR", default_value = "run")]
    run_dir: PathBuf,

    /// Master seed; every random stream derives from it.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a dataset directory, validate it, and report statistics.
    Ingest(commands::IngestArgs),
    /// Train graph/text alignment and freeze the entity embedding table.
    Align(commands::AlignArgs),
    /// Turn documents into subgraph/document pairs via backend extraction.
    ExtractPairs(commands::ExtractPairsArgs),
    /// Render task prompts with graph-embedding slots as JSON lines.
    BuildPrompts(commands::BuildPromptsArgs),
    /// Tune the knowledge adapter against a score-capable backend.
    Tune(commands::TuneArgs),
    /// Evaluate triple classification.
    EvalTc(commands::EvalTcArgs),
    /// Evaluate link prediction (top-3 generation).
    EvalLp(commands::EvalLpArgs),
    /// Build the in-context example candidate pool.
    IclBuild(commands::IclBuildArgs),
    /// Description-noise robustness sweep over retrieval quality.
    Robustness(commands::RobustnessArgs),
    /// Export the frozen entity embedding table as CSV.
    ExportEmbeddings(commands::ExportEmbeddingsArgs),
    /// Generate a small planted-correspondence dataset (demo/test input).
    Synth(commands::SynthArgs),
}

/// Flags shared by stages that override alignment hyperparameters.
#[derive(Args, Debug, Clone, Default)]
pub struct AlignOverrides {
    /// Embedding dimension d.
    #[arg(long)]
    dim: Option<usize>,
    /// Encoder depth.
    #[arg(long)]
    layers: Option<usize>,
    /// Attention heads.
    #[arg(long)]
    heads: Option<usize>,
    /// Dropout rate during training.
    #[arg(long)]
    dropout: Option<f32>,
    /// Alignment learning rate.
    #[arg(long)]
    lr: Option<f32>,
    /// Local-phase epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Global-phase epochs.
    #[arg(long)]
    global_epochs: Option<usize>,
    /// Contrastive batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Joint local+global objective instead of sequential phases.
    #[arg(long, conflicts_with = "sequential")]
    joint: bool,
    /// Sequential phases (the default schedule).
    #[arg(long, conflicts_with = "joint")]
    sequential: bool,
    /// Maximum text length seen by the text encoder.
    #[arg(long)]
    max_text_len: Option<usize>,
}

impl AlignOverrides {
    fn apply(&self, section: &mut config::AlignmentSection) {
        if let Some(v) = self.dim {
            section.dim = v;
        }
        if let Some(v) = self.layers {
            section.layers = v;
        }
        if let Some(v) = self.heads {
            section.heads = v;
        }
        if let Some(v) = self.dropout {
            section.dropout = v;
        }
        if let Some(v) = self.lr {
            section.lr = v;
        }
        if let Some(v) = self.epochs {
            section.local_epochs = v;
        }
        if let Some(v) = self.global_epochs {
            section.global_epochs = v;
        }
        if let Some(v) = self.batch_size {
            section.batch_size = v;
        }
        if let Some(v) = self.max_text_len {
            section.max_text_len = v;
        }
        if self.joint {
            section.joint = true;
        }
        if self.sequential {
            section.joint = false;
        }
    }
}

/// Flags that override backend selection.
#[derive(Args, Debug, Clone, Default)]
pub struct BackendOverrides {
    /// Backend kind.
    #[arg(long, value_enum)]
    backend: Option<config::BackendKind>,
    /// Chat-completions endpoint URL (http backend).
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name sent with each request (http backend).
    #[arg(long)]
    model: Option<String>,
}

impl BackendOverrides {
    fn apply(&self, section: &mut config::BackendSection) {
        if let Some(v) = self.backend {
            section.kind = v;
        }
        if let Some(v) = &self.endpoint {
            section.endpoint = v.clone();
        }
        if let Some(v) = &self.model {
            section.model = v.clone();
        }
    }
}

pub struct Ctx {
    pub cfg: config::RunConfig,
    pub run_dir: PathBuf,
}

impl Ctx {
    fn manifest(&self, command: &str) -> manifest::ManifestBuilder {
        manifest::ManifestBuilder::new(
            &self.run_dir,
            command,
            self.cfg.seed,
            &self.cfg.canonical_json(),
        )
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = config::RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(&cli.run_dir)?;
    let mut ctx = Ctx {
        cfg,
        run_dir: cli.run_dir,
    };
    match cli.command {
        Command::Ingest(args) => commands::ingest(&mut ctx, args),
        Command::Align(args) => commands::align(&mut ctx, args),
        Command::ExtractPairs(args) => commands::extract_pairs(&mut ctx, args),
        Command::BuildPrompts(args) => commands::build_prompts(&mut ctx, args),
        Command::Tune(args) => commands::tune(&mut ctx, args),
        Command::EvalTc(args) => commands::eval_tc(&mut ctx, args),
        Command::EvalLp(args) => commands::eval_lp(&mut ctx, args),
        Command::IclBuild(args) => commands::icl_build(&mut ctx, args),
        Command::Robustness(args) => commands::robustness(&mut ctx, args),
        Command::ExportEmbeddings(args) => commands::export_embeddings(&mut ctx, args),
        Command::Synth(args) => commands::synth(&mut ctx, args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        let code = if e.downcast_ref::<UsageError>().is_some() {
            2
        } else {
            1
        };
        std::process::exit(code);
    }
}
