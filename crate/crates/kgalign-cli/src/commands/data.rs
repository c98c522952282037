//! Dataset-facing commands: synth, ingest, export-embeddings.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use kgalign::kg::{known_stats_for, summarize};
use kgalign::synthetic::{write_dataset, SyntheticConfig};
use serde::Serialize;

use crate::pipeline::{self, ensure_parent, Paths};
use crate::Ctx;

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Entity count (20..=216).
    #[arg(long, default_value_t = 200)]
    entities: usize,
}

pub fn synth(ctx: &mut Ctx, args: SynthArgs) -> anyhow::Result<()> {
    write_dataset(
        &args.out,
        &SyntheticConfig {
            entities: args.entities,
            seed: ctx.cfg.seed,
        },
    )?;
    println!(
        "wrote planted dataset with {} entities to {}",
        args.entities,
        args.out.display()
    );
    Ok(())
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Dataset directory (train/valid/test TSVs).
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Add valid/test entities missing from train instead of rejecting.
    #[arg(long)]
    allow_unseen: bool,
}

#[derive(Serialize)]
struct IngestReport {
    summary: kgalign::kg::LoadSummary,
    known_dataset: Option<KnownCheck>,
}

#[derive(Serialize)]
struct KnownCheck {
    matches: bool,
    expected: kgalign::kg::LoadSummary,
}

pub fn ingest(ctx: &mut Ctx, args: IngestArgs) -> anyhow::Result<()> {
    if args.allow_unseen {
        ctx.cfg.allow_unseen = true;
    }
    let dir = pipeline::dataset_dir(&ctx.cfg, args.data.as_deref())?;
    let (kg, split) = pipeline::load_kg(&ctx.cfg, args.data.as_deref())?;
    let summary = summarize(&kg, &split);
    println!(
        "entities {}  relations {}  train {}  valid {}  test {}",
        summary.entities, summary.relations, summary.train, summary.valid, summary.test
    );

    let known = known_stats_for(&dir.to_string_lossy()).map(|expected| {
        let matches = *expected == summary;
        if matches {
            println!("counts match the published statistics for this dataset");
        } else {
            println!(
                "warning: counts differ from published statistics (expected entities {}, relations {}, train {})",
                expected.entities, expected.relations, expected.train
            );
        }
        KnownCheck {
            matches,
            expected: *expected,
        }
    });

    let mut manifest = ctx.manifest("ingest");
    manifest.input_file("dataset", &dir)?;
    let report_path = Paths::report(&ctx.run_dir, "ingest", "json");
    ensure_parent(&report_path)?;
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&IngestReport {
            summary,
            known_dataset: known,
        })?,
    )?;
    manifest.artifact(&report_path);
    manifest.write()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExportEmbeddingsArgs {
    /// Output CSV path (defaults to <run-dir>/embeddings.csv).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

pub fn export_embeddings(ctx: &mut Ctx, args: ExportEmbeddingsArgs) -> anyhow::Result<()> {
    let ckpt = pipeline::load_checkpoint(&ctx.run_dir)?;
    let (kg_dir, surfaces) = match &ctx.cfg.dataset_dir {
        // Surfaces come from the dataset when available; otherwise rows are
        // exported by dense index.
        Some(dir) if dir.is_dir() => {
            let (kg, _) = pipeline::load_kg(&ctx.cfg, None)?;
            (
                Some(dir.clone()),
                kg.entities().map(|e| kg.entity_surface(e).to_string()).collect(),
            )
        }
        _ => (None, Vec::new()),
    };
    let out = args
        .out
        .unwrap_or_else(|| ctx.run_dir.join("embeddings.csv"));
    ensure_parent(&out)?;
    let table = &ckpt.embeddings;
    let mut w = std::io::BufWriter::new(std::fs::File::create(&out)?);
    for r in 0..table.rows() {
        let id = surfaces.get(r).cloned().unwrap_or_else(|| r.to_string());
        write!(w, "{id}")?;
        for v in table.row(r) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    println!(
        "wrote {} rows x (1 id + {} floats) to {}",
        table.rows(),
        table.cols(),
        out.display()
    );

    let mut manifest = ctx.manifest("export-embeddings");
    if let Some(dir) = kg_dir {
        manifest.input_file("dataset", &dir)?;
    }
    manifest.artifact(&out);
    manifest.write()?;
    Ok(())
}
