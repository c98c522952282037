//! Training-side commands: align, extract-pairs, tune.

use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use kgalign::alignment::{loss_log_csv, train_alignment};
use kgalign::bridge::{tune_adapter, KnowledgeAdapter, RenderedPrompt, TuningPrompt};
use kgalign::instruction::{build_extraction_prompt, parse_extraction};
use kgalign::kg::{build_node_pairs, inject_description_noise, NodeDescriptionPair, SubgraphDocumentPair};
use serde::{Deserialize, Serialize};

use crate::manifest::sha256_hex;
use crate::pipeline::{self, ensure_parent, Paths};
use crate::{AlignOverrides, BackendOverrides, Ctx, UsageError};

#[derive(Args, Debug)]
pub struct AlignArgs {
    /// Dataset directory.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    #[command(flatten)]
    overrides: AlignOverrides,
    /// Subgraph/document pairs from extract-pairs (enables the global level).
    #[arg(long, value_name = "FILE")]
    global_pairs: Option<PathBuf>,
    /// Train on entity names instead of description paragraphs.
    #[arg(long)]
    name_only: bool,
    /// Replace this fraction of training descriptions with paragraphs from
    /// other entities before training.
    #[arg(long, value_name = "RATE")]
    noise_rate: Option<f64>,
}

fn local_pairs(
    kg: &kgalign::kg::KnowledgeGraph,
    name_only: bool,
    noise_rate: Option<f64>,
    seed: u64,
) -> anyhow::Result<Vec<NodeDescriptionPair>> {
    let mut pairs = if name_only {
        kg.entities()
            .map(|e| NodeDescriptionPair {
                entity: e,
                text: kg.name_of(e).to_string(),
            })
            .collect()
    } else {
        build_node_pairs(kg)
    };
    if let Some(rate) = noise_rate {
        let corpus: Vec<String> = pairs.iter().map(|p| p.text.clone()).collect();
        pairs = inject_description_noise(&pairs, rate, &corpus, seed)?;
    }
    Ok(pairs)
}

pub fn read_global_pairs(path: &std::path::Path) -> anyhow::Result<Vec<SubgraphDocumentPair>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        out.push(serde_json::from_str(line)?);
    }
    Ok(out)
}

pub fn align(ctx: &mut Ctx, args: AlignArgs) -> anyhow::Result<()> {
    args.overrides.apply(&mut ctx.cfg.alignment);
    let data_dir = pipeline::dataset_dir(&ctx.cfg, args.data.as_deref())?;
    let (kg, _split) = pipeline::load_kg(&ctx.cfg, args.data.as_deref())?;
    let pairs = local_pairs(&kg, args.name_only, args.noise_rate, ctx.cfg.seed)?;
    let globals = match &args.global_pairs {
        Some(path) => {
            pipeline::require_exists(path, "extract-pairs")?;
            read_global_pairs(path)?
        }
        None => Vec::new(),
    };

    let align_cfg = ctx.cfg.alignment.to_alignment_config(ctx.cfg.seed);
    let started = std::time::Instant::now();
    let ckpt = train_alignment(&kg, &pairs, &globals, &align_cfg)?;
    println!(
        "trained alignment: {} local epochs, {} global epochs in {:.1}s",
        ckpt.meta.local_epochs_run,
        ckpt.meta.global_epochs_run,
        started.elapsed().as_secs_f64()
    );

    let ckpt_dir = Paths::align_checkpoint(&ctx.run_dir);
    ckpt.save(&ckpt_dir)?;
    let loss_path = Paths::losses(&ctx.run_dir, "alignment");
    ensure_parent(&loss_path)?;
    std::fs::write(&loss_path, loss_log_csv(&ckpt.meta.loss_log))?;

    let mut manifest = ctx.manifest("align");
    manifest.input_file("dataset", &data_dir)?;
    if let Some(p) = &args.global_pairs {
        manifest.input_file("global_pairs", p)?;
    }
    for file in ["params.bin", "vocab.tsv", "meta.json"] {
        manifest.artifact(&ckpt_dir.join(file));
    }
    manifest.artifact(&loss_path);
    manifest.write()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExtractPairsArgs {
    /// UTF-8 document file, one document per line (\n escaped as \\n).
    #[arg(long, value_name = "FILE")]
    documents: PathBuf,
    #[command(flatten)]
    backend: BackendOverrides,
    /// Fail instead of calling the backend when a response is not cached.
    #[arg(long)]
    cache_only: bool,
}

#[derive(Serialize, Deserialize)]
struct CachedResponse {
    prompt_sha256: String,
    response: String,
}

pub fn extract_pairs(ctx: &mut Ctx, args: ExtractPairsArgs) -> anyhow::Result<()> {
    args.backend.apply(&mut ctx.cfg.backend);
    pipeline::require_exists(&args.documents, "(provide a documents file)")?;
    let backend = pipeline::build_backend(&ctx.cfg, ctx.cfg.seed, None, None)?;

    let cache_dir = Paths::extraction_cache(&ctx.run_dir);
    std::fs::create_dir_all(&cache_dir)?;
    let text = std::fs::read_to_string(&args.documents)?;
    let mut pairs: Vec<SubgraphDocumentPair> = Vec::new();
    let (mut cached, mut fetched, mut skipped_tuples) = (0usize, 0usize, 0usize);
    for (i, line) in text.lines().enumerate() {
        let document = line.replace("\\n", "\n");
        if document.trim().is_empty() {
            continue;
        }
        let prompt = build_extraction_prompt(&document)?;
        let key = sha256_hex(prompt.as_bytes());
        let cache_path = cache_dir.join(format!("{key}.json"));
        let response = if cache_path.is_file() {
            cached += 1;
            let entry: CachedResponse = serde_json::from_str(&std::fs::read_to_string(&cache_path)?)?;
            entry.response
        } else if args.cache_only {
            return Err(UsageError(format!(
                "no cached response for document on line {} (cache key {key}); rerun without --cache-only",
                i + 1
            ))
            .into());
        } else {
            let generations =
                backend.generate(&RenderedPrompt::new("", prompt.clone()), &[], 1)?;
            let response = generations
                .first()
                .map(|g| g.text.clone())
                .unwrap_or_default();
            std::fs::write(
                &cache_path,
                serde_json::to_string_pretty(&CachedResponse {
                    prompt_sha256: key.clone(),
                    response: response.clone(),
                })?,
            )?;
            fetched += 1;
            response
        };
        match parse_extraction(&response) {
            Ok(parsed) => {
                skipped_tuples += parsed.skipped;
                let subgraph = kgalign::graph::subgraph_from_triples(&parsed.tuples)?;
                pairs.push(SubgraphDocumentPair { subgraph, document });
            }
            Err(e) => {
                eprintln!("line {}: extraction produced no usable tuples ({e})", i + 1);
            }
        }
    }
    if pairs.is_empty() {
        return Err(UsageError("no documents produced any subgraph/document pairs".into()).into());
    }

    let out_path = Paths::global_pairs(&ctx.run_dir);
    ensure_parent(&out_path)?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(&out_path)?);
    for p in &pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    println!(
        "{} pairs ({cached} cached, {fetched} fetched, {skipped_tuples} malformed tuples skipped)",
        pairs.len()
    );

    let mut manifest = ctx.manifest("extract-pairs");
    manifest.input_file("documents", &args.documents)?;
    manifest.artifact(&out_path);
    manifest.write()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct TuneArgs {
    /// Prompt JSONL (defaults to <run-dir>/prompts/tc_train.jsonl).
    #[arg(long, value_name = "FILE")]
    prompts: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendOverrides,
    /// Tuning epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Tuning batch size.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Tuning learning rate.
    #[arg(long)]
    lr: Option<f32>,
    /// Warmup ratio of total steps.
    #[arg(long)]
    warmup_ratio: Option<f32>,
}

pub fn tune(ctx: &mut Ctx, args: TuneArgs) -> anyhow::Result<()> {
    args.backend.apply(&mut ctx.cfg.backend);
    if let Some(v) = args.epochs {
        ctx.cfg.tuning.epochs = v;
    }
    if let Some(v) = args.batch_size {
        ctx.cfg.tuning.batch_size = v;
    }
    if let Some(v) = args.lr {
        ctx.cfg.tuning.lr = v;
    }
    if let Some(v) = args.warmup_ratio {
        ctx.cfg.tuning.warmup_ratio = v;
    }

    let prompts_path = args
        .prompts
        .unwrap_or_else(|| Paths::prompts(&ctx.run_dir, "tc", "train"));
    let records = pipeline::read_prompt_records(&prompts_path)?;
    let ckpt = pipeline::load_checkpoint(&ctx.run_dir)?;
    let backend = pipeline::build_backend(&ctx.cfg, ctx.cfg.seed, None, None)?;
    if !backend.supports_score() {
        return Err(UsageError(format!(
            "backend {:?} cannot score prompts; tuning needs the mock backend",
            backend.name()
        ))
        .into());
    }

    let mut tuning_prompts = Vec::with_capacity(records.len());
    for r in &records {
        let target = r.target.clone().ok_or_else(|| {
            UsageError("tuning prompts must carry gold targets; rebuild with build-prompts".into())
        })?;
        let slot_embeddings: Vec<Vec<f32>> = r
            .slot_entities
            .iter()
            .map(|e| ckpt.embedding_of(*e).to_vec())
            .collect();
        tuning_prompts.push(TuningPrompt {
            prompt: RenderedPrompt::new(r.system.clone(), r.user_text.clone()),
            slot_embeddings,
            target,
        });
    }

    let mut adapter = KnowledgeAdapter::init(
        ckpt.config.encoder.dim,
        backend.soft_dim(),
        ctx.cfg.seed,
    );
    let tune_cfg = ctx.cfg.tuning.to_tune_config(ctx.cfg.seed);
    let report = tune_adapter(&tuning_prompts, &mut adapter, backend.as_ref(), &tune_cfg)?;
    println!(
        "tuned adapter over {} prompts: loss {:.4} -> {:.4}",
        tuning_prompts.len(),
        report.initial_loss,
        report.final_loss
    );

    let adapter_path = Paths::adapter(&ctx.run_dir);
    ensure_parent(&adapter_path)?;
    adapter.save(&adapter_path)?;
    let loss_path = Paths::losses(&ctx.run_dir, "tuning");
    ensure_parent(&loss_path)?;
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in report.epoch_losses.iter().enumerate() {
        csv.push_str(&format!("{i},{l}\n"));
    }
    std::fs::write(&loss_path, csv)?;
    let report_path = Paths::report(&ctx.run_dir, "tune", "json");
    ensure_parent(&report_path)?;
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&serde_json::json!({
            "prompts": tuning_prompts.len(),
            "initial_loss": report.initial_loss,
            "final_loss": report.final_loss,
            "epoch_losses": report.epoch_losses,
        }))?,
    )?;

    let mut manifest = ctx.manifest("tune");
    manifest.input_file("prompts", &prompts_path)?;
    manifest.artifact(&adapter_path);
    manifest.artifact(&loss_path);
    manifest.artifact(&report_path);
    manifest.write()?;
    Ok(())
}
