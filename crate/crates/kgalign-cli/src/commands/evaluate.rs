//! Evaluation commands: eval-tc, eval-lp.

use std::path::PathBuf;

use clap::Args;
use kgalign::bridge::{predict_lp, predict_tc, NameIndex, RenderedPrompt};
use kgalign::eval::{lp_metrics, tc_metrics, GoldEntity, MRR_CONVENTION, REFERENCE_BASELINES};
use kgalign::instruction::{prepend_icl_examples, retrieve_icl, IclPool};
use serde::Serialize;

use crate::pipeline::{self, ensure_parent, Paths};
use crate::{BackendOverrides, Ctx, UsageError};

#[derive(Serialize)]
struct ReportHeader {
    task: &'static str,
    split: String,
    backend: String,
    mrr_convention: &'static str,
    /// Published single-model results for orientation only.
    reference_baselines: Vec<(String, String, f64)>,
}

fn header(task: &'static str, split: &str, backend: &str) -> ReportHeader {
    ReportHeader {
        task,
        split: split.to_string(),
        backend: backend.to_string(),
        mrr_convention: MRR_CONVENTION,
        reference_baselines: REFERENCE_BASELINES
            .iter()
            .map(|(d, m, v)| (d.to_string(), m.to_string(), *v))
            .collect(),
    }
}

#[derive(Serialize)]
struct ReportFile<T: Serialize> {
    header: ReportHeader,
    report: T,
}

fn csv_with_notes(table: String) -> String {
    format!("{table}# mrr convention: {MRR_CONVENTION}\n")
}

#[derive(Args, Debug)]
pub struct EvalTcArgs {
    /// Prompt JSONL (defaults to <run-dir>/prompts/tc_<split>.jsonl).
    #[arg(long, value_name = "FILE")]
    prompts: Option<PathBuf>,
    /// Split label used for default paths and reports.
    #[arg(long, default_value = "test")]
    split: String,
    #[command(flatten)]
    backend: BackendOverrides,
    /// Pin mock generations to the gold targets, verifying the evaluation
    /// path end to end.
    #[arg(long)]
    mock_oracle: bool,
}

pub fn eval_tc(ctx: &mut Ctx, args: EvalTcArgs) -> anyhow::Result<()> {
    args.backend.apply(&mut ctx.cfg.backend);
    let prompts_path = args
        .prompts
        .unwrap_or_else(|| Paths::prompts(&ctx.run_dir, "tc", &args.split));
    let records = pipeline::read_prompt_records(&prompts_path)?;
    let ckpt = pipeline::load_checkpoint(&ctx.run_dir)?;

    let oracle = args.mock_oracle.then(|| {
        records
            .iter()
            .filter_map(|r| {
                r.target
                    .clone()
                    .map(|t| (RenderedPrompt::new(r.system.clone(), r.user_text.clone()).combined(), t))
            })
            .collect::<Vec<_>>()
    });
    let backend = pipeline::build_backend(&ctx.cfg, ctx.cfg.seed, None, oracle)?;
    let adapter = pipeline::load_adapter(&ctx.run_dir, ckpt.config.encoder.dim, backend.soft_dim())?;

    let mut predictions = Vec::with_capacity(records.len());
    let mut gold = Vec::with_capacity(records.len());
    let mut parse_failures = 0usize;
    for r in &records {
        let target = r.target.as_deref().ok_or_else(|| {
            UsageError("classification prompts need gold targets for scoring".into())
        })?;
        gold.push(match target {
            "True" => true,
            "False" => false,
            other => {
                return Err(UsageError(format!(
                    "unexpected classification target {other:?}"
                ))
                .into())
            }
        });
        let slots = pipeline::record_slots(r, &ckpt, &adapter)?;
        let prompt = RenderedPrompt::new(r.system.clone(), r.user_text.clone());
        let pred = predict_tc(&prompt, &slots, backend.as_ref())?;
        parse_failures += pred.parse_failure as usize;
        predictions.push(pred.label);
    }
    let report = tc_metrics(&predictions, &gold, parse_failures)?;
    println!(
        "tc {}: accuracy {:.3} precision {:.3} recall {:.3} f1 {:.3} ({} parse failures)",
        args.split, report.accuracy, report.precision, report.recall, report.f1, parse_failures
    );

    let json_path = Paths::report(&ctx.run_dir, &format!("tc_{}", args.split), "json");
    ensure_parent(&json_path)?;
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&ReportFile {
            header: header("triple_classification", &args.split, backend.name()),
            report: report.clone(),
        })?,
    )?;
    let csv_path = Paths::report(&ctx.run_dir, &format!("tc_{}", args.split), "csv");
    std::fs::write(&csv_path, csv_with_notes(report.csv()))?;

    let mut manifest = ctx.manifest("eval-tc");
    manifest.input_file("prompts", &prompts_path)?;
    manifest.artifact(&json_path);
    manifest.artifact(&csv_path);
    manifest.write()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct EvalLpArgs {
    /// Prompt JSONL (defaults to <run-dir>/prompts/lp_<split>.jsonl).
    #[arg(long, value_name = "FILE")]
    prompts: Option<PathBuf>,
    /// Split label used for default paths and reports.
    #[arg(long, default_value = "test")]
    split: String,
    /// Dataset directory (entity names resolve generated answers).
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendOverrides,
    /// Pin mock generations to the gold targets.
    #[arg(long)]
    mock_oracle: bool,
    /// Number of in-context examples to prepend (0 disables).
    #[arg(long)]
    icl_k: Option<usize>,
    /// Candidate pool from icl-build.
    #[arg(long, value_name = "FILE")]
    icl_pool: Option<PathBuf>,
    /// Hits@k cutoff (at most the generated answer count).
    #[arg(long, default_value_t = 3)]
    hits_k: usize,
}

pub fn eval_lp(ctx: &mut Ctx, args: EvalLpArgs) -> anyhow::Result<()> {
    args.backend.apply(&mut ctx.cfg.backend);
    if let Some(k) = args.icl_k {
        ctx.cfg.icl.k = k;
    }
    let prompts_path = args
        .prompts
        .unwrap_or_else(|| Paths::prompts(&ctx.run_dir, "lp", &args.split));
    let records = pipeline::read_prompt_records(&prompts_path)?;
    let (kg, _) = pipeline::load_kg(&ctx.cfg, args.data.as_deref())?;
    let ckpt = pipeline::load_checkpoint(&ctx.run_dir)?;
    let names = NameIndex::build(&kg);

    let icl_pool: Option<IclPool> = if ctx.cfg.icl.k > 0 && (args.icl_pool.is_some() || args.icl_k.is_some()) {
        let path = args
            .icl_pool
            .clone()
            .unwrap_or_else(|| Paths::icl_pool(&ctx.run_dir));
        pipeline::require_exists(&path, "icl-build")?;
        let pool: IclPool = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        pool.validate()?;
        Some(pool)
    } else {
        None
    };

    // Assemble the final prompt text (in-context examples included) before
    // anything keys on it.
    let mut prompts = Vec::with_capacity(records.len());
    let mut gold = Vec::with_capacity(records.len());
    for r in &records {
        let target = r.target.as_deref().ok_or_else(|| {
            UsageError("link-prediction prompts need gold tail names for scoring".into())
        })?;
        gold.push(GoldEntity {
            entity: names.lookup(target),
            name: target.to_string(),
        });
        let mut user_text = r.user_text.clone();
        if let (Some(pool), Some(sg)) = (&icl_pool, &r.subgraph) {
            let query_emb = ckpt.embed_subgraph(sg)?.row(0).to_vec();
            let selection = retrieve_icl(pool, &query_emb, ctx.cfg.icl.k)?;
            if selection.truncated_to_pool {
                eprintln!("note: requested {} examples, pool holds {}", ctx.cfg.icl.k, pool.len());
            }
            user_text = prepend_icl_examples(&user_text, pool, &selection);
        }
        prompts.push(RenderedPrompt::new(r.system.clone(), user_text));
    }

    // The mock ranks over the entity-name vocabulary for this task; oracle
    // entries key on the final prompt text.
    let vocabulary: Vec<String> = kg.entities().map(|e| kg.name_of(e).to_string()).collect();
    let oracle = args.mock_oracle.then(|| {
        prompts
            .iter()
            .zip(&gold)
            .map(|(p, g)| (p.combined(), g.name.clone()))
            .collect::<Vec<_>>()
    });
    let backend = pipeline::build_backend(&ctx.cfg, ctx.cfg.seed, Some(vocabulary), oracle)?;
    let adapter = pipeline::load_adapter(&ctx.run_dir, ckpt.config.encoder.dim, backend.soft_dim())?;

    let mut ranked = Vec::with_capacity(records.len());
    for (r, prompt) in records.iter().zip(&prompts) {
        let slots = pipeline::record_slots(r, &ckpt, &adapter)?;
        ranked.push(predict_lp(prompt, &slots, backend.as_ref(), &names, 3)?);
    }
    let report = lp_metrics(&ranked, &gold, args.hits_k.min(3))?;
    println!(
        "lp {}: hit@1 {:.3} hit@{} {:.3} mrr {:.3} over {} queries ({} unmatched answers)",
        args.split,
        report.hits_at_1,
        report.k,
        report.hits_at_k,
        report.mrr,
        report.query_count,
        report.unmatched_answers
    );

    let json_path = Paths::report(&ctx.run_dir, &format!("lp_{}", args.split), "json");
    ensure_parent(&json_path)?;
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(&ReportFile {
            header: header("link_prediction", &args.split, backend.name()),
            report: report.clone(),
        })?,
    )?;
    let csv_path = Paths::report(&ctx.run_dir, &format!("lp_{}", args.split), "csv");
    std::fs::write(&csv_path, csv_with_notes(report.csv()))?;

    let mut manifest = ctx.manifest("eval-lp");
    manifest.input_file("prompts", &prompts_path)?;
    manifest.artifact(&json_path);
    manifest.artifact(&csv_path);
    manifest.write()?;
    Ok(())
}
