//! Description-noise robustness sweep.
//!
//! Each condition retrains alignment from scratch on (possibly noisy)
//! training text, then scores tail-side retrieval over the aligned space:
//! every entity embedding is ranked against the clean text of its own
//! condition arm. This is a desk-scale proxy for the full generative
//! pipeline; what the noise corrupts is exactly what it measures.

use std::path::PathBuf;

use clap::Args;
use kgalign::alignment::{diagonal_ranks, train_alignment};
use kgalign::eval::{
    robustness_sweep, DescriptionType, LpReport, NoiseCondition, RobustnessTable,
};
use kgalign::kg::{inject_description_noise, NodeDescriptionPair};
use kgalign::tensor::Tensor;

use crate::pipeline::{self, ensure_parent, Paths};
use crate::{AlignOverrides, Ctx};

#[derive(Args, Debug)]
pub struct RobustnessArgs {
    /// Dataset directory.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Comma-separated paragraph-noise rates.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.05, 0.10])]
    rates: Vec<f64>,
    #[command(flatten)]
    overrides: AlignOverrides,
}

pub fn robustness(ctx: &mut Ctx, args: RobustnessArgs) -> anyhow::Result<()> {
    args.overrides.apply(&mut ctx.cfg.alignment);
    let data_dir = pipeline::dataset_dir(&ctx.cfg, args.data.as_deref())?;
    let (kg, _) = pipeline::load_kg(&ctx.cfg, args.data.as_deref())?;
    let align_cfg = ctx.cfg.alignment.to_alignment_config(ctx.cfg.seed);
    let seed = ctx.cfg.seed;

    let clean_text = |dtype: DescriptionType, e: kgalign::kg::EntityId| -> String {
        match dtype {
            DescriptionType::Name => kg.name_of(e).to_string(),
            DescriptionType::Paragraph => kg.description_of(e).to_string(),
        }
    };

    let table: RobustnessTable = robustness_sweep(&args.rates, |condition: &NoiseCondition| {
        let mut pairs: Vec<NodeDescriptionPair> = kg
            .entities()
            .map(|e| NodeDescriptionPair {
                entity: e,
                text: clean_text(condition.description_type, e),
            })
            .collect();
        if condition.rate > 0.0 {
            let corpus: Vec<String> = pairs.iter().map(|p| p.text.clone()).collect();
            pairs = inject_description_noise(&pairs, condition.rate, &corpus, seed)
                .map_err(anyhow::Error::from)?;
        }
        let ckpt = train_alignment(&kg, &pairs, &[], &align_cfg).map_err(anyhow::Error::from)?;

        // Rank every entity against the clean text targets of this arm.
        let texts: Vec<Vec<f32>> = kg
            .entities()
            .map(|e| {
                ckpt.embed_text(&clean_text(condition.description_type, e))
                    .map(|t| t.row(0).to_vec())
            })
            .collect::<Result<_, _>>()
            .map_err(anyhow::Error::from)?;
        let text_tensor = Tensor::from_rows(&texts);
        let ranks = diagonal_ranks(&ckpt.embeddings, &text_tensor);
        let n = ranks.len() as f64;
        let hit1 = ranks.iter().filter(|&&r| r == 0).count() as f64 / n;
        let hit3 = ranks.iter().filter(|&&r| r < 3).count() as f64 / n;
        let mrr = ranks.iter().map(|&r| 1.0 / (r as f64 + 1.0)).sum::<f64>() / n;
        println!(
            "{} / {:.0}% noise: hit@1 {hit1:.3} mrr {mrr:.3}",
            condition.description_type.label(),
            condition.rate * 100.0
        );
        Ok::<_, anyhow::Error>(LpReport {
            hits_at_1: hit1,
            hits_at_k: hit3,
            k: 3,
            mrr,
            query_count: ranks.len(),
            unmatched_answers: 0,
            mrr_convention: "retrieval proxy: full ranking of entities against clean text".into(),
        })
    })
    .map_err(|e| anyhow::anyhow!("{e}"))?;

    let csv_path = Paths::report(&ctx.run_dir, "robustness", "csv");
    ensure_parent(&csv_path)?;
    std::fs::write(&csv_path, table.csv())?;
    let json_path = Paths::report(&ctx.run_dir, "robustness", "json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&table)?)?;
    print!("{}", table.csv());

    let mut manifest = ctx.manifest("robustness");
    manifest.input_file("dataset", &data_dir)?;
    manifest.artifact(&csv_path);
    manifest.artifact(&json_path);
    manifest.write()?;
    Ok(())
}
