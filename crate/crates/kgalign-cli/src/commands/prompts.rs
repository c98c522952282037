//! Prompt construction commands: build-prompts, icl-build.

use std::path::PathBuf;

use clap::Args;
use kgalign::graph::{build_index, extract_khop};
use kgalign::instruction::{
    render_prompt, GraphMode, IclCandidate, IclPool, PromptRecord, Query, ResourceAugmentation,
    TaskKind,
};
use kgalign::kg::{corrupt_triple, Triple};
use kgalign::rng::SeedTree;
use rand::seq::SliceRandom;

use crate::pipeline::{self, ensure_parent, Paths};
use crate::{Ctx, UsageError};

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskArg {
    Tc,
    Lp,
}

impl TaskArg {
    fn kind(self) -> TaskKind {
        match self {
            TaskArg::Tc => TaskKind::TripleClassification,
            TaskArg::Lp => TaskKind::LinkPrediction,
        }
    }

    fn stem(self) -> &'static str {
        match self {
            TaskArg::Tc => "tc",
            TaskArg::Lp => "lp",
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplitArg {
    Train,
    Valid,
    Test,
}

impl SplitArg {
    fn stem(self) -> &'static str {
        match self {
            SplitArg::Train => "train",
            SplitArg::Valid => "valid",
            SplitArg::Test => "test",
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Base,
    Triple,
    Graph,
}

impl ModeArg {
    fn mode(self) -> GraphMode {
        match self {
            ModeArg::Base => GraphMode::Base,
            ModeArg::Triple => GraphMode::Triple,
            ModeArg::Graph => GraphMode::Graph,
        }
    }
}

#[derive(Args, Debug)]
pub struct BuildPromptsArgs {
    /// Dataset directory.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Which task to render prompts for.
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Which split the queries come from.
    #[arg(long, value_enum, default_value = "train")]
    split: SplitArg,
    /// How much graph information the instruction carries.
    #[arg(long, value_enum, default_value = "graph")]
    mode: ModeArg,
    /// Comma-separated extra resources: names, descriptions.
    #[arg(long, value_delimiter = ',')]
    resources: Vec<String>,
    /// Neighborhood hops for the query subgraph.
    #[arg(long)]
    hops: Option<usize>,
    /// Node cap for the query subgraph.
    #[arg(long)]
    node_cap: Option<usize>,
    /// Keep only the first N queries.
    #[arg(long, value_name = "N")]
    limit: Option<usize>,
}

fn parse_resources(raw: &[String], mode: ModeArg) -> anyhow::Result<ResourceAugmentation> {
    let mut resources = ResourceAugmentation::NONE;
    for r in raw {
        match r.trim() {
            "" => {}
            "names" => resources.names = true,
            "descriptions" => resources.descriptions = true,
            other => {
                return Err(UsageError(format!(
                    "unknown resource {other:?} (expected names, descriptions)"
                ))
                .into())
            }
        }
    }
    if resources.any() && mode != ModeArg::Graph {
        return Err(UsageError(format!(
            "--resources {} (flag) conflicts with --mode {:?} (flag/config): resource templates exist only in graph mode",
            raw.join(","),
            mode
        ))
        .into());
    }
    Ok(resources)
}

pub fn build_prompts(ctx: &mut Ctx, args: BuildPromptsArgs) -> anyhow::Result<()> {
    if let Some(v) = args.hops {
        ctx.cfg.subgraph.hops = v;
    }
    if let Some(v) = args.node_cap {
        ctx.cfg.subgraph.node_cap = v;
    }
    let resources = parse_resources(&args.resources, args.mode)?;
    let data_dir = pipeline::dataset_dir(&ctx.cfg, args.data.as_deref())?;
    let (kg, split) = pipeline::load_kg(&ctx.cfg, args.data.as_deref())?;
    let index = build_index(&kg);
    let seeds = SeedTree::new(ctx.cfg.seed);
    let mode = args.mode.mode();
    let hops = ctx.cfg.subgraph.hops;
    let node_cap = ctx.cfg.subgraph.node_cap.max(2);

    // Queries with gold targets. Classification training data pairs each
    // positive with one collision-checked corrupted negative; labeled eval
    // splits come as-is.
    let mut queries: Vec<(Triple, bool)> = Vec::new();
    let task = args.task.kind();
    match (args.split, task) {
        (SplitArg::Train, TaskKind::TripleClassification) => {
            let known = split.all_triples();
            for (i, &t) in split.train.iter().enumerate() {
                if let Some(limit) = args.limit {
                    if queries.len() >= 2 * limit {
                        break;
                    }
                }
                queries.push((t, true));
                let negative =
                    corrupt_triple(&kg, &known, t, seeds.seed_for_indexed("negative", i as u64))?;
                queries.push((negative, false));
            }
        }
        (SplitArg::Train, TaskKind::LinkPrediction) => {
            for &t in &split.train {
                queries.push((t, true));
            }
        }
        (eval_split, _) => {
            let (triples, labels) = match eval_split {
                SplitArg::Valid => (&split.valid, &split.valid_labels),
                _ => (&split.test, &split.test_labels),
            };
            if triples.is_empty() {
                return Err(UsageError(format!(
                    "the {} split of {} is empty",
                    eval_split.stem(),
                    data_dir.display()
                ))
                .into());
            }
            match (task, labels) {
                (TaskKind::TripleClassification, Some(labels)) => {
                    for (&t, &l) in triples.iter().zip(labels) {
                        queries.push((t, l));
                    }
                }
                (TaskKind::TripleClassification, None) => {
                    return Err(UsageError(format!(
                        "{} has no classification labels ({}_labels.tsv missing)",
                        data_dir.display(),
                        eval_split.stem()
                    ))
                    .into());
                }
                (TaskKind::LinkPrediction, Some(labels)) => {
                    // Only true triples are meaningful tail-prediction queries.
                    for (&t, &l) in triples.iter().zip(labels) {
                        if l {
                            queries.push((t, true));
                        }
                    }
                }
                (TaskKind::LinkPrediction, None) => {
                    for &t in triples {
                        queries.push((t, true));
                    }
                }
            }
        }
    }
    if let Some(limit) = args.limit {
        queries.truncate(match (args.split, task) {
            (SplitArg::Train, TaskKind::TripleClassification) => 2 * limit,
            _ => limit,
        });
    }

    let mut records = Vec::with_capacity(queries.len());
    for (triple, label) in &queries {
        let (query, target) = match task {
            TaskKind::TripleClassification => (
                Query::Classify(*triple),
                if *label { "True" } else { "False" }.to_string(),
            ),
            TaskKind::LinkPrediction => (
                Query::PredictTail {
                    head: triple.head,
                    relation: triple.relation,
                },
                kg.name_of(triple.tail).to_string(),
            ),
        };
        let subgraph = match mode {
            GraphMode::Base => None,
            // The query triple itself is always excluded from its own
            // context, so training labels never leak into the slots.
            _ => {
                let k = if mode == GraphMode::Triple { 0 } else { hops };
                Some(extract_khop(
                    &index,
                    &query.anchors(),
                    k,
                    node_cap,
                    Some(*triple),
                )?)
            }
        };
        let prompt = render_prompt(&kg, &query, mode, resources, subgraph.as_ref(), Some(target))?;
        let keep_subgraph = (mode == GraphMode::Graph).then(|| subgraph.clone().unwrap());
        records.push(PromptRecord::from_prompt(&prompt, task, keep_subgraph));
    }

    let out = Paths::prompts(&ctx.run_dir, args.task.stem(), args.split.stem());
    pipeline::write_prompt_records(&out, &records)?;
    println!("wrote {} prompts to {}", records.len(), out.display());

    let mut manifest = ctx.manifest("build-prompts");
    manifest.input_file("dataset", &data_dir)?;
    manifest.artifact(&out);
    manifest.write()?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct IclBuildArgs {
    /// Dataset directory.
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Candidate pool size.
    #[arg(long)]
    pool_size: Option<usize>,
}

pub fn icl_build(ctx: &mut Ctx, args: IclBuildArgs) -> anyhow::Result<()> {
    if let Some(v) = args.pool_size {
        ctx.cfg.icl.pool_size = v;
    }
    let data_dir = pipeline::dataset_dir(&ctx.cfg, args.data.as_deref())?;
    let (kg, split) = pipeline::load_kg(&ctx.cfg, args.data.as_deref())?;
    let ckpt = pipeline::load_checkpoint(&ctx.run_dir)?;
    let index = build_index(&kg);
    let seeds = SeedTree::new(ctx.cfg.seed);

    let mut order: Vec<usize> = (0..split.train.len()).collect();
    order.shuffle(&mut seeds.rng("icl-pool"));
    order.truncate(ctx.cfg.icl.pool_size);

    let mut pool = IclPool::new(ckpt.config.encoder.dim);
    for &i in &order {
        let triple = split.train[i];
        let subgraph = extract_khop(
            &index,
            &[triple.head],
            ctx.cfg.subgraph.hops,
            ctx.cfg.subgraph.node_cap.max(2),
            Some(triple),
        )?;
        let embedding = ckpt.embed_subgraph(&subgraph)?.row(0).to_vec();
        pool.push(IclCandidate {
            question: format!(
                "({}, {}, ?)",
                kg.name_of(triple.head),
                kg.relation_surface(triple.relation)
            ),
            subgraph,
            embedding,
            answer: kg.name_of(triple.tail).to_string(),
        })?;
    }

    let out = Paths::icl_pool(&ctx.run_dir);
    ensure_parent(&out)?;
    std::fs::write(&out, serde_json::to_string(&pool)?)?;
    println!("wrote {} candidates to {}", pool.len(), out.display());

    let mut manifest = ctx.manifest("icl-build");
    manifest.input_file("dataset", &data_dir)?;
    manifest.artifact(&out);
    manifest.write()?;
    Ok(())
}
