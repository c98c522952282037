mod data;
mod evaluate;
mod prompts;
mod sweep;
mod training;

pub use data::{export_embeddings, ingest, synth, ExportEmbeddingsArgs, IngestArgs, SynthArgs};
pub use evaluate::{eval_lp, eval_tc, EvalLpArgs, EvalTcArgs};
pub use prompts::{build_prompts, icl_build, BuildPromptsArgs, IclBuildArgs};
pub use sweep::{robustness, RobustnessArgs};
pub use training::{align, extract_pairs, tune, AlignArgs, ExtractPairsArgs, TuneArgs};
