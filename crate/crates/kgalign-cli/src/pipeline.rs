//! Shared stage plumbing: path layout, dataset/checkpoint loading, backend
//! construction, prompt-record IO.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::Context;
use kgalign::alignment::AlignmentCheckpoint;
use kgalign::bridge::{Backend, HttpBackend, HttpConfig, KnowledgeAdapter, MockBackend, MockConfig};
use kgalign::instruction::PromptRecord;
use kgalign::kg::{load_dataset, DatasetSplit, KnowledgeGraph, LoadOptions, UnseenPolicy};

use crate::config::{BackendKind, RunConfig};
use crate::UsageError;

pub struct Paths;

impl Paths {
    pub fn align_checkpoint(run_dir: &Path) -> PathBuf {
        run_dir.join("checkpoints/align")
    }

    pub fn adapter(run_dir: &Path) -> PathBuf {
        run_dir.join("checkpoints/adapter.bin")
    }

    pub fn prompts(run_dir: &Path, task: &str, split: &str) -> PathBuf {
        run_dir.join(format!("prompts/{task}_{split}.jsonl"))
    }

    pub fn losses(run_dir: &Path, stage: &str) -> PathBuf {
        run_dir.join(format!("losses/{stage}.csv"))
    }

    pub fn report(run_dir: &Path, name: &str, ext: &str) -> PathBuf {
        run_dir.join(format!("reports/{name}.{ext}"))
    }

    pub fn icl_pool(run_dir: &Path) -> PathBuf {
        run_dir.join("icl/pool.json")
    }

    pub fn global_pairs(run_dir: &Path) -> PathBuf {
        run_dir.join("pairs/global_pairs.jsonl")
    }

    pub fn extraction_cache(run_dir: &Path) -> PathBuf {
        run_dir.join("cache/extraction")
    }
}

pub fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    Ok(())
}

/// Missing-prerequisite errors carry a remediation hint and exit with the
/// usage code.
pub fn require_exists(path: &Path, produced_by: &str) -> anyhow::Result<()> {
    if !path.exists() {
        return Err(UsageError(format!(
            "missing {}; run `kgalign {produced_by}` first",
            path.display()
        ))
        .into());
    }
    Ok(())
}

pub fn load_kg(cfg: &RunConfig, data_flag: Option<&Path>) -> anyhow::Result<(KnowledgeGraph, DatasetSplit)> {
    let dir = data_flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.dataset_dir.clone())
        .ok_or_else(|| UsageError("no dataset directory: pass --data or set dataset_dir in the config".into()))?;
    if !dir.is_dir() {
        return Err(UsageError(format!("dataset directory {} does not exist", dir.display())).into());
    }
    let options = LoadOptions {
        unseen: if cfg.allow_unseen {
            UnseenPolicy::Allow
        } else {
            UnseenPolicy::Reject
        },
    };
    load_dataset(&dir, &options).with_context(|| format!("loading dataset from {}", dir.display()))
}

pub fn dataset_dir(cfg: &RunConfig, data_flag: Option<&Path>) -> anyhow::Result<PathBuf> {
    data_flag
        .map(Path::to_path_buf)
        .or_else(|| cfg.dataset_dir.clone())
        .ok_or_else(|| UsageError("no dataset directory: pass --data or set dataset_dir in the config".into()).into())
}

pub fn load_checkpoint(run_dir: &Path) -> anyhow::Result<AlignmentCheckpoint> {
    let dir = Paths::align_checkpoint(run_dir);
    require_exists(&dir, "align")?;
    AlignmentCheckpoint::load(&dir).with_context(|| format!("loading checkpoint {}", dir.display()))
}

pub fn load_adapter(run_dir: &Path, input_dim: usize, output_dim: usize) -> anyhow::Result<KnowledgeAdapter> {
    let path = Paths::adapter(run_dir);
    require_exists(&path, "tune")?;
    Ok(KnowledgeAdapter::load(&path, input_dim, output_dim)?)
}

/// Oracle entries pin mock generations to gold targets (wiring checks).
pub fn build_backend(
    cfg: &RunConfig,
    seed: u64,
    answers: Option<Vec<String>>,
    oracle: Option<Vec<(String, String)>>,
) -> anyhow::Result<Box<dyn Backend>> {
    match cfg.backend.kind {
        BackendKind::Mock => {
            let mut mock = MockBackend::new(MockConfig {
                seed,
                soft_dim: cfg.backend.soft_dim,
                gain: cfg.backend.mock_gain,
                ..MockConfig::default()
            });
            if let Some(answers) = answers {
                mock = mock.with_answers(answers);
            }
            if let Some(entries) = oracle {
                mock = mock.with_oracle(entries);
            }
            Ok(Box::new(mock))
        }
        BackendKind::Http => {
            if oracle.is_some() {
                return Err(UsageError(
                    "--mock-oracle only applies to the mock backend (flag conflicts with backend.kind=http from config/flag)".into(),
                )
                .into());
            }
            let backend = HttpBackend::new(HttpConfig {
                endpoint: cfg.backend.endpoint.clone(),
                model: cfg.backend.model.clone(),
                auth_env: cfg.backend.auth_env.clone(),
                timeout: Duration::from_secs(cfg.backend.timeout_secs),
                max_retries: cfg.backend.max_retries,
                concurrency: cfg.backend.concurrency,
                initial_backoff: Duration::from_millis(200),
                soft_dim: cfg.backend.soft_dim,
            })?;
            Ok(Box::new(backend))
        }
    }
}

pub fn write_prompt_records(path: &Path, records: &[PromptRecord]) -> anyhow::Result<()> {
    ensure_parent(path)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_prompt_records(path: &Path) -> anyhow::Result<Vec<PromptRecord>> {
    require_exists(path, "build-prompts")?;
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PromptRecord = serde_json::from_str(line)
            .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        out.push(record);
    }
    if out.is_empty() {
        return Err(UsageError(format!("{} contains no prompts", path.display())).into());
    }
    Ok(out)
}

/// Slot vectors for a record: adapter applied to the checkpoint's frozen
/// embedding rows.
pub fn record_slots(
    record: &PromptRecord,
    checkpoint: &AlignmentCheckpoint,
    adapter: &KnowledgeAdapter,
) -> anyhow::Result<Vec<Vec<f32>>> {
    if record.slot_entities.is_empty() {
        return Ok(Vec::new());
    }
    let rows: Vec<Vec<f32>> = record
        .slot_entities
        .iter()
        .map(|e| checkpoint.embedding_of(*e).to_vec())
        .collect();
    let embs = kgalign::tensor::Tensor::from_rows(&rows);
    Ok(adapter.adapt(&embs)?)
}
