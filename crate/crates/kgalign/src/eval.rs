//! Task metrics, report serialization, and the description-noise
//! robustness sweep.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridge::{normalize_answer, RankedAnswer};
use crate::kg::EntityId;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{what}: got {got} predictions for {want} gold labels")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        want: usize,
    },
    #[error("cannot score an empty evaluation set")]
    EmptyInput,
    #[error("hits@k needs k >= 1")]
    BadK,
    #[error("noise rate {0} outside [0, 1]")]
    BadNoiseRate(f64),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Published single-model results, kept in report headers for orientation;
/// nothing in this crate reproduces them.
pub const REFERENCE_BASELINES: &[(&str, &str, f64)] = &[
    ("fb15k-237n", "f1", 0.831),
    ("fb15k-237n", "hit@1", 0.386),
    ("fb15k-237n", "mrr", 0.440),
    ("codex-s", "f1", 0.865),
    ("codex-s", "hit@1", 0.453),
    ("codex-s", "mrr", 0.481),
    ("fb15k-237", "hit@1", 0.319),
    ("fb15k-237", "mrr", 0.354),
    ("yago3-10", "hit@1", 0.525),
    ("yago3-10", "mrr", 0.616),
];

pub const MRR_CONVENTION: &str =
    "gold answers outside the generated top-n contribute reciprocal rank 0 (unfiltered)";

// ---------------------------------------------------------------------------
// Triple classification
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TcReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub parse_failures: usize,
}

impl TcReport {
    /// CSV mirroring the classification table schema, one data row.
    pub fn csv(&self) -> String {
        format!(
            "Accuracy,Precision,Recall,F1-score\n{},{},{},{}\n",
            self.accuracy, self.precision, self.recall, self.f1
        )
    }
}

/// Standard confusion metrics; the positive class is "true triple".
pub fn tc_metrics(predictions: &[bool], gold: &[bool], parse_failures: usize) -> Result<TcReport> {
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if predictions.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            what: "tc_metrics",
            got: predictions.len(),
            want: gold.len(),
        });
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let total = predictions.len() as f64;
    let precision = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let recall = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(TcReport {
        accuracy: (tp + tn) as f64 / total,
        precision,
        recall,
        f1,
        tp,
        fp,
        tn,
        fn_,
        parse_failures,
    })
}

// ---------------------------------------------------------------------------
// Link prediction
// ---------------------------------------------------------------------------

/// Gold answer: entity id plus its display name for normalized matching.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEntity {
    pub entity: Option<EntityId>,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpReport {
    pub hits_at_1: f64,
    pub hits_at_k: f64,
    pub k: usize,
    pub mrr: f64,
    pub query_count: usize,
    /// Generated answers that resolved to no entity, across all queries.
    pub unmatched_answers: usize,
    pub mrr_convention: String,
}

impl LpReport {
    pub fn csv(&self) -> String {
        format!("Hit@1,MRR\n{},{}\n", self.hits_at_1, self.mrr)
    }
}

fn answer_matches(answer: &RankedAnswer, gold: &GoldEntity) -> bool {
    if let (Some(a), Some(g)) = (answer.entity, gold.entity) {
        if a == g {
            return true;
        }
    }
    answer.normalized == normalize_answer(&gold.name)
}

/// Reciprocal rank of the first gold match per query (0 when absent),
/// hits@1, and hits@k.
pub fn lp_metrics(ranked: &[Vec<RankedAnswer>], gold: &[GoldEntity], k: usize) -> Result<LpReport> {
    if ranked.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if ranked.len() != gold.len() {
        return Err(EvalError::LengthMismatch {
            what: "lp_metrics",
            got: ranked.len(),
            want: gold.len(),
        });
    }
    if k == 0 {
        return Err(EvalError::BadK);
    }
    // Tally matches by rank position and fold in a fixed order, so the
    // floating-point result is exactly permutation-invariant.
    let mut rank_counts: Vec<usize> = Vec::new();
    let mut hits1 = 0usize;
    let mut hitsk = 0usize;
    let mut unmatched = 0usize;
    for (answers, g) in ranked.iter().zip(gold) {
        unmatched += answers.iter().filter(|a| a.entity.is_none()).count();
        if let Some(pos) = answers.iter().position(|a| answer_matches(a, g)) {
            if rank_counts.len() <= pos {
                rank_counts.resize(pos + 1, 0);
            }
            rank_counts[pos] += 1;
            if pos == 0 {
                hits1 += 1;
            }
            if pos < k {
                hitsk += 1;
            }
        }
    }
    let rr_total: f64 = rank_counts
        .iter()
        .enumerate()
        .map(|(pos, &c)| c as f64 / (pos as f64 + 1.0))
        .sum::<f64>()
        // An empty sum is -0.0; keep reports at plain zero.
        .max(0.0);
    let n = ranked.len() as f64;
    Ok(LpReport {
        hits_at_1: hits1 as f64 / n,
        hits_at_k: hitsk as f64 / n,
        k,
        mrr: rr_total / n,
        query_count: ranked.len(),
        unmatched_answers: unmatched,
        mrr_convention: MRR_CONVENTION.to_string(),
    })
}

// ---------------------------------------------------------------------------
// Robustness sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptionType {
    /// Entity names stand in for descriptions.
    Name,
    /// Full description paragraphs.
    Paragraph,
}

impl DescriptionType {
    pub fn label(&self) -> &'static str {
        match self {
            DescriptionType::Name => "Name",
            DescriptionType::Paragraph => "Paragraph",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseCondition {
    pub description_type: DescriptionType,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub description_type: String,
    pub linking_noise: String,
    pub hit_at_1: f64,
    pub mrr: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RobustnessTable {
    pub rows: Vec<RobustnessRow>,
}

pub const ROBUSTNESS_CSV_HEADER: &str = "Description Type,Linking Noise,Hit@1,MRR";

impl RobustnessTable {
    pub fn csv(&self) -> String {
        let mut out = format!("{ROBUSTNESS_CSV_HEADER}\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.description_type, r.linking_noise, r.hit_at_1, r.mrr
            ));
        }
        out
    }
}

fn percent_label(rate: f64) -> String {
    let pct = rate * 100.0;
    if (pct - pct.round()).abs() < 1e-9 {
        format!("{}%", pct.round() as i64)
    } else {
        format!("{pct}%")
    }
}

/// One name-only arm at zero noise, then a paragraph arm per rate. The
/// runner re-executes alignment plus evaluation for each condition.
pub fn robustness_sweep<E>(
    noise_rates: &[f64],
    mut runner: impl FnMut(&NoiseCondition) -> std::result::Result<LpReport, E>,
) -> std::result::Result<RobustnessTable, SweepError<E>> {
    for &r in noise_rates {
        if !(0.0..=1.0).contains(&r) || r.is_nan() {
            return Err(SweepError::BadRate(r));
        }
    }
    let mut conditions = vec![NoiseCondition {
        description_type: DescriptionType::Name,
        rate: 0.0,
    }];
    conditions.extend(noise_rates.iter().map(|&rate| NoiseCondition {
        description_type: DescriptionType::Paragraph,
        rate,
    }));
    let mut table = RobustnessTable::default();
    for condition in conditions {
        let report = runner(&condition).map_err(SweepError::Pipeline)?;
        table.rows.push(RobustnessRow {
            description_type: condition.description_type.label().to_string(),
            linking_noise: percent_label(condition.rate),
            hit_at_1: report.hits_at_1,
            mrr: report.mrr,
        });
    }
    Ok(table)
}

#[derive(Debug, Error)]
pub enum SweepError<E> {
    #[error("noise rate {0} outside [0, 1]")]
    BadRate(f64),
    #[error("pipeline failed: {0}")]
    Pipeline(#[source] E),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn answer(text: &str, entity: Option<u32>) -> RankedAnswer {
        RankedAnswer {
            raw: text.to_string(),
            normalized: normalize_answer(text),
            entity: entity.map(EntityId),
        }
    }

    fn gold(name: &str, entity: Option<u32>) -> GoldEntity {
        GoldEntity {
            entity: entity.map(EntityId),
            name: name.to_string(),
        }
    }

    #[test]
    fn all_correct_scores_one() {
        let r = tc_metrics(&[true, false, true], &[true, false, true], 0).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.f1, 1.0);
        assert_eq!((r.tp, r.fp, r.tn, r.fn_), (2, 0, 1, 0));
    }

    #[test]
    fn all_positive_on_balanced_set() {
        let preds = vec![true; 10];
        let gold: Vec<bool> = (0..10).map(|i| i % 2 == 0).collect();
        let r = tc_metrics(&preds, &gold, 0).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.recall, 1.0);
        assert_eq!(r.precision, 0.5);
    }

    #[test]
    fn degenerate_confusions_do_not_divide_by_zero() {
        let r = tc_metrics(&[false, false], &[true, true], 0).unwrap();
        assert_eq!(r.precision, 0.0);
        assert_eq!(r.recall, 0.0);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn tc_rejects_bad_inputs() {
        assert!(matches!(tc_metrics(&[], &[], 0), Err(EvalError::EmptyInput)));
        assert!(matches!(
            tc_metrics(&[true], &[true, false], 0),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn gold_always_first_is_perfect() {
        let ranked = vec![vec![answer("x", Some(1)), answer("y", Some(2))]; 4];
        let golds = vec![gold("x", Some(1)); 4];
        let r = lp_metrics(&ranked, &golds, 3).unwrap();
        assert_eq!(r.mrr, 1.0);
        assert_eq!(r.hits_at_1, 1.0);
        assert_eq!(r.hits_at_k, 1.0);
    }

    #[test]
    fn gold_always_second_gives_mrr_half() {
        let ranked = vec![
            vec![
                answer("wrong", Some(9)),
                answer("right", Some(1)),
                answer("also wrong", None),
            ];
            6
        ];
        let golds = vec![gold("right", Some(1)); 6];
        let r = lp_metrics(&ranked, &golds, 3).unwrap();
        assert_eq!(r.mrr, 0.5);
        assert_eq!(r.hits_at_1, 0.0);
        assert_eq!(r.hits_at_k, 1.0);
        assert_eq!(r.unmatched_answers, 6);
    }

    #[test]
    fn name_matching_uses_normalization() {
        let ranked = vec![vec![answer("William Shakespeare.", None)]];
        let golds = vec![gold("william  shakespeare", None)];
        let r = lp_metrics(&ranked, &golds, 1).unwrap();
        assert_eq!(r.hits_at_1, 1.0);
    }

    #[test]
    fn absent_gold_contributes_zero() {
        let ranked = vec![vec![answer("a", None)], vec![]];
        let golds = vec![gold("b", None), gold("c", None)];
        let r = lp_metrics(&ranked, &golds, 1).unwrap();
        assert_eq!(r.mrr, 0.0);
        assert_eq!(r.mrr_convention, MRR_CONVENTION);
    }

    #[test]
    fn sweep_emits_table_schema_rows() {
        let table = robustness_sweep(&[0.0, 0.05, 0.10], |c| {
            Ok::<_, std::convert::Infallible>(LpReport {
                hits_at_1: 1.0 - c.rate,
                hits_at_k: 1.0,
                k: 3,
                mrr: 1.0 - c.rate / 2.0,
                query_count: 10,
                unmatched_answers: 0,
                mrr_convention: MRR_CONVENTION.into(),
            })
        })
        .unwrap();
        let csv = table.csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("Description Type,Linking Noise,Hit@1,MRR"));
        assert!(csv.contains("Name,0%"));
        assert!(csv.contains("Paragraph,5%"));
        assert!(csv.contains("Paragraph,10%"));
        assert_eq!(table.rows.len(), 4);
    }

    #[test]
    fn sweep_rejects_bad_rates() {
        let result = robustness_sweep(&[1.5], |_| {
            Ok::<_, std::convert::Infallible>(LpReport {
                hits_at_1: 0.0,
                hits_at_k: 0.0,
                k: 1,
                mrr: 0.0,
                query_count: 1,
                unmatched_answers: 0,
                mrr_convention: String::new(),
            })
        });
        assert!(matches!(result, Err(SweepError::BadRate(_))));
    }
}
