//! Metric oracles on large random fixtures plus report properties.

use kgalign::bridge::{normalize_answer, RankedAnswer};
use kgalign::eval::{lp_metrics, tc_metrics, GoldEntity, LpReport, TcReport};
use kgalign::kg::EntityId;
use kgalign_testkit::{confusion_oracle, mrr_scan_oracle};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn random_labels(n: usize, seed: u64) -> (Vec<bool>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let preds = (0..n).map(|_| rng.gen_bool(0.6)).collect();
    let gold = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    (preds, gold)
}

#[test]
fn tc_matches_counting_oracle_on_thousand_cases() {
    let (preds, gold) = random_labels(1000, 7);
    let report = tc_metrics(&preds, &gold, 13).unwrap();
    let (tp, fp, tn, fn_) = confusion_oracle(&preds, &gold);
    assert_eq!((report.tp, report.fp, report.tn, report.fn_), (tp, fp, tn, fn_));
    assert_eq!(report.accuracy, (tp + tn) as f64 / 1000.0);
    assert_eq!(report.precision, tp as f64 / (tp + fp) as f64);
    assert_eq!(report.recall, tp as f64 / (tp + fn_) as f64);
    let f1 = 2.0 * report.precision * report.recall / (report.precision + report.recall);
    assert!((report.f1 - f1).abs() < 1e-15);
    assert_eq!(report.parse_failures, 13);
}

fn random_ranked(n: usize, seed: u64) -> (Vec<Vec<RankedAnswer>>, Vec<GoldEntity>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ranked = Vec::with_capacity(n);
    let mut gold = Vec::with_capacity(n);
    for q in 0..n {
        let gold_id = rng.gen_range(0..50u32);
        gold.push(GoldEntity {
            entity: Some(EntityId(gold_id)),
            name: format!("entity {gold_id}"),
        });
        let len = rng.gen_range(0..=3usize);
        let mut answers = Vec::with_capacity(len);
        for pos in 0..len {
            // A third of answers hit the gold id, a third a near miss, the
            // rest resolve to nothing.
            let roll: f64 = rng.gen();
            let entity = if roll < 0.33 {
                Some(EntityId(gold_id))
            } else if roll < 0.66 {
                Some(EntityId((gold_id + 1 + pos as u32) % 50))
            } else {
                None
            };
            let text = match entity {
                Some(e) => format!("entity {}", e.0),
                None => format!("garbled {q}-{pos}"),
            };
            answers.push(RankedAnswer {
                normalized: normalize_answer(&text),
                raw: text,
                entity,
            });
        }
        ranked.push(answers);
    }
    (ranked, gold)
}

#[test]
fn lp_matches_rank_scan_oracle_on_thousand_cases() {
    let (ranked, gold) = random_ranked(1000, 21);
    let report = lp_metrics(&ranked, &gold, 3).unwrap();

    let match_lists: Vec<Vec<bool>> = ranked
        .iter()
        .zip(&gold)
        .map(|(answers, g)| {
            answers
                .iter()
                .map(|a| {
                    a.entity == g.entity || a.normalized == normalize_answer(&g.name)
                })
                .collect()
        })
        .collect();
    let want_mrr = mrr_scan_oracle(&match_lists);
    assert!((report.mrr - want_mrr).abs() < 1e-12);

    let want_h1 = match_lists
        .iter()
        .filter(|l| l.first().copied().unwrap_or(false))
        .count() as f64
        / 1000.0;
    assert_eq!(report.hits_at_1, want_h1);

    let want_unmatched: usize = ranked
        .iter()
        .flatten()
        .filter(|a| a.entity.is_none())
        .count();
    assert_eq!(report.unmatched_answers, want_unmatched);
}

#[test]
fn metrics_are_permutation_invariant() {
    let (preds, gold) = random_labels(300, 3);
    let base = tc_metrics(&preds, &gold, 0).unwrap();
    let mut order: Vec<usize> = (0..300).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(8));
    let p2: Vec<bool> = order.iter().map(|&i| preds[i]).collect();
    let g2: Vec<bool> = order.iter().map(|&i| gold[i]).collect();
    let shuffled = tc_metrics(&p2, &g2, 0).unwrap();
    assert_eq!(base, shuffled);

    let (ranked, golds) = random_ranked(300, 4);
    let base = lp_metrics(&ranked, &golds, 3).unwrap();
    let r2: Vec<_> = order.iter().map(|&i| ranked[i].clone()).collect();
    let g2: Vec<_> = order.iter().map(|&i| golds[i].clone()).collect();
    let shuffled = lp_metrics(&r2, &g2, 3).unwrap();
    assert_eq!(base, shuffled);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Truncating ranked lists to a shorter cutoff can only lower MRR.
    #[test]
    fn mrr_is_monotone_in_the_generation_cutoff(seed in 0u64..500) {
        let (ranked, gold) = random_ranked(40, seed);
        let truncated: Vec<Vec<RankedAnswer>> = ranked
            .iter()
            .map(|l| l.iter().take(2).cloned().collect())
            .collect();
        let short = lp_metrics(&truncated, &gold, 2).unwrap();
        let long = lp_metrics(&ranked, &gold, 3).unwrap();
        prop_assert!(short.mrr <= long.mrr + 1e-12);
        prop_assert!(short.hits_at_1 == long.hits_at_1);
    }

    #[test]
    fn reports_round_trip_through_json(seed in 0u64..500) {
        let (preds, gold) = random_labels(50, seed);
        let tc = tc_metrics(&preds, &gold, 3).unwrap();
        let tc2: TcReport = serde_json::from_str(&serde_json::to_string(&tc).unwrap()).unwrap();
        prop_assert_eq!(tc, tc2);

        let (ranked, golds) = random_ranked(50, seed);
        let lp = lp_metrics(&ranked, &golds, 3).unwrap();
        let lp2: LpReport = serde_json::from_str(&serde_json::to_string(&lp).unwrap()).unwrap();
        prop_assert_eq!(lp, lp2);
    }

    /// hits@1 <= hits@k <= 1 and mrr in [0, 1].
    #[test]
    fn report_invariants_hold(seed in 0u64..500) {
        let (ranked, gold) = random_ranked(30, seed);
        let r = lp_metrics(&ranked, &gold, 3).unwrap();
        prop_assert!(r.hits_at_1 <= r.hits_at_k);
        prop_assert!(r.hits_at_k <= 1.0);
        prop_assert!((0.0..=1.0).contains(&r.mrr));
        prop_assert!(r.hits_at_1 <= r.mrr + 1e-12);
    }
}
