//! Independent oracles for the kgalign test suites.
//!
//! Everything here is deliberately written from first principles, without
//! calling into the implementation paths it checks: brute-force loops,
//! set-based BFS, f64 arithmetic, explicit counting. Keep it that way.

use std::collections::BTreeSet;

use kgalign::tensor::{ParamId, ParamSet};

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central-difference step (matches the documented 32-bit tolerances).
pub const FD_EPS: f32 = 1e-3;
/// Relative tolerance for gradient agreement.
pub const FD_RTOL: f32 = 1e-3;
/// Absolute floor below which f32 finite differences are pure noise.
pub const FD_ATOL: f32 = 5e-4;

#[derive(Debug, Clone)]
pub struct FdFailure {
    pub param: String,
    pub entry: usize,
    pub analytic: f32,
    pub numeric: f32,
}

/// Check analytic gradients in `params.grad` against central differences of
/// `eval`, which must rebuild the loss from current parameter values.
///
/// Agreement rule: |ad - fd| <= FD_ATOL + FD_RTOL * max(|ad|, |fd|).
/// `max_entries_per_param` bounds cost on large tensors; entries are taken
/// with a fixed stride so coverage is spread across the tensor.
pub fn check_gradients(
    params: &mut ParamSet,
    mut eval: impl FnMut(&ParamSet) -> f32,
    max_entries_per_param: usize,
) -> Result<usize, FdFailure> {
    let ids: Vec<ParamId> = params.ids().collect();
    let mut checked = 0;
    for id in ids {
        let n = params.value(id).data().len();
        let take = n.min(max_entries_per_param);
        let stride = (n / take.max(1)).max(1);
        for j in (0..n).step_by(stride).take(take) {
            let analytic = params.grad(id).data()[j];
            let original = params.value(id).data()[j];
            params.value_mut(id).data_mut()[j] = original + FD_EPS;
            let up = eval(params);
            params.value_mut(id).data_mut()[j] = original - FD_EPS;
            let down = eval(params);
            params.value_mut(id).data_mut()[j] = original;
            let numeric = (up - down) / (2.0 * FD_EPS);
            let tol = FD_ATOL + FD_RTOL * analytic.abs().max(numeric.abs());
            if (analytic - numeric).abs() > tol {
                return Err(FdFailure {
                    param: params.name(id).to_string(),
                    entry: j,
                    analytic,
                    numeric,
                });
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Central-difference gradient of a scalar function of a flat vector.
pub fn fd_grad(mut f: impl FnMut(&[f32]) -> f32, x: &[f32], eps: f32) -> Vec<f32> {
    let mut x = x.to_vec();
    let mut g = vec![0.0f32; x.len()];
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let up = f(&x);
        x[i] = orig - eps;
        let down = f(&x);
        x[i] = orig;
        g[i] = (up - down) / (2.0 * eps);
    }
    g
}

// ---------------------------------------------------------------------------
// Graph oracles
// ---------------------------------------------------------------------------

/// Hop distances from a set of anchors over undirected edges, by repeated
/// set relaxation (no queue, no adjacency index).
pub fn bfs_hops_oracle(
    n: usize,
    edges: &[(usize, usize)],
    anchors: &[usize],
    k: usize,
) -> Vec<Option<usize>> {
    let mut hop: Vec<Option<usize>> = vec![None; n];
    let mut frontier: BTreeSet<usize> = anchors.iter().copied().collect();
    for &a in anchors {
        hop[a] = Some(0);
    }
    for level in 1..=k {
        let mut next = BTreeSet::new();
        for &(u, v) in edges {
            if frontier.contains(&u) && hop[v].is_none() {
                next.insert(v);
            }
            if frontier.contains(&v) && hop[u].is_none() {
                next.insert(u);
            }
        }
        for &x in &next {
            hop[x] = Some(level);
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    hop
}

/// Node set within k hops of the anchors.
pub fn bfs_nodes_oracle(
    n: usize,
    edges: &[(usize, usize)],
    anchors: &[usize],
    k: usize,
) -> BTreeSet<usize> {
    bfs_hops_oracle(n, edges, anchors, k)
        .into_iter()
        .enumerate()
        .filter_map(|(i, h)| h.map(|_| i))
        .collect()
}

// ---------------------------------------------------------------------------
// Loss oracles
// ---------------------------------------------------------------------------

/// Mean of the two directional cross-entropies of a square logit matrix with
/// diagonal targets, computed in f64.
pub fn bidirectional_ce_oracle(lambda: &[Vec<f64>]) -> f64 {
    let n = lambda.len();
    let row_ce = |rows: &[Vec<f64>]| -> f64 {
        let mut total = 0.0;
        for (i, row) in rows.iter().enumerate() {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let logsum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            total += logsum - row[i];
        }
        total / rows.len() as f64
    };
    let transposed: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| lambda[i][j]).collect())
        .collect();
    0.5 * (row_ce(lambda) + row_ce(&transposed))
}

/// Brute-force pairwise dot products, f64 accumulation.
pub fn pairwise_dot_oracle(a: &[Vec<f32>], b: &[Vec<f32>]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|x| {
            b.iter()
                .map(|y| x.iter().zip(y).map(|(p, q)| *p as f64 * *q as f64).sum())
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Ranking and metric oracles
// ---------------------------------------------------------------------------

/// Exhaustive top-k by similarity, descending, ties broken by lower index.
pub fn topk_oracle(sims: &[f32], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sims.len()).collect();
    order.sort_by(|&a, &b| {
        sims[b]
            .partial_cmp(&sims[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Confusion counts, positive class = true. Returns (tp, fp, tn, fn).
pub fn confusion_oracle(predictions: &[bool], gold: &[bool]) -> (usize, usize, usize, usize) {
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &g) in predictions.iter().zip(gold) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    (tp, fp, tn, fn_)
}

/// Reciprocal-rank scan: position of the first `true` in each match list,
/// 1-based; absent gold contributes 0.
pub fn mrr_scan_oracle(match_lists: &[Vec<bool>]) -> f64 {
    let mut total = 0.0;
    for list in match_lists {
        for (pos, &m) in list.iter().enumerate() {
            if m {
                total += 1.0 / (pos as f64 + 1.0);
                break;
            }
        }
    }
    total / match_lists.len() as f64
}

/// Scalar Adam reference trajectory for a constant gradient.
pub fn adam_reference(lr: f32, grad: f32, steps: usize) -> f32 {
    let (b1, b2, eps) = (0.9f32, 0.999f32, 1e-8f32);
    let mut w = 0.0f32;
    let (mut m, mut v) = (0.0f32, 0.0f32);
    for t in 1..=steps {
        m = b1 * m + (1.0 - b1) * grad;
        v = b2 * v + (1.0 - b2) * grad * grad;
        let mhat = m / (1.0 - b1.powi(t as i32));
        let vhat = v / (1.0 - b2.powi(t as i32));
        w -= lr * mhat / (vhat.sqrt() + eps);
    }
    w
}
