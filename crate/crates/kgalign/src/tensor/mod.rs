//! Dense rank-2 float math with reverse-mode gradients.
//!
//! Everything is 32-bit and row-major. Scalars are 1x1 tensors. The gradient
//! tape lives in [`tape`], trainable state in [`params`], the optimizer in
//! [`adam`], and the on-disk tensor format in [`checkpoint`].

mod adam;
mod checkpoint;
mod params;
mod tape;

pub use adam::AdamState;
pub use checkpoint::{load_tensors, save_tensors, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use params::{ParamId, ParamSet};
pub use tape::{Tape, Var};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from tensor math, gradient recording, and checkpoint IO.
#[derive(Debug, Error)]
pub enum MathError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("{op}: expected {expected}, got {got:?}")]
    BadShape {
        op: &'static str,
        expected: &'static str,
        got: [usize; 2],
    },
    #[error("row {row} has L2 norm below 1e-12 and cannot be normalized")]
    ZeroNormRow { row: usize },
    #[error("row {row} is not L2-normalized (norm {norm})")]
    NotNormalized { row: usize, norm: f32 },
    #[error("target index {target} out of range for {classes} classes (row {row})")]
    TargetOutOfRange {
        row: usize,
        target: usize,
        classes: usize,
    },
    #[error("backward requires a scalar loss, got shape {got:?}")]
    NonScalarLoss { got: [usize; 2] },
    #[error("gather index {index} out of range for {rows} rows")]
    GatherOutOfRange { index: usize, rows: usize },
    #[error("optimizer needs total_steps > 0")]
    ZeroTotalSteps,
    #[error("training diverged: {what} became non-finite at {at}")]
    Diverged { what: &'static str, at: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, MathError>;

/// Dense row-major matrix of 32-bit floats. Scalars are 1x1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: [usize; 2],
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "tensor data length {} does not match shape {}x{}",
            data.len(),
            rows,
            cols
        );
        Self {
            shape: [rows, cols],
            data,
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn scalar(v: f32) -> Self {
        Self::new(1, 1, vec![v])
    }

    pub fn from_rows(rows: &[Vec<f32>]) -> Self {
        assert!(!rows.is_empty(), "from_rows: empty input");
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "from_rows: ragged input");
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    /// Gaussian(0, std) fill from the given generator.
    pub fn randn(rows: usize, cols: usize, std: f32, rng: &mut impl rand::Rng) -> Self {
        // Box-Muller keeps us off rand_distr for one distribution.
        let n = rows * cols;
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let u1: f32 = rng.gen_range(f32::EPSILON..1.0);
            let u2: f32 = rng.gen_range(0.0..1.0);
            let r = (-2.0 * u1.ln()).sqrt();
            let t = 2.0 * std::f32::consts::PI * u2;
            data.push(r * t.cos() * std);
            if data.len() < n {
                data.push(r * t.sin() * std);
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn shape(&self) -> [usize; 2] {
        self.shape
    }

    pub fn is_scalar(&self) -> bool {
        self.shape == [1, 1]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.shape[1]..(r + 1) * self.shape[1]]
    }

    pub fn at(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.shape[1] + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        self.data[r * self.shape[1] + c] = v;
    }

    pub fn item(&self) -> f32 {
        assert!(self.is_scalar(), "item() on non-scalar {:?}", self.shape);
        self.data[0]
    }

    pub fn fill(&mut self, v: f32) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise accumulate, shapes must match.
    pub fn add_assign(&mut self, other: &Tensor) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale_assign(&mut self, c: f32) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }
}

// ---------------------------------------------------------------------------
// Forward kernels. The tape records these; they are also usable standalone.
// ---------------------------------------------------------------------------

pub(crate) fn matmul_kernel(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.cols() != b.rows() {
        return Err(MathError::ShapeMismatch {
            op: "matmul",
            lhs: a.shape(),
            rhs: b.shape(),
        });
    }
    let (n, k, m) = (a.rows(), a.cols(), b.cols());
    let mut out = vec![0.0f32; n * m];
    for i in 0..n {
        let arow = a.row(i);
        let orow = &mut out[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate().take(k) {
            let brow = b.row(p);
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Ok(Tensor::new(n, m, out))
}

pub(crate) fn transpose_kernel(a: &Tensor) -> Tensor {
    let (n, m) = (a.rows(), a.cols());
    let mut out = vec![0.0f32; n * m];
    for i in 0..n {
        for j in 0..m {
            out[j * n + i] = a.at(i, j);
        }
    }
    Tensor::new(m, n, out)
}

/// Row-wise L2 normalization. Rows with norm below 1e-12 are an error.
pub fn l2_normalize_rows(x: &Tensor) -> Result<Tensor> {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let norm = row_norm(x, r);
        if norm < 1e-12 {
            return Err(MathError::ZeroNormRow { row: r });
        }
        for c in 0..x.cols() {
            out.set(r, c, x.at(r, c) / norm);
        }
    }
    Ok(out)
}

pub(crate) fn row_norm(x: &Tensor, r: usize) -> f32 {
    x.row(r).iter().map(|v| v * v).sum::<f32>().sqrt()
}

/// Mean over rows, producing a 1 x cols tensor.
pub fn mean_pool_rows(x: &Tensor) -> Result<Tensor> {
    if x.rows() == 0 {
        return Err(MathError::BadShape {
            op: "mean_pool_rows",
            expected: "at least one row",
            got: x.shape(),
        });
    }
    let mut out = vec![0.0f32; x.cols()];
    for r in 0..x.rows() {
        for (o, v) in out.iter_mut().zip(x.row(r)) {
            *o += v;
        }
    }
    let inv = 1.0 / x.rows() as f32;
    out.iter_mut().for_each(|v| *v *= inv);
    Ok(Tensor::new(1, x.cols(), out))
}

pub(crate) fn softmax_row(row: &[f32]) -> Vec<f32> {
    let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
    let mut out: Vec<f32> = row.iter().map(|v| (v - max).exp()).collect();
    let sum: f32 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= sum);
    out
}

/// Mean over rows of -log softmax(logits_row)[target_row].
pub fn softmax_ce_rows(logits: &Tensor, targets: &[usize]) -> Result<Tensor> {
    if targets.len() != logits.rows() {
        return Err(MathError::BadShape {
            op: "softmax_ce_rows",
            expected: "one target per row",
            got: [targets.len(), logits.rows()],
        });
    }
    let classes = logits.cols();
    let mut total = 0.0f32;
    for (r, &t) in targets.iter().enumerate() {
        if t >= classes {
            return Err(MathError::TargetOutOfRange {
                row: r,
                target: t,
                classes,
            });
        }
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        let logsum = row.iter().map(|v| (v - max).exp()).sum::<f32>().ln() + max;
        total += logsum - row[t];
    }
    Ok(Tensor::scalar(total / logits.rows() as f32))
}
