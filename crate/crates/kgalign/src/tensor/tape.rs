//! Single-threaded reverse-mode gradient tape.
//!
//! A [`Tape`] is created per training step. Leaves are either constants or
//! bound to a [`ParamSet`] entry; recorded ops build the forward value
//! immediately and remember enough to run the reverse sweep. `backward`
//! accumulates parameter gradients into the bound set, so repeated backward
//! calls without `zero_grads` stack, matching standalone-gradient semantics.

use super::params::{ParamId, ParamSet};
use super::{
    l2_normalize_rows, matmul_kernel, mean_pool_rows, row_norm, softmax_ce_rows, softmax_row,
    transpose_kernel, MathError, Result, Tensor,
};

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf { param: Option<ParamId> },
    Matmul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    AddRowBroadcast(Var, Var),
    Scale(Var, f32),
    MulScalarNode(Var, Var),
    ExpScalar(Var),
    L2NormalizeRows(Var),
    MeanPoolRows(Var),
    SoftmaxCeRows(Var, Vec<usize>),
    SoftmaxRows(Var),
    GatherRows(Var, Vec<usize>),
    RowwiseDot(Var, Var),
    SegmentSoftmax(Var, Vec<usize>),
    MulColBroadcast(Var, Var),
    SegmentSumRows(Var, Vec<usize>),
    LayerNormRows { x: Var, gain: Var, bias: Var },
    Softplus(Var),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceCols { x: Var, start: usize, len: usize },
    Dropout(Var, Vec<f32>),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Recording tape. One owner, one thread, one step.
pub struct Tape {
    nodes: Vec<Node>,
}

const LN_EPS: f32 = 1e-5;

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    // Op outputs are not checked for finiteness here: training loops watch
    // the loss and abort on divergence, which must be observable rather
    // than a panic mid-graph.
    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf; receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { param: None })
    }

    /// Leaf bound to a parameter; backward accumulates into the set.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        self.push(params.value(id).clone(), Op::Leaf { param: Some(id) })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = matmul_kernel(self.value(a), self.value(b))?;
        Ok(self.push(v, Op::Matmul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = transpose_kernel(self.value(a));
        self.push(v, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(MathError::ShapeMismatch {
                op: "add",
                lhs: self.shape(a),
                rhs: self.shape(b),
            });
        }
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        Ok(self.push(v, Op::Add(a, b)))
    }

    /// `a` is n x m, `bias` is 1 x m, added to every row.
    pub fn add_row_broadcast(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(bias));
        if sb[0] != 1 || sb[1] != sa[1] {
            return Err(MathError::ShapeMismatch {
                op: "add_row_broadcast",
                lhs: sa,
                rhs: sb,
            });
        }
        let mut v = self.value(a).clone();
        for r in 0..sa[0] {
            for c in 0..sa[1] {
                let x = v.at(r, c) + self.nodes[bias.0].value.at(0, c);
                v.set(r, c, x);
            }
        }
        Ok(self.push(v, Op::AddRowBroadcast(a, bias)))
    }

    pub fn scale(&mut self, a: Var, c: f32) -> Var {
        let mut v = self.value(a).clone();
        v.scale_assign(c);
        self.push(v, Op::Scale(a, c))
    }

    /// Multiply every entry of `a` by the 1x1 node `s`.
    pub fn mul_scalar_node(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.shape(s) != [1, 1] {
            return Err(MathError::BadShape {
                op: "mul_scalar_node",
                expected: "1x1 scalar",
                got: self.shape(s),
            });
        }
        let sv = self.value(s).item();
        let mut v = self.value(a).clone();
        v.scale_assign(sv);
        Ok(self.push(v, Op::MulScalarNode(a, s)))
    }

    /// exp of a 1x1 node.
    pub fn exp_scalar(&mut self, s: Var) -> Result<Var> {
        if self.shape(s) != [1, 1] {
            return Err(MathError::BadShape {
                op: "exp_scalar",
                expected: "1x1 scalar",
                got: self.shape(s),
            });
        }
        let v = Tensor::scalar(self.value(s).item().exp());
        Ok(self.push(v, Op::ExpScalar(s)))
    }

    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let v = l2_normalize_rows(self.value(a))?;
        Ok(self.push(v, Op::L2NormalizeRows(a)))
    }

    pub fn mean_pool_rows(&mut self, a: Var) -> Result<Var> {
        let v = mean_pool_rows(self.value(a))?;
        Ok(self.push(v, Op::MeanPoolRows(a)))
    }

    pub fn softmax_ce_rows(&mut self, logits: Var, targets: Vec<usize>) -> Result<Var> {
        let v = softmax_ce_rows(self.value(logits), &targets)?;
        Ok(self.push(v, Op::SoftmaxCeRows(logits, targets)))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for r in 0..x.rows() {
            let sm = softmax_row(x.row(r));
            for (c, s) in sm.into_iter().enumerate() {
                v.set(r, c, s);
            }
        }
        self.push(v, Op::SoftmaxRows(a))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Result<Var> {
        let x = self.value(a);
        let mut data = Vec::with_capacity(idx.len() * x.cols());
        for &i in &idx {
            if i >= x.rows() {
                return Err(MathError::GatherOutOfRange {
                    index: i,
                    rows: x.rows(),
                });
            }
            data.extend_from_slice(x.row(i));
        }
        let v = Tensor::new(idx.len(), x.cols(), data);
        Ok(self.push(v, Op::GatherRows(a, idx)))
    }

    /// Per-row dot product of equally shaped matrices, n x d -> n x 1.
    pub fn rowwise_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(MathError::ShapeMismatch {
                op: "rowwise_dot",
                lhs: self.shape(a),
                rhs: self.shape(b),
            });
        }
        let (x, y) = (self.value(a), self.value(b));
        let data: Vec<f32> = (0..x.rows())
            .map(|r| x.row(r).iter().zip(y.row(r)).map(|(p, q)| p * q).sum())
            .collect();
        let v = Tensor::new(x.rows(), 1, data);
        Ok(self.push(v, Op::RowwiseDot(a, b)))
    }

    /// Softmax over groups of rows of an n x 1 column. `segments[i]` is the
    /// group of row i; groups must be contiguous and non-decreasing.
    pub fn segment_softmax(&mut self, a: Var, segments: Vec<usize>) -> Result<Var> {
        let x = self.value(a);
        if x.cols() != 1 || segments.len() != x.rows() {
            return Err(MathError::BadShape {
                op: "segment_softmax",
                expected: "n x 1 with one segment id per row",
                got: x.shape(),
            });
        }
        debug_assert!(segments.windows(2).all(|w| w[0] <= w[1]));
        let mut v = x.clone();
        let mut start = 0;
        while start < segments.len() {
            let mut end = start;
            while end < segments.len() && segments[end] == segments[start] {
                end += 1;
            }
            let col: Vec<f32> = (start..end).map(|r| x.at(r, 0)).collect();
            for (off, s) in softmax_row(&col).into_iter().enumerate() {
                v.set(start + off, 0, s);
            }
            start = end;
        }
        Ok(self.push(v, Op::SegmentSoftmax(a, segments)))
    }

    /// Scale row i of `v` (n x d) by entry i of `w` (n x 1).
    pub fn mul_col_broadcast(&mut self, w: Var, v: Var) -> Result<Var> {
        let (sw, sv) = (self.shape(w), self.shape(v));
        if sw[1] != 1 || sw[0] != sv[0] {
            return Err(MathError::ShapeMismatch {
                op: "mul_col_broadcast",
                lhs: sw,
                rhs: sv,
            });
        }
        let (wt, vt) = (self.value(w), self.value(v));
        let mut out = vt.clone();
        for r in 0..sv[0] {
            let s = wt.at(r, 0);
            for c in 0..sv[1] {
                out.set(r, c, vt.at(r, c) * s);
            }
        }
        Ok(self.push(out, Op::MulColBroadcast(w, v)))
    }

    /// Sum rows of `v` into `n_segments` output rows by segment id.
    pub fn segment_sum_rows(&mut self, v: Var, segments: Vec<usize>, n_segments: usize) -> Result<Var> {
        let x = self.value(v);
        if segments.len() != x.rows() {
            return Err(MathError::BadShape {
                op: "segment_sum_rows",
                expected: "one segment id per row",
                got: x.shape(),
            });
        }
        let mut out = Tensor::zeros(n_segments, x.cols());
        for (r, &s) in segments.iter().enumerate() {
            debug_assert!(s < n_segments);
            for c in 0..x.cols() {
                out.set(s, c, out.at(s, c) + x.at(r, c));
            }
        }
        Ok(self.push(out, Op::SegmentSumRows(v, segments)))
    }

    /// Per-row layer norm with learned gain/bias (both 1 x d).
    pub fn layer_norm_rows(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let sx = self.shape(x);
        for (nm, g) in [("gain", gain), ("bias", bias)] {
            let s = self.shape(g);
            if s[0] != 1 || s[1] != sx[1] {
                return Err(MathError::ShapeMismatch {
                    op: if nm == "gain" {
                        "layer_norm_rows gain"
                    } else {
                        "layer_norm_rows bias"
                    },
                    lhs: sx,
                    rhs: s,
                });
            }
        }
        let xv = self.value(x);
        let gv = self.value(gain);
        let bv = self.value(bias);
        let d = sx[1] as f32;
        let mut out = xv.clone();
        for r in 0..sx[0] {
            let row = xv.row(r);
            let mean: f32 = row.iter().sum::<f32>() / d;
            let var: f32 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            for c in 0..sx[1] {
                out.set(r, c, (xv.at(r, c) - mean) * inv * gv.at(0, c) + bv.at(0, c));
            }
        }
        Ok(self.push(out, Op::LayerNormRows { x, gain, bias }))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut v = x.clone();
        for e in v.data_mut() {
            *e = softplus_scalar(*e);
        }
        self.push(v, Op::Softplus(a))
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Result<Var> {
        assert!(!parts.is_empty(), "concat_rows: empty input");
        let cols = self.shape(parts[0])[1];
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in &parts {
            let s = self.shape(p);
            if s[1] != cols {
                return Err(MathError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: [rows, cols],
                    rhs: s,
                });
            }
            rows += s[0];
            data.extend_from_slice(self.value(p).data());
        }
        let v = Tensor::new(rows, cols, data);
        Ok(self.push(v, Op::ConcatRows(parts)))
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Result<Var> {
        assert!(!parts.is_empty(), "concat_cols: empty input");
        let rows = self.shape(parts[0])[0];
        let mut cols = 0;
        for &p in &parts {
            let s = self.shape(p);
            if s[0] != rows {
                return Err(MathError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: [rows, cols],
                    rhs: s,
                });
            }
            cols += s[1];
        }
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for &p in &parts {
            let pv = self.value(p).clone();
            for r in 0..rows {
                for c in 0..pv.cols() {
                    out.set(r, offset + c, pv.at(r, c));
                }
            }
            offset += pv.cols();
        }
        Ok(self.push(out, Op::ConcatCols(parts)))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let s = self.shape(x);
        if start + len > s[1] {
            return Err(MathError::BadShape {
                op: "slice_cols",
                expected: "start + len within column count",
                got: s,
            });
        }
        let xv = self.value(x);
        let mut out = Tensor::zeros(s[0], len);
        for r in 0..s[0] {
            for c in 0..len {
                out.set(r, c, xv.at(r, start + c));
            }
        }
        Ok(self.push(out, Op::SliceCols { x, start, len }))
    }

    /// Inverted dropout: surviving entries are scaled by 1/keep. The mask is
    /// recorded so backward reuses it.
    pub fn dropout(&mut self, a: Var, rate: f32, rng: &mut impl rand::Rng) -> Var {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
        if rate == 0.0 {
            return a;
        }
        let keep = 1.0 - rate;
        let x = self.value(a);
        let mask: Vec<f32> = (0..x.data().len())
            .map(|_| {
                if rng.gen_range(0.0f32..1.0) < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            })
            .collect();
        let mut v = x.clone();
        for (e, m) in v.data_mut().iter_mut().zip(&mask) {
            *e *= m;
        }
        self.push(v, Op::Dropout(a, mask))
    }

    /// Reverse sweep from a scalar loss. Parameter gradients are accumulated
    /// into `params`.
    pub fn backward(&self, loss: Var, params: &mut ParamSet) -> Result<()> {
        if self.shape(loss) != [1, 1] {
            return Err(MathError::NonScalarLoss {
                got: self.shape(loss),
            });
        }
        self.backward_with_seeds(&[(loss, Tensor::scalar(1.0))], params)
    }

    /// Reverse sweep seeded with explicit output gradients. Used when the
    /// head of the loss lives outside the tape (a backend that returns
    /// gradients with respect to our outputs).
    pub fn backward_with_seeds(&self, seeds: &[(Var, Tensor)], params: &mut ParamSet) -> Result<()> {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            if g.shape() != self.shape(*v) {
                return Err(MathError::ShapeMismatch {
                    op: "backward seed",
                    lhs: self.shape(*v),
                    rhs: g.shape(),
                });
            }
            accumulate(&mut grads, v.0, g.clone());
        }

        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Leaf { param } => {
                    if let Some(id) = param {
                        params.accumulate_grad(*id, &g);
                    }
                }
                Op::Matmul(a, b) => {
                    let bt = transpose_kernel(self.value(*b));
                    let da = matmul_kernel(&g, &bt).expect("matmul backward");
                    let at = transpose_kernel(self.value(*a));
                    let db = matmul_kernel(&at, &g).expect("matmul backward");
                    accumulate(&mut grads, a.0, da);
                    accumulate(&mut grads, b.0, db);
                }
                Op::Transpose(a) => {
                    accumulate(&mut grads, a.0, transpose_kernel(&g));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a.0, g.clone());
                    accumulate(&mut grads, b.0, g);
                }
                Op::AddRowBroadcast(a, bias) => {
                    let mut db = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for c in 0..g.cols() {
                            db.set(0, c, db.at(0, c) + g.at(r, c));
                        }
                    }
                    accumulate(&mut grads, a.0, g);
                    accumulate(&mut grads, bias.0, db);
                }
                Op::Scale(a, c) => {
                    let mut da = g;
                    da.scale_assign(*c);
                    accumulate(&mut grads, a.0, da);
                }
                Op::MulScalarNode(a, s) => {
                    let sv = self.value(*s).item();
                    let av = self.value(*a);
                    let mut ds = 0.0f64;
                    for (gv, avv) in g.data().iter().zip(av.data()) {
                        ds += (*gv as f64) * (*avv as f64);
                    }
                    let mut da = g;
                    da.scale_assign(sv);
                    accumulate(&mut grads, a.0, da);
                    accumulate(&mut grads, s.0, Tensor::scalar(ds as f32));
                }
                Op::ExpScalar(s) => {
                    let out = self.nodes[i].value.item();
                    accumulate(&mut grads, s.0, Tensor::scalar(g.item() * out));
                }
                Op::L2NormalizeRows(a) => {
                    let x = self.value(*a);
                    let y = &self.nodes[i].value;
                    let mut da = Tensor::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let norm = row_norm(x, r);
                        let dot: f32 = y.row(r).iter().zip(g.row(r)).map(|(p, q)| p * q).sum();
                        for c in 0..x.cols() {
                            da.set(r, c, (g.at(r, c) - y.at(r, c) * dot) / norm);
                        }
                    }
                    accumulate(&mut grads, a.0, da);
                }
                Op::MeanPoolRows(a) => {
                    let n = self.shape(*a)[0];
                    let mut da = Tensor::zeros(n, g.cols());
                    let inv = 1.0 / n as f32;
                    for r in 0..n {
                        for c in 0..g.cols() {
                            da.set(r, c, g.at(0, c) * inv);
                        }
                    }
                    accumulate(&mut grads, a.0, da);
                }
                Op::SoftmaxCeRows(logits, targets) => {
                    let x = self.value(*logits);
                    let gscale = g.item() / x.rows() as f32;
                    let mut da = Tensor::zeros(x.rows(), x.cols());
                    for (r, &t) in targets.iter().enumerate() {
                        let sm = softmax_row(x.row(r));
                        for (c, s) in sm.into_iter().enumerate() {
                            let ind = if c == t { 1.0 } else { 0.0 };
                            da.set(r, c, (s - ind) * gscale);
                        }
                    }
                    accumulate(&mut grads, logits.0, da);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[i].value;
                    let mut da = Tensor::zeros(y.rows(), y.cols());
                    for r in 0..y.rows() {
                        let dot: f32 = y.row(r).iter().zip(g.row(r)).map(|(p, q)| p * q).sum();
                        for c in 0..y.cols() {
                            da.set(r, c, y.at(r, c) * (g.at(r, c) - dot));
                        }
                    }
                    accumulate(&mut grads, a.0, da);
                }
                Op::GatherRows(a, idx) => {
                    let sa = self.shape(*a);
                    let mut da = Tensor::zeros(sa[0], sa[1]);
                    for (r, &src) in idx.iter().enumerate() {
                        for c in 0..sa[1] {
                            da.set(src, c, da.at(src, c) + g.at(r, c));
                        }
                    }
                    accumulate(&mut grads, a.0, da);
                }
                Op::RowwiseDot(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut da = Tensor::zeros(av.rows(), av.cols());
                    let mut db = Tensor::zeros(av.rows(), av.cols());
                    for r in 0..av.rows() {
                        let gr = g.at(r, 0);
                        for c in 0..av.cols() {
                            da.set(r, c, gr * bv.at(r, c));
                            db.set(r, c, gr * av.at(r, c));
                        }
                    }
                    accumulate(&mut grads, a.0, da);
                    accumulate(&mut grads, b.0, db);
                }
                Op::SegmentSoftmax(a, segments) => {
                    let y = &self.nodes[i].value;
                    let mut da = Tensor::zeros(y.rows(), 1);
                    let mut start = 0;
                    while start < segments.len() {
                        let mut end = start;
                        while end < segments.len() && segments[end] == segments[start] {
                            end += 1;
                        }
                        let dot: f32 = (start..end).map(|r| y.at(r, 0) * g.at(r, 0)).sum();
                        for r in start..end {
                            da.set(r, 0, y.at(r, 0) * (g.at(r, 0) - dot));
                        }
                        start = end;
                    }
                    accumulate(&mut grads, a.0, da);
                }
                Op::MulColBroadcast(w, v) => {
                    let (wv, vv) = (self.value(*w), self.value(*v));
                    let mut dw = Tensor::zeros(wv.rows(), 1);
                    let mut dv = Tensor::zeros(vv.rows(), vv.cols());
                    for r in 0..vv.rows() {
                        let mut acc = 0.0f32;
                        let s = wv.at(r, 0);
                        for c in 0..vv.cols() {
                            acc += g.at(r, c) * vv.at(r, c);
                            dv.set(r, c, g.at(r, c) * s);
                        }
                        dw.set(r, 0, acc);
                    }
                    accumulate(&mut grads, w.0, dw);
                    accumulate(&mut grads, v.0, dv);
                }
                Op::SegmentSumRows(v, segments) => {
                    let sv = self.shape(*v);
                    let mut dv = Tensor::zeros(sv[0], sv[1]);
                    for (r, &s) in segments.iter().enumerate() {
                        for c in 0..sv[1] {
                            dv.set(r, c, g.at(s, c));
                        }
                    }
                    accumulate(&mut grads, v.0, dv);
                }
                Op::LayerNormRows { x, gain, bias } => {
                    let xv = self.value(*x);
                    let gv = self.value(*gain);
                    let d = xv.cols() as f32;
                    let mut dx = Tensor::zeros(xv.rows(), xv.cols());
                    let mut dgain = Tensor::zeros(1, xv.cols());
                    let mut dbias = Tensor::zeros(1, xv.cols());
                    for r in 0..xv.rows() {
                        let row = xv.row(r);
                        let mean: f32 = row.iter().sum::<f32>() / d;
                        let var: f32 =
                            row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / d;
                        let inv = 1.0 / (var + LN_EPS).sqrt();
                        let xhat: Vec<f32> = row.iter().map(|v| (v - mean) * inv).collect();
                        // dL/dxhat = g * gain; then the standard layer-norm pullback.
                        let dxhat: Vec<f32> = (0..xv.cols())
                            .map(|c| g.at(r, c) * gv.at(0, c))
                            .collect();
                        let mean_dxhat: f32 = dxhat.iter().sum::<f32>() / d;
                        let mean_dxhat_xhat: f32 =
                            dxhat.iter().zip(&xhat).map(|(p, q)| p * q).sum::<f32>() / d;
                        for c in 0..xv.cols() {
                            dx.set(
                                r,
                                c,
                                inv * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat),
                            );
                            dgain.set(0, c, dgain.at(0, c) + g.at(r, c) * xhat[c]);
                            dbias.set(0, c, dbias.at(0, c) + g.at(r, c));
                        }
                    }
                    accumulate(&mut grads, x.0, dx);
                    accumulate(&mut grads, gain.0, dgain);
                    accumulate(&mut grads, bias.0, dbias);
                }
                Op::Softplus(a) => {
                    let x = self.value(*a);
                    let mut da = g;
                    for (e, xv) in da.data_mut().iter_mut().zip(x.data()) {
                        *e *= sigmoid(*xv);
                    }
                    accumulate(&mut grads, a.0, da);
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let s = self.shape(p);
                        let mut dp = Tensor::zeros(s[0], s[1]);
                        for r in 0..s[0] {
                            for c in 0..s[1] {
                                dp.set(r, c, g.at(offset + r, c));
                            }
                        }
                        accumulate(&mut grads, p.0, dp);
                        offset += s[0];
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let s = self.shape(p);
                        let mut dp = Tensor::zeros(s[0], s[1]);
                        for r in 0..s[0] {
                            for c in 0..s[1] {
                                dp.set(r, c, g.at(r, offset + c));
                            }
                        }
                        accumulate(&mut grads, p.0, dp);
                        offset += s[1];
                    }
                }
                Op::SliceCols { x, start, len } => {
                    let s = self.shape(*x);
                    let mut dx = Tensor::zeros(s[0], s[1]);
                    for r in 0..s[0] {
                        for c in 0..*len {
                            dx.set(r, start + c, g.at(r, c));
                        }
                    }
                    accumulate(&mut grads, x.0, dx);
                }
                Op::Dropout(a, mask) => {
                    let mut da = g;
                    for (e, m) in da.data_mut().iter_mut().zip(mask) {
                        *e *= m;
                    }
                    accumulate(&mut grads, a.0, da);
                }
            }
        }
        Ok(())
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn accumulate(grads: &mut [Option<Tensor>], idx: usize, delta: Tensor) {
    match &mut grads[idx] {
        Some(t) => t.add_assign(&delta),
        slot @ None => *slot = Some(delta),
    }
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus_scalar(x: f32) -> f32 {
    // Stable form: max(x, 0) + ln(1 + exp(-|x|)).
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
