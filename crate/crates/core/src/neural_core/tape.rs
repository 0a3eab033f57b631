//! Reverse-mode differentiation over dense row-major matrices.
//!
//! A [`Tape`] records every operation of a forward pass. Values are 2-D
//! `f64` arrays; batches are laid out as rows, features as columns.
//! [`Tape::backward`] walks the record in reverse and accumulates
//! gradients for every node that depends on a trainable leaf.

use std::sync::Arc;

use ndarray::{s, Array2, Axis, Zip};

pub type Tensor = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// x (n×k) · wᵀ (w is m×k)
    MatMulT(Var, Var),
    /// a (n×k) · b (k×m)
    MatMul(Var, Var),
    /// x (n×m) + b (1×m)
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    GatherRows(Var, Arc<Vec<usize>>),
    /// out[seg[i]] += x[i] * weight[seg[i]]
    SegmentMean {
        x: Var,
        segments: Arc<Vec<usize>>,
        weights: Arc<Vec<f64>>,
    },
    /// out.flat[k] = x.flat[index[k]]
    GatherFlat(Var, Arc<Vec<usize>>),
    /// rows of `a` reinterpreted as d×d matrices times rows of `v`
    RowMatVec(Var, Var),
    SelectRows {
        when_true: Var,
        when_false: Var,
        mask: Arc<Vec<bool>>,
    },
    /// Σ_k w_k log2(1 + exp(-(1-2c_k) l_k)), scalar
    BceLogits {
        logits: Var,
        targets: Arc<Vec<u8>>,
        weight: f64,
    },
    Sum(Var),
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn accumulate(slot: &mut Option<Tensor>, g: Tensor) {
    match slot {
        Some(acc) => *acc += &g,
        None => *slot = Some(g),
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, mut value: Tensor, op: Op, requires_grad: bool) -> Var {
        if !value.is_standard_layout() {
            value = value.as_standard_layout().into_owned();
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn matmul_t(&mut self, x: Var, w: Var) -> Var {
        let value = self.value(x).dot(&self.value(w).t());
        let rg = self.rg(x) || self.rg(w);
        self.push(value, Op::MatMulT(x, w), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).dot(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::MatMul(a, b), rg)
    }

    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let value = self.value(x) + self.value(b);
        let rg = self.rg(x) || self.rg(b);
        self.push(value, Op::AddBias(x, b), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) * self.value(b);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let value = self.value(x) * c;
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, c), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).mapv(|v| v.max(0.0));
        let rg = self.rg(x);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row mismatch");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatCols(parts.to_vec()), rg)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let value = ndarray::concatenate(Axis(0), &views).expect("concat_rows: column mismatch");
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(value, Op::ConcatRows(parts.to_vec()), rg)
    }

    pub fn gather_rows(&mut self, x: Var, index: Arc<Vec<usize>>) -> Var {
        let src = self.value(x);
        let cols = src.ncols();
        let mut value = Tensor::zeros((index.len(), cols));
        for (r, &i) in index.iter().enumerate() {
            value.row_mut(r).assign(&src.row(i));
        }
        let rg = self.rg(x);
        self.push(value, Op::GatherRows(x, index), rg)
    }

    /// Weighted scatter-add of rows into `num_segments` output rows. With
    /// `weights[s] = 1/|segment s|` this is the mean aggregation; segments
    /// without members stay zero. Summation follows row order.
    pub fn segment_mean(
        &mut self,
        x: Var,
        segments: Arc<Vec<usize>>,
        weights: Arc<Vec<f64>>,
    ) -> Var {
        let src = self.value(x);
        debug_assert_eq!(src.nrows(), segments.len());
        let mut value = Tensor::zeros((weights.len(), src.ncols()));
        for (r, &seg) in segments.iter().enumerate() {
            let w = weights[seg];
            value
                .row_mut(seg)
                .scaled_add(w, &src.row(r));
        }
        let rg = self.rg(x);
        self.push(
            value,
            Op::SegmentMean {
                x,
                segments,
                weights,
            },
            rg,
        )
    }

    /// General element gather producing a `rows × cols` matrix.
    pub fn gather_flat(&mut self, x: Var, index: Arc<Vec<usize>>, rows: usize, cols: usize) -> Var {
        assert_eq!(index.len(), rows * cols, "gather_flat: index length");
        let src = self.value(x);
        let flat = src.as_slice().expect("tape tensors are standard layout");
        let data: Vec<f64> = index.iter().map(|&i| flat[i]).collect();
        let value = Tensor::from_shape_vec((rows, cols), data).expect("shape");
        let rg = self.rg(x);
        self.push(value, Op::GatherFlat(x, index), rg)
    }

    /// Row-wise matrix-vector product: row `r` of `a` holds a d×d matrix
    /// (row-major), row `r` of `v` a d-vector.
    pub fn row_mat_vec(&mut self, a: Var, v: Var) -> Var {
        let (n, d) = self.shape(v);
        assert_eq!(self.shape(a), (n, d * d), "row_mat_vec: shape");
        let av = self.value(a);
        let vv = self.value(v);
        let mut value = Tensor::zeros((n, d));
        for r in 0..n {
            let arow = av.row(r);
            let vrow = vv.row(r);
            for i in 0..d {
                let mut acc = 0.0;
                for j in 0..d {
                    acc += arow[i * d + j] * vrow[j];
                }
                value[(r, i)] = acc;
            }
        }
        let rg = self.rg(a) || self.rg(v);
        self.push(value, Op::RowMatVec(a, v), rg)
    }

    pub fn select_rows(&mut self, when_true: Var, when_false: Var, mask: Arc<Vec<bool>>) -> Var {
        let mut value = self.value(when_false).clone();
        let t = self.value(when_true);
        for (r, &m) in mask.iter().enumerate() {
            if m {
                value.row_mut(r).assign(&t.row(r));
            }
        }
        let rg = self.rg(when_true) || self.rg(when_false);
        self.push(
            value,
            Op::SelectRows {
                when_true,
                when_false,
                mask,
            },
            rg,
        )
    }

    /// Binary cross-entropy in bits between LLR logits (positive favors
    /// bit 0) and target bits, summed over all entries and scaled by
    /// `weight`. Returns a 1×1 tensor.
    pub fn bce_logits(&mut self, logits: Var, targets: Arc<Vec<u8>>, weight: f64) -> Var {
        let l = self.value(logits);
        let flat = l.as_slice().expect("standard layout");
        assert_eq!(flat.len(), targets.len(), "bce_logits: target length");
        let mut acc = 0.0;
        for (&x, &c) in flat.iter().zip(targets.iter()) {
            let z = if c == 0 { x } else { -x };
            acc += softplus(-z);
        }
        let value = Tensor::from_elem((1, 1), weight * acc / std::f64::consts::LN_2);
        let rg = self.rg(logits);
        self.push(
            value,
            Op::BceLogits {
                logits,
                targets,
                weight,
            },
            rg,
        )
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::from_elem((1, 1), self.value(x).sum());
        let rg = self.rg(x);
        self.push(value, Op::Sum(x), rg)
    }

    /// Reverse sweep from the scalar `root`.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let (r, c) = self.shape(root);
        grads[root.0] = Some(Tensor::ones((r, c)));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Gradients { grads }
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &node.op {
            Op::Leaf => {}
            Op::MatMulT(x, w) => {
                if self.rg(*x) {
                    accumulate(&mut grads[x.0], g.dot(self.value(*w)));
                }
                if self.rg(*w) {
                    accumulate(&mut grads[w.0], g.t().dot(self.value(*x)));
                }
            }
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], g.dot(&self.value(*b).t()));
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], self.value(*a).t().dot(g));
                }
            }
            Op::AddBias(x, b) => {
                if self.rg(*x) {
                    accumulate(&mut grads[x.0], g.clone());
                }
                if self.rg(*b) {
                    let gb = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    accumulate(&mut grads[b.0], gb);
                }
            }
            Op::Add(a, b) => {
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], -g);
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], g * self.value(*b));
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], g * self.value(*a));
                }
            }
            Op::Scale(x, c) => {
                accumulate(&mut grads[x.0], g * *c);
            }
            Op::Relu(x) => {
                let mut gx = g.clone();
                Zip::from(&mut gx).and(&node.value).for_each(|gv, &y| {
                    if y <= 0.0 {
                        *gv = 0.0;
                    }
                });
                accumulate(&mut grads[x.0], gx);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = self.shape(*p).1;
                    if self.rg(*p) {
                        let slice = g.slice(s![.., offset..offset + w]).to_owned();
                        accumulate(&mut grads[p.0], slice);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let h = self.shape(*p).0;
                    if self.rg(*p) {
                        let slice = g.slice(s![offset..offset + h, ..]).to_owned();
                        accumulate(&mut grads[p.0], slice);
                    }
                    offset += h;
                }
            }
            Op::GatherRows(x, index) => {
                let mut gx = Tensor::zeros(self.shape(*x));
                for (r, &i) in index.iter().enumerate() {
                    gx.row_mut(i).scaled_add(1.0, &g.row(r));
                }
                accumulate(&mut grads[x.0], gx);
            }
            Op::SegmentMean {
                x,
                segments,
                weights,
            } => {
                let mut gx = Tensor::zeros(self.shape(*x));
                for (r, &seg) in segments.iter().enumerate() {
                    gx.row_mut(r).scaled_add(weights[seg], &g.row(seg));
                }
                accumulate(&mut grads[x.0], gx);
            }
            Op::GatherFlat(x, index) => {
                let mut gx = Tensor::zeros(self.shape(*x));
                {
                    let flat = gx.as_slice_mut().expect("standard layout");
                    let gf = g.as_slice().expect("standard layout");
                    for (k, &i) in index.iter().enumerate() {
                        flat[i] += gf[k];
                    }
                }
                accumulate(&mut grads[x.0], gx);
            }
            Op::RowMatVec(a, v) => {
                let (n, d) = self.shape(*v);
                let av = self.value(*a);
                let vv = self.value(*v);
                if self.rg(*a) {
                    let mut ga = Tensor::zeros((n, d * d));
                    for r in 0..n {
                        for i in 0..d {
                            let gi = g[(r, i)];
                            for j in 0..d {
                                ga[(r, i * d + j)] = gi * vv[(r, j)];
                            }
                        }
                    }
                    accumulate(&mut grads[a.0], ga);
                }
                if self.rg(*v) {
                    let mut gv = Tensor::zeros((n, d));
                    for r in 0..n {
                        for i in 0..d {
                            let gi = g[(r, i)];
                            for j in 0..d {
                                gv[(r, j)] += gi * av[(r, i * d + j)];
                            }
                        }
                    }
                    accumulate(&mut grads[v.0], gv);
                }
            }
            Op::SelectRows {
                when_true,
                when_false,
                mask,
            } => {
                if self.rg(*when_true) {
                    let mut gt = g.clone();
                    for (r, &m) in mask.iter().enumerate() {
                        if !m {
                            gt.row_mut(r).fill(0.0);
                        }
                    }
                    accumulate(&mut grads[when_true.0], gt);
                }
                if self.rg(*when_false) {
                    let mut gf = g.clone();
                    for (r, &m) in mask.iter().enumerate() {
                        if m {
                            gf.row_mut(r).fill(0.0);
                        }
                    }
                    accumulate(&mut grads[when_false.0], gf);
                }
            }
            Op::BceLogits {
                logits,
                targets,
                weight,
            } => {
                let scale = g[(0, 0)] * weight / std::f64::consts::LN_2;
                let l = self.value(*logits);
                let mut gl = Tensor::zeros(l.dim());
                {
                    let out = gl.as_slice_mut().expect("standard layout");
                    let lf = l.as_slice().expect("standard layout");
                    for k in 0..lf.len() {
                        let sign = if targets[k] == 0 { 1.0 } else { -1.0 };
                        // d/dx softplus(-s x) = -s * sigmoid(-s x)
                        out[k] = -sign * sigmoid(-sign * lf[k]) * scale;
                    }
                }
                accumulate(&mut grads[logits.0], gl);
            }
            Op::Sum(x) => {
                let gx = Tensor::from_elem(self.shape(*x), g[(0, 0)]);
                accumulate(&mut grads[x.0], gx);
            }
        }
    }
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
