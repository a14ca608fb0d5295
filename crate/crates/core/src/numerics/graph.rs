//! Reverse-mode tape over [`Tensor`] values.
//!
//! Operations are recorded in execution order; [`Graph::backward`] walks the
//! tape in exact reverse, accumulating adjoints into the gradient buffer of
//! every node that requires gradients. The tape is rebuilt per forward pass,
//! so graphs whose structure varies between instances (different sentence
//! lengths, different relevant-set sizes) need no special handling.
//!
//! Shape violations are programmer errors and panic with a "shape mismatch"
//! message; data-dependent failures surface as `Result`s in the callers.

#![allow(clippy::needless_range_loop)]

use super::tensor::Tensor;

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(pub(crate) usize);

/// Row-gather plan for the embedding lookup: one word row and two
/// position rows per real token; columns at or past `real_len` are padding
/// and stay exactly zero.
#[derive(Clone, Debug)]
pub struct GatherPlan {
    pub word_rows: Vec<usize>,
    pub pos1_rows: Vec<usize>,
    pub pos2_rows: Vec<usize>,
    pub t_max: usize,
}

impl GatherPlan {
    pub fn real_len(&self) -> usize {
        self.word_rows.len()
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Matmul(NodeId, NodeId),
    VecMat(NodeId, NodeId),
    Dot(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Softmax(NodeId),
    MaskedSoftmax(NodeId, Vec<bool>),
    Sum(NodeId),
    Scale(NodeId, f64),
    Concat(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    Column(NodeId, usize),
    Embed {
        words: NodeId,
        positions: NodeId,
        plan: GatherPlan,
    },
    NegLogLikelihood(NodeId, usize),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Floor applied to the gold-class probability before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Recorded computation over tensors; owns every intermediate value.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, mut value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        value.requires_grad = requires_grad;
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].value.requires_grad
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of a node, zeros if backward never reached it.
    pub fn grad(&self, id: NodeId) -> Vec<f64> {
        self.nodes[id.0].value.grad_or_zeros()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.value.zero_grad();
        }
    }

    /// Insert a leaf holding `value`; `requires_grad` marks it as a
    /// differentiation target.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Leaf that never receives gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    fn binary_elementwise(
        &mut self,
        a: NodeId,
        b: NodeId,
        name: &str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Tensor {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() == tb.shape() {
            let data = ta
                .data()
                .iter()
                .zip(tb.data())
                .map(|(&x, &y)| f(x, y))
                .collect();
            Tensor::new(ta.shape().to_vec(), data)
        } else if ta.is_scalar() {
            let x = ta.data()[0];
            let data = tb.data().iter().map(|&y| f(x, y)).collect();
            Tensor::new(tb.shape().to_vec(), data)
        } else if tb.is_scalar() {
            let y = tb.data()[0];
            let data = ta.data().iter().map(|&x| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)
        } else {
            panic!(
                "shape mismatch in {}: {:?} vs {:?} (only scalar broadcast is allowed)",
                name,
                ta.shape(),
                tb.shape()
            );
        }
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.binary_elementwise(a, b, "add", |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.binary_elementwise(a, b, "sub", |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Sub(a, b), rg)
    }

    /// Elementwise product; either side may be a scalar.
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = self.binary_elementwise(a, b, "mul", |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Mul(a, b), rg)
    }

    /// Matrix product `A[m,k] * B[k,n] -> [m,n]`, or matrix-vector
    /// `A[m,k] * b[k] -> [m]` when `b` is rank 1.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert_eq!(
            ta.shape().len(),
            2,
            "shape mismatch in matmul: left operand must be rank 2, got {:?}",
            ta.shape()
        );
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let value = match tb.shape() {
            [kb, n] => {
                assert_eq!(
                    k,
                    *kb,
                    "shape mismatch in matmul: {:?} vs {:?}",
                    ta.shape(),
                    tb.shape()
                );
                let n = *n;
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for l in 0..k {
                        let aval = ta.data()[i * k + l];
                        if aval == 0.0 {
                            continue;
                        }
                        for j in 0..n {
                            out[i * n + j] += aval * tb.data()[l * n + j];
                        }
                    }
                }
                Tensor::matrix(m, n, out)
            }
            [kb] => {
                assert_eq!(
                    k,
                    *kb,
                    "shape mismatch in matmul: {:?} vs {:?}",
                    ta.shape(),
                    tb.shape()
                );
                let mut out = vec![0.0; m];
                for i in 0..m {
                    let mut acc = 0.0;
                    for l in 0..k {
                        acc += ta.data()[i * k + l] * tb.data()[l];
                    }
                    out[i] = acc;
                }
                Tensor::vector(out)
            }
            other => panic!(
                "shape mismatch in matmul: right operand must be rank 1 or 2, got {:?}",
                other
            ),
        };
        let rg = self.rg(a) || self.rg(b);
        self.push(value, Op::Matmul(a, b), rg)
    }

    /// Row-vector times matrix: `v[m] * M[m,n] -> [n]`.
    pub fn vec_mat(&mut self, v: NodeId, m: NodeId) -> NodeId {
        let (tv, tm) = (&self.nodes[v.0].value, &self.nodes[m.0].value);
        assert_eq!(
            tv.shape().len(),
            1,
            "shape mismatch in vec_mat: vector must be rank 1, got {:?}",
            tv.shape()
        );
        assert_eq!(
            tm.shape().len(),
            2,
            "shape mismatch in vec_mat: matrix must be rank 2, got {:?}",
            tm.shape()
        );
        let (rows, cols) = (tm.shape()[0], tm.shape()[1]);
        assert_eq!(
            tv.numel(),
            rows,
            "shape mismatch in vec_mat: {:?} vs {:?}",
            tv.shape(),
            tm.shape()
        );
        let mut out = vec![0.0; cols];
        for i in 0..rows {
            let x = tv.data()[i];
            if x == 0.0 {
                continue;
            }
            for j in 0..cols {
                out[j] += x * tm.data()[i * cols + j];
            }
        }
        let rg = self.rg(v) || self.rg(m);
        self.push(Tensor::vector(out), Op::VecMat(v, m), rg)
    }

    /// Inner product of two rank-1 tensors, producing a `[1]` scalar.
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(
            ta.shape().len() == 1 && tb.shape().len() == 1 && ta.numel() == tb.numel(),
            "shape mismatch in dot: {:?} vs {:?}",
            ta.shape(),
            tb.shape()
        );
        let acc: f64 = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).sum();
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::scalar(acc), Op::Dot(a, b), rg)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let ta = &self.nodes[a.0].value;
        let data = ta.data().iter().map(|&x| sigmoid(x)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data);
        let rg = self.rg(a);
        self.push(value, Op::Sigmoid(a), rg)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let ta = &self.nodes[a.0].value;
        let data = ta.data().iter().map(|&x| x.tanh()).collect();
        let value = Tensor::new(ta.shape().to_vec(), data);
        let rg = self.rg(a);
        self.push(value, Op::Tanh(a), rg)
    }

    /// Numerically stable softmax over a rank-1 tensor.
    pub fn softmax(&mut self, a: NodeId) -> NodeId {
        let ta = &self.nodes[a.0].value;
        assert!(
            ta.shape().len() == 1 && ta.numel() >= 1,
            "shape mismatch in softmax: need nonempty rank-1 tensor, got {:?}",
            ta.shape()
        );
        let value = Tensor::vector(softmax_slice(ta.data()));
        let rg = self.rg(a);
        self.push(value, Op::Softmax(a), rg)
    }

    /// Softmax restricted to positions where `mask` is true; masked
    /// positions come out exactly zero.
    pub fn masked_softmax(&mut self, a: NodeId, mask: Vec<bool>) -> NodeId {
        let ta = &self.nodes[a.0].value;
        assert!(
            ta.shape().len() == 1 && ta.numel() == mask.len(),
            "shape mismatch in masked_softmax: {:?} vs mask of {}",
            ta.shape(),
            mask.len()
        );
        assert!(
            mask.iter().any(|&m| m),
            "masked_softmax over an all-masked vector"
        );
        let x = ta.data();
        let max = x
            .iter()
            .zip(&mask)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut out = vec![0.0; x.len()];
        let mut denom = 0.0;
        for i in 0..x.len() {
            if mask[i] {
                out[i] = (x[i] - max).exp();
                denom += out[i];
            }
        }
        for (o, &m) in out.iter_mut().zip(&mask) {
            if m {
                *o /= denom;
            }
        }
        let rg = self.rg(a);
        self.push(Tensor::vector(out), Op::MaskedSoftmax(a, mask), rg)
    }

    /// Sum of all entries, as a `[1]` scalar.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let total: f64 = self.nodes[a.0].value.data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(total), Op::Sum(a), rg)
    }

    /// Multiply every entry by a compile-time-known constant.
    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let ta = &self.nodes[a.0].value;
        let data = ta.data().iter().map(|&x| x * factor).collect();
        let value = Tensor::new(ta.shape().to_vec(), data);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, factor), rg)
    }

    /// Concatenate rank-1 tensors into one rank-1 tensor.
    pub fn concat(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat of zero tensors");
        let mut data = Vec::new();
        let mut rg = false;
        for &p in parts {
            let tp = &self.nodes[p.0].value;
            assert_eq!(
                tp.shape().len(),
                1,
                "shape mismatch in concat: parts must be rank 1, got {:?}",
                tp.shape()
            );
            data.extend_from_slice(tp.data());
            rg |= self.rg(p);
        }
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), rg)
    }

    /// Stack rank-1 tensors of equal length as the columns of a matrix.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> NodeId {
        assert!(!parts.is_empty(), "concat_cols of zero tensors");
        let rows = self.nodes[parts[0].0].value.numel();
        let cols = parts.len();
        let mut data = vec![0.0; rows * cols];
        let mut rg = false;
        for (j, &p) in parts.iter().enumerate() {
            let tp = &self.nodes[p.0].value;
            assert!(
                tp.shape().len() == 1 && tp.numel() == rows,
                "shape mismatch in concat_cols: column {} has shape {:?}, expected [{}]",
                j,
                tp.shape(),
                rows
            );
            for (i, &v) in tp.data().iter().enumerate() {
                data[i * cols + j] = v;
            }
            rg |= self.rg(p);
        }
        self.push(
            Tensor::matrix(rows, cols, data),
            Op::ConcatCols(parts.to_vec()),
            rg,
        )
    }

    /// Column `j` of a rank-2 tensor, as a rank-1 tensor.
    pub fn column(&mut self, a: NodeId, j: usize) -> NodeId {
        let ta = &self.nodes[a.0].value;
        let (rows, cols) = (ta.rows(), ta.cols());
        assert!(j < cols, "column {} out of bounds for {:?}", j, ta.shape());
        let data = (0..rows).map(|i| ta.data()[i * cols + j]).collect();
        let rg = self.rg(a);
        self.push(Tensor::vector(data), Op::Column(a, j), rg)
    }

    /// Embedding lookup per the gather plan: column `i` of the result is the
    /// concatenation of a word-table row and two position-table rows; padding
    /// columns (at or past the plan's real length) are exactly zero and never
    /// route gradient.
    pub fn embed(&mut self, words: NodeId, positions: NodeId, plan: GatherPlan) -> NodeId {
        let (tw, tp) = (&self.nodes[words.0].value, &self.nodes[positions.0].value);
        let (d_we, d_pe) = (tw.cols(), tp.cols());
        let d = d_we + 2 * d_pe;
        let real = plan.real_len();
        assert!(
            real <= plan.t_max && plan.pos1_rows.len() == real && plan.pos2_rows.len() == real,
            "inconsistent gather plan: real_len {} vs t_max {}",
            real,
            plan.t_max
        );
        let mut data = vec![0.0; d * plan.t_max];
        for c in 0..real {
            let w = plan.word_rows[c];
            assert!(w < tw.rows(), "word row {} out of vocabulary", w);
            for q in 0..d_we {
                data[q * plan.t_max + c] = tw.data()[w * d_we + q];
            }
            for (offset, row) in [(d_we, plan.pos1_rows[c]), (d_we + d_pe, plan.pos2_rows[c])] {
                assert!(row < tp.rows(), "position row {} out of table", row);
                for q in 0..d_pe {
                    data[(offset + q) * plan.t_max + c] = tp.data()[row * d_pe + q];
                }
            }
        }
        let rg = self.rg(words) || self.rg(positions);
        self.push(
            Tensor::matrix(d, plan.t_max, data),
            Op::Embed {
                words,
                positions,
                plan,
            },
            rg,
        )
    }

    /// Negative log of the probability assigned to `gold`, floored at
    /// [`PROB_FLOOR`] before the log.
    pub fn neg_log_likelihood(&mut self, probs: NodeId, gold: usize) -> NodeId {
        let tp = &self.nodes[probs.0].value;
        assert!(
            tp.shape().len() == 1 && gold < tp.numel(),
            "shape mismatch in neg_log_likelihood: gold {} vs {:?}",
            gold,
            tp.shape()
        );
        let p = tp.data()[gold].max(PROB_FLOOR);
        let rg = self.rg(probs);
        self.push(
            Tensor::scalar(-p.ln()),
            Op::NegLogLikelihood(probs, gold),
            rg,
        )
    }

    /// Reverse sweep from a scalar node, accumulating into the gradient
    /// buffer of every gradient-requiring node at or below it. Repeated
    /// calls keep accumulating.
    pub fn backward(&mut self, loss: NodeId) {
        assert!(
            self.nodes[loss.0].value.is_scalar(),
            "backward target is not scalar: shape {:?}",
            self.nodes[loss.0].value.shape()
        );
        let mut adjoints: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adjoints[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(d) = adjoints[i].take() else {
                continue;
            };
            if !self.nodes[i].value.requires_grad {
                continue;
            }
            self.propagate(i, &d, &mut adjoints);
            let g = self.nodes[i].value.grad_mut();
            for (gi, di) in g.iter_mut().zip(&d) {
                *gi += di;
            }
        }
    }

    /// Adjoint buffer for a parent, allocated on first contribution; `None`
    /// when the parent does not require gradients.
    fn adj<'a>(&self, adjoints: &'a mut [Option<Vec<f64>>], p: NodeId) -> Option<&'a mut Vec<f64>> {
        if !self.rg(p) {
            return None;
        }
        let numel = self.nodes[p.0].value.numel();
        Some(adjoints[p.0].get_or_insert_with(|| vec![0.0; numel]))
    }

    fn propagate(&self, i: usize, d: &[f64], adjoints: &mut [Option<Vec<f64>>]) {
        // Ops clone cheaply except for their index vectors; taking a clone
        // here keeps the borrow on `self.nodes` immutable.
        let op = self.nodes[i].op.clone();
        match op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate_broadcast(adjoints, a, d, 1.0, None);
                self.accumulate_broadcast(adjoints, b, d, 1.0, None);
            }
            Op::Sub(a, b) => {
                self.accumulate_broadcast(adjoints, a, d, 1.0, None);
                self.accumulate_broadcast(adjoints, b, d, -1.0, None);
            }
            Op::Mul(a, b) => {
                let other_b: Vec<f64> = self.nodes[b.0].value.data().to_vec();
                let other_a: Vec<f64> = self.nodes[a.0].value.data().to_vec();
                self.accumulate_broadcast(adjoints, a, d, 1.0, Some(&other_b));
                self.accumulate_broadcast(adjoints, b, d, 1.0, Some(&other_a));
            }
            Op::Matmul(a, b) => {
                let ta = &self.nodes[a.0].value;
                let tb = &self.nodes[b.0].value;
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                if tb.shape().len() == 2 {
                    let n = tb.shape()[1];
                    if let Some(ga) = self.adj(adjoints, a) {
                        for i in 0..m {
                            for j in 0..k {
                                let mut acc = 0.0;
                                for l in 0..n {
                                    acc += d[i * n + l] * tb.data()[j * n + l];
                                }
                                ga[i * k + j] += acc;
                            }
                        }
                    }
                    if let Some(gb) = self.adj(adjoints, b) {
                        for j in 0..k {
                            for l in 0..n {
                                let mut acc = 0.0;
                                for i in 0..m {
                                    acc += ta.data()[i * k + j] * d[i * n + l];
                                }
                                gb[j * n + l] += acc;
                            }
                        }
                    }
                } else {
                    if let Some(ga) = self.adj(adjoints, a) {
                        for i in 0..m {
                            for j in 0..k {
                                ga[i * k + j] += d[i] * tb.data()[j];
                            }
                        }
                    }
                    if let Some(gb) = self.adj(adjoints, b) {
                        for j in 0..k {
                            let mut acc = 0.0;
                            for i in 0..m {
                                acc += ta.data()[i * k + j] * d[i];
                            }
                            gb[j] += acc;
                        }
                    }
                }
            }
            Op::VecMat(v, m) => {
                let tv = &self.nodes[v.0].value;
                let tm = &self.nodes[m.0].value;
                let (rows, cols) = (tm.shape()[0], tm.shape()[1]);
                if let Some(gv) = self.adj(adjoints, v) {
                    for i in 0..rows {
                        let mut acc = 0.0;
                        for j in 0..cols {
                            acc += tm.data()[i * cols + j] * d[j];
                        }
                        gv[i] += acc;
                    }
                }
                if let Some(gm) = self.adj(adjoints, m) {
                    for i in 0..rows {
                        let x = tv.data()[i];
                        for j in 0..cols {
                            gm[i * cols + j] += x * d[j];
                        }
                    }
                }
            }
            Op::Dot(a, b) => {
                let vb: Vec<f64> = self.nodes[b.0].value.data().to_vec();
                let va: Vec<f64> = self.nodes[a.0].value.data().to_vec();
                if let Some(ga) = self.adj(adjoints, a) {
                    for (g, &x) in ga.iter_mut().zip(&vb) {
                        *g += d[0] * x;
                    }
                }
                if let Some(gb) = self.adj(adjoints, b) {
                    for (g, &x) in gb.iter_mut().zip(&va) {
                        *g += d[0] * x;
                    }
                }
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[i].value.data();
                if let Some(ga) = self.adj(adjoints, a) {
                    for ((g, &yi), &di) in ga.iter_mut().zip(y).zip(d) {
                        *g += di * yi * (1.0 - yi);
                    }
                }
            }
            Op::Tanh(a) => {
                let y = self.nodes[i].value.data();
                if let Some(ga) = self.adj(adjoints, a) {
                    for ((g, &yi), &di) in ga.iter_mut().zip(y).zip(d) {
                        *g += di * (1.0 - yi * yi);
                    }
                }
            }
            Op::Softmax(a) => {
                let y = self.nodes[i].value.data();
                let inner: f64 = y.iter().zip(d).map(|(&yi, &di)| yi * di).sum();
                if let Some(ga) = self.adj(adjoints, a) {
                    for ((g, &yi), &di) in ga.iter_mut().zip(y).zip(d) {
                        *g += yi * (di - inner);
                    }
                }
            }
            Op::MaskedSoftmax(a, mask) => {
                let y = self.nodes[i].value.data();
                let inner: f64 = y
                    .iter()
                    .zip(d)
                    .zip(&mask)
                    .filter(|(_, &m)| m)
                    .map(|((&yi, &di), _)| yi * di)
                    .sum();
                if let Some(ga) = self.adj(adjoints, a) {
                    for idx in 0..y.len() {
                        if mask[idx] {
                            ga[idx] += y[idx] * (d[idx] - inner);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(ga) = self.adj(adjoints, a) {
                    for g in ga.iter_mut() {
                        *g += d[0];
                    }
                }
            }
            Op::Scale(a, factor) => {
                if let Some(ga) = self.adj(adjoints, a) {
                    for (g, &di) in ga.iter_mut().zip(d) {
                        *g += factor * di;
                    }
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = self.nodes[p.0].value.numel();
                    if let Some(gp) = self.adj(adjoints, p) {
                        for (g, &di) in gp.iter_mut().zip(&d[offset..offset + n]) {
                            *g += di;
                        }
                    }
                    offset += n;
                }
            }
            Op::ConcatCols(parts) => {
                let cols = parts.len();
                for (j, p) in parts.into_iter().enumerate() {
                    let rows = self.nodes[p.0].value.numel();
                    if let Some(gp) = self.adj(adjoints, p) {
                        for (r, g) in gp.iter_mut().enumerate().take(rows) {
                            *g += d[r * cols + j];
                        }
                    }
                }
            }
            Op::Column(a, j) => {
                let cols = self.nodes[a.0].value.cols();
                if let Some(ga) = self.adj(adjoints, a) {
                    for (r, &di) in d.iter().enumerate() {
                        ga[r * cols + j] += di;
                    }
                }
            }
            Op::Embed {
                words,
                positions,
                plan,
            } => {
                let d_we = self.nodes[words.0].value.cols();
                let d_pe = self.nodes[positions.0].value.cols();
                let t_max = plan.t_max;
                if let Some(gw) = self.adj(adjoints, words) {
                    for c in 0..plan.real_len() {
                        let w = plan.word_rows[c];
                        for q in 0..d_we {
                            gw[w * d_we + q] += d[q * t_max + c];
                        }
                    }
                }
                if let Some(gp) = self.adj(adjoints, positions) {
                    for c in 0..plan.real_len() {
                        for (offset, row) in
                            [(d_we, plan.pos1_rows[c]), (d_we + d_pe, plan.pos2_rows[c])]
                        {
                            for q in 0..d_pe {
                                gp[row * d_pe + q] += d[(offset + q) * t_max + c];
                            }
                        }
                    }
                }
            }
            Op::NegLogLikelihood(probs, gold) => {
                let p = self.nodes[probs.0].value.data()[gold];
                if let Some(gp) = self.adj(adjoints, probs) {
                    if p >= PROB_FLOOR {
                        gp[gold] += d[0] * (-1.0 / p);
                    }
                }
            }
        }
    }

    /// Shared accumulation for add/sub/mul where one side may be a
    /// broadcast scalar. `other` carries the opposite operand's data for
    /// products; `sign` is +-1.
    fn accumulate_broadcast(
        &self,
        adjoints: &mut [Option<Vec<f64>>],
        target: NodeId,
        d: &[f64],
        sign: f64,
        other: Option<&[f64]>,
    ) {
        let numel = self.nodes[target.0].value.numel();
        let Some(g) = self.adj(adjoints, target) else {
            return;
        };
        let term = |idx: usize| -> f64 {
            match other {
                Some(o) => {
                    let ov = if o.len() == 1 { o[0] } else { o[idx] };
                    sign * d[idx] * ov
                }
                None => sign * d[idx],
            }
        };
        if numel == d.len() {
            for (idx, gi) in g.iter_mut().enumerate() {
                *gi += term(idx);
            }
        } else {
            // target is the broadcast scalar: its adjoint is the sum over
            // the expanded positions
            debug_assert_eq!(numel, 1);
            let mut acc = 0.0;
            for idx in 0..d.len() {
                acc += term(idx);
            }
            g[0] += acc;
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|&v| (v - max).exp()).collect();
    let denom: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= denom);
    out
}
