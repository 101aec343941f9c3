//! Reverse-mode differentiation over a linear tape of [`Tensor`] ops.
//!
//! A [`Tape`] borrows a [`ParamStore`]; parameter leaves are read in place and
//! their gradients come back from [`Tape::backward`] as a [`Gradients`] vector
//! aligned with the store.

use super::params::{ParamId, ParamStore};
use super::tensor::{gemm_acc, Tensor};

const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

/// Index of a node on a tape.
#[derive(Debug, Copy, Clone, PartialEq, Eq)]
pub struct Var(usize);

/// Sentinel index for [`Tape::gather_rows`] that yields a zero row.
pub const ZERO_ROW: usize = usize::MAX;

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    OneMinus(Var),
    Selu(Var),
    Sigmoid(Var),
    Tanh(Var),
    ConcatCols(Var, Var),
    GatherRows(Var, Vec<usize>),
    SegmentSum(Var, Vec<usize>),
    ConcatFlat(Vec<Var>),
    GatherFlat(Var, Vec<usize>),
    LogSoftmaxRows(Var),
    ClampMin(Var, f64),
    Sum(Var),
    Scale(Var, f64),
    Square(Var),
    AddScalar(Var),
}

struct Node {
    op: Op,
    value: Option<Tensor>,
}

/// Per-parameter gradients; `None` where the loss never touched the array.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn empty(count: usize) -> Self {
        Self {
            grads: vec![None; count],
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.grads[id.0].as_ref()
    }

    /// Adds `other` into `self` slot by slot.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (mine, theirs) in self.grads.iter_mut().zip(&other.grads) {
            if let Some(t) = theirs {
                match mine {
                    Some(m) => m.add_assign(t),
                    None => *mine = Some(t.clone()),
                }
            }
        }
    }

    pub fn scale(&mut self, c: f64) {
        for t in self.grads.iter_mut().flatten() {
            for x in &mut t.data {
                *x *= c;
            }
        }
    }
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match &self.nodes[v.0] {
            Node {
                op: Op::Param(id), ..
            } => self.params.get(*id),
            Node { value: Some(t), .. } => t,
            Node { value: None, .. } => unreachable!("non-param node without value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        let mut out = Tensor::zeros(x.rows(), y.cols());
        gemm_acc(x, false, y, false, &mut out);
        self.push(Op::MatMul(a, b), out)
    }

    /// `x + bias` with a `1 x c` bias broadcast over rows.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (xt, bt) = (self.value(x), self.value(bias));
        assert_eq!(bt.len(), xt.cols(), "bias width");
        let mut out = xt.clone();
        let c = xt.cols();
        for (i, v) in out.data.iter_mut().enumerate() {
            *v += bt.data[i % c];
        }
        self.push(Op::AddBias(x, bias), out)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert!(x.same_shape(y), "{:?} vs {:?}", x.shape, y.shape);
        let data = x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect();
        let out = Tensor::new(x.shape.clone(), data);
        self.push(op, out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 - x);
        self.push(Op::OneMinus(a), out)
    }

    pub fn selu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(selu);
        self.push(Op::Selu(a), out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), out)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.rows(), y.rows(), "row counts differ");
        let (ca, cb) = (x.cols(), y.cols());
        let mut data = Vec::with_capacity(x.rows() * (ca + cb));
        for r in 0..x.rows() {
            data.extend_from_slice(x.row(r));
            data.extend_from_slice(y.row(r));
        }
        let out = Tensor::from_rows(x.rows(), ca + cb, data);
        self.push(Op::ConcatCols(a, b), out)
    }

    /// Output row `k` is input row `idx[k]`, or zeros for [`ZERO_ROW`].
    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let x = self.value(a);
        let c = x.cols();
        let mut data = vec![0.0; idx.len() * c];
        for (k, &i) in idx.iter().enumerate() {
            if i != ZERO_ROW {
                data[k * c..(k + 1) * c].copy_from_slice(x.row(i));
            }
        }
        let out = Tensor::from_rows(idx.len(), c, data);
        self.push(Op::GatherRows(a, idx), out)
    }

    /// Sums input row `i` into output row `seg[i]`; `segments` output rows.
    pub fn segment_sum(&mut self, a: Var, seg: Vec<usize>, segments: usize) -> Var {
        let x = self.value(a);
        assert_eq!(seg.len(), x.rows(), "segment ids per row");
        let c = x.cols();
        let mut out = Tensor::zeros(segments, c);
        for (i, &s) in seg.iter().enumerate() {
            for (o, v) in out.data[s * c..(s + 1) * c].iter_mut().zip(x.row(i)) {
                *o += v;
            }
        }
        self.push(Op::SegmentSum(a, seg), out)
    }

    /// All values of `parts` laid end to end as a `1 x total` row.
    pub fn concat_flat(&mut self, parts: Vec<Var>) -> Var {
        let mut data = Vec::new();
        for &p in &parts {
            data.extend_from_slice(&self.value(p).data);
        }
        let n = data.len();
        let out = Tensor::from_rows(1, n, data);
        self.push(Op::ConcatFlat(parts), out)
    }

    /// Picks flat entries of `a` into a `rows x cols` tensor.
    pub fn gather_flat(&mut self, a: Var, idx: Vec<usize>, rows: usize, cols: usize) -> Var {
        assert_eq!(idx.len(), rows * cols);
        let x = self.value(a);
        let data = idx.iter().map(|&i| x.data[i]).collect();
        let out = Tensor::from_rows(rows, cols, data);
        self.push(Op::GatherFlat(a, idx), out)
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = x.clone();
        let c = x.cols();
        for row in out.data.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        self.push(Op::LogSoftmaxRows(a), out)
    }

    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Var {
        let out = self.value(a).map(|x| x.max(floor));
        self.push(Op::ClampMin(a, floor), out)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x * c);
        self.push(Op::Scale(a, c), out)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), out)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|x| x + c);
        self.push(Op::AddScalar(a), out)
    }

    /// Gradients of the scalar `loss` with respect to every parameter leaf.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.value(loss).len(), 1, "loss must be a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape.clone(), vec![1.0]));
        let mut out = Gradients::empty(self.params.len());

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let y = self.value(Var(i));
            match &self.nodes[i].op {
                Op::Leaf => {}
                Op::Param(id) => out.grads[id.0] = Some(g),
                Op::MatMul(a, b) => {
                    let (x, w) = (self.value(*a), self.value(*b));
                    let mut da = Tensor::zeros(x.rows(), x.cols());
                    gemm_acc(&g, false, w, true, &mut da);
                    let mut db = Tensor::zeros(w.rows(), w.cols());
                    gemm_acc(x, true, &g, false, &mut db);
                    acc(&mut grads, *a, da);
                    acc(&mut grads, *b, db);
                }
                Op::AddBias(x, b) => {
                    let c = g.cols();
                    let mut db = Tensor::new(self.value(*b).shape.clone(), vec![0.0; c]);
                    for row in g.data.chunks(c) {
                        for (d, v) in db.data.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    acc(&mut grads, *b, db);
                    acc(&mut grads, *x, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|v| -v));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let (x, w) = (self.value(*a), self.value(*b));
                    acc(&mut grads, *a, elementwise(&g, w, |d, q| d * q));
                    acc(&mut grads, *b, elementwise(&g, x, |d, p| d * p));
                }
                Op::OneMinus(a) => acc(&mut grads, *a, g.map(|v| -v)),
                Op::Selu(a) => {
                    let x = self.value(*a);
                    let d = elementwise(&g, x, |d, x| {
                        if x > 0.0 {
                            d * SELU_LAMBDA
                        } else {
                            d * SELU_LAMBDA * SELU_ALPHA * x.exp()
                        }
                    });
                    acc(&mut grads, *a, d);
                }
                Op::Sigmoid(a) => acc(&mut grads, *a, elementwise(&g, y, |d, s| d * s * (1.0 - s))),
                Op::Tanh(a) => acc(&mut grads, *a, elementwise(&g, y, |d, t| d * (1.0 - t * t))),
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let c = g.cols();
                    let rows = g.rows();
                    let mut da = Vec::with_capacity(rows * ca);
                    let mut db = Vec::with_capacity(rows * (c - ca));
                    for row in g.data.chunks(c) {
                        da.extend_from_slice(&row[..ca]);
                        db.extend_from_slice(&row[ca..]);
                    }
                    acc(&mut grads, *a, Tensor::from_rows(rows, ca, da));
                    acc(&mut grads, *b, Tensor::from_rows(rows, c - ca, db));
                }
                Op::GatherRows(a, idx) => {
                    let x = self.value(*a);
                    let c = x.cols();
                    let mut d = Tensor::zeros(x.rows(), c);
                    for (k, &src) in idx.iter().enumerate() {
                        if src == ZERO_ROW {
                            continue;
                        }
                        for (o, v) in d.data[src * c..(src + 1) * c].iter_mut().zip(g.row(k)) {
                            *o += v;
                        }
                    }
                    acc(&mut grads, *a, d);
                }
                Op::SegmentSum(a, seg) => {
                    let c = g.cols();
                    let mut data = Vec::with_capacity(seg.len() * c);
                    for &s in seg {
                        data.extend_from_slice(g.row(s));
                    }
                    acc(&mut grads, *a, Tensor::from_rows(seg.len(), c, data));
                }
                Op::ConcatFlat(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.value(p).shape.clone();
                        let n = self.value(p).len();
                        let piece = Tensor::new(shape, g.data[offset..offset + n].to_vec());
                        offset += n;
                        acc(&mut grads, p, piece);
                    }
                }
                Op::GatherFlat(a, idx) => {
                    let x = self.value(*a);
                    let mut d = Tensor::new(x.shape.clone(), vec![0.0; x.len()]);
                    for (k, &i) in idx.iter().enumerate() {
                        d.data[i] += g.data[k];
                    }
                    acc(&mut grads, *a, d);
                }
                Op::LogSoftmaxRows(a) => {
                    let c = g.cols();
                    let mut d = g.clone();
                    for (drow, yrow) in d.data.chunks_mut(c).zip(y.data.chunks(c)) {
                        let total: f64 = drow.iter().sum();
                        for (dv, yv) in drow.iter_mut().zip(yrow) {
                            *dv -= yv.exp() * total;
                        }
                    }
                    acc(&mut grads, *a, d);
                }
                Op::ClampMin(a, floor) => {
                    let x = self.value(*a);
                    let floor = *floor;
                    acc(&mut grads, *a, elementwise(&g, x, |d, x| if x > floor { d } else { 0.0 }));
                }
                Op::Sum(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, Tensor::new(x.shape.clone(), vec![g.data[0]; x.len()]));
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    acc(&mut grads, *a, g.map(|v| v * c));
                }
                Op::Square(a) => {
                    let x = self.value(*a);
                    acc(&mut grads, *a, elementwise(&g, x, |d, x| 2.0 * d * x));
                }
                Op::AddScalar(a) => acc(&mut grads, *a, g),
            }
        }
        out
    }
}

fn acc(grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&t),
        slot @ None => *slot = Some(t),
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::new(
        a.shape.clone(),
        a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    )
}

pub fn selu(x: f64) -> f64 {
    if x > 0.0 {
        SELU_LAMBDA * x
    } else {
        SELU_LAMBDA * SELU_ALPHA * (x.exp() - 1.0)
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
