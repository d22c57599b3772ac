use crate::error::{AutodiffError, Result};
use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// One incoming edge for [`Tape::edge_max`]: `(dst, src, label)`.
pub type GraphEdge = (usize, usize, usize);

#[derive(Debug)]
enum Op {
    Param(ParamId),
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Linear(Var, Var),
    Concat(Vec<Var>),
    ConcatCols(Vec<Var>),
    AddRow(Var, Var),
    Slice(Var, usize),
    Stack(Vec<Var>),
    Rows(Var, Vec<usize>),
    MaxSet(Vec<Var>, Vec<usize>),
    EdgeMax {
        p: Var,
        q: Var,
        // per output element: (src row, label row) of the winning edge
        argmax: Vec<Option<(usize, usize)>>,
    },
    Softmax(Var, f64),
    WeightedSum(Var, Var),
    Lerp(Var, Var, Var),
    CrossEntropy {
        logits: Var,
        target: usize,
        probs: Vec<f64>,
    },
    Sum(Var),
    Reshape(Var),
}

struct Node {
    value: Option<Tensor>,
    op: Op,
}

/// Records a computation for reverse-mode differentiation.
///
/// Parameters are borrowed from a [`ParamStore`] rather than copied.
/// Shape mismatches are programming errors and panic.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of `xs / temperature`.
pub fn softmax(xs: &[f64], temperature: f64) -> Vec<f64> {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| ((x - max) / temperature).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    /// A constant input; receives no gradient.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    fn binary(&mut self, a: Var, b: Var, name: &str, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "{name}: shape mismatch");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape.clone(), data)
    }

    fn unary(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let t = self.value(a);
        Tensor::new(t.shape.clone(), t.data.iter().map(|x| f(*x)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let t = self.binary(a, b, "add", |x, y| x + y);
        self.push(t, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let t = self.binary(a, b, "sub", |x, y| x - y);
        self.push(t, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let t = self.binary(a, b, "mul", |x, y| x * y);
        self.push(t, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.unary(a, |x| x * c);
        self.push(t, Op::Scale(a, c))
    }

    /// `a + c` element-wise (constant shift).
    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let t = self.unary(a, |x| x + c);
        self.push(t, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.unary(a, sigmoid);
        self.push(t, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.unary(a, f64::tanh);
        self.push(t, Op::Tanh(a))
    }

    /// `W x` for `W: [m, k]` and `x: [k]` gives `[m]`; `x: [n, k]` gives `[n, m]`.
    pub fn linear(&mut self, w: Var, x: Var) -> Var {
        let (tw, tx) = (self.value(w), self.value(x));
        assert_eq!(tw.shape.len(), 2, "linear: weight must be a matrix");
        let (m, k) = (tw.shape[0], tw.shape[1]);
        assert_eq!(tx.cols(), k, "linear: inner dimension mismatch ({k} vs {:?})", tx.shape);
        let n = tx.len() / k;
        let mut out = vec![0.0; n * m];
        for r in 0..n {
            let xr = &tx.data[r * k..(r + 1) * k];
            for i in 0..m {
                let wi = &tw.data[i * k..(i + 1) * k];
                let mut s = 0.0;
                for j in 0..k {
                    s += wi[j] * xr[j];
                }
                out[r * m + i] = s;
            }
        }
        let shape = if tx.shape.len() == 1 { vec![m] } else { vec![n, m] };
        let t = Tensor::new(shape, out);
        self.push(t, Op::Linear(w, x))
    }

    /// Concatenates flattened inputs into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(&self.value(p).data);
        }
        let t = Tensor::vector(data);
        self.push(t, Op::Concat(parts.to_vec()))
    }

    /// Joins `[n, d_i]` matrices side by side into `[n, sum d_i]`.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let n = self.value(parts[0]).rows();
        let widths: Vec<usize> = parts.iter().map(|&p| self.value(p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                let t = self.value(p);
                assert_eq!(t.rows(), n, "concat_cols: row count mismatch");
                data.extend_from_slice(t.row(r));
            }
        }
        let t = Tensor::matrix(n, total, data);
        self.push(t, Op::ConcatCols(parts.to_vec()))
    }

    /// Adds the vector `v: [d]` to every row of `m: [n, d]`.
    pub fn add_row(&mut self, m: Var, v: Var) -> Var {
        let (tm, tv) = (self.value(m), self.value(v));
        let d = tm.cols();
        assert_eq!(tv.len(), d, "add_row: width mismatch");
        let data = tm
            .data
            .iter()
            .enumerate()
            .map(|(i, x)| x + tv.data[i % d])
            .collect();
        let t = Tensor::new(tm.shape.clone(), data);
        self.push(t, Op::AddRow(m, v))
    }

    /// `a[start..start + len]` of a flattened tensor.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let ta = self.value(a);
        assert!(start + len <= ta.len(), "slice out of range");
        let t = Tensor::vector(ta.data[start..start + len].to_vec());
        self.push(t, Op::Slice(a, start))
    }

    /// Stacks equal-length vectors into `[n, d]`.
    pub fn stack(&mut self, rows: &[Var]) -> Var {
        assert!(!rows.is_empty(), "stack of nothing");
        let d = self.value(rows[0]).len();
        let mut data = Vec::with_capacity(d * rows.len());
        for &r in rows {
            let t = self.value(r);
            assert_eq!(t.len(), d, "stack: ragged rows");
            data.extend_from_slice(&t.data);
        }
        let t = Tensor::matrix(rows.len(), d, data);
        self.push(t, Op::Stack(rows.to_vec()))
    }

    /// Gathers rows of a matrix into `[idx.len(), d]`.
    pub fn rows(&mut self, m: Var, idx: &[usize]) -> Var {
        let tm = self.value(m);
        let d = tm.cols();
        let mut data = Vec::with_capacity(d * idx.len());
        for &i in idx {
            assert!(i < tm.rows(), "row {i} out of range");
            data.extend_from_slice(tm.row(i));
        }
        let t = Tensor::matrix(idx.len(), d, data);
        self.push(t, Op::Rows(m, idx.to_vec()))
    }

    /// Row `i` of a matrix as a vector.
    pub fn row(&mut self, m: Var, i: usize) -> Var {
        let r = self.rows(m, &[i]);
        let d = self.value(r).len();
        self.reshape(r, &[d])
    }

    /// Element-wise max over same-shaped inputs.
    pub fn max_set(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "max over nothing");
        let shape = self.value(xs[0]).shape.clone();
        let n = self.value(xs[0]).len();
        let mut best = self.value(xs[0]).data.clone();
        let mut arg = vec![0usize; n];
        for (k, &x) in xs.iter().enumerate().skip(1) {
            let t = self.value(x);
            assert_eq!(t.shape, shape, "max_set: shape mismatch");
            for j in 0..n {
                if t.data[j] > best[j] {
                    best[j] = t.data[j];
                    arg[j] = k;
                }
            }
        }
        let t = Tensor::new(shape, best);
        self.push(t, Op::MaxSet(xs.to_vec(), arg))
    }

    /// For each destination `v < n_dst`: element-wise max over incoming edges
    /// `(v, src, label)` of `tanh(p[src] + q[label])`, or zeros with no edges.
    pub fn edge_max(&mut self, p: Var, q: Var, edges: &[GraphEdge], n_dst: usize) -> Var {
        let (tp, tq) = (self.value(p), self.value(q));
        let d = tp.cols();
        assert_eq!(tq.cols(), d, "edge_max: width mismatch");
        let mut out = vec![0.0; n_dst * d];
        let mut seen = vec![false; n_dst];
        let mut argmax = vec![None; n_dst * d];
        for &(dst, src, label) in edges {
            let (pr, qr) = (tp.row(src), tq.row(label));
            for j in 0..d {
                let m = (pr[j] + qr[j]).tanh();
                let slot = dst * d + j;
                if !seen[dst] || m > out[slot] {
                    out[slot] = m;
                    argmax[slot] = Some((src, label));
                }
            }
            seen[dst] = true;
        }
        let t = Tensor::matrix(n_dst, d, out);
        self.push(t, Op::EdgeMax { p, q, argmax })
    }

    /// Softmax of `a / temperature` over a vector.
    pub fn softmax(&mut self, a: Var, temperature: f64) -> Var {
        let t = Tensor::vector(softmax(&self.value(a).data, temperature));
        self.push(t, Op::Softmax(a, temperature))
    }

    /// `sum_i w[i] * x[i, :]` for `w: [n]`, `x: [n, d]`.
    pub fn weighted_sum(&mut self, w: Var, x: Var) -> Var {
        let (tw, tx) = (self.value(w), self.value(x));
        let (n, d) = (tx.rows(), tx.cols());
        assert_eq!(tw.len(), n, "weighted_sum: weight count mismatch");
        let mut out = vec![0.0; d];
        for i in 0..n {
            for j in 0..d {
                out[j] += tw.data[i] * tx.data[i * d + j];
            }
        }
        let t = Tensor::vector(out);
        self.push(t, Op::WeightedSum(w, x))
    }

    /// `g * a + (1 - g) * b`; `g` is a scalar or matches `a`.
    pub fn lerp(&mut self, g: Var, a: Var, b: Var) -> Var {
        let (tg, ta, tb) = (self.value(g), self.value(a), self.value(b));
        assert_eq!(ta.shape, tb.shape, "lerp: shape mismatch");
        assert!(tg.len() == 1 || tg.len() == ta.len(), "lerp: bad gate size");
        let data = (0..ta.len())
            .map(|j| {
                let gj = if tg.len() == 1 { tg.data[0] } else { tg.data[j] };
                gj * ta.data[j] + (1.0 - gj) * tb.data[j]
            })
            .collect();
        let t = Tensor::new(ta.shape.clone(), data);
        self.push(t, Op::Lerp(g, a, b))
    }

    /// `-log softmax(logits)[target]`, with entries where `mask` is false excluded.
    pub fn cross_entropy(&mut self, logits: Var, target: usize, mask: Option<&[bool]>) -> Var {
        let tl = self.value(logits);
        assert!(target < tl.len(), "cross_entropy: target out of range");
        let masked: Vec<f64> = match mask {
            Some(m) => {
                assert_eq!(m.len(), tl.len(), "cross_entropy: mask size");
                assert!(m[target], "cross_entropy: target is masked out");
                tl.data
                    .iter()
                    .zip(m)
                    .map(|(x, keep)| if *keep { *x } else { f64::NEG_INFINITY })
                    .collect()
            }
            None => tl.data.clone(),
        };
        let probs = softmax(&masked, 1.0);
        let loss = -probs[target].max(f64::MIN_POSITIVE).ln();
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                target,
                probs,
            },
        )
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Sum of scalars (or same-shaped tensors).
    pub fn add_all(&mut self, xs: &[Var]) -> Var {
        let mut acc = xs[0];
        for &x in &xs[1..] {
            acc = self.add(acc, x);
        }
        acc
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Var {
        let ta = self.value(a);
        let t = Tensor::new(shape.to_vec(), ta.data.clone());
        self.push(t, Op::Reshape(a))
    }

    /// Accumulates d`loss`/dθ into `grads`. Callers zero `grads` themselves.
    pub fn backward(&self, loss: Var, grads: &mut Gradients) -> Result<()> {
        let shape = &self.value(loss).shape;
        if self.value(loss).len() != 1 {
            return Err(AutodiffError::NonScalarLoss(shape.clone()));
        }
        let mut g: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        g[loss.0] = Some(vec![1.0]);

        fn acc(g: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
            g[v.0].get_or_insert_with(|| vec![0.0; len])
        }

        for i in (0..=loss.0).rev() {
            let Some(gi) = g[i].take() else { continue };
            let node = &self.nodes[i];
            let out = self.value(Var(i));
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => {
                    for (a, b) in grads.get_mut(*id).iter_mut().zip(&gi) {
                        *a += b;
                    }
                }
                Op::Add(a, b) => {
                    for (v, sign) in [(*a, 1.0), (*b, 1.0)] {
                        let n = self.value(v).len();
                        let d = acc(&mut g, v, n);
                        for j in 0..n {
                            d[j] += sign * gi[j];
                        }
                    }
                }
                Op::Sub(a, b) => {
                    for (v, sign) in [(*a, 1.0), (*b, -1.0)] {
                        let n = self.value(v).len();
                        let d = acc(&mut g, v, n);
                        for j in 0..n {
                            d[j] += sign * gi[j];
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a).data.clone(), self.value(*b).data.clone());
                    let n = ta.len();
                    let da = acc(&mut g, *a, n);
                    for j in 0..n {
                        da[j] += gi[j] * tb[j];
                    }
                    let db = acc(&mut g, *b, n);
                    for j in 0..n {
                        db[j] += gi[j] * ta[j];
                    }
                }
                Op::Scale(a, c) => {
                    let d = acc(&mut g, *a, gi.len());
                    for j in 0..gi.len() {
                        d[j] += c * gi[j];
                    }
                }
                Op::AddScalar(a) | Op::Reshape(a) => {
                    let d = acc(&mut g, *a, gi.len());
                    for j in 0..gi.len() {
                        d[j] += gi[j];
                    }
                }
                Op::Sigmoid(a) => {
                    let d = acc(&mut g, *a, gi.len());
                    for j in 0..gi.len() {
                        let y = out.data[j];
                        d[j] += gi[j] * y * (1.0 - y);
                    }
                }
                Op::Tanh(a) => {
                    let d = acc(&mut g, *a, gi.len());
                    for j in 0..gi.len() {
                        let y = out.data[j];
                        d[j] += gi[j] * (1.0 - y * y);
                    }
                }
                Op::Linear(w, x) => {
                    let (tw, tx) = (self.value(*w), self.value(*x));
                    let (m, k) = (tw.shape[0], tw.shape[1]);
                    let n = tx.len() / k;
                    {
                        let dw = acc(&mut g, *w, m * k);
                        for r in 0..n {
                            let xr = &tx.data[r * k..(r + 1) * k];
                            for i in 0..m {
                                let gri = gi[r * m + i];
                                if gri == 0.0 {
                                    continue;
                                }
                                let row = &mut dw[i * k..(i + 1) * k];
                                for j in 0..k {
                                    row[j] += gri * xr[j];
                                }
                            }
                        }
                    }
                    let dx = acc(&mut g, *x, n * k);
                    for r in 0..n {
                        for i in 0..m {
                            let gri = gi[r * m + i];
                            if gri == 0.0 {
                                continue;
                            }
                            let wi = &tw.data[i * k..(i + 1) * k];
                            let dr = &mut dx[r * k..(r + 1) * k];
                            for j in 0..k {
                                dr[j] += gri * wi[j];
                            }
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = self.value(p).len();
                        let d = acc(&mut g, p, n);
                        for j in 0..n {
                            d[j] += gi[off + j];
                        }
                        off += n;
                    }
                }
                Op::ConcatCols(parts) => {
                    let n = out.rows();
                    let total = out.cols();
                    let mut off = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        let d = acc(&mut g, p, n * w);
                        for r in 0..n {
                            for j in 0..w {
                                d[r * w + j] += gi[r * total + off + j];
                            }
                        }
                        off += w;
                    }
                }
                Op::AddRow(m, v) => {
                    let d = out.cols();
                    {
                        let dm = acc(&mut g, *m, gi.len());
                        for j in 0..gi.len() {
                            dm[j] += gi[j];
                        }
                    }
                    let dv = acc(&mut g, *v, d);
                    for j in 0..gi.len() {
                        dv[j % d] += gi[j];
                    }
                }
                Op::Slice(a, start) => {
                    let n = self.value(*a).len();
                    let d = acc(&mut g, *a, n);
                    for j in 0..gi.len() {
                        d[start + j] += gi[j];
                    }
                }
                Op::Stack(rows) => {
                    let dd = out.cols();
                    for (r, &v) in rows.iter().enumerate() {
                        let d = acc(&mut g, v, dd);
                        for j in 0..dd {
                            d[j] += gi[r * dd + j];
                        }
                    }
                }
                Op::Rows(m, idx) => {
                    let tm = self.value(*m);
                    let dd = tm.cols();
                    let d = acc(&mut g, *m, tm.len());
                    for (r, &row) in idx.iter().enumerate() {
                        for j in 0..dd {
                            d[row * dd + j] += gi[r * dd + j];
                        }
                    }
                }
                Op::MaxSet(xs, arg) => {
                    for (j, &k) in arg.iter().enumerate() {
                        let v = xs[k];
                        let n = self.value(v).len();
                        acc(&mut g, v, n)[j] += gi[j];
                    }
                }
                Op::EdgeMax { p, q, argmax } => {
                    let dd = out.cols();
                    let (np, nq) = (self.value(*p).len(), self.value(*q).len());
                    let mut dp = vec![0.0; np];
                    let mut dq = vec![0.0; nq];
                    for (slot, a) in argmax.iter().enumerate() {
                        if let Some((src, label)) = a {
                            let j = slot % dd;
                            let y = out.data[slot];
                            let local = gi[slot] * (1.0 - y * y);
                            dp[src * dd + j] += local;
                            dq[label * dd + j] += local;
                        }
                    }
                    for (v, delta) in [(*p, dp), (*q, dq)] {
                        let d = acc(&mut g, v, delta.len());
                        for (x, y) in d.iter_mut().zip(delta) {
                            *x += y;
                        }
                    }
                }
                Op::Softmax(a, temp) => {
                    let y = &out.data;
                    let dot: f64 = y.iter().zip(&gi).map(|(a, b)| a * b).sum();
                    let d = acc(&mut g, *a, y.len());
                    for j in 0..y.len() {
                        d[j] += y[j] * (gi[j] - dot) / temp;
                    }
                }
                Op::WeightedSum(w, x) => {
                    let (tw, tx) = (self.value(*w), self.value(*x));
                    let (n, dd) = (tx.rows(), tx.cols());
                    let twd = tw.data.clone();
                    {
                        let dw = acc(&mut g, *w, n);
                        for i in 0..n {
                            let mut s = 0.0;
                            for j in 0..dd {
                                s += gi[j] * tx.data[i * dd + j];
                            }
                            dw[i] += s;
                        }
                    }
                    let dx = acc(&mut g, *x, n * dd);
                    for i in 0..n {
                        for j in 0..dd {
                            dx[i * dd + j] += twd[i] * gi[j];
                        }
                    }
                }
                Op::Lerp(gv, a, b) => {
                    let tg = self.value(*gv).data.clone();
                    let ta = self.value(*a).data.clone();
                    let tb = self.value(*b).data.clone();
                    let n = ta.len();
                    let gate = |j: usize| if tg.len() == 1 { tg[0] } else { tg[j] };
                    {
                        let dg = acc(&mut g, *gv, tg.len());
                        for j in 0..n {
                            let k = if tg.len() == 1 { 0 } else { j };
                            dg[k] += gi[j] * (ta[j] - tb[j]);
                        }
                    }
                    {
                        let da = acc(&mut g, *a, n);
                        for j in 0..n {
                            da[j] += gi[j] * gate(j);
                        }
                    }
                    let db = acc(&mut g, *b, n);
                    for j in 0..n {
                        db[j] += gi[j] * (1.0 - gate(j));
                    }
                }
                Op::CrossEntropy {
                    logits,
                    target,
                    probs,
                } => {
                    let d = acc(&mut g, *logits, probs.len());
                    for j in 0..probs.len() {
                        let y = if j == *target { 1.0 } else { 0.0 };
                        d[j] += gi[0] * (probs[j] - y);
                    }
                }
                Op::Sum(a) => {
                    let n = self.value(*a).len();
                    let d = acc(&mut g, *a, n);
                    for x in d.iter_mut() {
                        *x += gi[0];
                    }
                }
            }
        }
        Ok(())
    }
}
