//! Reverse-mode tape over matrix-valued nodes.
//!
//! Nodes are appended in evaluation order, so the node list is already a
//! topological order and `backward` is a single reverse sweep.

use crate::tensor::{axpy, dot, matmul_nt_into};
use crate::{DiffError, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMulNt(Var, Var),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Softmax(Var),
    LogSoftmax(Var),
    CrossEntropy { logits: Var, labels: Vec<usize>, probs: Vec<f64> },
    ConcatCols(Var, Var),
    Dot(Var, Var),
    RepeatRows(Var),
    StraightThrough(Var),
    Pick { a: Var, idx: Vec<usize>, weights: Vec<f64> },
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    softmax_fault: bool,
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> DiffError {
    DiffError::Shape { op, left: a.shape(), right: b.shape() }
}

/// Row-wise max-subtracted softmax. Entries at -inf get probability 0.
fn softmax_row(x: &[f64], out: &mut [f64]) -> Result<(), DiffError> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(DiffError::Numeric("NaN input to softmax".into()));
    }
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return Err(DiffError::Numeric("softmax row is entirely masked".into()));
    }
    if m == f64::INFINITY {
        return Err(DiffError::Numeric("+inf input to softmax".into()));
    }
    let mut z = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - m).exp();
        z += *o;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Test hook: replace the softmax Jacobian-vector product with its
    /// diagonal part. Used as a negative control for gradient checks.
    #[doc(hidden)]
    pub fn inject_softmax_fault(&mut self) {
        self.softmax_fault = true;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Accumulated gradient after [`Tape::backward`]; `None` for nodes that
    /// received no gradient or do not require one.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// `a * b^T` for `a: m x k`, `b: n x k`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.cols() {
            return Err(shape_err("matmul_nt", av, bv));
        }
        let mut out = Tensor::zeros(av.rows(), bv.rows());
        matmul_nt_into(av, bv, out.data_mut());
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMulNt(a, b), rg))
    }

    /// `a * b` for `a: m x k`, `b: k x n`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(shape_err("matmul", av, bv));
        }
        let (m, n) = (av.rows(), bv.cols());
        let mut out = Tensor::zeros(m, n);
        for i in 0..m {
            let orow = out.row_slice_mut(i);
            for (p, &aip) in av.row_slice(i).iter().enumerate() {
                axpy(aip, bv.row_slice(p), orow);
            }
        }
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// `W x` with `x` a row vector; the result is a row vector.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var, DiffError> {
        let (wv, xv) = (self.value(w), self.value(x));
        if xv.rows() != 1 || wv.cols() != xv.cols() {
            return Err(DiffError::Shape { op: "matvec", left: wv.shape(), right: xv.shape() });
        }
        self.matmul_nt(x, w)
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: fn(f64, f64) -> f64, op: Op) -> Result<Var, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err(name, av, bv));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, op, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds a 1 x n bias to every row of an m x n matrix.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var, DiffError> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || av.cols() != bv.cols() {
            return Err(shape_err("add_row", av, bv));
        }
        let mut out = av.clone();
        for i in 0..out.rows() {
            for (o, &b) in out.row_slice_mut(i).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(bias);
        Ok(self.push(out, Op::AddRow(a, bias), rg))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|&x| x * c).collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, c), rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let av = self.value(a);
        let data = av.data().iter().map(|x| x.tanh()).collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data).expect("same shape");
        let rg = self.rg(a);
        self.push(out, Op::Tanh(a), rg)
    }

    /// Row-wise softmax. Entries at -inf are treated as masked.
    pub fn softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        let av = self.value(a);
        if av.is_empty() {
            return Err(DiffError::InvalidArgument("softmax of an empty vector".into()));
        }
        let mut out = Tensor::zeros(av.rows(), av.cols());
        for i in 0..av.rows() {
            softmax_row(av.row_slice(i), out.row_slice_mut(i))?;
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::Softmax(a), rg))
    }

    /// Row-wise log-softmax computed as `x - logsumexp(x)`.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var, DiffError> {
        let av = self.value(a);
        if av.is_empty() {
            return Err(DiffError::InvalidArgument("log_softmax of an empty vector".into()));
        }
        let mut out = Tensor::zeros(av.rows(), av.cols());
        for i in 0..av.rows() {
            let x = av.row_slice(i);
            let lse = logsumexp(x)?;
            for (o, &v) in out.row_slice_mut(i).iter_mut().zip(x) {
                *o = v - lse;
            }
        }
        let rg = self.rg(a);
        Ok(self.push(out, Op::LogSoftmax(a), rg))
    }

    /// Mean over rows of `-log softmax(logits_r)[labels_r]`, as a 1x1 node.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, DiffError> {
        let lv = self.value(logits);
        if lv.rows() != labels.len() {
            return Err(DiffError::InvalidArgument(format!(
                "{} label(s) for {} row(s) of logits",
                labels.len(),
                lv.rows()
            )));
        }
        if lv.cols() == 0 {
            return Err(DiffError::InvalidArgument("cross_entropy of empty logits".into()));
        }
        let mut total = 0.0;
        let mut probs = vec![0.0; lv.len()];
        for (i, &y) in labels.iter().enumerate() {
            if y >= lv.cols() {
                return Err(DiffError::InvalidArgument(format!(
                    "label {y} out of range for {} classes",
                    lv.cols()
                )));
            }
            let x = lv.row_slice(i);
            total += row_cross_entropy(x, y)?;
            softmax_row(x, &mut probs[i * lv.cols()..(i + 1) * lv.cols()])?;
        }
        let out = Tensor::scalar(total / labels.len() as f64);
        let rg = self.rg(logits);
        Ok(self.push(out, Op::CrossEntropy { logits, labels: labels.to_vec(), probs }, rg))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows() != bv.rows() {
            return Err(shape_err("concat_cols", av, bv));
        }
        let mut data = Vec::with_capacity(av.len() + bv.len());
        for i in 0..av.rows() {
            data.extend_from_slice(av.row_slice(i));
            data.extend_from_slice(bv.row_slice(i));
        }
        let out = Tensor::from_vec(av.rows(), av.cols() + bv.cols(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::ConcatCols(a, b), rg))
    }

    /// Inner product of two equal-shape nodes, as a 1x1 node.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(shape_err("dot", av, bv));
        }
        let out = Tensor::scalar(dot(av.data(), bv.data()));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Dot(a, b), rg))
    }

    /// Tiles a 1 x n row into `count` rows.
    pub fn repeat_rows(&mut self, a: Var, count: usize) -> Result<Var, DiffError> {
        let av = self.value(a);
        if av.rows() != 1 {
            return Err(DiffError::InvalidArgument("repeat_rows expects a row vector".into()));
        }
        let mut data = Vec::with_capacity(count * av.cols());
        for _ in 0..count {
            data.extend_from_slice(av.data());
        }
        let out = Tensor::from_vec(count, av.cols(), data)?;
        let rg = self.rg(a);
        Ok(self.push(out, Op::RepeatRows(a), rg))
    }

    /// Forward value is the one-hot matrix of `idx`; the gradient passes
    /// through to `soft` unchanged.
    pub fn straight_through(&mut self, soft: Var, idx: &[usize]) -> Result<Var, DiffError> {
        let sv = self.value(soft);
        if sv.rows() != idx.len() {
            return Err(DiffError::InvalidArgument(format!(
                "{} index(es) for {} row(s)",
                idx.len(),
                sv.rows()
            )));
        }
        let mut out = Tensor::zeros(sv.rows(), sv.cols());
        for (i, &j) in idx.iter().enumerate() {
            if j >= sv.cols() {
                return Err(DiffError::InvalidArgument(format!("index {j} out of range")));
            }
            out.set(i, j, 1.0);
        }
        let rg = self.rg(soft);
        Ok(self.push(out, Op::StraightThrough(soft), rg))
    }

    /// `sum_r weights[r] * a[r, idx[r]]`, as a 1x1 node.
    pub fn pick(&mut self, a: Var, idx: &[usize], weights: &[f64]) -> Result<Var, DiffError> {
        let av = self.value(a);
        if av.rows() != idx.len() || idx.len() != weights.len() {
            return Err(DiffError::InvalidArgument("pick needs one index and weight per row".into()));
        }
        let mut total = 0.0;
        for (r, (&j, &w)) in idx.iter().zip(weights).enumerate() {
            if j >= av.cols() {
                return Err(DiffError::InvalidArgument(format!("index {j} out of range")));
            }
            if w != 0.0 {
                total += w * av.get(r, j);
            }
        }
        let rg = self.rg(a);
        Ok(self.push(
            Tensor::scalar(total),
            Op::Pick { a, idx: idx.to_vec(), weights: weights.to_vec() },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    fn accumulate(grads: &mut [Option<Tensor>], nodes: &[Node], v: Var, f: impl FnOnce(&mut [f64])) {
        if !nodes[v.0].requires_grad {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| {
            let (r, c) = nodes[v.0].value.shape();
            Tensor::zeros(r, c)
        });
        f(slot.data_mut());
    }

    /// Backpropagates from a 1x1 node. Gradients accumulate across calls;
    /// call [`Tape::zero_grads`] to reset.
    pub fn backward(&mut self, loss: Var) -> Result<(), DiffError> {
        if self.value(loss).shape() != (1, 1) {
            return Err(DiffError::InvalidArgument("backward needs a scalar loss".into()));
        }
        if !self.rg(loss) {
            return Ok(());
        }
        Self::accumulate(&mut self.grads, &self.nodes, loss, |g| g[0] += 1.0);
        let fault = self.softmax_fault;
        for i in (0..=loss.0).rev() {
            let Some(g) = self.grads[i].take() else { continue };
            let nodes = &self.nodes;
            let grads = &mut self.grads;
            let out = &nodes[i].value;
            match &nodes[i].op {
                Op::Leaf => {}
                Op::MatMulNt(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (m, n) = (av.rows(), bv.rows());
                    Self::accumulate(grads, nodes, *a, |ga| {
                        let k = av.cols();
                        for r in 0..m {
                            for j in 0..n {
                                axpy(g.get(r, j), bv.row_slice(j), &mut ga[r * k..(r + 1) * k]);
                            }
                        }
                    });
                    Self::accumulate(grads, nodes, *b, |gb| {
                        let k = bv.cols();
                        for r in 0..m {
                            for j in 0..n {
                                axpy(g.get(r, j), av.row_slice(r), &mut gb[j * k..(j + 1) * k]);
                            }
                        }
                    });
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (m, k) = (av.rows(), av.cols());
                    Self::accumulate(grads, nodes, *a, |ga| {
                        for r in 0..m {
                            for p in 0..k {
                                ga[r * k + p] += dot(g.row_slice(r), bv.row_slice(p));
                            }
                        }
                    });
                    Self::accumulate(grads, nodes, *b, |gb| {
                        let n = bv.cols();
                        for r in 0..m {
                            for p in 0..k {
                                axpy(av.get(r, p), g.row_slice(r), &mut gb[p * n..(p + 1) * n]);
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    Self::accumulate(grads, nodes, *a, |ga| axpy(1.0, g.data(), ga));
                    Self::accumulate(grads, nodes, *b, |gb| axpy(1.0, g.data(), gb));
                }
                Op::Sub(a, b) => {
                    Self::accumulate(grads, nodes, *a, |ga| axpy(1.0, g.data(), ga));
                    Self::accumulate(grads, nodes, *b, |gb| axpy(-1.0, g.data(), gb));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    Self::accumulate(grads, nodes, *a, |ga| {
                        for ((o, &gi), &bi) in ga.iter_mut().zip(g.data()).zip(bv.data()) {
                            *o += gi * bi;
                        }
                    });
                    Self::accumulate(grads, nodes, *b, |gb| {
                        for ((o, &gi), &ai) in gb.iter_mut().zip(g.data()).zip(av.data()) {
                            *o += gi * ai;
                        }
                    });
                }
                Op::AddRow(a, bias) => {
                    Self::accumulate(grads, nodes, *a, |ga| axpy(1.0, g.data(), ga));
                    Self::accumulate(grads, nodes, *bias, |gb| {
                        for r in 0..g.rows() {
                            axpy(1.0, g.row_slice(r), gb);
                        }
                    });
                }
                Op::Scale(a, c) => {
                    Self::accumulate(grads, nodes, *a, |ga| axpy(*c, g.data(), ga));
                }
                Op::Tanh(a) => {
                    Self::accumulate(grads, nodes, *a, |ga| {
                        for ((o, &gi), &y) in ga.iter_mut().zip(g.data()).zip(out.data()) {
                            *o += gi * (1.0 - y * y);
                        }
                    });
                }
                Op::Softmax(a) => {
                    Self::accumulate(grads, nodes, *a, |ga| {
                        let c = out.cols();
                        for r in 0..out.rows() {
                            let y = out.row_slice(r);
                            let gr = g.row_slice(r);
                            let s = if fault { 0.0 } else { dot(gr, y) };
                            for j in 0..c {
                                if y[j] != 0.0 {
                                    ga[r * c + j] += y[j] * (gr[j] - s);
                                }
                            }
                        }
                    });
                }
                Op::LogSoftmax(a) => {
                    Self::accumulate(grads, nodes, *a, |ga| {
                        let c = out.cols();
                        for r in 0..out.rows() {
                            let gr = g.row_slice(r);
                            let s: f64 = gr.iter().sum();
                            for j in 0..c {
                                let p = out.get(r, j).exp();
                                ga[r * c + j] += gr[j] - p * s;
                            }
                        }
                    });
                }
                Op::CrossEntropy { logits, labels, probs } => {
                    let scale = g.item() / labels.len() as f64;
                    Self::accumulate(grads, nodes, *logits, |ga| {
                        let c = probs.len() / labels.len();
                        for (r, &y) in labels.iter().enumerate() {
                            for j in 0..c {
                                let t = if j == y { 1.0 } else { 0.0 };
                                ga[r * c + j] += scale * (probs[r * c + j] - t);
                            }
                        }
                    });
                }
                Op::ConcatCols(a, b) => {
                    let ca = nodes[a.0].value.cols();
                    let cb = nodes[b.0].value.cols();
                    Self::accumulate(grads, nodes, *a, |ga| {
                        for r in 0..g.rows() {
                            axpy(1.0, &g.row_slice(r)[..ca], &mut ga[r * ca..(r + 1) * ca]);
                        }
                    });
                    Self::accumulate(grads, nodes, *b, |gb| {
                        for r in 0..g.rows() {
                            axpy(1.0, &g.row_slice(r)[ca..], &mut gb[r * cb..(r + 1) * cb]);
                        }
                    });
                }
                Op::Dot(a, b) => {
                    let s = g.item();
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    Self::accumulate(grads, nodes, *a, |ga| axpy(s, bv.data(), ga));
                    Self::accumulate(grads, nodes, *b, |gb| axpy(s, av.data(), gb));
                }
                Op::RepeatRows(a) => {
                    Self::accumulate(grads, nodes, *a, |ga| {
                        for r in 0..g.rows() {
                            axpy(1.0, g.row_slice(r), ga);
                        }
                    });
                }
                Op::StraightThrough(soft) => {
                    Self::accumulate(grads, nodes, *soft, |gs| axpy(1.0, g.data(), gs));
                }
                Op::Pick { a, idx, weights } => {
                    let s = g.item();
                    let c = nodes[a.0].value.cols();
                    Self::accumulate(grads, nodes, *a, |ga| {
                        for (r, (&j, &w)) in idx.iter().zip(weights).enumerate() {
                            ga[r * c + j] += s * w;
                        }
                    });
                }
                Op::Sum(a) => {
                    let s = g.item();
                    Self::accumulate(grads, nodes, *a, |ga| {
                        for o in ga.iter_mut() {
                            *o += s;
                        }
                    });
                }
            }
            self.grads[i] = Some(g);
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            *g = None;
        }
    }
}

/// `log sum exp(x)`; -inf entries are ignored, an all -inf row is an error.
pub fn logsumexp(x: &[f64]) -> Result<f64, DiffError> {
    if x.iter().any(|v| v.is_nan()) {
        return Err(DiffError::Numeric("NaN input to logsumexp".into()));
    }
    let (jmax, m) = x
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
    if !m.is_finite() {
        return Err(DiffError::Numeric("logsumexp over no finite entries".into()));
    }
    let rest: f64 = x
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != jmax)
        .map(|(_, &v)| (v - m).exp())
        .sum();
    Ok(m + rest.ln_1p())
}

/// Cross-entropy of one row of logits, without exponentiating large values.
pub fn row_cross_entropy(x: &[f64], y: usize) -> Result<f64, DiffError> {
    if y >= x.len() {
        return Err(DiffError::InvalidArgument(format!("label {y} out of range for {} classes", x.len())));
    }
    let (jmax, m) = x
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if v > acc.1 { (j, v) } else { acc });
    if !m.is_finite() || x.iter().any(|v| v.is_nan()) {
        return Err(DiffError::Numeric("non-finite logits".into()));
    }
    let rest: f64 = x
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != jmax)
        .map(|(_, &v)| (v - m).exp())
        .sum();
    Ok((m - x[y]) + rest.ln_1p())
}

/// Row softmax on plain slices, for callers outside a tape.
pub fn softmax_slice(x: &[f64]) -> Result<Vec<f64>, DiffError> {
    if x.is_empty() {
        return Err(DiffError::InvalidArgument("softmax of an empty vector".into()));
    }
    let mut out = vec![0.0; x.len()];
    softmax_row(x, &mut out)?;
    Ok(out)
}
