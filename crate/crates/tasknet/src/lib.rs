//! Pairwise classifier over `[x_q ; x_ctx]` with a learned null context.

use diffmath::{DiffError, Parameter, Tape, Tensor, Var};
use rand::Rng;
use selector::uniform_init;

/// `2 D_in -> H -> C` tanh perceptron plus a `1 x D_in` null context.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskNet {
    params: [Parameter; 5],
}

#[derive(Debug, Clone, Copy)]
pub struct TaskVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub null: Var,
}

impl TaskVars {
    pub fn all(&self) -> [Var; 5] {
        [self.w1, self.b1, self.w2, self.b2, self.null]
    }
}

impl TaskNet {
    /// Uniform fan-in weights, zero biases, zero null context.
    pub fn init<R: Rng>(d_in: usize, hidden: usize, classes: usize, rng: &mut R) -> Self {
        let w1 = uniform_init(rng, hidden, 2 * d_in);
        let w2 = uniform_init(rng, classes, hidden);
        Self::from_weights(w1, Tensor::zeros(1, hidden), w2, Tensor::zeros(1, classes), Tensor::zeros(1, d_in)).expect("consistent")
    }

    pub fn zeros(d_in: usize, hidden: usize, classes: usize) -> Self {
        Self::from_weights(
            Tensor::zeros(hidden, 2 * d_in),
            Tensor::zeros(1, hidden),
            Tensor::zeros(classes, hidden),
            Tensor::zeros(1, classes),
            Tensor::zeros(1, d_in),
        )
        .expect("consistent")
    }

    pub fn from_weights(w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor, null: Tensor) -> Result<Self, DiffError> {
        let mismatch = |l: &Tensor, r: &Tensor| DiffError::Shape { op: "tasknet", left: l.shape(), right: r.shape() };
        if null.rows() != 1 || w1.cols() != 2 * null.cols() {
            return Err(mismatch(&w1, &null));
        }
        if b1.shape() != (1, w1.rows()) || w2.cols() != w1.rows() {
            return Err(mismatch(&w1, &w2));
        }
        if b2.shape() != (1, w2.rows()) {
            return Err(mismatch(&w2, &b2));
        }
        Ok(TaskNet {
            params: [
                Parameter::new("task.w1", w1),
                Parameter::new("task.b1", b1),
                Parameter::new("task.w2", w2),
                Parameter::new("task.b2", b2),
                Parameter::new("task.null", null),
            ],
        })
    }

    pub fn d_in(&self) -> usize {
        self.params[4].value.cols()
    }

    pub fn classes(&self) -> usize {
        self.params[2].value.rows()
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    pub fn null_context(&self) -> &Tensor {
        &self.params[4].value
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> TaskVars {
        let [w1, b1, w2, b2, null] = self.params.each_ref().map(|p| tape.leaf(p.value.clone(), trainable));
        TaskVars { w1, b1, w2, b2, null }
    }

    /// Logits for each row pair of `xq` and `xctx` (both `B x D_in`).
    pub fn forward_pair(&self, tape: &mut Tape, v: &TaskVars, xq: Var, xctx: Var) -> Result<Var, DiffError> {
        let d = self.d_in();
        for x in [xq, xctx] {
            if tape.value(x).cols() != d {
                return Err(DiffError::Shape { op: "forward_pair", left: (1, d), right: tape.value(x).shape() });
            }
        }
        let x = tape.concat_cols(xq, xctx)?;
        let h = tape.matmul_nt(x, v.w1)?;
        let h = tape.add_row(h, v.b1)?;
        let h = tape.tanh(h);
        let o = tape.matmul_nt(h, v.w2)?;
        tape.add_row(o, v.b2)
    }

    /// `forward_pair` with the null context in every row.
    pub fn forward_noctx(&self, tape: &mut Tape, v: &TaskVars, xq: Var) -> Result<Var, DiffError> {
        let b = tape.value(xq).rows();
        let ctx = tape.repeat_rows(v.null, b)?;
        self.forward_pair(tape, v, xq, ctx)
    }

    /// Mean cross-entropy; `None` context means the null context.
    pub fn task_loss(&self, tape: &mut Tape, v: &TaskVars, xq: Var, xctx: Option<Var>, labels: &[usize]) -> Result<Var, DiffError> {
        let logits = match xctx {
            Some(c) => self.forward_pair(tape, v, xq, c)?,
            None => self.forward_noctx(tape, v, xq)?,
        };
        tape.cross_entropy(logits, labels)
    }

    /// Untracked logits for row pairs.
    pub fn logits(&self, xq: &Tensor, xctx: &Tensor) -> Result<Tensor, DiffError> {
        let mut tape = Tape::new();
        let v = self.bind(&mut tape, false);
        let (q, c) = (tape.constant(xq.clone()), tape.constant(xctx.clone()));
        let o = self.forward_pair(&mut tape, &v, q, c)?;
        Ok(tape.value(o).clone())
    }

    /// Untracked logits with the null context.
    pub fn logits_noctx(&self, xq: &Tensor) -> Result<Tensor, DiffError> {
        let mut tape = Tape::new();
        let v = self.bind(&mut tape, false);
        let q = tape.constant(xq.clone());
        let o = self.forward_noctx(&mut tape, &v, q)?;
        Ok(tape.value(o).clone())
    }
}
