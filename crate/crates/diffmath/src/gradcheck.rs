//! Central-difference gradient checking.

use crate::{DiffError, Tape, Tensor, Var};

/// A named trainable tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Parameter { name: name.into(), value }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamError {
    pub name: String,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub params: Vec<ParamError>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_error <= self.tolerance)
    }
}

/// Relative error with a small absolute floor so that entries whose true
/// derivative is zero are judged on roundoff rather than blowing up.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Compares the tape gradient of `f` against central differences with
/// step `step`, per parameter.
pub fn gradcheck<F>(f: F, params: &[Parameter], step: f64, tolerance: f64) -> Result<GradcheckReport, DiffError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, DiffError>,
{
    let eval = |values: &[Tensor]| -> Result<f64, DiffError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.constant(v.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.value.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let base = tape.value(loss).item();
    if !base.is_finite() {
        return Err(DiffError::Numeric(format!("function value {base} at base point")));
    }
    tape.backward(loss)?;

    let mut values: Vec<Tensor> = params.iter().map(|p| p.value.clone()).collect();
    let mut report = Vec::with_capacity(params.len());
    for (k, p) in params.iter().enumerate() {
        let analytic = tape
            .grad(vars[k])
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(p.value.rows(), p.value.cols()));
        let mut worst: f64 = 0.0;
        for e in 0..p.value.len() {
            let orig = values[k].data()[e];
            values[k].data_mut()[e] = orig + step;
            let up = eval(&values)?;
            values[k].data_mut()[e] = orig - step;
            let down = eval(&values)?;
            values[k].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * step);
            worst = worst.max(relative_error(analytic.data()[e], numeric));
        }
        report.push(ParamError { name: p.name.clone(), max_rel_error: worst });
    }
    Ok(GradcheckReport { params: report, tolerance })
}
