//! Gradient descent with heavy-ball momentum.

use diffmath::{Parameter, Tensor};

#[derive(Debug, Clone)]
pub struct Momentum {
    lr: f64,
    beta: f64,
    velocity: Vec<Tensor>,
}

impl Momentum {
    pub fn new(params: &[&Parameter], lr: f64, beta: f64) -> Self {
        let velocity = params.iter().map(|p| Tensor::zeros(p.value.rows(), p.value.cols())).collect();
        Momentum { lr, beta, velocity }
    }

    /// `v = beta v + g; p -= lr v`. Parameters without a gradient keep
    /// decaying their velocity.
    pub fn step(&mut self, params: &mut [&mut Parameter], grads: &[Option<&Tensor>]) {
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            let vd = v.data_mut();
            match g {
                Some(g) => {
                    for (vi, gi) in vd.iter_mut().zip(g.data()) {
                        *vi = self.beta * *vi + gi;
                    }
                }
                None => vd.iter_mut().for_each(|vi| *vi *= self.beta),
            }
            for (pi, vi) in p.value.data_mut().iter_mut().zip(v.data()) {
                *pi -= self.lr * vi;
            }
        }
    }
}
