use crate::params::{Gradients, ParamStore};

/// AdaGrad: `acc += g^2; θ -= lr * g / (sqrt(acc) + eps)`.
#[derive(Debug, Clone)]
pub struct AdaGrad {
    pub lr: f64,
    pub eps: f64,
    pub initial_accumulator: f64,
    accum: Vec<Vec<f64>>,
}

impl AdaGrad {
    pub fn new(lr: f64) -> Self {
        Self::with_accumulator(lr, 0.0)
    }

    pub fn with_accumulator(lr: f64, initial_accumulator: f64) -> Self {
        Self {
            lr,
            eps: 1e-8,
            initial_accumulator,
            accum: Vec::new(),
        }
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) {
        if self.accum.is_empty() {
            self.accum = store
                .ids()
                .map(|id| vec![self.initial_accumulator; store.get(id).len()])
                .collect();
        }
        for (id, g) in grads.iter() {
            let acc = &mut self.accum[id.0];
            let theta = &mut store.get_mut(id).data;
            for j in 0..g.len() {
                acc[j] += g[j] * g[j];
                theta[j] -= self.lr * g[j] / (acc[j].sqrt() + self.eps);
            }
        }
    }
}
