use serde::{Deserialize, Serialize};

use super::{NeuralError, Parameters, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam with first/second moment buffers laid out in
/// parameter-visit order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam { config, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One update of `params` from `grads`, which must have identical
    /// parameter names and shapes.
    pub fn step<P: Parameters + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let gs = grads.named_params();
        let mut ps = params.named_params_mut();
        if ps.len() != gs.len() {
            return Err(NeuralError::Shape(format!(
                "{} parameters but {} gradients",
                ps.len(),
                gs.len()
            )));
        }
        for ((pn, p), (gn, g)) in ps.iter().zip(&gs) {
            if pn != gn || p.shape() != g.shape() {
                return Err(NeuralError::Shape(format!(
                    "parameter {pn} {:?} does not match gradient {gn} {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
        }
        let total: usize = gs.iter().map(|(_, g)| g.len()).sum();
        if self.m.is_empty() {
            self.m = vec![0.0; total];
            self.v = vec![0.0; total];
        } else if self.m.len() != total {
            return Err(NeuralError::Shape(format!(
                "optimizer state holds {} values, parameters have {total}",
                self.m.len()
            )));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        let mut off = 0;
        for ((_, p), (_, g)) in ps.iter_mut().zip(&gs) {
            let n = g.len();
            let m = &mut self.m[off..off + n];
            let v = &mut self.v[off..off + n];
            for (((w, gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *w -= lr * mhat / (vhat.sqrt() + eps);
            }
            off += n;
        }
        Ok(())
    }
}
