use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, matmul, MatMut, MatRef, Tensor};
use super::{join, xavier, Parameters};

/// Affine map `y = x W + b` applied row-wise; `W` is `[in, out]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn new(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: xavier(rng, fan_in, fan_out),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: Tensor::zeros(&[fan_in, fan_out]),
            bias: Tensor::zeros(&[fan_out]),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.cols()
    }

    pub fn forward(&self, x: MatRef<'_>) -> Vec<f64> {
        let mut y = matmul(x, self.weight.view());
        let out = self.fan_out();
        for row in y.chunks_mut(out) {
            for (v, b) in row.iter_mut().zip(self.bias.data()) {
                *v += b;
            }
        }
        y
    }

    /// Accumulates weight/bias gradients into `grad` and returns `dx` when
    /// requested.
    pub fn backward(
        &self,
        x: MatRef<'_>,
        dy: &[f64],
        grad: &mut Linear,
        want_dx: bool,
    ) -> Option<Vec<f64>> {
        let (n, out) = (x.rows(), self.fan_out());
        let dy_m = MatRef::new(dy, n, out);
        let (fi, fo) = (self.fan_in(), out);
        gemm(1.0, x.t(), dy_m, 1.0, MatMut::new(grad.weight.data_mut(), fi, fo));
        for row in dy.chunks(out) {
            for (g, d) in grad.bias.data_mut().iter_mut().zip(row) {
                *g += d;
            }
        }
        want_dx.then(|| matmul(dy_m, self.weight.view().t()))
    }
}

impl Parameters for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "weight"), &self.weight);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        f(join(prefix, "weight"), &mut self.weight);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Layer normalization over the feature dimension with learnable gain/bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
}

pub struct LayerNormCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gain: Tensor::filled(&[dim], 1.0),
            bias: Tensor::zeros(&[dim]),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        LayerNorm {
            gain: Tensor::zeros(&[dim]),
            bias: Tensor::zeros(&[dim]),
        }
    }

    pub fn forward(&self, x: &[f64]) -> (Vec<f64>, LayerNormCache) {
        let d = self.gain.len();
        let n = x.len() / d;
        let mut y = vec![0.0; x.len()];
        let mut xhat = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; n];
        for (r, row) in x.chunks(d).enumerate() {
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                y[r * d + j] = self.gain.data()[j] * h + self.bias.data()[j];
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &[f64], grad: &mut LayerNorm) -> Vec<f64> {
        let d = self.gain.len();
        let mut dx = vec![0.0; dy.len()];
        for (r, dyr) in dy.chunks(d).enumerate() {
            let xh = &cache.xhat[r * d..(r + 1) * d];
            let mut dxh = vec![0.0; d];
            for j in 0..d {
                grad.gain.data_mut()[j] += dyr[j] * xh[j];
                grad.bias.data_mut()[j] += dyr[j];
                dxh[j] = dyr[j] * self.gain.data()[j];
            }
            let mean_dxh = dxh.iter().sum::<f64>() / d as f64;
            let mean_dxh_xh = dxh.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
            for j in 0..d {
                dx[r * d + j] = cache.inv_std[r] * (dxh[j] - mean_dxh - xh[j] * mean_dxh_xh);
            }
        }
        dx
    }
}

impl Parameters for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "gain"), &self.gain);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        f(join(prefix, "gain"), &mut self.gain);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn layer_norm_rows_are_standardized() {
        let ln = LayerNorm::new(4);
        let (y, _) = ln.forward(&[1.0, 2.0, 3.0, 4.0, -1.0, 0.0, 0.0, 1.0]);
        for row in y.chunks(4) {
            let m: f64 = row.iter().sum::<f64>() / 4.0;
            let v: f64 = row.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn linear_backward_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let lin = Linear::new(&mut rng, 3, 2);
        let x = [0.3, -0.2, 0.5, 1.0, 0.1, -0.7];
        let loss = |l: &Linear| -> f64 { l.forward(MatRef::new(&x, 2, 3)).iter().map(|v| v * v).sum() };
        let y = lin.forward(MatRef::new(&x, 2, 3));
        let dy: Vec<f64> = y.iter().map(|v| 2.0 * v).collect();
        let mut g = Linear::zeros(3, 2);
        lin.backward(MatRef::new(&x, 2, 3), &dy, &mut g, false);
        for i in 0..6 {
            let mut p = lin.clone();
            p.weight.data_mut()[i] += 1e-6;
            let mut m = lin.clone();
            m.weight.data_mut()[i] -= 1e-6;
            let fd = (loss(&p) - loss(&m)) / 2e-6;
            assert!((fd - g.weight.data()[i]).abs() < 1e-7);
        }
    }
}
