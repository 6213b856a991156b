use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::{ensure_finite, join, uniform, NeuralError, Parameters, Result};

/// One LSTM direction. Gate blocks along the `4H` axis are ordered
/// input, forget, cell candidate, output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    /// `[input_dim, 4H]`
    pub w_ih: Tensor,
    /// `[H, 4H]`
    pub w_hh: Tensor,
    /// `[4H]`
    pub bias: Tensor,
}

struct Step {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// activated gates i, f, g, o
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl LstmCell {
    pub fn new(rng: &mut ChaCha8Rng, input_dim: usize, hidden: usize) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        LstmCell {
            w_ih: uniform(rng, &[input_dim, 4 * hidden], bound),
            w_hh: uniform(rng, &[hidden, 4 * hidden], bound),
            bias: uniform(rng, &[4 * hidden], bound),
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmCell {
            w_ih: Tensor::zeros(&[input_dim, 4 * hidden]),
            w_hh: Tensor::zeros(&[hidden, 4 * hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.rows()
    }

    fn run(&self, xs: &[&[f64]]) -> (Vec<f64>, Vec<Step>) {
        let hd = self.hidden();
        let g4 = 4 * hd;
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let mut pre = self.bias.data().to_vec();
            for (i, xi) in x.iter().enumerate() {
                let row = &self.w_ih.data()[i * g4..(i + 1) * g4];
                for (p, w) in pre.iter_mut().zip(row) {
                    *p += xi * w;
                }
            }
            for (i, hi) in h.iter().enumerate() {
                let row = &self.w_hh.data()[i * g4..(i + 1) * g4];
                for (p, w) in pre.iter_mut().zip(row) {
                    *p += hi * w;
                }
            }
            let mut gates = pre;
            for j in 0..hd {
                gates[j] = sigmoid(gates[j]);
                gates[hd + j] = sigmoid(gates[hd + j]);
                gates[2 * hd + j] = gates[2 * hd + j].tanh();
                gates[3 * hd + j] = sigmoid(gates[3 * hd + j]);
            }
            let mut c_new = vec![0.0; hd];
            let mut tanh_c = vec![0.0; hd];
            let mut h_new = vec![0.0; hd];
            for j in 0..hd {
                c_new[j] = gates[hd + j] * c[j] + gates[j] * gates[2 * hd + j];
                tanh_c[j] = c_new[j].tanh();
                h_new[j] = gates[3 * hd + j] * tanh_c[j];
            }
            steps.push(Step {
                x: x.to_vec(),
                h_prev: std::mem::replace(&mut h, h_new),
                c_prev: std::mem::replace(&mut c, c_new),
                gates,
                tanh_c,
            });
        }
        (h, steps)
    }

    /// Backpropagation through time from a gradient on the final hidden
    /// state.
    fn backprop(&self, steps: &[Step], dh_final: &[f64], grad: &mut LstmCell) {
        let hd = self.hidden();
        let g4 = 4 * hd;
        let mut dh = dh_final.to_vec();
        let mut dc = vec![0.0; hd];
        let mut da = vec![0.0; g4];
        for s in steps.iter().rev() {
            for j in 0..hd {
                let (i, f, g, o) = (s.gates[j], s.gates[hd + j], s.gates[2 * hd + j], s.gates[3 * hd + j]);
                let tc = s.tanh_c[j];
                let d_o = dh[j] * tc;
                dc[j] += dh[j] * o * (1.0 - tc * tc);
                let d_i = dc[j] * g;
                let d_g = dc[j] * i;
                let d_f = dc[j] * s.c_prev[j];
                dc[j] *= f;
                da[j] = d_i * i * (1.0 - i);
                da[hd + j] = d_f * f * (1.0 - f);
                da[2 * hd + j] = d_g * (1.0 - g * g);
                da[3 * hd + j] = d_o * o * (1.0 - o);
            }
            for (gb, d) in grad.bias.data_mut().iter_mut().zip(&da) {
                *gb += d;
            }
            for (i, xi) in s.x.iter().enumerate() {
                let row = &mut grad.w_ih.data_mut()[i * g4..(i + 1) * g4];
                for (w, d) in row.iter_mut().zip(&da) {
                    *w += xi * d;
                }
            }
            for (i, hi) in s.h_prev.iter().enumerate() {
                let row = &mut grad.w_hh.data_mut()[i * g4..(i + 1) * g4];
                for (w, d) in row.iter_mut().zip(&da) {
                    *w += hi * d;
                }
            }
            for (i, dhi) in dh.iter_mut().enumerate() {
                let row = &self.w_hh.data()[i * g4..(i + 1) * g4];
                *dhi = row.iter().zip(&da).map(|(w, d)| w * d).sum();
            }
        }
    }
}

impl Parameters for LstmCell {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "w_ih"), &self.w_ih);
        f(join(prefix, "w_hh"), &self.w_hh);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        f(join(prefix, "w_ih"), &mut self.w_ih);
        f(join(prefix, "w_hh"), &mut self.w_hh);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Bidirectional LSTM over a fixed-length univariate series; the output is
/// `[h_forward_final ; h_backward_final]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceEncoderState {
    pub seq_len: usize,
    pub forward: LstmCell,
    pub backward: LstmCell,
}

pub struct BiLstmCache {
    fwd: Vec<Step>,
    bwd: Vec<Step>,
}

impl SequenceEncoderState {
    pub const DEFAULT_HIDDEN: usize = 64;
    pub const DEFAULT_SEQ_LEN: usize = 30;

    pub fn new(rng: &mut ChaCha8Rng, seq_len: usize, hidden: usize) -> Self {
        SequenceEncoderState {
            seq_len,
            forward: LstmCell::new(rng, 1, hidden),
            backward: LstmCell::new(rng, 1, hidden),
        }
    }

    pub fn zeros(seq_len: usize, hidden: usize) -> Self {
        SequenceEncoderState {
            seq_len,
            forward: LstmCell::zeros(1, hidden),
            backward: LstmCell::zeros(1, hidden),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden()
    }

    pub fn forward(&self, series: &[f64]) -> Result<(Vec<f64>, BiLstmCache)> {
        if series.len() != self.seq_len {
            return Err(NeuralError::Shape(format!(
                "sequence encoder expects {} steps, got {}",
                self.seq_len,
                series.len()
            )));
        }
        let xs: Vec<&[f64]> = series.chunks(1).collect();
        let rev: Vec<&[f64]> = xs.iter().rev().copied().collect();
        let (hf, fwd) = self.forward.run(&xs);
        let (hb, bwd) = self.backward.run(&rev);
        let mut out = hf;
        out.extend(hb);
        ensure_finite("sequence encoder output", &out)?;
        Ok((out, BiLstmCache { fwd, bwd }))
    }

    pub fn backward(&self, cache: &BiLstmCache, dout: &[f64], grad: &mut SequenceEncoderState) {
        let hd = self.forward.hidden();
        self.forward.backprop(&cache.fwd, &dout[..hd], &mut grad.forward);
        self.backward.backprop(&cache.bwd, &dout[hd..], &mut grad.backward);
    }
}

impl Parameters for SequenceEncoderState {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        self.forward.visit(&join(prefix, "forward"), f);
        self.backward.visit(&join(prefix, "backward"), f);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        self.forward.visit_mut(&join(prefix, "forward"), f);
        self.backward.visit_mut(&join(prefix, "backward"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn series(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..30).map(|_| rng.random_range(10.0..30.0) / 20.0).collect()
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let enc = SequenceEncoderState::zeros(30, 64);
        let (out, _) = enc.forward(&series(1)).unwrap();
        assert_eq!(out.len(), 128);
        assert!(out.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn wrong_length_rejected() {
        let enc = SequenceEncoderState::zeros(30, 4);
        assert!(enc.forward(&[0.0; 29]).is_err());
    }

    #[test]
    fn reversal_swaps_halves_with_shared_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut enc = SequenceEncoderState::new(&mut rng, 30, 16);
        enc.backward = enc.forward.clone();
        let s = series(3);
        let rev: Vec<f64> = s.iter().rev().copied().collect();
        let (a, _) = enc.forward(&s).unwrap();
        let (b, _) = enc.forward(&rev).unwrap();
        assert_eq!(&a[..16], &b[16..]);
        assert_eq!(&a[16..], &b[..16]);
    }

    /// Unrolled recurrence written out per gate, independent of `run`.
    fn oracle_direction(cell: &LstmCell, xs: &[f64]) -> Vec<f64> {
        let hd = cell.hidden();
        let (wih, whh, b) = (cell.w_ih.data(), cell.w_hh.data(), cell.bias.data());
        let mut h = vec![0.0; hd];
        let mut c = vec![0.0; hd];
        for &x in xs {
            let gate = |k: usize, j: usize, h: &[f64]| {
                let col = k * hd + j;
                b[col] + x * wih[col] + (0..hd).map(|m| h[m] * whh[m * 4 * hd + col]).sum::<f64>()
            };
            let mut hn = vec![0.0; hd];
            let mut cn = vec![0.0; hd];
            for j in 0..hd {
                let i = 1.0 / (1.0 + (-gate(0, j, &h)).exp());
                let f = 1.0 / (1.0 + (-gate(1, j, &h)).exp());
                let g = gate(2, j, &h).tanh();
                let o = 1.0 / (1.0 + (-gate(3, j, &h)).exp());
                cn[j] = f * c[j] + i * g;
                hn[j] = o * cn[j].tanh();
            }
            h = hn;
            c = cn;
        }
        h
    }

    #[test]
    fn matches_unrolled_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let enc = SequenceEncoderState::new(&mut rng, 30, 8);
        let s = series(4);
        let (out, _) = enc.forward(&s).unwrap();
        let rev: Vec<f64> = s.iter().rev().copied().collect();
        let mut want = oracle_direction(&enc.forward, &s);
        want.extend(oracle_direction(&enc.backward, &rev));
        for (a, b) in out.iter().zip(&want) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let enc = SequenceEncoderState::new(&mut rng, 6, 3);
        let s: Vec<f64> = (0..6).map(|i| (i as f64 * 0.9).sin()).collect();
        let wts: Vec<f64> = (0..6).map(|i| 0.5 - i as f64 * 0.2).collect();
        let loss = |e: &SequenceEncoderState| -> f64 {
            e.forward(&s).unwrap().0.iter().zip(&wts).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = enc.forward(&s).unwrap();
        let mut g = SequenceEncoderState::zeros(6, 3);
        enc.backward(&cache, &wts, &mut g);
        let analytic: Vec<f64> = g.named_params().iter().flat_map(|(_, t)| t.data().to_vec()).collect();
        let n = analytic.len();
        for idx in 0..n {
            let perturb = |delta: f64| {
                let mut e = enc.clone();
                let mut k = idx;
                for (_, t) in e.named_params_mut() {
                    if k < t.len() {
                        t.data_mut()[k] += delta;
                        break;
                    }
                    k -= t.len();
                }
                loss(&e)
            };
            let fd = (perturb(1e-6) - perturb(-1e-6)) / 2e-6;
            assert!((fd - analytic[idx]).abs() < 1e-7, "param {idx}: {fd} vs {}", analytic[idx]);
        }
    }
}
