use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::{attention_head, attention_head_backward};
use super::layers::{LayerNorm, LayerNormCache, Linear};
use super::tensor::{gemm, matmul, MatMut, MatRef, Tensor};
use super::{add_into, ensure_finite, join, xavier, NeuralError, Parameters, Result};

/// Multi-head self-attention block: attention, residual + layer norm, then a
/// two-layer ReLU MLP with a residual connection.
///
/// `w_q`, `w_k` and `w_v` are `[d_model, h * d_k]`; column block `i` holds
/// head `i`'s projection. `w_o` is `[h * d_v, d_model]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MhsaLayer {
    pub heads: usize,
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub norm: LayerNorm,
    pub mlp_in: Linear,
    pub mlp_out: Linear,
}

pub struct MhsaCache {
    n: usize,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<Vec<f64>>,
    concat: Vec<f64>,
    ln: LayerNormCache,
    /// `LayerNorm(X + MultiHead(X))`, the attention sub-block output.
    pub normed: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
}

impl MhsaLayer {
    pub fn new(rng: &mut ChaCha8Rng, d_model: usize, heads: usize, mlp_hidden: usize) -> Result<Self> {
        check_heads(d_model, heads)?;
        Ok(MhsaLayer {
            heads,
            w_q: xavier(rng, d_model, d_model),
            w_k: xavier(rng, d_model, d_model),
            w_v: xavier(rng, d_model, d_model),
            w_o: xavier(rng, d_model, d_model),
            norm: LayerNorm::new(d_model),
            mlp_in: Linear::new(rng, d_model, mlp_hidden),
            mlp_out: Linear::new(rng, mlp_hidden, d_model),
        })
    }

    pub fn zeros(d_model: usize, heads: usize, mlp_hidden: usize) -> Self {
        MhsaLayer {
            heads,
            w_q: Tensor::zeros(&[d_model, d_model]),
            w_k: Tensor::zeros(&[d_model, d_model]),
            w_v: Tensor::zeros(&[d_model, d_model]),
            w_o: Tensor::zeros(&[d_model, d_model]),
            norm: LayerNorm::zeros(d_model),
            mlp_in: Linear::zeros(d_model, mlp_hidden),
            mlp_out: Linear::zeros(mlp_hidden, d_model),
        }
    }

    pub fn d_model(&self) -> usize {
        self.w_q.rows()
    }

    pub fn d_k(&self) -> usize {
        self.d_model() / self.heads
    }

    /// Forward pass over `x` (`[n, d_model]`). Only the first `valid_keys`
    /// rows may be attended to.
    pub fn forward(&self, x: MatRef<'_>, valid_keys: usize) -> Result<(Vec<f64>, MhsaCache)> {
        let d = self.d_model();
        if x.cols() != d {
            return Err(NeuralError::Shape(format!(
                "MHSA input has {} features, d_model is {d}",
                x.cols()
            )));
        }
        let n = x.rows();
        if valid_keys == 0 || valid_keys > n {
            return Err(NeuralError::Shape(format!("valid rows {valid_keys} outside 1..={n}")));
        }
        let dk = self.d_k();
        let q = matmul(x, self.w_q.view());
        let k = matmul(x, self.w_k.view());
        let v = matmul(x, self.w_v.view());
        let mut concat = vec![0.0; n * d];
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = MatRef::new(&q, n, d).col_block(h * dk, dk);
            let kh = MatRef::new(&k, n, d).col_block(h * dk, dk);
            let vh = MatRef::new(&v, n, d).col_block(h * dk, dk);
            let out = MatMut::new(&mut concat, n, d).col_block(h * dk, dk);
            probs.push(attention_head(qh, kh, vh, valid_keys, out));
        }
        let mut residual = matmul(MatRef::new(&concat, n, d), self.w_o.view());
        for i in 0..n {
            for j in 0..d {
                residual[i * d + j] += x.get(i, j);
            }
        }
        let (normed, ln) = self.norm.forward(&residual);
        let hidden_pre = self.mlp_in.forward(MatRef::new(&normed, n, d));
        let hidden: Vec<f64> = hidden_pre.iter().map(|z| z.max(0.0)).collect();
        let mut out = self.mlp_out.forward(MatRef::new(&hidden, n, self.mlp_in.fan_out()));
        add_into(&mut out, &normed);
        ensure_finite("MHSA output", &out)?;
        Ok((
            out,
            MhsaCache {
                n,
                q,
                k,
                v,
                probs,
                concat,
                ln,
                normed,
                hidden_pre,
                hidden,
            },
        ))
    }

    /// Accumulates parameter gradients for upstream gradient `dout`. The
    /// input is treated as data, so no input gradient is produced.
    pub fn backward(&self, x: MatRef<'_>, cache: &MhsaCache, dout: &[f64], grad: &mut MhsaLayer) {
        let (n, d, dk) = (cache.n, self.d_model(), self.d_k());
        let hid = self.mlp_in.fan_out();

        let d_hidden = self
            .mlp_out
            .backward(MatRef::new(&cache.hidden, n, hid), dout, &mut grad.mlp_out, true)
            .expect("dx requested");
        let d_hidden_pre: Vec<f64> = d_hidden
            .iter()
            .zip(&cache.hidden_pre)
            .map(|(g, z)| if *z > 0.0 { *g } else { 0.0 })
            .collect();
        let mut d_normed = self
            .mlp_in
            .backward(MatRef::new(&cache.normed, n, d), &d_hidden_pre, &mut grad.mlp_in, true)
            .expect("dx requested");
        add_into(&mut d_normed, dout);

        let d_attn = self.norm.backward(&cache.ln, &d_normed, &mut grad.norm);
        let d_attn_m = MatRef::new(&d_attn, n, d);
        gemm(
            1.0,
            MatRef::new(&cache.concat, n, d).t(),
            d_attn_m,
            1.0,
            MatMut::new(grad.w_o.data_mut(), d, d),
        );
        let d_concat = matmul(d_attn_m, self.w_o.view().t());

        let mut dq = vec![0.0; n * d];
        let mut dkk = vec![0.0; n * d];
        let mut dv = vec![0.0; n * d];
        for h in 0..self.heads {
            fn blk(buf: &[f64], n: usize, d: usize, start: usize, w: usize) -> MatRef<'_> {
                MatRef::new(buf, n, d).col_block(start, w)
            }
            let dq_h = MatMut::new(&mut dq, n, d).col_block(h * dk, dk);
            let dk_h = MatMut::new(&mut dkk, n, d).col_block(h * dk, dk);
            let dv_h = MatMut::new(&mut dv, n, d).col_block(h * dk, dk);
            attention_head_backward(
                blk(&cache.q, n, d, h * dk, dk),
                blk(&cache.k, n, d, h * dk, dk),
                blk(&cache.v, n, d, h * dk, dk),
                &cache.probs[h],
                blk(&d_concat, n, d, h * dk, dk),
                dq_h,
                dk_h,
                dv_h,
            );
        }
        for (g, dbuf) in [
            (&mut grad.w_q, &dq),
            (&mut grad.w_k, &dkk),
            (&mut grad.w_v, &dv),
        ] {
            gemm(1.0, x.t(), MatRef::new(dbuf, n, d), 1.0, MatMut::new(g.data_mut(), d, d));
        }
    }
}

pub(crate) fn check_heads(d_model: usize, heads: usize) -> Result<()> {
    if heads == 0 || d_model % heads != 0 {
        return Err(NeuralError::Config(format!(
            "d_model {d_model} is not divisible by {heads} heads"
        )));
    }
    Ok(())
}

impl Parameters for MhsaLayer {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "w_q"), &self.w_q);
        f(join(prefix, "w_k"), &self.w_k);
        f(join(prefix, "w_v"), &self.w_v);
        f(join(prefix, "w_o"), &self.w_o);
        self.norm.visit(&join(prefix, "norm"), f);
        self.mlp_in.visit(&join(prefix, "mlp_in"), f);
        self.mlp_out.visit(&join(prefix, "mlp_out"), f);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        f(join(prefix, "w_q"), &mut self.w_q);
        f(join(prefix, "w_k"), &mut self.w_k);
        f(join(prefix, "w_v"), &mut self.w_v);
        f(join(prefix, "w_o"), &mut self.w_o);
        self.norm.visit_mut(&join(prefix, "norm"), f);
        self.mlp_in.visit_mut(&join(prefix, "mlp_in"), f);
        self.mlp_out.visit_mut(&join(prefix, "mlp_out"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::attention::attention;
    use rand::{Rng, SeedableRng};

    fn input(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<f64> {
        (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn layer_norm_oracle(x: &[f64], d: usize) -> Vec<f64> {
        x.chunks(d)
            .flat_map(|r| {
                let m = r.iter().sum::<f64>() / d as f64;
                let v = r.iter().map(|a| (a - m).powi(2)).sum::<f64>() / d as f64;
                r.iter().map(move |a| (a - m) / (v + 1e-5).sqrt()).collect::<Vec<_>>()
            })
            .collect()
    }

    #[test]
    fn single_head_equals_composed_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (n, d) = (5, 4);
        let layer = MhsaLayer::new(&mut rng, d, 1, 8).unwrap();
        let x = input(&mut rng, n, d);
        let (out, _) = layer.forward(MatRef::new(&x, n, d), n).unwrap();

        let xt = Tensor::from_vec(&[n, d], x.clone()).unwrap();
        let proj = |w: &Tensor| Tensor::from_vec(&[n, d], matmul(xt.view(), w.view())).unwrap();
        let a = attention(&proj(&layer.w_q), &proj(&layer.w_k), &proj(&layer.w_v)).unwrap();
        let mut r = matmul(a.view(), layer.w_o.view());
        add_into(&mut r, &x);
        let h = layer_norm_oracle(&r, d);
        let z = layer.mlp_in.forward(MatRef::new(&h, n, d));
        let z: Vec<f64> = z.into_iter().map(|v| v.max(0.0)).collect();
        let mut want = layer.mlp_out.forward(MatRef::new(&z, n, 8));
        add_into(&mut want, &h);
        for (g, w) in out.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_mlp_output_layer_leaves_attention_sub_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, d) = (4, 8);
        let mut layer = MhsaLayer::new(&mut rng, d, 2, 32).unwrap();
        layer.mlp_out.weight.fill(0.0);
        layer.mlp_out.bias.fill(0.0);
        let x = input(&mut rng, n, d);
        let (out, cache) = layer.forward(MatRef::new(&x, n, d), n).unwrap();
        assert_eq!(out, cache.normed);
    }

    #[test]
    fn padding_semantics_are_pinned() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (n, valid, d) = (6, 4, 8);
        let layer = MhsaLayer::new(&mut rng, d, 2, 16).unwrap();
        let mut x = input(&mut rng, n, d);
        x[valid * d..].fill(0.0);
        let (masked, _) = layer.forward(MatRef::new(&x, n, d), valid).unwrap();
        let (unmasked, _) = layer.forward(MatRef::new(&x, n, d), n).unwrap();
        let (trunc, _) = layer.forward(MatRef::new(&x, valid, d), valid).unwrap();
        let diff: f64 = masked[..valid * d]
            .iter()
            .zip(&unmasked[..valid * d])
            .map(|(a, b)| (a - b).abs())
            .sum();
        assert!(diff > 1e-6, "masking must change valid-row outputs");
        for (a, b) in masked[..valid * d].iter().zip(&trunc) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn permutation_equivariance_without_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (n, d) = (5, 8);
        let layer = MhsaLayer::new(&mut rng, d, 2, 16).unwrap();
        let x = input(&mut rng, n, d);
        let perm = [3, 0, 4, 1, 2];
        let xp: Vec<f64> = perm.iter().flat_map(|&i| x[i * d..(i + 1) * d].to_vec()).collect();
        let (out, _) = layer.forward(MatRef::new(&x, n, d), n).unwrap();
        let (outp, _) = layer.forward(MatRef::new(&xp, n, d), n).unwrap();
        for (r, &i) in perm.iter().enumerate() {
            for c in 0..d {
                assert!((outp[r * d + c] - out[i * d + c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn indivisible_heads_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(MhsaLayer::new(&mut rng, 10, 3, 8).is_err());
    }
}
