use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm, matmul, MatMut, MatRef, Tensor};
use super::{ensure_finite, join, xavier, NeuralError, Parameters, Result};

/// Pooled per-modality feature vectors entering the fusion layer. `None`
/// means the modality is absent and contributes nothing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModalityFeatures {
    pub audio: Option<Vec<f64>>,
    pub text: Option<Vec<f64>>,
    /// `[T_s ; T_f]`
    pub analysis: Option<Vec<f64>>,
    pub vix: Option<Vec<f64>>,
    pub news: Option<Vec<f64>>,
}

impl ModalityFeatures {
    fn slots(&self) -> [&Option<Vec<f64>>; 5] {
        [&self.audio, &self.text, &self.analysis, &self.vix, &self.news]
    }
}

/// Additive fusion
/// `E = b + w_a (T_a P_a) + w_t (T_t P_t) + w_f (T_f P_f) + T_v P_v + T_n P_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionLayer {
    pub proj_audio: Tensor,
    pub proj_text: Tensor,
    pub proj_analysis: Tensor,
    pub proj_vix: Tensor,
    pub proj_news: Tensor,
    pub w_audio: Tensor,
    pub w_text: Tensor,
    pub w_analysis: Tensor,
    pub bias: Tensor,
}

/// Input widths of the five projections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionDims {
    pub audio: usize,
    pub text: usize,
    pub analysis: usize,
    pub vix: usize,
    pub news: usize,
    pub fusion: usize,
}

impl FusionLayer {
    pub fn new(rng: &mut ChaCha8Rng, dims: FusionDims) -> Self {
        let f = dims.fusion;
        FusionLayer {
            proj_audio: xavier(rng, dims.audio, f),
            proj_text: xavier(rng, dims.text, f),
            proj_analysis: xavier(rng, dims.analysis, f),
            proj_vix: xavier(rng, dims.vix, f),
            proj_news: xavier(rng, dims.news, f),
            w_audio: Tensor::filled(&[1], 1.0),
            w_text: Tensor::filled(&[1], 1.0),
            w_analysis: Tensor::filled(&[1], 1.0),
            bias: Tensor::zeros(&[f]),
        }
    }

    pub fn zeros(dims: FusionDims) -> Self {
        let f = dims.fusion;
        FusionLayer {
            proj_audio: Tensor::zeros(&[dims.audio, f]),
            proj_text: Tensor::zeros(&[dims.text, f]),
            proj_analysis: Tensor::zeros(&[dims.analysis, f]),
            proj_vix: Tensor::zeros(&[dims.vix, f]),
            proj_news: Tensor::zeros(&[dims.news, f]),
            w_audio: Tensor::zeros(&[1]),
            w_text: Tensor::zeros(&[1]),
            w_analysis: Tensor::zeros(&[1]),
            bias: Tensor::zeros(&[f]),
        }
    }

    pub fn fusion_dim(&self) -> usize {
        self.bias.len()
    }

    fn projections(&self) -> [&Tensor; 5] {
        [&self.proj_audio, &self.proj_text, &self.proj_analysis, &self.proj_vix, &self.proj_news]
    }

    fn scale(&self, slot: usize) -> f64 {
        match slot {
            0 => self.w_audio.data()[0],
            1 => self.w_text.data()[0],
            2 => self.w_analysis.data()[0],
            _ => 1.0,
        }
    }

    fn check(&self, feats: &ModalityFeatures) -> Result<()> {
        const NAMES: [&str; 5] = ["audio", "text", "analysis", "vix", "news"];
        for ((slot, p), name) in feats.slots().iter().zip(self.projections()).zip(NAMES) {
            if let Some(x) = slot {
                if x.len() != p.rows() {
                    return Err(NeuralError::Shape(format!(
                        "{name} feature has {} values, fusion expects {}",
                        x.len(),
                        p.rows()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn fuse(&self, feats: &ModalityFeatures) -> Result<Vec<f64>> {
        self.check(feats)?;
        let mut e = self.bias.data().to_vec();
        for (i, (slot, p)) in feats.slots().iter().zip(self.projections()).enumerate() {
            if let Some(x) = slot {
                let w = self.scale(i);
                gemm(w, MatRef::new(x, 1, x.len()), p.view(), 1.0, MatMut::new(&mut e, 1, p.cols()));
            }
        }
        ensure_finite("fused representation", &e)?;
        Ok(e)
    }

    /// Accumulates parameter gradients and returns the gradient with respect
    /// to each present modality feature.
    pub fn backward(&self, feats: &ModalityFeatures, de: &[f64], grad: &mut FusionLayer) -> ModalityFeatures {
        let f = self.fusion_dim();
        for (g, d) in grad.bias.data_mut().iter_mut().zip(de) {
            *g += d;
        }
        let de_m = MatRef::new(de, 1, f);
        let mut out: [Option<Vec<f64>>; 5] = Default::default();
        let slots = feats.slots();
        let projs = self.projections();
        for i in 0..5 {
            let Some(x) = slots[i] else { continue };
            let p = projs[i];
            let w = self.scale(i);
            let xm = MatRef::new(x, 1, x.len());
            if i < 3 {
                let proj = matmul(xm, p.view());
                let dw: f64 = proj.iter().zip(de).map(|(a, b)| a * b).sum();
                match i {
                    0 => grad.w_audio.data_mut()[0] += dw,
                    1 => grad.w_text.data_mut()[0] += dw,
                    _ => grad.w_analysis.data_mut()[0] += dw,
                }
            }
            let gp = match i {
                0 => &mut grad.proj_audio,
                1 => &mut grad.proj_text,
                2 => &mut grad.proj_analysis,
                3 => &mut grad.proj_vix,
                _ => &mut grad.proj_news,
            };
            gemm(w, xm.t(), de_m, 1.0, MatMut::new(gp.data_mut(), x.len(), f));
            let mut dx = matmul(de_m, p.view().t());
            dx.iter_mut().for_each(|v| *v *= w);
            out[i] = Some(dx);
        }
        let [audio, text, analysis, vix, news] = out;
        ModalityFeatures { audio, text, analysis, vix, news }
    }
}

impl Parameters for FusionLayer {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor)) {
        f(join(prefix, "proj_audio"), &self.proj_audio);
        f(join(prefix, "proj_text"), &self.proj_text);
        f(join(prefix, "proj_analysis"), &self.proj_analysis);
        f(join(prefix, "proj_vix"), &self.proj_vix);
        f(join(prefix, "proj_news"), &self.proj_news);
        f(join(prefix, "w_audio"), &self.w_audio);
        f(join(prefix, "w_text"), &self.w_text);
        f(join(prefix, "w_analysis"), &self.w_analysis);
        f(join(prefix, "bias"), &self.bias);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor)) {
        f(join(prefix, "proj_audio"), &mut self.proj_audio);
        f(join(prefix, "proj_text"), &mut self.proj_text);
        f(join(prefix, "proj_analysis"), &mut self.proj_analysis);
        f(join(prefix, "proj_vix"), &mut self.proj_vix);
        f(join(prefix, "proj_news"), &mut self.proj_news);
        f(join(prefix, "w_audio"), &mut self.w_audio);
        f(join(prefix, "w_text"), &mut self.w_text);
        f(join(prefix, "w_analysis"), &mut self.w_analysis);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    const DIMS: FusionDims = FusionDims { audio: 3, text: 4, analysis: 6, vix: 2, news: 5, fusion: 6 };

    fn vecn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn full(rng: &mut ChaCha8Rng) -> ModalityFeatures {
        ModalityFeatures {
            audio: Some(vecn(rng, 3)),
            text: Some(vecn(rng, 4)),
            analysis: Some(vecn(rng, 6)),
            vix: Some(vecn(rng, 2)),
            news: Some(vecn(rng, 5)),
        }
    }

    #[test]
    fn zero_inputs_zero_bias_give_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let layer = FusionLayer::new(&mut rng, DIMS);
        let z = ModalityFeatures {
            audio: Some(vec![0.0; 3]),
            text: Some(vec![0.0; 4]),
            ..Default::default()
        };
        assert!(layer.fuse(&z).unwrap().iter().all(|v| *v == 0.0));
        assert!(layer.fuse(&ModalityFeatures::default()).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_padded_audio_projection() {
        let mut layer = FusionLayer::zeros(DIMS);
        for i in 0..3 {
            layer.proj_audio.data_mut()[i * 6 + i] = 1.0;
        }
        layer.w_audio.fill(1.0);
        layer.bias = Tensor::from_vec(&[6], vec![0.5, 0.0, -1.0, 2.0, 0.0, 0.25]).unwrap();
        let feats = ModalityFeatures { audio: Some(vec![1.0, -2.0, 3.0]), ..Default::default() };
        assert_eq!(layer.fuse(&feats).unwrap(), vec![1.5, -2.0, 2.0, 2.0, 0.0, 0.25]);
    }

    #[test]
    fn ablation_configurations_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let layer = FusionLayer::new(&mut rng, DIMS);
        let feats = full(&mut rng);
        let at = ModalityFeatures { audio: feats.audio.clone(), text: feats.text.clone(), ..Default::default() };
        assert_ne!(layer.fuse(&at).unwrap(), layer.fuse(&feats).unwrap());
        let zeroed = ModalityFeatures {
            analysis: Some(vec![0.0; 6]),
            vix: Some(vec![0.0; 2]),
            news: Some(vec![0.0; 5]),
            ..at.clone()
        };
        assert_eq!(layer.fuse(&at).unwrap(), layer.fuse(&zeroed).unwrap());
    }

    #[test]
    fn linear_in_each_modality() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut layer = FusionLayer::new(&mut rng, DIMS);
        layer.bias = Tensor::from_vec(&[6], vecn(&mut rng, 6)).unwrap();
        layer.w_text.fill(0.7);
        let (a, b) = (1.7, -0.4);
        let t1 = vecn(&mut rng, 4);
        let t2 = vecn(&mut rng, 4);
        let mix: Vec<f64> = t1.iter().zip(&t2).map(|(x, y)| a * x + b * y).collect();
        let f = |t: &Vec<f64>| layer.fuse(&ModalityFeatures { text: Some(t.clone()), ..Default::default() }).unwrap();
        let (e1, e2, em) = (f(&t1), f(&t2), f(&mix));
        for j in 0..6 {
            let want = a * e1[j] + b * e2[j] - (a + b - 1.0) * layer.bias.data()[j];
            assert!((em[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let layer = FusionLayer::zeros(DIMS);
        let bad = ModalityFeatures { vix: Some(vec![0.0; 3]), ..Default::default() };
        assert!(layer.fuse(&bad).is_err());
    }

    #[test]
    fn backward_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layer = FusionLayer::new(&mut rng, DIMS);
        let feats = full(&mut rng);
        let c = vecn(&mut rng, 6);
        let loss = |l: &FusionLayer, ft: &ModalityFeatures| -> f64 {
            l.fuse(ft).unwrap().iter().zip(&c).map(|(a, b)| a * b).sum()
        };
        let mut g = FusionLayer::zeros(DIMS);
        let dfeat = layer.backward(&feats, &c, &mut g);
        let analytic: Vec<f64> = g.named_params().iter().flat_map(|(_, t)| t.data().to_vec()).collect();
        for idx in 0..analytic.len() {
            let bump = |d: f64| {
                let mut l = layer.clone();
                let mut k = idx;
                for (_, t) in l.named_params_mut() {
                    if k < t.len() {
                        t.data_mut()[k] += d;
                        break;
                    }
                    k -= t.len();
                }
                loss(&l, &feats)
            };
            let fd = (bump(1e-6) - bump(-1e-6)) / 2e-6;
            assert!((fd - analytic[idx]).abs() < 1e-8);
        }
        let dx = dfeat.text.unwrap();
        for i in 0..4 {
            let mut p = feats.clone();
            p.text.as_mut().unwrap()[i] += 1e-6;
            let mut m = feats.clone();
            m.text.as_mut().unwrap()[i] -= 1e-6;
            let fd = (loss(&layer, &p) - loss(&layer, &m)) / 2e-6;
            assert!((fd - dx[i]).abs() < 1e-8);
        }
    }
}
