use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::attention::pool_rows;
use super::fusion::{FusionDims, FusionLayer, ModalityFeatures};
use super::layers::Linear;
use super::lstm::{BiLstmCache, SequenceEncoderState};
use super::mhsa::{check_heads, MhsaCache, MhsaLayer};
use super::tensor::MatRef;
use super::{join, NeuralError, Parameters, Result};

/// How zero-padded rows of the audio/text matrices are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Padded keys are masked and pooling averages the valid rows only.
    #[default]
    Masked,
    /// Padding rows take part in attention and pooling like real rows.
    Unmasked,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub audio_dim: usize,
    pub text_dim: usize,
    pub max_rows: usize,
    pub heads: usize,
    pub mlp_ratio: usize,
    /// Width of each of the summary and answers vectors.
    pub analysis_dim: usize,
    pub vix_len: usize,
    pub lstm_hidden: usize,
    pub news_dim: usize,
    pub fusion_dim: usize,
    pub padding: Padding,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            audio_dim: 512,
            text_dim: 768,
            max_rows: 520,
            heads: 8,
            mlp_ratio: 4,
            analysis_dim: 1024,
            vix_len: 30,
            lstm_hidden: 64,
            news_dim: 1024,
            fusion_dim: 256,
            padding: Padding::Masked,
        }
    }
}

impl NetworkConfig {
    /// Small dimensions for synthetic data and tests.
    pub fn tiny() -> Self {
        NetworkConfig {
            audio_dim: 8,
            text_dim: 8,
            max_rows: 6,
            heads: 2,
            mlp_ratio: 4,
            analysis_dim: 8,
            vix_len: 30,
            lstm_hidden: 4,
            news_dim: 8,
            fusion_dim: 8,
            padding: Padding::Masked,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_heads(self.audio_dim, self.heads)?;
        check_heads(self.text_dim, self.heads)?;
        let dims = [
            ("max_rows", self.max_rows),
            ("mlp_ratio", self.mlp_ratio),
            ("analysis_dim", self.analysis_dim),
            ("vix_len", self.vix_len),
            ("lstm_hidden", self.lstm_hidden),
            ("news_dim", self.news_dim),
            ("fusion_dim", self.fusion_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(NeuralError::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    fn fusion_dims(&self) -> FusionDims {
        FusionDims {
            audio: self.audio_dim,
            text: self.text_dim,
            analysis: 2 * self.analysis_dim,
            vix: 2 * self.lstm_hidden,
            news: self.news_dim,
            fusion: self.fusion_dim,
        }
    }
}

/// Which modalities feed the fusion layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Modalities {
    #[serde(rename = "use_audio")]
    pub audio: bool,
    #[serde(rename = "use_text")]
    pub text: bool,
    #[serde(rename = "use_analysis")]
    pub analysis: bool,
    #[serde(rename = "use_vix")]
    pub vix: bool,
    #[serde(rename = "use_news")]
    pub news: bool,
}

impl Default for Modalities {
    fn default() -> Self {
        Self::all()
    }
}

impl Modalities {
    pub fn all() -> Self {
        Modalities { audio: true, text: true, analysis: true, vix: true, news: true }
    }

    pub fn audio_text() -> Self {
        Modalities { audio: true, text: true, analysis: false, vix: false, news: false }
    }

    pub fn audio_text_analysis() -> Self {
        Modalities { analysis: true, ..Self::audio_text() }
    }

    pub fn audio_text_analysis_vix() -> Self {
        Modalities { vix: true, ..Self::audio_text_analysis() }
    }

    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        for (on, name) in [
            (self.audio, "Audio"),
            (self.text, "Text"),
            (self.analysis, "Analysis"),
            (self.vix, "VIX"),
            (self.news, "News"),
        ] {
            if on {
                parts.push(name);
            }
        }
        parts.join(" + ")
    }
}

/// A zero-padded `[rows, cols]` embedding matrix whose first `valid` rows
/// are real.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingView<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub valid: usize,
}

impl<'a> EmbeddingView<'a> {
    pub fn new(data: &'a [f64], rows: usize, cols: usize, valid: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(NeuralError::Shape(format!(
                "{rows}x{cols} embedding needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if valid == 0 || valid > rows {
            return Err(NeuralError::Shape(format!("valid rows {valid} outside 1..={rows}")));
        }
        Ok(EmbeddingView { data, rows, cols, valid })
    }
}

/// Raw inputs for one sample. Missing entries act as zero features.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    pub audio: Option<EmbeddingView<'a>>,
    pub text: Option<EmbeddingView<'a>>,
    pub summary: Option<&'a [f64]>,
    pub answers: Option<&'a [f64]>,
    pub vix: Option<&'a [f64]>,
    pub news: Option<&'a [f64]>,
    /// Multiplier on the pooled audio, text and analysis features before
    /// projection (used for time decay of stale calls).
    pub call_scale: f64,
}

impl Default for ModelInput<'_> {
    fn default() -> Self {
        ModelInput {
            audio: None,
            text: None,
            summary: None,
            answers: None,
            vix: None,
            news: None,
            call_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionHeads {
    pub vol: Linear,
    pub var: Linear,
}

impl PredictionHeads {
    pub fn new(rng: &mut ChaCha8Rng, fusion_dim: usize) -> Self {
        PredictionHeads { vol: Linear::new(rng, fusion_dim, 4), var: Linear::new(rng, fusion_dim, 1) }
    }

    pub fn zeros(fusion_dim: usize) -> Self {
        PredictionHeads { vol: Linear::zeros(fusion_dim, 4), var: Linear::zeros(fusion_dim, 1) }
    }
}

impl Parameters for PredictionHeads {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a super::Tensor)) {
        self.vol.visit(&join(prefix, "vol"), f);
        self.var.visit(&join(prefix, "var"), f);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut super::Tensor)) {
        self.vol.visit_mut(&join(prefix, "vol"), f);
        self.var.visit_mut(&join(prefix, "var"), f);
    }
}

/// Log-volatility for the 3/7/15/30-day horizons and the VaR quantile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub log_vol: [f64; 4],
    pub var: f64,
}

struct EncoderCache {
    rows: usize,
    mhsa: MhsaCache,
}

pub struct ForwardCache {
    audio: Option<EncoderCache>,
    text: Option<EncoderCache>,
    vix: Option<BiLstmCache>,
    /// Exactly what the fusion layer received.
    pub features: ModalityFeatures,
    pub fused: Vec<f64>,
}

/// MHSA encoders for audio and text, a BiLSTM for VIX, additive fusion and
/// the two heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionNetwork {
    pub config: NetworkConfig,
    pub audio: MhsaLayer,
    pub text: MhsaLayer,
    pub vix: SequenceEncoderState,
    pub fusion: FusionLayer,
    pub heads: PredictionHeads,
}

impl FusionNetwork {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        Ok(FusionNetwork {
            audio: MhsaLayer::new(&mut rng, c.audio_dim, c.heads, c.mlp_ratio * c.audio_dim)?,
            text: MhsaLayer::new(&mut rng, c.text_dim, c.heads, c.mlp_ratio * c.text_dim)?,
            vix: SequenceEncoderState::new(&mut rng, c.vix_len, c.lstm_hidden),
            fusion: FusionLayer::new(&mut rng, c.fusion_dims()),
            heads: PredictionHeads::new(&mut rng, c.fusion_dim),
            config,
        })
    }

    /// All-zero network with the same shapes, used as a gradient buffer.
    pub fn zeros_like(&self) -> Self {
        let c = &self.config;
        FusionNetwork {
            audio: MhsaLayer::zeros(c.audio_dim, c.heads, c.mlp_ratio * c.audio_dim),
            text: MhsaLayer::zeros(c.text_dim, c.heads, c.mlp_ratio * c.text_dim),
            vix: SequenceEncoderState::zeros(c.vix_len, c.lstm_hidden),
            fusion: FusionLayer::zeros(c.fusion_dims()),
            heads: PredictionHeads::zeros(c.fusion_dim),
            config: c.clone(),
        }
    }

    fn rows_used(&self, v: &EmbeddingView<'_>) -> usize {
        match self.config.padding {
            Padding::Masked => v.valid,
            Padding::Unmasked => v.rows,
        }
    }

    fn encode(&self, layer: &MhsaLayer, v: &EmbeddingView<'_>, what: &str) -> Result<(Vec<f64>, EncoderCache)> {
        if v.cols != layer.d_model() {
            return Err(NeuralError::Shape(format!(
                "{what} embedding has {} columns, expected {}",
                v.cols,
                layer.d_model()
            )));
        }
        if v.rows > self.config.max_rows {
            return Err(NeuralError::Shape(format!(
                "{what} embedding has {} rows, limit is {}",
                v.rows, self.config.max_rows
            )));
        }
        let rows = self.rows_used(v);
        let (out, mhsa) = layer.forward(MatRef::new(v.data, rows, v.cols), rows)?;
        Ok((pool_rows(&out, v.cols, rows), EncoderCache { rows, mhsa }))
    }

    fn vector<'a>(&self, x: Option<&'a [f64]>, dim: usize, what: &str) -> Result<Option<&'a [f64]>> {
        match x {
            Some(v) if v.len() != dim => Err(NeuralError::Shape(format!(
                "{what} vector has {} values, expected {dim}",
                v.len()
            ))),
            other => Ok(other),
        }
    }

    pub fn forward(&self, input: &ModelInput<'_>, mods: Modalities) -> Result<(Prediction, ForwardCache)> {
        let c = &self.config;
        let s = input.call_scale;
        let scaled = |mut v: Vec<f64>| {
            if s != 1.0 {
                v.iter_mut().for_each(|x| *x *= s);
            }
            v
        };
        let mut feats = ModalityFeatures::default();
        let mut audio_cache = None;
        let mut text_cache = None;
        let mut vix_cache = None;
        if let (true, Some(v)) = (mods.audio, input.audio.as_ref()) {
            let (p, cache) = self.encode(&self.audio, v, "audio")?;
            feats.audio = Some(scaled(p));
            audio_cache = Some(cache);
        }
        if let (true, Some(v)) = (mods.text, input.text.as_ref()) {
            let (p, cache) = self.encode(&self.text, v, "text")?;
            feats.text = Some(scaled(p));
            text_cache = Some(cache);
        }
        if mods.analysis {
            let summary = self.vector(input.summary, c.analysis_dim, "summary")?;
            let answers = self.vector(input.answers, c.analysis_dim, "answers")?;
            if summary.is_some() || answers.is_some() {
                let mut a = vec![0.0; 2 * c.analysis_dim];
                if let Some(x) = summary {
                    a[..c.analysis_dim].copy_from_slice(x);
                }
                if let Some(x) = answers {
                    a[c.analysis_dim..].copy_from_slice(x);
                }
                feats.analysis = Some(scaled(a));
            }
        }
        if let (true, Some(series)) = (mods.vix, input.vix) {
            let (h, cache) = self.vix.forward(series)?;
            feats.vix = Some(h);
            vix_cache = Some(cache);
        }
        if mods.news {
            feats.news = self.vector(input.news, c.news_dim, "news")?.map(<[f64]>::to_vec);
        }
        let fused = self.fusion.fuse(&feats)?;
        let fm = MatRef::new(&fused, 1, fused.len());
        let vol = self.heads.vol.forward(fm);
        let var = self.heads.var.forward(fm)[0];
        let pred = Prediction { log_vol: [vol[0], vol[1], vol[2], vol[3]], var };
        if !pred.var.is_finite() || pred.log_vol.iter().any(|v| !v.is_finite()) {
            return Err(NeuralError::NumericalFailure("non-finite prediction".into()));
        }
        Ok((
            pred,
            ForwardCache { audio: audio_cache, text: text_cache, vix: vix_cache, features: feats, fused },
        ))
    }

    pub fn predict(&self, input: &ModelInput<'_>, mods: Modalities) -> Result<Prediction> {
        self.forward(input, mods).map(|(p, _)| p)
    }

    /// Accumulates into `grad` the parameter gradients of a scalar loss
    /// whose derivatives with respect to the predictions are `d_vol`/`d_var`.
    pub fn backward(
        &self,
        input: &ModelInput<'_>,
        cache: &ForwardCache,
        d_vol: &[f64; 4],
        d_var: f64,
        grad: &mut FusionNetwork,
    ) -> Result<()> {
        let f = cache.fused.len();
        let fm = MatRef::new(&cache.fused, 1, f);
        let mut d_fused = self.heads.vol.backward(fm, d_vol, &mut grad.heads.vol, true).expect("dx requested");
        let dv = self.heads.var.backward(fm, &[d_var], &mut grad.heads.var, true).expect("dx requested");
        super::add_into(&mut d_fused, &dv);
        let d_feats = self.fusion.backward(&cache.features, &d_fused, &mut grad.fusion);
        let s = input.call_scale;
        for (enc_cache, d_feat, view, layer, g) in [
            (&cache.audio, &d_feats.audio, &input.audio, &self.audio, &mut grad.audio),
            (&cache.text, &d_feats.text, &input.text, &self.text, &mut grad.text),
        ] {
            if let (Some(ec), Some(d), Some(v)) = (enc_cache, d_feat, view) {
                let inv = s / ec.rows as f64;
                let row: Vec<f64> = d.iter().map(|x| x * inv).collect();
                let dout: Vec<f64> = (0..ec.rows).flat_map(|_| row.iter().copied()).collect();
                layer.backward(MatRef::new(v.data, ec.rows, v.cols), &ec.mhsa, &dout, g);
            }
        }
        if let (Some(vc), Some(d)) = (&cache.vix, &d_feats.vix) {
            self.vix.backward(vc, d, &mut grad.vix);
        }
        if !grad.all_finite() {
            return Err(NeuralError::NumericalFailure("non-finite gradient".into()));
        }
        Ok(())
    }
}

impl Parameters for FusionNetwork {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a super::Tensor)) {
        self.audio.visit(&join(prefix, "audio"), f);
        self.text.visit(&join(prefix, "text"), f);
        self.vix.visit(&join(prefix, "vix"), f);
        self.fusion.visit(&join(prefix, "fusion"), f);
        self.heads.visit(&join(prefix, "heads"), f);
    }
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut super::Tensor)) {
        self.audio.visit_mut(&join(prefix, "audio"), f);
        self.text.visit_mut(&join(prefix, "text"), f);
        self.vix.visit_mut(&join(prefix, "vix"), f);
        self.fusion.visit_mut(&join(prefix, "fusion"), f);
        self.heads.visit_mut(&join(prefix, "heads"), f);
    }
}
