//! From-scratch differentiable building blocks in f64: multi-head
//! self-attention, average pooling, a bidirectional LSTM encoder, additive
//! multimodal fusion, the two prediction heads, the multi-task loss, explicit
//! reverse-mode gradients and Adam.
//!
//! There is no general autodiff graph. Each layer exposes `forward`, which
//! returns an output and a cache, and `backward`, which consumes the cache
//! and accumulates parameter gradients into a zero-initialized copy of the
//! layer (a layer's gradient has the same type as the layer).

pub mod adam;
pub mod attention;
pub mod checkpoint;
pub mod fusion;
pub mod layers;
pub mod loss;
pub mod lstm;
pub mod mhsa;
pub mod network;
pub mod tensor;

pub use adam::{Adam, AdamConfig};
pub use attention::{attention, average_pool};
pub use fusion::{FusionLayer, ModalityFeatures};
pub use loss::{multitask_loss, multitask_loss_grad};
pub use lstm::{LstmCell, SequenceEncoderState};
pub use mhsa::MhsaLayer;
pub use network::{
    EmbeddingView, ForwardCache, FusionNetwork, ModelInput, Modalities, NetworkConfig, Padding,
    Prediction, PredictionHeads,
};
pub use tensor::Tensor;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

/// Named access to every learnable tensor, in a fixed order.
pub trait Parameters {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Tensor));
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Tensor));

    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, t| out.push((name, t)));
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut |name, t| out.push((name, t)));
        out
    }

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.len()).sum()
    }

    fn zero_(&mut self) {
        for (_, t) in self.named_params_mut() {
            t.fill(0.0);
        }
    }

    fn all_finite(&self) -> bool {
        self.named_params().iter().all(|(_, t)| t.is_finite())
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Glorot-uniform initialized `[fan_in, fan_out]` matrix.
pub(crate) fn xavier(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, &[fan_in, fan_out], bound)
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::from_vec(shape, data).expect("shape product matches")
}

pub(crate) fn ensure_finite(what: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NeuralError::NumericalFailure(format!("non-finite {what}")))
    }
}

pub(crate) fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
