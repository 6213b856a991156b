use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, Sample};
use super::metrics::{evaluate, EpochMetrics, EvalMetrics};
use super::{Result, TrainingError};
use crate::market::QuantileLevel;
use crate::neural::{
    multitask_loss, multitask_loss_grad, Adam, AdamConfig, FusionNetwork, ModelInput, Modalities, NetworkConfig,
    NeuralError, Parameters,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    /// Weight of the volatility term; `1 - mu` weighs the VaR term.
    pub mu: f64,
    pub q: f64,
    pub epochs: usize,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
    pub seed: u64,
    #[serde(flatten)]
    pub modalities: Modalities,
    pub network: NetworkConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            lr: 1e-3,
            mu: 0.5,
            q: 0.05,
            epochs: 300,
            patience: Some(30),
            seed: 0,
            modalities: Modalities::all(),
            network: NetworkConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainingError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr {} must be positive", self.lr));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return bad(format!("mu {} outside [0, 1]", self.mu));
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        QuantileLevel::new(self.q)?;
        self.network.validate()?;
        Ok(())
    }

    pub fn quantile(&self) -> QuantileLevel {
        QuantileLevel::new(self.q).expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StopReason {
    Completed,
    EarlyStopped { epoch: usize },
    NumericalFailure { epoch: usize, message: String },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation mean MSE (or, after
    /// a numerical failure, the last epoch that finished cleanly).
    pub network: FusionNetwork,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
    pub stop: StopReason,
}

/// Adds `scale` times the multi-task loss gradient of one sample to `grad`
/// and returns the unscaled loss.
/// A borrowed training target: model input, volatility labels and the
/// next-day return for the VaR head.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub input: ModelInput<'a>,
    pub vol_labels: [f64; 4],
    pub next_return: f64,
}

impl Sample {
    pub fn example(&self, c: &NetworkConfig) -> Result<Example<'_>> {
        Ok(Example { input: self.input(c)?, vol_labels: self.vol_labels, next_return: self.next_return })
    }
}

pub fn accumulate_gradient(
    net: &FusionNetwork,
    ex: &Example<'_>,
    cfg: &TrainConfig,
    scale: f64,
    grad: &mut FusionNetwork,
) -> Result<f64> {
    let (pred, cache) = net.forward(&ex.input, cfg.modalities)?;
    let q = cfg.quantile();
    let loss = multitask_loss(&pred.log_vol, &ex.vol_labels, pred.var, ex.next_return, cfg.mu, q);
    let (mut d_vol, mut d_var) = multitask_loss_grad(&pred.log_vol, &ex.vol_labels, pred.var, ex.next_return, cfg.mu, q);
    d_vol.iter_mut().for_each(|d| *d *= scale);
    d_var *= scale;
    net.backward(&ex.input, &cache, &d_vol, d_var, grad)?;
    Ok(loss)
}

pub fn mean_loss(net: &FusionNetwork, samples: &[Sample], cfg: &TrainConfig) -> Result<f64> {
    let q = cfg.quantile();
    let mut total = 0.0;
    for s in samples {
        let p = net.predict(&s.input(&net.config)?, cfg.modalities)?;
        total += multitask_loss(&p.log_vol, &s.vol_labels, p.var, s.next_return, cfg.mu, q);
    }
    Ok(total / samples.len() as f64)
}

/// Network, optimizer state and shuffling generator of one training run.
/// Kept alive between calls to continue training from where it stopped.
pub struct Session {
    pub network: FusionNetwork,
    grad: FusionNetwork,
    adam: Adam,
    rng: ChaCha8Rng,
}

impl Session {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let network = FusionNetwork::new(cfg.network.clone(), cfg.seed)?;
        let grad = network.zeros_like();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        Ok(Session { network, grad, adam: Adam::new(AdamConfig::with_lr(cfg.lr)), rng })
    }

    /// One shuffled pass of minibatch Adam over `samples`.
    pub fn run_epoch(&mut self, samples: &[Sample], cfg: &TrainConfig) -> Result<()> {
        let examples = samples.iter().map(|s| s.example(&cfg.network)).collect::<Result<Vec<_>>>()?;
        self.run_epoch_examples(&examples, cfg)
    }

    pub fn run_epoch_examples(&mut self, samples: &[Example<'_>], cfg: &TrainConfig) -> Result<()> {
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut self.rng);
        for batch in order.chunks(cfg.batch_size) {
            self.grad.zero_();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                accumulate_gradient(&self.network, &samples[i], cfg, scale, &mut self.grad)?;
            }
            self.adam.step(&mut self.network, &self.grad)?;
            if !self.network.all_finite() {
                return Err(NeuralError::NumericalFailure("non-finite parameters after update".into()).into());
            }
        }
        Ok(())
    }
}

fn split_metrics(net: &FusionNetwork, s: &[Sample], cfg: &TrainConfig) -> Result<Option<EvalMetrics>> {
    if s.is_empty() {
        return Ok(None);
    }
    evaluate(net, s, cfg.modalities, cfg.quantile()).map(Some)
}

/// Minibatch Adam on the multi-task loss. Training samples are reshuffled
/// every epoch from a generator seeded by `cfg.seed`.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.train.is_empty() {
        return Err(TrainingError::EmptyDataset("no training samples".into()));
    }
    let mut session = Session::new(cfg)?;
    let mut metrics: Vec<EpochMetrics> = Vec::new();
    let mut best = (f64::INFINITY, session.network.clone(), 0usize);
    let mut last_good = session.network.clone();
    let mut stop = StopReason::Completed;

    for epoch in 1..=cfg.epochs {
        let step = session.run_epoch(&data.train, cfg).and_then(|_| {
            let net = &session.network;
            let train_loss = mean_loss(net, &data.train, cfg)?;
            let train = evaluate(net, &data.train, cfg.modalities, cfg.quantile())?;
            let validation = split_metrics(net, &data.validation, cfg)?;
            let test = split_metrics(net, &data.test, cfg)?;
            Ok(EpochMetrics { epoch, train_loss, train, validation, test })
        });
        let m = match step {
            Ok(m) => m,
            Err(TrainingError::Neural(NeuralError::NumericalFailure(message))) => {
                stop = StopReason::NumericalFailure { epoch, message };
                best.1 = last_good;
                best.2 = epoch - 1;
                break;
            }
            Err(e) => return Err(e),
        };
        let score = m.validation.as_ref().map_or(m.train.mean_mse, |v| v.mean_mse);
        metrics.push(m);
        last_good = session.network.clone();
        if score < best.0 {
            best = (score, session.network.clone(), epoch);
        } else if cfg.patience.is_some_and(|p| epoch - best.2 >= p) {
            stop = StopReason::EarlyStopped { epoch };
            break;
        }
    }
    Ok(TrainOutcome { network: best.1, best_epoch: best.2, metrics, stop })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::dataset::tests::blank;
    use chrono::NaiveDate;
    use rand::Rng;

    fn dataset(n: usize, seed: u64) -> (Dataset, NetworkConfig) {
        let c = NetworkConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d0 = NaiveDate::from_ymd_opt(2018, 1, 1).unwrap();
        let samples = (0..n)
            .map(|i| {
                let mut s = blank(&c, d0 + chrono::Days::new(7 * i as u64));
                s.summary.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                s.answers.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                s.vix.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
                for k in 0..4 {
                    s.vol_labels[k] = 0.3 * s.summary[k] - 0.2 * s.answers[k + 1];
                }
                s.next_return = rng.random_range(-0.03..0.03);
                s
            })
            .collect();
        let split = d0 + chrono::Days::new(7 * (n as u64 * 4 / 5));
        (Dataset::from_samples(samples, split).unwrap(), c)
    }

    fn cfg(c: NetworkConfig) -> TrainConfig {
        TrainConfig { epochs: 5, batch_size: 4, network: c, patience: None, seed: 3, ..Default::default() }
    }

    #[test]
    fn same_seed_same_trace() {
        let (ds, c) = dataset(20, 1);
        let a = train(&ds, &cfg(c.clone())).unwrap();
        let b = train(&ds, &cfg(c)).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(a.network, b.network);
    }

    #[test]
    fn mu_one_leaves_var_head_untouched() {
        let (ds, c) = dataset(8, 2);
        let cf = TrainConfig { mu: 1.0, ..cfg(c) };
        let net = FusionNetwork::new(cf.network.clone(), 9).unwrap();
        let mut g = net.zeros_like();
        for s in &ds.train {
            accumulate_gradient(&net, &s.example(&cf.network).unwrap(), &cf, 1.0, &mut g).unwrap();
        }
        assert!(g.heads.var.weight.data().iter().all(|&v| v == 0.0));
        assert!(g.heads.var.bias.data().iter().all(|&v| v == 0.0));
        assert!(g.heads.vol.weight.data().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn loss_decreases_on_a_learnable_target() {
        let (ds, c) = dataset(40, 4);
        let out = train(&ds, &TrainConfig { epochs: 30, mu: 0.9, ..cfg(c) }).unwrap();
        let first = out.metrics.first().unwrap().train_loss;
        let last = out.metrics.last().unwrap().train_loss;
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn early_stop_and_bad_config() {
        let (ds, c) = dataset(20, 5);
        let out = train(&ds, &TrainConfig { epochs: 200, lr: 1e-7, patience: Some(3), ..cfg(c.clone()) }).unwrap();
        assert!(matches!(out.stop, StopReason::EarlyStopped { .. }) || out.metrics.len() == 200);
        assert!(train(&ds, &TrainConfig { mu: 1.5, ..cfg(c.clone()) }).is_err());
        assert!(train(&ds, &TrainConfig { batch_size: 0, ..cfg(c) }).is_err());
    }

    #[test]
    fn numerical_failure_returns_last_good_network() {
        let (ds, c) = dataset(20, 6);
        let out = train(&ds, &TrainConfig { lr: 1e300, ..cfg(c.clone()) }).unwrap();
        match out.stop {
            StopReason::NumericalFailure { epoch, .. } => assert_eq!(out.best_epoch, epoch - 1),
            s => panic!("unexpected {s:?}"),
        }
        assert!(out.network.all_finite());
        assert_eq!(out.network, FusionNetwork::new(c, 3).unwrap());
    }

    #[test]
    fn config_json_uses_flag_names() {
        let j = serde_json::to_value(TrainConfig::default()).unwrap();
        for k in ["use_audio", "use_text", "use_analysis", "use_vix", "use_news", "batch_size", "lr", "mu"] {
            assert!(j.get(k).is_some(), "{k}");
        }
        let back: TrainConfig = serde_json::from_value(j).unwrap();
        assert_eq!(back, TrainConfig::default());
    }
}
