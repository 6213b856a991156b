use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::history::History;
use super::{time_decay_weight, BacktestConfig, BacktestError, Result};
use crate::bayes_var::panel::{forward, rows_within};
use crate::bayes_var::{latest_backward, posterior_predict, sample_posterior, McmcConfig, VarModelSpec};
use crate::market::{historical_var, QuantileLevel};
use crate::neural::ModelInput;
use crate::training::{Example, Session, TrainConfig};

/// One day's forecast: forward log-vols for each horizon and the VaR of the
/// next return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DayForecast {
    pub log_vol: [f64; 4],
    pub var: f64,
    /// Decay weight applied to the latest call's features, if one was used.
    pub call_weight: Option<f64>,
}

pub trait Predictor {
    fn name(&self) -> &'static str;
    /// `day` is the zero-based iteration; `history` ends the day before the
    /// target.
    fn predict(&mut self, day: usize, history: &History<'_>) -> Result<DayForecast>;
}

/// Persistence forecast for volatility (today's trailing log-vols) and the
/// empirical quantile of the window for VaR.
#[derive(Debug, Clone)]
pub struct HistoricalPredictor {
    q: QuantileLevel,
}

impl HistoricalPredictor {
    pub fn new(q: f64) -> Result<Self> {
        Ok(HistoricalPredictor { q: QuantileLevel::new(q)? })
    }
}

impl Predictor for HistoricalPredictor {
    fn name(&self) -> &'static str {
        "historical"
    }

    fn predict(&mut self, _day: usize, h: &History<'_>) -> Result<DayForecast> {
        let log_vol = latest_backward(h.returns(), h.len() - 1)?;
        let var = historical_var(h.window_returns(), self.q)?;
        Ok(DayForecast { log_vol, var, call_weight: None })
    }
}

/// Refits the Bayesian VAR on the trailing window every day. VaR is the
/// Gaussian quantile around the window mean with the predicted 3-day
/// volatility as the daily scale.
#[derive(Debug, Clone)]
pub struct BayesVarPredictor {
    spec: VarModelSpec,
    mcmc: McmcConfig,
    z: f64,
}

impl BayesVarPredictor {
    pub fn new(spec: VarModelSpec, mcmc: McmcConfig, q: f64) -> Result<Self> {
        spec.validate()?;
        mcmc.validate()?;
        let q = QuantileLevel::new(q)?;
        let z = Normal::standard().inverse_cdf(q.value());
        Ok(BayesVarPredictor { spec, mcmc, z })
    }
}

impl Predictor for BayesVarPredictor {
    fn name(&self) -> &'static str {
        "bayes-var"
    }

    fn predict(&mut self, day: usize, h: &History<'_>) -> Result<DayForecast> {
        let panel = rows_within(h.returns(), h.dates(), h.window_start(), h.len())?;
        let cfg = McmcConfig { seed: self.mcmc.seed.wrapping_add(day as u64), ..self.mcmc.clone() };
        let post = sample_posterior(&panel, &self.spec, &cfg)?;
        let latest = latest_backward(h.returns(), h.len() - 1)?;
        let f = posterior_predict(&post, latest, cfg.seed)?;
        let log_vol = std::array::from_fn(|k| f[k].log_mean);
        let w = h.window_returns();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        Ok(DayForecast { log_vol, var: mean + self.z * log_vol[0].exp(), call_weight: None })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NeuralBacktestConfig {
    /// Epochs on the first day with training data.
    pub initial_epochs: usize,
    /// Warm-start epochs on each later day.
    pub epochs_per_day: usize,
    pub train: TrainConfig,
}

impl Default for NeuralBacktestConfig {
    fn default() -> Self {
        NeuralBacktestConfig { initial_epochs: 30, epochs_per_day: 2, train: TrainConfig::default() }
    }
}

/// Fusion network fine-tuned day by day. Training samples are the calls in
/// the trailing window whose 30-day forward labels are already realized;
/// labels are recomputed from the visible returns. The forecast uses the
/// latest call, its features scaled by the decay weight.
pub struct NeuralPredictor {
    cfg: NeuralBacktestConfig,
    lambda: f64,
    session: Option<Session>,
}

impl NeuralPredictor {
    pub fn new(cfg: NeuralBacktestConfig, lambda: f64, seed: u64) -> Result<Self> {
        let mut cfg = cfg;
        cfg.train.seed = seed;
        cfg.train.validate()?;
        time_decay_weight(0.0, lambda)?;
        Ok(NeuralPredictor { cfg, lambda, session: None })
    }

    pub fn from_config(cfg: &BacktestConfig) -> Result<Self> {
        let mut n = cfg.neural.clone();
        n.train.q = cfg.q;
        Self::new(n, cfg.lambda, cfg.seed)
    }

    pub fn session(&self) -> Option<&Session> {
        self.session.as_ref()
    }

    /// One example per window day whose 30-day forward window is visible:
    /// the latest call dated on or before that day, decayed to it exactly as
    /// at prediction time, with the VIX window ending that day.
    fn fit(&mut self, h: &History<'_>) -> Result<()> {
        let tc = &self.cfg.train;
        let (r, dates, calls) = (h.returns(), h.dates(), h.calls());
        let mut days = Vec::new();
        for j in h.window_start()..r.len() {
            let Ok(labels) = forward(r, j) else { continue };
            let Some(k) = calls.partition_point(|c| c.date <= dates[j]).checked_sub(1) else { continue };
            let t = (dates[j] - calls[k].date).num_days() as f64;
            let vix = h.vix_window(dates[j], tc.network.vix_len);
            days.push((j, k, time_decay_weight(t, self.lambda)?, labels, vix));
        }
        if days.is_empty() {
            return Ok(());
        }
        let examples = days
            .iter()
            .map(|(j, k, w, labels, vix)| {
                let base = calls[*k].input(&tc.network)?;
                Ok(Example {
                    input: ModelInput { vix: (!vix.is_empty()).then_some(&vix[..]), call_scale: *w, ..base },
                    vol_labels: *labels,
                    next_return: r[j + 1],
                })
            })
            .collect::<std::result::Result<Vec<_>, crate::training::TrainingError>>()?;
        let epochs = match self.session {
            None => self.cfg.initial_epochs,
            Some(_) => self.cfg.epochs_per_day,
        };
        let session = match self.session.as_mut() {
            Some(s) => s,
            None => {
                let mut s = Session::new(tc)?;
                init_head_biases(&mut s, &examples, tc.q)?;
                self.session.insert(s)
            }
        };
        for _ in 0..epochs {
            if let Err(e) = session.run_epoch_examples(&examples, tc) {
                self.session = None;
                return Err(e.into());
            }
        }
        Ok(())
    }
}

/// Starts both heads as constant predictors: zero weights, bias at the label
/// mean (volatility) and at the empirical quantile of next-day returns (VaR).
fn init_head_biases(session: &mut Session, examples: &[Example<'_>], q: f64) -> Result<()> {
    let n = examples.len() as f64;
    let heads = &mut session.network.heads;
    heads.vol.weight.fill(0.0);
    heads.var.weight.fill(0.0);
    for k in 0..4 {
        heads.vol.bias.data_mut()[k] = examples.iter().map(|s| s.vol_labels[k]).sum::<f64>() / n;
    }
    let returns: Vec<f64> = examples.iter().map(|s| s.next_return).collect();
    heads.var.bias.data_mut()[0] = historical_var(&returns, QuantileLevel::new(q)?)?;
    Ok(())
}

impl Predictor for NeuralPredictor {
    fn name(&self) -> &'static str {
        "neural"
    }

    fn predict(&mut self, _day: usize, h: &History<'_>) -> Result<DayForecast> {
        self.fit(h)?;
        let tc = &self.cfg.train;
        if self.session.is_none() {
            self.session = Some(Session::new(tc)?);
        }
        let net = &self.session.as_ref().expect("session initialized").network;
        let last = h.last_date().ok_or_else(|| BacktestError::InsufficientData("empty history".into()))?;
        let vix = h.vix_window(last, tc.network.vix_len);
        let vix = (!vix.is_empty()).then_some(&vix[..]);
        let (input, weight) = match h.latest_call() {
            Some(call) => {
                let t = (last - call.date).num_days().max(0) as f64;
                let w = time_decay_weight(t, self.lambda)?;
                let input = ModelInput { vix, call_scale: w, ..call.input(&tc.network)? };
                (input, Some(w))
            }
            None => (ModelInput { vix, ..ModelInput::default() }, None),
        };
        let p = net.predict(&input, tc.modalities).map_err(crate::training::TrainingError::from)?;
        Ok(DayForecast { log_vol: p.log_vol, var: p.var, call_weight: weight })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backtest::{rolling_backtest, BacktestData, PredictorKind};
    use crate::fixtures::{generate_market, MarketSpec};
    use crate::market::ReturnSeries;

    fn market(seed: u64) -> (BacktestData, MarketSpec) {
        let spec = MarketSpec { days: 200, seed, call_every: 10, ..Default::default() };
        let m = generate_market(&spec);
        let data = BacktestData::new(m.returns()).with_calls(m.calls.samples()).with_vix(m.vix.clone()).unwrap();
        (data, spec)
    }

    fn cfg(kind: PredictorKind) -> BacktestConfig {
        BacktestConfig {
            window: 100,
            iterations: 40,
            predictor: kind,
            mcmc: McmcConfig { n_warmup: 100, n_draws: 100, ..Default::default() },
            neural: NeuralBacktestConfig {
                initial_epochs: 3,
                epochs_per_day: 1,
                train: TrainConfig { network: crate::neural::NetworkConfig::tiny(), ..Default::default() },
            },
            ..Default::default()
        }
    }

    fn with_jump(data: &BacktestData, at: usize) -> BacktestData {
        let mut r = data.returns.values().to_vec();
        r[at] = -0.45;
        let returns = ReturnSeries::new(data.returns.dates().to_vec(), r).unwrap();
        BacktestData::new(returns).with_calls(data.calls().to_vec()).with_vix(data.vix().to_vec()).unwrap()
    }

    #[test]
    fn planted_jump_only_affects_later_targets() {
        let (data, _) = market(1);
        let jump = 120;
        let shocked = with_jump(&data, jump);
        for kind in [PredictorKind::Historical, PredictorKind::BayesVar, PredictorKind::Neural] {
            let a = rolling_backtest(&data, &cfg(kind)).unwrap();
            let b = rolling_backtest(&shocked, &cfg(kind)).unwrap();
            assert_eq!(a.records.len(), 40, "{kind:?}");
            let jump_date = data.returns.dates()[jump];
            let mut changed_after = 0;
            for (x, y) in a.records.iter().zip(&b.records) {
                if x.date <= jump_date {
                    assert_eq!((x.predicted, x.var_pred), (y.predicted, y.var_pred), "{kind:?} {}", x.date);
                } else if x.predicted != y.predicted || x.var_pred != y.var_pred {
                    changed_after += 1;
                }
            }
            assert!(changed_after > 0, "{kind:?} ignored the jump entirely");
        }
    }

    #[test]
    fn neural_uses_decayed_latest_call() {
        let (data, _) = market(2);
        let rep = rolling_backtest(&data, &cfg(PredictorKind::Neural)).unwrap();
        assert!(rep.skipped.is_empty(), "{:?}", rep.skipped.first());
        for rec in &rep.records {
            let call = data.calls().iter().filter(|c| c.date < rec.date).last().unwrap();
            let idx = data.returns.dates().iter().position(|d| *d == rec.date).unwrap();
            let last = data.returns.dates()[idx - 1];
            let t = (last - call.date).num_days() as f64;
            assert_eq!(rec.call_weight, Some((-0.05 * t).exp()));
        }
        assert!(rep.records.iter().any(|r| r.call_weight == Some(1.0)));
    }

    #[test]
    fn neural_requires_matching_calls() {
        let (data, _) = market(3);
        let bare = BacktestData::new(data.returns.clone());
        assert!(rolling_backtest(&bare, &cfg(PredictorKind::Neural)).is_err());
        let mut c = cfg(PredictorKind::Neural);
        c.neural.train.network = crate::neural::NetworkConfig::default();
        assert!(rolling_backtest(&data, &c).is_err());
    }

    #[test]
    fn bayes_var_predictor_is_seeded() {
        let (data, _) = market(4);
        let c = BacktestConfig { iterations: 5, ..cfg(PredictorKind::BayesVar) };
        let a = rolling_backtest(&data, &c).unwrap();
        assert_eq!(a.records, rolling_backtest(&data, &c).unwrap().records);
        let b = rolling_backtest(&data, &BacktestConfig { seed: 9, ..c }).unwrap();
        assert_ne!(a.records[0].predicted, b.records[0].predicted);
    }
}
