use std::time::{Duration, Instant};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::history::BacktestData;
use super::predictors::{BayesVarPredictor, HistoricalPredictor, NeuralPredictor, Predictor};
use super::{BacktestConfig, BacktestError, PredictorKind, Result};
use crate::bayes_var::panel::forward;
use crate::bayes_var::{describe, AepStats};
use crate::market::{aep, exceedance_rate, Horizon, MarketError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub date: NaiveDate,
    pub predicted: [f64; 4],
    /// Forward log-vols from the day before `date`; `None` near the end of
    /// the data or for a zero-variance window.
    pub realized: Option<[f64; 4]>,
    pub var_pred: f64,
    pub realized_return: f64,
    pub call_weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedDay {
    pub date: NaiveDate,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestReport {
    pub predictor: String,
    pub config: BacktestConfig,
    pub records: Vec<DayRecord>,
    /// Signed AEP of the log-vol forecasts, one row per horizon.
    pub aep_stats: Vec<AepStats>,
    pub exceedance: f64,
    pub skipped: Vec<SkippedDay>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl BacktestReport {
    pub fn breaches(&self) -> usize {
        self.records.iter().filter(|r| r.realized_return < r.var_pred).count()
    }
}

/// Backtest with the predictor named in `cfg`.
pub fn rolling_backtest(data: &BacktestData, cfg: &BacktestConfig) -> Result<BacktestReport> {
    cfg.validate()?;
    match cfg.predictor {
        PredictorKind::Historical => run_backtest(data, cfg, &mut HistoricalPredictor::new(cfg.q)?),
        PredictorKind::BayesVar => {
            let mcmc = crate::bayes_var::McmcConfig { seed: cfg.seed, ..cfg.mcmc.clone() };
            run_backtest(data, cfg, &mut BayesVarPredictor::new(cfg.var_spec.clone(), mcmc, cfg.q)?)
        }
        PredictorKind::Neural => {
            if data.calls().is_empty() {
                return Err(BacktestError::InsufficientData("neural predictor needs earnings-call features".into()));
            }
            for call in data.calls() {
                call.input(&cfg.neural.train.network)?;
            }
            run_backtest(data, cfg, &mut NeuralPredictor::from_config(cfg)?)
        }
    }
}

/// Day `i` forecasts return index `window + i` from the returns before it.
/// A predictor error skips that day.
pub fn run_backtest(data: &BacktestData, cfg: &BacktestConfig, predictor: &mut dyn Predictor) -> Result<BacktestReport> {
    cfg.validate()?;
    let clock = Instant::now();
    let r = data.returns.values();
    let need = cfg.window + cfg.iterations;
    if r.len() < need {
        return Err(BacktestError::InsufficientData(format!(
            "window {} with {} iterations needs {need} returns, got {}",
            cfg.window,
            cfg.iterations,
            r.len()
        )));
    }
    let mut records = Vec::with_capacity(cfg.iterations);
    let mut skipped = Vec::new();
    for i in 0..cfg.iterations {
        let target = cfg.window + i;
        let date = data.returns.dates()[target];
        let history = data.history(target, cfg.window);
        let forecast = predictor.predict(i, &history).and_then(|f| {
            if f.log_vol.iter().chain([&f.var]).all(|v| v.is_finite()) {
                Ok(f)
            } else {
                Err(BacktestError::Market(MarketError::InvalidInput("non-finite forecast".into())))
            }
        });
        let f = match forecast {
            Ok(f) => f,
            Err(e) => {
                skipped.push(SkippedDay { date, reason: e.to_string() });
                continue;
            }
        };
        let realized = match forward(r, target - 1) {
            Ok(v) => Some(v),
            Err(MarketError::DegenerateVolatility { .. } | MarketError::InsufficientData(_)) => None,
            Err(e) => return Err(e.into()),
        };
        records.push(DayRecord {
            date,
            predicted: f.log_vol,
            realized,
            var_pred: f.var,
            realized_return: r[target],
            call_weight: f.call_weight,
        });
    }
    finish(predictor.name(), cfg, records, skipped, clock.elapsed())
}

fn finish(
    name: &str,
    cfg: &BacktestConfig,
    records: Vec<DayRecord>,
    skipped: Vec<SkippedDay>,
    elapsed: Duration,
) -> Result<BacktestReport> {
    let mut aep_stats = Vec::with_capacity(4);
    for (k, h) in Horizon::ALL.iter().enumerate() {
        let errs = records
            .iter()
            .filter_map(|rec| rec.realized.map(|real| aep(rec.predicted[k], real[k]).map(|a| a.signed)))
            .collect::<std::result::Result<Vec<f64>, _>>()?;
        aep_stats.push(describe(&h.label(), &errs));
    }
    let exceedance = if records.is_empty() {
        f64::NAN
    } else {
        let ret: Vec<f64> = records.iter().map(|r| r.realized_return).collect();
        let var: Vec<f64> = records.iter().map(|r| r.var_pred).collect();
        exceedance_rate(&ret, &var)?
    };
    Ok(BacktestReport {
        predictor: name.to_string(),
        config: cfg.clone(),
        records,
        aep_stats,
        exceedance,
        skipped,
        elapsed,
    })
}
