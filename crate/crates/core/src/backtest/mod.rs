//! Walk-forward backtesting: a causal history view, three interchangeable
//! predictors (historical quantile, Bayesian VAR, fusion network), per-day
//! records, exceedance accounting and report emission.

pub mod engine;
pub mod history;
pub mod predictors;
pub mod report;

pub use engine::{rolling_backtest, run_backtest, BacktestReport, DayRecord, SkippedDay};
pub use history::{BacktestData, History};
pub use predictors::{
    BayesVarPredictor, DayForecast, HistoricalPredictor, NeuralBacktestConfig, NeuralPredictor, Predictor,
};
pub use report::{emit_report, read_predictions};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes_var::{BayesVarError, McmcConfig, VarModelSpec};
use crate::market::MarketError;
use crate::training::TrainingError;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed report: {0}")]
    Format(String),
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error(transparent)]
    BayesVar(#[from] BayesVarError),
    #[error(transparent)]
    Training(#[from] TrainingError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BacktestError>;

pub const DEFAULT_DECAY: f64 = 0.05;

/// Weight `exp(-lambda * t)` of a call observed `t` days ago.
pub fn time_decay_weight(t: f64, lambda: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(BacktestError::Config(format!("days since call must be non-negative, got {t}")));
    }
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(BacktestError::Config(format!("decay rate must be non-negative, got {lambda}")));
    }
    Ok((-lambda * t).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorKind {
    #[default]
    Historical,
    BayesVar,
    Neural,
}

impl PredictorKind {
    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::Historical => "historical",
            PredictorKind::BayesVar => "bayes-var",
            PredictorKind::Neural => "neural",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BacktestConfig {
    pub window: usize,
    pub iterations: usize,
    /// Decay rate per calendar day.
    pub lambda: f64,
    pub predictor: PredictorKind,
    pub seed: u64,
    /// VaR quantile level.
    pub q: f64,
    pub var_spec: VarModelSpec,
    pub mcmc: McmcConfig,
    pub neural: NeuralBacktestConfig,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            window: 250,
            iterations: 100,
            lambda: DEFAULT_DECAY,
            predictor: PredictorKind::Historical,
            seed: 0,
            q: 0.05,
            var_spec: VarModelSpec::default(),
            mcmc: McmcConfig::default(),
            neural: NeuralBacktestConfig::default(),
        }
    }
}

impl BacktestConfig {
    pub fn validate(&self) -> Result<()> {
        use crate::bayes_var::panel::MIN_RETURNS;
        if self.window < MIN_RETURNS {
            return Err(BacktestError::Config(format!("window must be at least {MIN_RETURNS} days")));
        }
        if self.iterations == 0 {
            return Err(BacktestError::Config("iterations must be at least 1".into()));
        }
        time_decay_weight(0.0, self.lambda)?;
        crate::market::QuantileLevel::new(self.q)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_examples() {
        assert_eq!(time_decay_weight(0.0, 0.3).unwrap(), 1.0);
        assert_eq!(time_decay_weight(123.0, 0.0).unwrap(), 1.0);
        let w = time_decay_weight(10.0, 0.1).unwrap();
        assert!((w - 0.36787944117144233).abs() < 1e-15);
        assert!(time_decay_weight(-1.0, 0.1).is_err());
        assert!(time_decay_weight(1.0, -0.1).is_err());
        assert!(time_decay_weight(f64::NAN, 0.1).is_err());
    }

    #[test]
    fn decay_is_monotone() {
        for t in 0..50 {
            let (a, b) = (t as f64, t as f64 + 0.5);
            assert!(time_decay_weight(b, 0.05).unwrap() < time_decay_weight(a, 0.05).unwrap());
            if t > 0 {
                assert!(time_decay_weight(a, 0.06).unwrap() < time_decay_weight(a, 0.05).unwrap());
            }
        }
    }

    #[test]
    fn config_bounds() {
        assert!(BacktestConfig::default().validate().is_ok());
        assert!(BacktestConfig { window: 61, ..Default::default() }.validate().is_err());
        assert!(BacktestConfig { iterations: 0, ..Default::default() }.validate().is_err());
        assert!(BacktestConfig { q: 1.0, ..Default::default() }.validate().is_err());
        let json = serde_json::to_string(&BacktestConfig { predictor: PredictorKind::BayesVar, ..Default::default() }).unwrap();
        assert!(json.contains("\"bayes-var\""));
    }
}
