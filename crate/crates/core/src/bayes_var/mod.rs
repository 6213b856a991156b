//! Bayesian vector autoregression of forward log-volatilities on backward
//! log-volatilities: panel construction, MCMC sampling, convergence
//! diagnostics, posterior prediction and the rolling-window AEP study.

pub mod diagnostics;
pub mod io;
pub mod panel;
pub mod predict;
pub mod rolling;
pub mod sampler;

pub use diagnostics::{summarize, Diagnostics, ParamSummary, RhatMethod};
pub use panel::{build_panel, latest_backward, LogVolPanel, PanelRow};
pub use predict::{posterior_predict, HorizonForecast};
pub use rolling::{describe, rolling_simulation, AepStats, RollingReport, RollingStep};
pub use sampler::{
    sample_posterior, sample_prior_only, McmcConfig, NoiseModel, ParamId, Posterior, Prior, SamplerKind, Term,
    VarModelSpec,
};

use thiserror::Error;

use crate::market::MarketError;

#[derive(Debug, Error)]
pub enum BayesVarError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("panel has no usable rows")]
    EmptyPanel,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("diagnostics unavailable: {0}")]
    DiagnosticsUnavailable(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Csv(#[from] crate::market::io::CsvError),
}

pub type Result<T> = std::result::Result<T, BayesVarError>;
