//! Walk-forward study: refit on a trailing window of returns, predict the
//! next origin's forward log-vols, and tabulate signed AEP per horizon.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::diagnostics::quantile;
use super::panel::{forward, latest_backward, rows_within, LogVolPanel, MIN_RETURNS};
use super::predict::posterior_predict;
use super::sampler::{sample_posterior, McmcConfig, VarModelSpec};
use super::{BayesVarError, Result};
use crate::market::{aep, Aep, Horizon, MarketError, ReturnSeries};

/// What a predictor may see on one rolling day.
pub struct RollingStep<'a> {
    pub iteration: usize,
    /// Return index of the first day not in the window.
    pub target: usize,
    /// Panel rows built from the window only.
    pub train: &'a LogVolPanel,
    /// Backward log-vols at the last window day.
    pub latest_backward: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingRecord {
    pub date: NaiveDate,
    pub predicted: [f64; 4],
    pub realized: [f64; 4],
    pub aep: [Aep; 4],
}

/// Distribution summary of one horizon's signed AEP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AepStats {
    pub variable: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub p5: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingReport {
    pub records: Vec<RollingRecord>,
    pub stats: Vec<AepStats>,
    /// Days dropped because a log-vol was undefined.
    pub skipped: usize,
}

/// N, mean, sd (n-1), skewness and excess kurtosis (population moments) and
/// linearly interpolated percentiles.
pub fn describe(variable: &str, x: &[f64]) -> AepStats {
    let n = x.len();
    if n == 0 {
        let nan = f64::NAN;
        return AepStats {
            variable: variable.into(),
            n,
            mean: nan,
            sd: nan,
            skewness: nan,
            kurtosis: nan,
            p5: nan,
            p25: nan,
            p50: nan,
            p75: nan,
            p95: nan,
        };
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let m2 = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let m3 = x.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
    let m4 = x.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
    let sd = if n > 1 { (m2 * nf / (nf - 1.0)).sqrt() } else { 0.0 };
    let (skewness, kurtosis) = if m2 > 0.0 { (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0) } else { (0.0, 0.0) };
    AepStats {
        variable: variable.into(),
        n,
        mean,
        sd,
        skewness,
        kurtosis,
        p5: quantile(x, 0.05),
        p25: quantile(x, 0.25),
        p50: quantile(x, 0.5),
        p75: quantile(x, 0.75),
        p95: quantile(x, 0.95),
    }
}

pub(crate) fn check_protocol(n: usize, window: usize, iterations: usize) -> Result<()> {
    if window < MIN_RETURNS {
        return Err(BayesVarError::Config(format!("window must be at least {MIN_RETURNS} days")));
    }
    if iterations == 0 {
        return Err(BayesVarError::Config("iterations must be positive".into()));
    }
    let need = window + iterations + Horizon::MAX;
    if n < need {
        return Err(BayesVarError::InsufficientData(format!(
            "window {window} with {iterations} iterations needs {need} returns, got {n}"
        )));
    }
    Ok(())
}

/// Runs the protocol with an arbitrary predictor. Day `i` trains on returns
/// `i .. window + i` and is scored against forward log-vols from origin
/// `window + i - 1`, i.e. returns from `window + i` on.
pub fn rolling_with<F>(returns: &ReturnSeries, window: usize, iterations: usize, mut predict: F) -> Result<RollingReport>
where
    F: FnMut(&RollingStep<'_>) -> Result<[f64; 4]>,
{
    let r = returns.values();
    check_protocol(r.len(), window, iterations)?;
    let mut records = Vec::with_capacity(iterations);
    let mut skipped = 0;
    for i in 0..iterations {
        let target = window + i;
        let start = target - window;
        let realized = match forward(r, target - 1) {
            Ok(v) => v,
            Err(MarketError::DegenerateVolatility { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let latest = match latest_backward(&r[..target], target - 1) {
            Ok(v) => v,
            Err(MarketError::DegenerateVolatility { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let train = rows_within(r, returns.dates(), start, target)?;
        let predicted = predict(&RollingStep { iteration: i, target, train: &train, latest_backward: latest })?;
        let mut errs = [Aep { absolute: 0.0, signed: 0.0 }; 4];
        for k in 0..4 {
            errs[k] = aep(predicted[k], realized[k])?;
        }
        records.push(RollingRecord { date: returns.dates()[target], predicted, realized, aep: errs });
    }
    let stats = Horizon::ALL
        .iter()
        .enumerate()
        .map(|(k, h)| {
            let v: Vec<f64> = records.iter().map(|rec| rec.aep[k].signed).collect();
            describe(&h.label(), &v)
        })
        .collect();
    Ok(RollingReport { records, stats, skipped })
}

/// Bayesian-VAR rolling study: the model is refit from scratch every day
/// and the predictive mean of each forward log-vol is scored.
pub fn rolling_simulation(
    returns: &ReturnSeries,
    window: usize,
    iterations: usize,
    spec: &VarModelSpec,
    cfg: &McmcConfig,
) -> Result<RollingReport> {
    rolling_with(returns, window, iterations, |step| {
        let day_cfg = McmcConfig { seed: cfg.seed.wrapping_add(step.iteration as u64), ..cfg.clone() };
        let post = sample_posterior(step.train, spec, &day_cfg)?;
        let f = posterior_predict(&post, step.latest_backward, day_cfg.seed)?;
        Ok(std::array::from_fn(|k| f[k].log_mean))
    })
}
