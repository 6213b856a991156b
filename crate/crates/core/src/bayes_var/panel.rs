use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{BayesVarError, Result};
use crate::market::{compute_volatility, Horizon, MarketError, ReturnSeries};

/// Backward log-vols end at the origin day `t`; forward log-vols cover
/// returns `t + 1 ..= t + 1 + tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanelRow {
    pub backward: [f64; 4],
    pub forward: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LogVolPanel {
    pub dates: Vec<NaiveDate>,
    pub rows: Vec<PanelRow>,
}

impl LogVolPanel {
    pub fn new(dates: Vec<NaiveDate>, rows: Vec<PanelRow>) -> Result<Self> {
        if dates.len() != rows.len() {
            return Err(BayesVarError::Config(format!(
                "{} dates for {} panel rows",
                dates.len(),
                rows.len()
            )));
        }
        Ok(LogVolPanel { dates, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Smallest number of returns that yields a panel row.
pub const MIN_RETURNS: usize = 2 * Horizon::MAX + 2;

/// Log-vols for all four horizons of the window ending at `end_day`.
pub fn latest_backward(returns: &[f64], end_day: usize) -> std::result::Result<[f64; 4], MarketError> {
    let mut out = [0.0; 4];
    for (o, h) in out.iter_mut().zip(Horizon::ALL) {
        *o = compute_volatility(returns, end_day, h)?;
    }
    Ok(out)
}

pub(crate) fn forward(returns: &[f64], origin: usize) -> std::result::Result<[f64; 4], MarketError> {
    let mut out = [0.0; 4];
    for (o, h) in out.iter_mut().zip(Horizon::ALL) {
        *o = compute_volatility(returns, origin + 1 + h.days(), h)?;
    }
    Ok(out)
}

/// Rows whose backward and forward windows both lie inside
/// `returns[start..end]`. Rows touching a zero-variance window are dropped.
pub(crate) fn rows_within(returns: &[f64], dates: &[NaiveDate], start: usize, end: usize) -> Result<LogVolPanel> {
    let mut panel = LogVolPanel::default();
    let first = start + Horizon::MAX;
    if end < first + Horizon::MAX + 2 {
        return Ok(panel);
    }
    let slice = &returns[..end];
    for t in first..=end - Horizon::MAX - 2 {
        let row = latest_backward(slice, t).and_then(|b| forward(slice, t).map(|f| (b, f)));
        match row {
            Ok((backward, forward)) => {
                panel.dates.push(dates[t]);
                panel.rows.push(PanelRow { backward, forward });
            }
            Err(MarketError::DegenerateVolatility { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(panel)
}

/// One row per return index with complete 30-day backward and forward
/// windows.
pub fn build_panel(returns: &ReturnSeries) -> Result<LogVolPanel> {
    let n = returns.len();
    if n < MIN_RETURNS {
        return Err(BayesVarError::InsufficientData(format!(
            "a panel row needs {MIN_RETURNS} returns, got {n}"
        )));
    }
    rows_within(returns.values(), returns.dates(), 0, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn series(n: usize, seed: u64) -> ReturnSeries {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 0.02).unwrap();
        let r = (0..n).map(|_| d.sample(&mut rng)).collect();
        ReturnSeries::from_returns(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), r).unwrap()
    }

    #[test]
    fn short_series_rejected() {
        assert!(matches!(build_panel(&series(61, 1)), Err(BayesVarError::InsufficientData(_))));
        assert_eq!(build_panel(&series(62, 1)).unwrap().len(), 1);
    }

    #[test]
    fn columns_match_volatility_oracle() {
        let s = series(150, 2);
        let p = build_panel(&s).unwrap();
        assert_eq!(p.len(), 150 - 61);
        for (i, row) in p.rows.iter().enumerate() {
            let t = 30 + i;
            assert_eq!(p.dates[i], s.dates()[t]);
            for (k, h) in Horizon::ALL.into_iter().enumerate() {
                assert_eq!(row.backward[k], compute_volatility(s.values(), t, h).unwrap());
                let w = &s.values()[t + 1..=t + 1 + h.days()];
                let m = w.iter().sum::<f64>() / w.len() as f64;
                let v = w.iter().map(|x| (x - m).powi(2)).sum::<f64>() / h.days() as f64;
                assert!((row.forward[k] - v.sqrt().ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_returns_give_empty_panel() {
        let s = ReturnSeries::from_returns(NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(), vec![0.001; 100]).unwrap();
        assert!(build_panel(&s).unwrap().is_empty());
    }

    #[test]
    fn window_rows_use_only_window_data() {
        let s = series(200, 3);
        let p = rows_within(s.values(), s.dates(), 50, 150).unwrap();
        assert_eq!(p.len(), 100 - 61);
        assert_eq!(p.dates[0], s.dates()[80]);
        let mut altered = s.values().to_vec();
        altered[..50].fill(0.5);
        altered[150..].fill(0.5);
        let q = rows_within(&altered, s.dates(), 50, 150).unwrap();
        assert_eq!(p, q);
    }
}
