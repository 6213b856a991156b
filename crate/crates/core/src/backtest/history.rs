use chrono::NaiveDate;

use super::{BacktestError, Result};
use crate::market::ReturnSeries;
use crate::training::Sample;

/// Everything a backtest may consult: the return series, earnings-call
/// features (labels on these are ignored) and an optional VIX series.
#[derive(Debug, Clone, PartialEq)]
pub struct BacktestData {
    pub returns: ReturnSeries,
    calls: Vec<Sample>,
    vix: Vec<(NaiveDate, f64)>,
}

impl BacktestData {
    pub fn new(returns: ReturnSeries) -> Self {
        BacktestData { returns, calls: Vec::new(), vix: Vec::new() }
    }

    pub fn with_calls(mut self, mut calls: Vec<Sample>) -> Self {
        calls.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.ticker.cmp(&b.ticker)));
        self.calls = calls;
        self
    }

    pub fn with_vix(mut self, mut vix: Vec<(NaiveDate, f64)>) -> Result<Self> {
        vix.sort_by_key(|(d, _)| *d);
        if vix.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(BacktestError::Config("duplicate VIX dates".into()));
        }
        if vix.iter().any(|(_, v)| !v.is_finite()) {
            return Err(BacktestError::Config("non-finite VIX value".into()));
        }
        self.vix = vix;
        Ok(self)
    }

    pub fn calls(&self) -> &[Sample] {
        &self.calls
    }

    pub fn vix(&self) -> &[(NaiveDate, f64)] {
        &self.vix
    }

    /// The view available when forecasting return index `target`.
    pub(crate) fn history(&self, target: usize, window: usize) -> History<'_> {
        let dates = self.returns.dates();
        let target_date = dates[target];
        let n_calls = self.calls.partition_point(|c| c.date < target_date);
        let n_vix = self.vix.partition_point(|(d, _)| *d < target_date);
        History {
            target_date,
            window,
            dates: &dates[..target],
            returns: &self.returns.values()[..target],
            calls: &self.calls[..n_calls],
            vix: &self.vix[..n_vix],
        }
    }
}

/// Data strictly before one target date. Future rows are not reachable
/// through this type.
#[derive(Debug, Clone, Copy)]
pub struct History<'a> {
    target_date: NaiveDate,
    window: usize,
    dates: &'a [NaiveDate],
    returns: &'a [f64],
    calls: &'a [Sample],
    vix: &'a [(NaiveDate, f64)],
}

impl<'a> History<'a> {
    pub fn target_date(&self) -> NaiveDate {
        self.target_date
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn returns(&self) -> &'a [f64] {
        self.returns
    }

    pub fn dates(&self) -> &'a [NaiveDate] {
        self.dates
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Index of the first return in the trailing window.
    pub fn window_start(&self) -> usize {
        self.returns.len().saturating_sub(self.window)
    }

    pub fn window_returns(&self) -> &'a [f64] {
        &self.returns[self.window_start()..]
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.dates.last().copied()
    }

    pub fn calls(&self) -> &'a [Sample] {
        self.calls
    }

    pub fn latest_call(&self) -> Option<&'a Sample> {
        self.calls.last()
    }

    /// Index of the last return dated on or before `date`.
    pub fn index_at(&self, date: NaiveDate) -> Option<usize> {
        self.dates.partition_point(|d| *d <= date).checked_sub(1)
    }

    /// The last `len` VIX levels dated on or before `date`; empty when fewer
    /// are available.
    pub fn vix_window(&self, date: NaiveDate, len: usize) -> Vec<f64> {
        let end = self.vix.partition_point(|(d, _)| *d <= date);
        if end < len || len == 0 {
            return Vec::new();
        }
        self.vix[end - len..end].iter().map(|(_, v)| *v).collect()
    }
}
