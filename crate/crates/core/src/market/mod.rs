//! Deterministic financial math: simple returns, realized log-volatility
//! labels, pinball loss, MSE, AEP and the historical (empirical quantile) VaR.

pub mod io;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate volatility: zero sample variance in window ending at index {end_day}")]
    DegenerateVolatility { end_day: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("division by zero: true value is 0")]
    DivisionByZero,
}

pub type Result<T> = std::result::Result<T, MarketError>;

/// Adjusted close prices on strictly increasing dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    prices: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, prices: Vec<f64>) -> Result<Self> {
        if dates.len() != prices.len() {
            return Err(MarketError::LengthMismatch {
                left: dates.len(),
                right: prices.len(),
            });
        }
        if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
            return Err(MarketError::InvalidInput(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some(p) = prices.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
            return Err(MarketError::InvalidInput(format!(
                "price {p} is not strictly positive"
            )));
        }
        Ok(Self { dates, prices })
    }

    /// Builds a series on consecutive calendar days starting at `start`.
    pub fn from_prices(start: NaiveDate, prices: Vec<f64>) -> Result<Self> {
        let dates = consecutive_dates(start, prices.len());
        Self::new(dates, prices)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }
}

pub(crate) fn consecutive_dates(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    start.iter_days().take(n).collect()
}

/// Daily simple returns, each aligned to the later of its two price dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnSeries {
    dates: Vec<NaiveDate>,
    returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(dates: Vec<NaiveDate>, returns: Vec<f64>) -> Result<Self> {
        if dates.len() != returns.len() {
            return Err(MarketError::LengthMismatch {
                left: dates.len(),
                right: returns.len(),
            });
        }
        if let Some(r) = returns.iter().find(|r| !(r.is_finite() && **r > -1.0)) {
            return Err(MarketError::InvalidInput(format!("return {r} must be > -1")));
        }
        Ok(Self { dates, returns })
    }

    pub fn from_returns(start: NaiveDate, returns: Vec<f64>) -> Result<Self> {
        let dates = consecutive_dates(start, returns.len());
        Self::new(dates, returns)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &[f64] {
        &self.returns
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    /// The first `n` returns. Used by causal views.
    pub fn head(&self, n: usize) -> ReturnSeries {
        let n = n.min(self.len());
        ReturnSeries {
            dates: self.dates[..n].to_vec(),
            returns: self.returns[..n].to_vec(),
        }
    }
}

/// Volatility horizon in trading days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Horizon(usize);

impl Horizon {
    pub const D3: Horizon = Horizon(3);
    pub const D7: Horizon = Horizon(7);
    pub const D15: Horizon = Horizon(15);
    pub const D30: Horizon = Horizon(30);
    pub const ALL: [Horizon; 4] = [Self::D3, Self::D7, Self::D15, Self::D30];
    /// Largest label horizon.
    pub const MAX: usize = 30;

    /// Any positive day count. Label computation uses [`Horizon::ALL`].
    pub fn new(tau: usize) -> Result<Self> {
        if tau == 0 {
            return Err(MarketError::InvalidInput("horizon must be positive".into()));
        }
        Ok(Horizon(tau))
    }

    pub fn days(self) -> usize {
        self.0
    }

    pub fn label(self) -> String {
        format!("{}-Day", self.0)
    }
}

/// Probability level in the open interval (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct QuantileLevel(f64);

impl QuantileLevel {
    pub fn new(q: f64) -> Result<Self> {
        if q > 0.0 && q < 1.0 {
            Ok(QuantileLevel(q))
        } else {
            Err(MarketError::InvalidInput(format!(
                "quantile level {q} outside (0, 1)"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for QuantileLevel {
    fn default() -> Self {
        QuantileLevel(0.05)
    }
}

impl TryFrom<f64> for QuantileLevel {
    type Error = MarketError;
    fn try_from(q: f64) -> Result<Self> {
        Self::new(q)
    }
}

impl From<QuantileLevel> for f64 {
    fn from(q: QuantileLevel) -> f64 {
        q.0
    }
}

pub fn compute_returns(prices: &PriceSeries) -> Result<ReturnSeries> {
    if prices.len() < 2 {
        return Err(MarketError::InsufficientData(format!(
            "need at least 2 prices, got {}",
            prices.len()
        )));
    }
    let returns = prices
        .prices
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0])
        .collect();
    ReturnSeries::new(prices.dates[1..].to_vec(), returns)
}

/// Realized log-volatility over the `tau + 1` returns ending at `end_day`.
///
/// The `tau + 1` squared deviations are divided by `tau`:
///
/// `v = ln( sqrt( sum_{i=0..=tau} (r[d-i] - mean)^2 / tau ) )`
pub fn compute_volatility(returns: &[f64], end_day: usize, horizon: Horizon) -> Result<f64> {
    compute_volatility_with_floor(returns, end_day, horizon, None)
}

/// Like [`compute_volatility`], but a variance below `floor` is clamped up to
/// it instead of failing. Pass `None` to keep the strict behavior.
pub fn compute_volatility_with_floor(
    returns: &[f64],
    end_day: usize,
    horizon: Horizon,
    floor: Option<f64>,
) -> Result<f64> {
    let tau = horizon.days();
    if end_day >= returns.len() || end_day < tau {
        return Err(MarketError::InsufficientData(format!(
            "window of {} returns ending at {} not available in {} returns",
            tau + 1,
            end_day,
            returns.len()
        )));
    }
    let window = &returns[end_day - tau..=end_day];
    let constant = window.iter().all(|r| *r == window[0]);
    let mean = window.iter().sum::<f64>() / window.len() as f64;
    let ss: f64 = window.iter().map(|r| (r - mean) * (r - mean)).sum();
    // rounding in the mean can leave a tiny positive sum for a constant window
    let mut var = if constant { 0.0 } else { ss / tau as f64 };
    match floor {
        Some(f) if var < f => var = f,
        _ => {}
    }
    if !(var > 0.0) {
        return Err(MarketError::DegenerateVolatility { end_day });
    }
    Ok(var.sqrt().ln())
}

/// Quantile (pinball) loss of predicting `y_hat` when `y` is realized.
pub fn pinball_loss(y: f64, y_hat: f64, q: QuantileLevel) -> f64 {
    let q = q.value();
    if y >= y_hat {
        q * (y - y_hat)
    } else {
        (1.0 - q) * (y_hat - y)
    }
}

/// Derivative of [`pinball_loss`] with respect to `y_hat`. At the kink
/// `y == y_hat` the `y >= y_hat` branch is used, giving `-q`.
pub fn pinball_grad(y: f64, y_hat: f64, q: QuantileLevel) -> f64 {
    if y >= y_hat {
        -q.value()
    } else {
        1.0 - q.value()
    }
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    if y.len() != y_hat.len() {
        return Err(MarketError::LengthMismatch {
            left: y.len(),
            right: y_hat.len(),
        });
    }
    if y.is_empty() {
        return Err(MarketError::InsufficientData("mse of empty input".into()));
    }
    let ss: f64 = y.iter().zip(y_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(ss / y.len() as f64)
}

/// Error percentage of an estimate relative to the true value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aep {
    /// `|y_hat - y| / y`
    pub absolute: f64,
    /// `(y_hat - y) / y`
    pub signed: f64,
}

pub fn aep(y_hat: f64, y: f64) -> Result<Aep> {
    if y == 0.0 {
        return Err(MarketError::DivisionByZero);
    }
    Ok(Aep {
        absolute: (y_hat - y).abs() / y,
        signed: (y_hat - y) / y,
    })
}

/// Empirical q-quantile of the returns: the lower order statistic at
/// zero-based index `ceil(q * n) - 1`, no interpolation.
pub fn historical_var(returns: &[f64], q: QuantileLevel) -> Result<f64> {
    if returns.is_empty() {
        return Err(MarketError::InsufficientData(
            "historical VaR of empty sample".into(),
        ));
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[order_statistic_index(sorted.len(), q)])
}

pub(crate) fn order_statistic_index(n: usize, q: QuantileLevel) -> usize {
    let k = (q.value() * n as f64).ceil() as usize;
    k.clamp(1, n) - 1
}

/// Fraction of days whose realized return is strictly below the predicted
/// VaR threshold.
pub fn exceedance_rate(returns: &[f64], var_predictions: &[f64]) -> Result<f64> {
    if returns.len() != var_predictions.len() {
        return Err(MarketError::LengthMismatch {
            left: returns.len(),
            right: var_predictions.len(),
        });
    }
    if returns.is_empty() {
        return Err(MarketError::InsufficientData(
            "exceedance rate of empty input".into(),
        ));
    }
    let hits = returns
        .iter()
        .zip(var_predictions)
        .filter(|(r, v)| r < v)
        .count();
    Ok(hits as f64 / returns.len() as f64)
}

/// Log-volatility labels for every return index, one column per horizon in
/// [`Horizon::ALL`]. Cells are `None` where the window is too short or the
/// variance is zero.
pub fn volatility_labels(returns: &ReturnSeries) -> Vec<[Option<f64>; 4]> {
    let r = returns.values();
    (0..r.len())
        .map(|d| {
            let mut row = [None; 4];
            for (slot, h) in row.iter_mut().zip(Horizon::ALL) {
                *slot = compute_volatility(r, d, h).ok();
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn q(v: f64) -> QuantileLevel {
        QuantileLevel::new(v).unwrap()
    }

    fn day0() -> NaiveDate {
        NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
    }

    #[test]
    fn returns_direct() {
        let p = PriceSeries::from_prices(day0(), vec![100.0, 110.0]).unwrap();
        let r = compute_returns(&p).unwrap();
        assert!((r.values()[0] - 0.10).abs() < 1e-15);
        assert_eq!(r.dates()[0], p.dates()[1]);

        let p = PriceSeries::from_prices(day0(), vec![100.0; 3]).unwrap();
        assert_eq!(compute_returns(&p).unwrap().values(), &[0.0, 0.0]);
    }

    #[test]
    fn returns_need_two_prices() {
        let p = PriceSeries::from_prices(day0(), vec![100.0]).unwrap();
        assert!(matches!(
            compute_returns(&p),
            Err(MarketError::InsufficientData(_))
        ));
    }

    #[test]
    fn returns_match_ratio_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let prices: Vec<f64> = (0..50).map(|_| rng.random_range(1.0..500.0)).collect();
        let p = PriceSeries::from_prices(day0(), prices.clone()).unwrap();
        let r = compute_returns(&p).unwrap();
        for i in 1..prices.len() {
            let oracle = prices[i] / prices[i - 1] - 1.0;
            assert!((r.values()[i - 1] - oracle).abs() < 1e-12);
        }
    }

    #[test]
    fn price_series_validation() {
        assert!(PriceSeries::from_prices(day0(), vec![1.0, 0.0]).is_err());
        let d = vec![day0(), day0()];
        assert!(PriceSeries::new(d, vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn volatility_alternating_window() {
        // ln(sqrt(4 * 1e-4 / 3)), evaluated independently: -4.461329149762201
        let v = compute_volatility(&[0.01, -0.01, 0.01, -0.01], 3, Horizon::D3).unwrap();
        assert!((v - (-4.461_329_149_762_201)).abs() < 1e-12, "{v}");
    }

    #[test]
    fn volatility_zero_variance_is_error() {
        let r = vec![0.002; 10];
        assert_eq!(
            compute_volatility(&r, 5, Horizon::D3),
            Err(MarketError::DegenerateVolatility { end_day: 5 })
        );
        let v = compute_volatility_with_floor(&r, 5, Horizon::D3, Some(1e-12)).unwrap();
        assert!((v - 0.5 * 1e-12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn volatility_insufficient_window() {
        let r = vec![0.01, 0.02, 0.03];
        assert!(matches!(
            compute_volatility(&r, 2, Horizon::D3),
            Err(MarketError::InsufficientData(_))
        ));
        assert!(compute_volatility(&r, 5, Horizon::new(1).unwrap()).is_err());
    }

    #[test]
    fn pinball_examples() {
        assert_eq!(pinball_loss(0.3, 0.3, q(0.7)), 0.0);
        assert!((pinball_loss(1.0, 0.0, q(0.05)) - 0.05).abs() < 1e-15);
        assert!((pinball_loss(0.0, 1.0, q(0.05)) - 0.95).abs() < 1e-15);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mse(&[0.0, 2.0], &[0.0, 0.0]).unwrap(), 2.0);
        assert!(mse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(mse(&[], &[]).is_err());
    }

    #[test]
    fn aep_examples() {
        assert_eq!(aep(2.0, 2.0).unwrap(), Aep { absolute: 0.0, signed: 0.0 });
        let a = aep(0.9, 1.0).unwrap();
        assert!((a.absolute - 0.1).abs() < 1e-12 && (a.signed + 0.1).abs() < 1e-12);
        assert_eq!(aep(1.0, 0.0), Err(MarketError::DivisionByZero));
    }

    #[test]
    fn aep_batch_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let y_hat: f64 = rng.random_range(-5.0..5.0);
            let y: f64 = rng.random_range(0.1..5.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let a = aep(y_hat, y).unwrap();
            assert!((a.absolute - (y_hat - y).abs() / y).abs() < 1e-12);
            assert!((a.signed - (y_hat / y - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn historical_var_degenerate_and_order_statistic() {
        assert_eq!(historical_var(&[-0.05; 40], q(0.05)).unwrap(), -0.05);
        assert!(historical_var(&[], q(0.05)).is_err());

        // 20 distinct values 1..=20 shuffled; ceil(q*20)-th smallest.
        let mut vals: Vec<f64> = (1..=20).map(f64::from).collect();
        vals.reverse();
        vals.swap(3, 17);
        for (level, expect) in [(0.05, 1.0), (0.1, 2.0), (0.11, 3.0), (0.5, 10.0), (0.95, 19.0), (0.99, 20.0)] {
            assert_eq!(historical_var(&vals, q(level)).unwrap(), expect, "q={level}");
        }
    }

    #[test]
    fn exceedance_boundaries() {
        let r = [0.01, -0.02, 0.03];
        assert_eq!(exceedance_rate(&r, &[-1.0; 3]).unwrap(), 0.0);
        assert_eq!(exceedance_rate(&r, &[-1e300; 3]).unwrap(), 0.0);
        assert_eq!(exceedance_rate(&r, &[1.0; 3]).unwrap(), 1.0);
        // strict inequality
        assert_eq!(exceedance_rate(&[-0.02], &[-0.02]).unwrap(), 0.0);
        assert!(exceedance_rate(&r, &[0.0]).is_err());
    }

    #[test]
    fn exceedance_gaussian_monte_carlo() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let r: Vec<f64> = (0..10_000)
            .map(|_| 0.01 * { let z: f64 = StandardNormal.sample(&mut rng); z })
            .collect();
        let threshold = vec![-0.01 * 1.644_853_626_951_472_2; r.len()];
        let rate = exceedance_rate(&r, &threshold).unwrap();
        assert!((0.035..=0.065).contains(&rate), "{rate}");
    }

    #[test]
    fn labels_have_empty_cells_until_window_fills() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r: Vec<f64> = (0..40).map(|_| rng.random_range(-0.02..0.02)).collect();
        let rs = ReturnSeries::from_returns(day0(), r).unwrap();
        let labels = volatility_labels(&rs);
        assert!(labels[2][0].is_none());
        assert!(labels[3][0].is_some());
        assert!(labels[29][3].is_none());
        assert!(labels[30][3].is_some());
    }

    proptest! {
        #[test]
        fn volatility_shift_invariant(
            r in proptest::collection::vec(-0.05f64..0.05, 31..60),
            c in -0.5f64..0.5,
        ) {
            let shifted: Vec<f64> = r.iter().map(|x| x + c).collect();
            let end = r.len() - 1;
            for h in Horizon::ALL {
                if let (Ok(a), Ok(b)) = (compute_volatility(&r, end, h), compute_volatility(&shifted, end, h)) {
                    prop_assert!((a - b).abs() < 1e-6);
                }
            }
        }

        #[test]
        fn pinball_nonnegative_and_convex(
            y in -10.0f64..10.0, a in -10.0f64..10.0, b in -10.0f64..10.0,
            t in 0.0f64..1.0, level in 0.01f64..0.99,
        ) {
            let ql = q(level);
            prop_assert!(pinball_loss(y, a, ql) >= 0.0);
            prop_assert_eq!(pinball_loss(y, y, ql), 0.0);
            if a != y { prop_assert!(pinball_loss(y, a, ql) > 0.0); }
            let m = t * a + (1.0 - t) * b;
            let lhs = pinball_loss(y, m, ql);
            let rhs = t * pinball_loss(y, a, ql) + (1.0 - t) * pinball_loss(y, b, ql);
            prop_assert!(lhs <= rhs + 1e-9);
        }

        #[test]
        fn historical_var_monotone_in_q(
            r in proptest::collection::vec(-0.1f64..0.1, 1..200),
            q1 in 0.01f64..0.99, q2 in 0.01f64..0.99,
        ) {
            let (lo, hi) = if q1 < q2 { (q1, q2) } else { (q2, q1) };
            prop_assert!(historical_var(&r, q(lo)).unwrap() <= historical_var(&r, q(hi)).unwrap());
        }

        #[test]
        fn in_sample_exceedance_within_one_over_n(
            r in proptest::collection::vec(-0.1f64..0.1, 1..300),
            level in 0.01f64..0.99,
        ) {
            // distinct values so ties cannot push extra mass below the threshold
            let mut r = r;
            for (i, x) in r.iter_mut().enumerate() { *x += i as f64 * 1e-9; }
            let v = historical_var(&r, q(level)).unwrap();
            let rate = exceedance_rate(&r, &vec![v; r.len()]).unwrap();
            let n = r.len() as f64;
            prop_assert!((rate - level).abs() <= 1.0 / n + 1e-12);
        }
    }
}
