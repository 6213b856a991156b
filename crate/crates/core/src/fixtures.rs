//! Deterministic synthetic data: embedding datasets with optional planted
//! label structure, price paths, earnings-call schedules and text corpora.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, Days, NaiveDate, Weekday};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bayes_var::panel::forward;
use crate::llm::news::NewsItem;
use crate::llm::Transcript;
use crate::market::io::{write_prices, write_vix};
use crate::market::{compute_returns, PriceSeries, ReturnSeries};
use crate::neural::NetworkConfig;
use crate::training::{
    save_embedding, save_manifest, Dataset, DatasetManifest, EmbeddingMatrix, ManifestRecord, Result, Sample,
};

/// How fixture labels relate to the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Planted {
    /// Labels are independent noise.
    #[default]
    None,
    /// Labels and next-day returns are exact linear functions of the
    /// summary vector.
    Linear,
    /// Labels depend on the VIX window only.
    Vix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub n_samples: usize,
    pub network: NetworkConfig,
    pub seed: u64,
    pub planted: Planted,
    pub with_news: bool,
    pub start: NaiveDate,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            n_samples: 40,
            network: NetworkConfig::tiny(),
            seed: 0,
            planted: Planted::None,
            with_news: true,
            start: NaiveDate::from_ymd_opt(2015, 1, 5).unwrap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureRecord {
    pub ticker: String,
    pub date: NaiveDate,
    pub audio: EmbeddingMatrix,
    pub text: EmbeddingMatrix,
    pub summary: EmbeddingMatrix,
    pub answers: EmbeddingMatrix,
    pub news: Option<EmbeddingMatrix>,
    pub vix: Vec<f64>,
    pub vol_labels: [f64; 4],
    pub next_return: f64,
}

impl FixtureRecord {
    pub fn sample(&self) -> Sample {
        Sample {
            ticker: self.ticker.clone(),
            date: self.date,
            audio: self.audio.to_f64(),
            audio_valid: self.audio.valid,
            text: self.text.to_f64(),
            text_valid: self.text.valid,
            summary: self.summary.to_f64(),
            answers: self.answers.to_f64(),
            news: self.news.as_ref().map(EmbeddingMatrix::to_f64),
            vix: self.vix.clone(),
            vol_labels: self.vol_labels,
            next_return: self.next_return,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSet {
    pub records: Vec<FixtureRecord>,
    /// First test date; 80% of the samples precede it.
    pub split_date: NaiveDate,
}

const TICKERS: [&str; 4] = ["AAA", "BBB", "CCC", "DDD"];

fn uniform_f32(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(-1.0f32..1.0)).collect()
}

fn padded(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> EmbeddingMatrix {
    let valid = rng.random_range(1..=rows);
    let mut data = uniform_f32(rng, valid * cols);
    data.resize(rows * cols, 0.0);
    EmbeddingMatrix::new(rows, cols, valid, data).expect("generated shape is consistent")
}

fn vector(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingMatrix {
    EmbeddingMatrix::vector(uniform_f32(rng, dim)).expect("nonempty vector")
}

/// Coefficients of the planted linear map, fixed per seed.
fn direction(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1EC);
    let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

const SCALES: [f64; 4] = [0.8, 0.6, 0.4, 0.3];
const OFFSETS: [f64; 4] = [0.2, 0.1, 0.0, -0.1];

pub fn generate(spec: &FixtureSpec) -> FixtureSet {
    let c = &spec.network;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dir = direction(spec.seed, c.analysis_dim);
    let records: Vec<FixtureRecord> = (0..spec.n_samples)
        .map(|i| {
            let audio = padded(&mut rng, c.max_rows, c.audio_dim);
            let text = padded(&mut rng, c.max_rows, c.text_dim);
            let summary = vector(&mut rng, c.analysis_dim);
            let answers = vector(&mut rng, c.analysis_dim);
            let news = spec.with_news.then(|| vector(&mut rng, c.news_dim));
            let vix: Vec<f64> = (0..c.vix_len).map(|_| rng.random_range(-1.0..1.0)).collect();
            let noise: [f64; 4] = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
            let mut next_return = 0.02 * rng.random_range(-1.0..1.0);
            let vol_labels = match spec.planted {
                Planted::None => noise,
                Planted::Linear => {
                    let z: f64 = summary.to_f64().iter().zip(&dir).map(|(a, b)| a * b).sum();
                    next_return = 0.02 * z - 0.01;
                    std::array::from_fn(|k| OFFSETS[k] + SCALES[k] * z)
                }
                Planted::Vix => {
                    let tail = |n: usize| vix[vix.len() - n.min(vix.len())..].iter().sum::<f64>() / n.min(vix.len()) as f64;
                    [tail(3), tail(7), tail(15), tail(30)]
                }
            };
            FixtureRecord {
                ticker: TICKERS[i % TICKERS.len()].to_string(),
                date: spec.start + Days::new(7 * i as u64),
                audio,
                text,
                summary,
                answers,
                news,
                vix,
                vol_labels,
                next_return,
            }
        })
        .collect();
    let cut = (spec.n_samples * 4).div_ceil(5);
    let split_date = spec.start + Days::new(7 * cut as u64);
    FixtureSet { records, split_date }
}

impl FixtureSet {
    pub fn samples(&self) -> Vec<Sample> {
        self.records.iter().map(FixtureRecord::sample).collect()
    }

    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::from_samples(self.samples(), self.split_date)
    }

    /// Writes RLEM files under `dir` and a `manifest.json` referencing them
    /// by relative path.
    pub fn write(&self, dir: &Path) -> Result<DatasetManifest> {
        for sub in ["audio", "text", "summary", "answers", "news"] {
            fs::create_dir_all(dir.join(sub))?;
        }
        let mut records = Vec::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            let rel = |sub: &str| PathBuf::from(format!("{sub}/{i:05}.rlem"));
            let files = [
                ("audio", Some(&r.audio)),
                ("text", Some(&r.text)),
                ("summary", Some(&r.summary)),
                ("answers", Some(&r.answers)),
                ("news", r.news.as_ref()),
            ];
            for (sub, m) in files {
                if let Some(m) = m {
                    save_embedding(&dir.join(rel(sub)), m)?;
                }
            }
            records.push(ManifestRecord {
                ticker: r.ticker.clone(),
                date: r.date,
                audio_path: rel("audio"),
                text_path: rel("text"),
                summary_path: rel("summary"),
                answers_path: rel("answers"),
                news_path: r.news.as_ref().map(|_| rel("news")),
                vix: r.vix.clone(),
                vol_labels: r.vol_labels,
                next_return: r.next_return,
                split: None,
            });
        }
        let manifest = DatasetManifest { split_date: self.split_date, records, base_dir: dir.to_path_buf() };
        save_manifest(&dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

/// Weekdays starting at `start` (moved forward to a weekday).
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let weekday = |d: &NaiveDate| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun);
    start.iter_days().filter(weekday).take(n).collect()
}

/// Stochastic-volatility price path with a matching VIX-like series and a
/// quarterly earnings-call schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketSpec {
    /// Number of daily returns (prices are one longer).
    pub days: usize,
    pub seed: u64,
    pub start: NaiveDate,
    /// Daily volatility around which the log-vol process mean-reverts.
    pub base_vol: f64,
    /// Daily AR(1) coefficient of log-vol.
    pub persistence: f64,
    /// Stationary standard deviation of log-vol.
    pub vol_of_vol: f64,
    /// Trading days between earnings calls.
    pub call_every: usize,
    pub network: NetworkConfig,
}

impl Default for MarketSpec {
    fn default() -> Self {
        MarketSpec {
            days: 600,
            seed: 0,
            start: NaiveDate::from_ymd_opt(2016, 1, 4).unwrap(),
            base_vol: 0.012,
            persistence: 0.97,
            vol_of_vol: 0.3,
            call_every: 63,
            network: NetworkConfig::tiny(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketFixture {
    pub prices: PriceSeries,
    /// Annualized volatility as a decimal (0.2 = 20%), one per price date.
    pub vix: Vec<(NaiveDate, f64)>,
    /// One call per `call_every` returns; labels are the realized forward
    /// log-vols (zero where the data ends first).
    pub calls: FixtureSet,
}

pub fn generate_market(spec: &MarketSpec) -> MarketFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dates = business_days(spec.start, spec.days + 1);
    let mu = spec.base_vol.ln();
    let shock = spec.vol_of_vol * (1.0 - spec.persistence * spec.persistence).sqrt();
    let mut h = mu;
    let mut prices = vec![100.0];
    let mut vix = Vec::with_capacity(dates.len());
    vix.push((dates[0], (252f64).sqrt() * h.exp()));
    for d in &dates[1..] {
        let e: f64 = rng.sample(StandardNormal);
        h = mu + spec.persistence * (h - mu) + shock * e;
        let z: f64 = rng.sample(StandardNormal);
        let r = (h.exp() * z).clamp(-0.5, 0.5);
        prices.push(prices.last().unwrap() * (1.0 + r));
        let noise: f64 = rng.sample(StandardNormal);
        vix.push((*d, (252f64).sqrt() * h.exp() * (0.05 * noise).exp()));
    }
    let prices = PriceSeries::new(dates, prices).expect("generated prices are positive and dated");
    let returns = compute_returns(&prices).expect("at least two prices");
    let calls = call_schedule(spec, &returns, &vix, &mut rng);
    MarketFixture { prices, vix, calls }
}

fn call_schedule(
    spec: &MarketSpec,
    returns: &ReturnSeries,
    vix: &[(NaiveDate, f64)],
    rng: &mut ChaCha8Rng,
) -> FixtureSet {
    let c = &spec.network;
    let r = returns.values();
    let step = spec.call_every.max(1);
    let records: Vec<FixtureRecord> = (step / 3..r.len())
        .step_by(step)
        .map(|j| {
            let date = returns.dates()[j];
            let end = vix.partition_point(|(d, _)| *d <= date);
            let window = if end >= c.vix_len { vix[end - c.vix_len..end].iter().map(|(_, v)| *v).collect() } else { Vec::new() };
            FixtureRecord {
                ticker: TICKERS[0].to_string(),
                date,
                audio: padded(rng, c.max_rows, c.audio_dim),
                text: padded(rng, c.max_rows, c.text_dim),
                summary: vector(rng, c.analysis_dim),
                answers: vector(rng, c.analysis_dim),
                news: Some(vector(rng, c.news_dim)),
                vix: if window.is_empty() { vec![0.0; c.vix_len] } else { window },
                vol_labels: forward(r, j).unwrap_or([0.0; 4]),
                next_return: r.get(j + 1).copied().unwrap_or(0.0),
            }
        })
        .collect();
    let cut = (records.len() * 4).div_ceil(5);
    let split_date = records
        .get(cut)
        .map(|rec| rec.date)
        .unwrap_or_else(|| returns.dates().last().copied().unwrap_or(spec.start) + Days::new(1));
    FixtureSet { records, split_date }
}

impl MarketFixture {
    pub fn returns(&self) -> ReturnSeries {
        compute_returns(&self.prices).expect("at least two prices")
    }

    /// Writes `prices.csv`, `vix.csv` and the call dataset under `calls/`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let io = |e: crate::market::io::CsvError| crate::training::TrainingError::Manifest(e.to_string());
        write_prices(fs::File::create(dir.join("prices.csv"))?, &self.prices).map_err(io)?;
        write_vix(fs::File::create(dir.join("vix.csv"))?, &self.vix).map_err(io)?;
        self.calls.write(&dir.join("calls"))?;
        Ok(())
    }
}

const OPENERS: [&str; 6] = [
    "Good afternoon and thank you for joining the call.",
    "Revenue grew this quarter on strong customer demand.",
    "Gross margin expanded as input costs eased.",
    "Operating expenses rose with investment in new products.",
    "We returned capital to shareholders through buybacks and dividends.",
    "Our guidance for next quarter assumes stable demand.",
];

const BODY: [&str; 12] = [
    "Demand in our core segment remained healthy across regions.",
    "Pricing held up better than we expected given the competitive landscape.",
    "We saw some softness in consumer spending late in the quarter.",
    "Inflation and higher rates weighed on customer budgets.",
    "Our balance sheet remains strong with ample liquidity.",
    "We completed the acquisition of a smaller competitor during the period.",
    "A one-off impairment charge reduced reported earnings.",
    "Management expects margins to improve over the next two quarters.",
    "Supply chain constraints have largely resolved.",
    "We are investing in capacity to meet the order backlog.",
    "Currency movements reduced reported revenue by two percent.",
    "The board appointed a new CFO effective next month.",
];

const HEADLINES: [&str; 10] = [
    "{t} results beat analyst expectations on strong revenue.",
    "{t} misses earnings estimates as costs climb.",
    "{t} agrees to acquire a rival in a cash merger.",
    "Regulator opens antitrust review of {t}.",
    "{t} faces lawsuit over product claims.",
    "{t} CEO resigns and the board names an interim chief.",
    "Tariff fears and recession worries hit {t} shares.",
    "{t} announces a new product line for enterprise customers.",
    "{t} shares drift as trading volume thins.",
    "Analysts reiterate neutral ratings on {t}.",
];

/// A transcript of `n` sentences drawn from a fixed vocabulary.
pub fn synthetic_transcript(ticker: &str, date: NaiveDate, n: usize, seed: u64) -> Transcript {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentences = (0..n)
        .map(|i| {
            let pool: &[&str] = if i < 2 { &OPENERS } else { &BODY };
            pool.choose(&mut rng).expect("nonempty pool").to_string()
        })
        .collect();
    Transcript { ticker: ticker.to_string(), date, sentences }
}

/// `per_day` headlines for each of `days` consecutive calendar days
/// starting at `start`, with synthetic next-day returns.
pub fn synthetic_news(ticker: &str, start: NaiveDate, days: usize, per_day: usize, seed: u64) -> Vec<NewsItem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(days * per_day);
    for date in start.iter_days().take(days) {
        let next_return = Some(0.01 * rng.random_range(-2.0..2.0));
        for _ in 0..per_day {
            let h = HEADLINES.choose(&mut rng).expect("nonempty headlines");
            out.push(NewsItem { ticker: ticker.to_string(), date, text: h.replace("{t}", ticker), next_return });
        }
    }
    out
}
