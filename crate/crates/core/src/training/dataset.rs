use chrono::NaiveDate;

use super::embedding::load_embedding;
use super::manifest::{DatasetManifest, Split};
use super::{Result, TrainingError};
use crate::neural::{EmbeddingView, ModelInput, NetworkConfig};

/// One earnings-call observation, decoded to f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub ticker: String,
    pub date: NaiveDate,
    /// `[max_rows, audio_dim]`, zero beyond `audio_valid`.
    pub audio: Vec<f64>,
    pub audio_valid: usize,
    pub text: Vec<f64>,
    pub text_valid: usize,
    pub summary: Vec<f64>,
    pub answers: Vec<f64>,
    pub news: Option<Vec<f64>>,
    /// Empty when no VIX window is available.
    pub vix: Vec<f64>,
    pub vol_labels: [f64; 4],
    pub next_return: f64,
}

impl Sample {
    pub fn input(&self, c: &NetworkConfig) -> Result<ModelInput<'_>> {
        Ok(ModelInput {
            audio: Some(EmbeddingView::new(&self.audio, c.max_rows, c.audio_dim, self.audio_valid)?),
            text: Some(EmbeddingView::new(&self.text, c.max_rows, c.text_dim, self.text_valid)?),
            summary: Some(&self.summary),
            answers: Some(&self.answers),
            vix: (!self.vix.is_empty()).then_some(&self.vix[..]),
            news: self.news.as_deref(),
            call_scale: 1.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub train: Vec<Sample>,
    /// Last tenth of the training span by date.
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl Dataset {
    /// Splits at `split_date` and carves the validation set out of the
    /// training span.
    pub fn from_samples(mut samples: Vec<Sample>, split_date: NaiveDate) -> Result<Self> {
        if samples.is_empty() {
            return Err(TrainingError::EmptyDataset("no samples".into()));
        }
        samples.sort_by(|a, b| a.date.cmp(&b.date).then_with(|| a.ticker.cmp(&b.ticker)));
        let cut = samples.partition_point(|s| s.date < split_date);
        let test = samples.split_off(cut);
        let mut train = samples;
        let validation = match (train.first(), train.last()) {
            (Some(first), Some(last)) if train.len() >= 2 => {
                let span = (last.date - first.date).num_days() as f64;
                let cutoff = first.date + chrono::Days::new((0.9 * span).floor() as u64);
                let mut at = train.partition_point(|s| s.date <= cutoff);
                if at == train.len() {
                    at -= 1;
                }
                train.split_off(at)
            }
            _ => Vec::new(),
        };
        Ok(Dataset { train, validation, test })
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads every embedding file named by the manifest and checks it against
/// the network's expected shapes.
pub fn load_dataset(manifest: &DatasetManifest, c: &NetworkConfig) -> Result<Dataset> {
    manifest.validate()?;
    let mut samples = Vec::with_capacity(manifest.records.len());
    for r in &manifest.records {
        let ctx = |e: TrainingError| match e {
            TrainingError::Format(m) => TrainingError::Format(format!("{} {}: {m}", r.ticker, r.date)),
            other => other,
        };
        let audio = load_embedding(&manifest.resolve(&r.audio_path)).map_err(ctx)?;
        audio.expect_shape(c.max_rows, c.audio_dim).map_err(ctx)?;
        let text = load_embedding(&manifest.resolve(&r.text_path)).map_err(ctx)?;
        text.expect_shape(c.max_rows, c.text_dim).map_err(ctx)?;
        let vector = |p: &std::path::Path, dim: usize| -> Result<Vec<f64>> {
            let m = load_embedding(&manifest.resolve(p)).map_err(ctx)?;
            m.expect_shape(1, dim).map_err(ctx)?;
            Ok(m.to_f64())
        };
        if r.vix.len() != c.vix_len {
            return Err(TrainingError::Manifest(format!(
                "{} {}: VIX window has {} values, expected {}",
                r.ticker,
                r.date,
                r.vix.len(),
                c.vix_len
            )));
        }
        samples.push(Sample {
            ticker: r.ticker.clone(),
            date: r.date,
            audio_valid: audio.valid,
            audio: audio.to_f64(),
            text_valid: text.valid,
            text: text.to_f64(),
            summary: vector(&r.summary_path, c.analysis_dim)?,
            answers: vector(&r.answers_path, c.analysis_dim)?,
            news: r.news_path.as_deref().map(|p| vector(p, c.news_dim)).transpose()?,
            vix: r.vix.clone(),
            vol_labels: r.vol_labels,
            next_return: r.next_return,
        });
        debug_assert_eq!(manifest.split_of(r) == Split::Train, r.date < manifest.split_date);
    }
    Dataset::from_samples(samples, manifest.split_date)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn blank(c: &NetworkConfig, date: NaiveDate) -> Sample {
        Sample {
            ticker: "TST".into(),
            date,
            audio: vec![0.0; c.max_rows * c.audio_dim],
            audio_valid: 1,
            text: vec![0.0; c.max_rows * c.text_dim],
            text_valid: 1,
            summary: vec![0.0; c.analysis_dim],
            answers: vec![0.0; c.analysis_dim],
            news: None,
            vix: vec![0.0; c.vix_len],
            vol_labels: [0.0; 4],
            next_return: 0.0,
        }
    }

    #[test]
    fn temporal_split_and_validation_tail() {
        let c = NetworkConfig::tiny();
        let d0 = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let samples: Vec<Sample> = (0..100u64).rev().map(|i| blank(&c, d0 + chrono::Days::new(i))).collect();
        let ds = Dataset::from_samples(samples, d0 + chrono::Days::new(80)).unwrap();
        assert_eq!(ds.test.len(), 20);
        // span 79 days, cutoff day 71
        assert_eq!(ds.train.len(), 72);
        assert_eq!(ds.validation.len(), 8);
        assert!(ds.train.last().unwrap().date < ds.validation[0].date);
        assert!(ds.validation.last().unwrap().date < ds.test[0].date);
    }

    #[test]
    fn tiny_training_span_keeps_one_validation_sample() {
        let c = NetworkConfig::tiny();
        let d0 = NaiveDate::from_ymd_opt(2019, 1, 1).unwrap();
        let ds = Dataset::from_samples(vec![blank(&c, d0), blank(&c, d0)], d0 + chrono::Days::new(1)).unwrap();
        assert_eq!((ds.train.len(), ds.validation.len()), (1, 1));
        assert!(Dataset::from_samples(vec![], d0).is_err());
    }
}
