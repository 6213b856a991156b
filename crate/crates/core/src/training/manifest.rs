//! JSON dataset manifests. Records dated before `split_date` are training
//! samples and the rest are test samples; a record may also name its split
//! explicitly, in which case the name must agree with its date.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Result, TrainingError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub ticker: String,
    pub date: NaiveDate,
    pub audio_path: PathBuf,
    pub text_path: PathBuf,
    pub summary_path: PathBuf,
    pub answers_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub news_path: Option<PathBuf>,
    pub vix: Vec<f64>,
    pub vol_labels: [f64; 4],
    pub next_return: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub split_date: NaiveDate,
    pub records: Vec<ManifestRecord>,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn split_of(&self, r: &ManifestRecord) -> Split {
        r.split.unwrap_or(if r.date < self.split_date { Split::Train } else { Split::Test })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(TrainingError::EmptyDataset("manifest has no records".into()));
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.ticker.trim().is_empty() {
                return Err(TrainingError::Manifest(format!("record {i} has an empty ticker")));
            }
            if !r.vol_labels.iter().all(|v| v.is_finite()) || !r.next_return.is_finite() {
                return Err(TrainingError::Manifest(format!("record {i} has non-finite labels")));
            }
            if !r.vix.iter().all(|v| v.is_finite()) {
                return Err(TrainingError::Manifest(format!("record {i} has a non-finite VIX value")));
            }
        }
        let last_train = self.records.iter().filter(|r| self.split_of(r) == Split::Train).map(|r| r.date).max();
        let first_test = self.records.iter().filter(|r| self.split_of(r) == Split::Test).map(|r| r.date).min();
        if let (Some(a), Some(b)) = (last_train, first_test) {
            if b <= a {
                return Err(TrainingError::SplitViolation(format!(
                    "test date {b} does not follow training date {a}"
                )));
            }
        }
        for r in &self.records {
            let by_date = if r.date < self.split_date { Split::Train } else { Split::Test };
            if self.split_of(r) != by_date {
                return Err(TrainingError::SplitViolation(format!(
                    "{} {} is on the wrong side of split date {}",
                    r.ticker, r.date, self.split_date
                )));
            }
        }
        Ok(())
    }
}

pub fn parse_manifest(json: &str, base_dir: &Path) -> Result<DatasetManifest> {
    let mut m: DatasetManifest =
        serde_json::from_str(json).map_err(|e| TrainingError::Manifest(e.to_string()))?;
    m.base_dir = base_dir.to_path_buf();
    m.validate()?;
    Ok(m)
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path)?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new(".")))
}

pub fn save_manifest(path: &Path, m: &DatasetManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(m)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
