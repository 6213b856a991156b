use std::io::Write;

use serde::{Deserialize, Serialize};

use super::dataset::Sample;
use super::{Result, TrainingError};
use crate::market::{exceedance_rate, mse, pinball_loss, QuantileLevel};
use crate::neural::{FusionNetwork, Modalities, Prediction};

/// Per-horizon MSE, pinball loss and VaR exceedance on one split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub n: usize,
    pub mse: [f64; 4],
    pub mean_mse: f64,
    /// Fraction of next-day returns strictly below the predicted VaR.
    pub exceedance: f64,
    /// Mean pinball loss of the VaR head.
    pub pinball: f64,
}

impl EvalMetrics {
    pub fn from_predictions(preds: &[Prediction], samples: &[Sample], q: QuantileLevel) -> Result<Self> {
        if samples.is_empty() {
            return Err(TrainingError::EmptyDataset("evaluation split is empty".into()));
        }
        if preds.len() != samples.len() {
            return Err(TrainingError::Config(format!("{} predictions for {} samples", preds.len(), samples.len())));
        }
        let mut m = [0.0; 4];
        for (k, slot) in m.iter_mut().enumerate() {
            let y: Vec<f64> = samples.iter().map(|s| s.vol_labels[k]).collect();
            let yh: Vec<f64> = preds.iter().map(|p| p.log_vol[k]).collect();
            *slot = mse(&y, &yh)?;
        }
        let r: Vec<f64> = samples.iter().map(|s| s.next_return).collect();
        let v: Vec<f64> = preds.iter().map(|p| p.var).collect();
        let pinball = r.iter().zip(&v).map(|(&y, &yh)| pinball_loss(y, yh, q)).sum::<f64>() / r.len() as f64;
        Ok(EvalMetrics {
            n: samples.len(),
            mse: m,
            mean_mse: m.iter().sum::<f64>() / 4.0,
            exceedance: exceedance_rate(&r, &v)?,
            pinball,
        })
    }
}

pub fn predict_all(net: &FusionNetwork, samples: &[Sample], mods: Modalities) -> Result<Vec<Prediction>> {
    samples
        .iter()
        .map(|s| Ok(net.predict(&s.input(&net.config)?, mods)?))
        .collect()
}

pub fn evaluate(net: &FusionNetwork, samples: &[Sample], mods: Modalities, q: QuantileLevel) -> Result<EvalMetrics> {
    let preds = predict_all(net, samples, mods)?;
    EvalMetrics::from_predictions(&preds, samples, q)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean multi-task loss over the training split after the epoch.
    pub train_loss: f64,
    pub train: EvalMetrics,
    pub validation: Option<EvalMetrics>,
    pub test: Option<EvalMetrics>,
}

fn cells(m: Option<&EvalMetrics>, out: &mut Vec<String>) {
    match m {
        Some(m) => {
            out.extend(m.mse.iter().map(|v| v.to_string()));
            out.push(m.mean_mse.to_string());
            out.push(m.pinball.to_string());
            out.push(m.exceedance.to_string());
        }
        None => out.extend(std::iter::repeat_n(String::new(), 7)),
    }
}

pub fn write_epoch_metrics<W: Write>(writer: W, rows: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["epoch".to_string(), "train_loss".to_string()];
    for split in ["train", "val", "test"] {
        for col in ["mse3", "mse7", "mse15", "mse30", "mean_mse", "pinball", "exceedance"] {
            header.push(format!("{split}_{col}"));
        }
    }
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.epoch.to_string(), r.train_loss.to_string()];
        cells(Some(&r.train), &mut rec);
        cells(r.validation.as_ref(), &mut rec);
        cells(r.test.as_ref(), &mut rec);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::NetworkConfig;
    use crate::training::dataset::tests::blank;
    use chrono::NaiveDate;

    fn samples() -> Vec<Sample> {
        let c = NetworkConfig::tiny();
        let d = NaiveDate::from_ymd_opt(2020, 3, 2).unwrap();
        (0..6)
            .map(|i| {
                let mut s = blank(&c, d);
                let x = i as f64;
                s.vol_labels = [-4.0 + 0.1 * x, -3.9 + 0.05 * x, -4.2 - 0.02 * x, -3.5 + 0.3 * x];
                s.next_return = 0.01 * (x - 2.5);
                s
            })
            .collect()
    }

    #[test]
    fn oracle_predictions_score_zero() {
        let s = samples();
        let preds: Vec<Prediction> = s.iter().map(|s| Prediction { log_vol: s.vol_labels, var: s.next_return }).collect();
        let m = EvalMetrics::from_predictions(&preds, &s, QuantileLevel::new(0.05).unwrap()).unwrap();
        assert_eq!(m.mse, [0.0; 4]);
        assert_eq!(m.mean_mse, 0.0);
        assert_eq!(m.pinball, 0.0);
        // strict breach convention: a threshold equal to the return is not a breach
        assert_eq!(m.exceedance, 0.0);
    }

    #[test]
    fn zero_predictor_scores_second_moment() {
        let s = samples();
        let preds = vec![Prediction { log_vol: [0.0; 4], var: 0.0 }; s.len()];
        let m = EvalMetrics::from_predictions(&preds, &s, QuantileLevel::new(0.05).unwrap()).unwrap();
        for k in 0..4 {
            let second: f64 = s.iter().map(|x| x.vol_labels[k].powi(2)).sum::<f64>() / 6.0;
            assert!((m.mse[k] - second).abs() < 1e-12);
        }
        assert!((m.mean_mse - m.mse.iter().sum::<f64>() / 4.0).abs() < 1e-12);
        assert_eq!(m.exceedance, 3.0 / 6.0);
    }

    #[test]
    fn empty_split_rejected() {
        assert!(EvalMetrics::from_predictions(&[], &[], QuantileLevel::new(0.05).unwrap()).is_err());
    }
}
