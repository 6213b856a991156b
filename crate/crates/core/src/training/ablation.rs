use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::metrics::evaluate;
use super::trainer::{train, TrainConfig};
use super::{Result, TrainingError};
use crate::neural::Modalities;

/// The three module combinations compared in the ablation table.
pub const ABLATIONS: [fn() -> Modalities; 3] =
    [Modalities::audio_text, Modalities::audio_text_analysis, Modalities::audio_text_analysis_vix];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub configuration: String,
    pub mse: [f64; 4],
    pub mean_mse: f64,
}

/// Trains each configuration with the same seed and scores it on the test
/// split (the validation split when there is no test data).
pub fn ablation_run(data: &Dataset, base: &TrainConfig) -> Result<Vec<AblationRow>> {
    let eval_on = if !data.test.is_empty() {
        &data.test
    } else if !data.validation.is_empty() {
        &data.validation
    } else {
        return Err(TrainingError::EmptyDataset("ablation needs test or validation samples".into()));
    };
    ABLATIONS
        .iter()
        .map(|mods| {
            let cfg = TrainConfig { modalities: mods(), ..base.clone() };
            let out = train(data, &cfg)?;
            let m = evaluate(&out.network, eval_on, cfg.modalities, cfg.quantile())?;
            Ok(AblationRow { configuration: cfg.modalities.label(), mse: m.mse, mean_mse: m.mean_mse })
        })
        .collect()
}

pub fn write_ablation<W: std::io::Write>(writer: W, rows: &[AblationRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["configuration", "mse3", "mse7", "mse15", "mse30", "mean_mse"])?;
    for r in rows {
        let mut rec = vec![r.configuration.clone()];
        rec.extend(r.mse.iter().chain([&r.mean_mse]).map(|v| format!("{v:.6}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
