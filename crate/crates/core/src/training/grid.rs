use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::trainer::{train, TrainConfig};
use super::{Result, TrainingError};

pub const BATCH_GRID: [usize; 3] = [2, 4, 8];
pub const LR_GRID: [f64; 4] = [1e-3, 1e-5, 1e-6, 1e-7];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub batch_sizes: Vec<usize>,
    pub lrs: Vec<f64>,
    /// Trade-off weights tried for each (batch, lr) cell.
    pub mus: Vec<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { batch_sizes: BATCH_GRID.to_vec(), lrs: LR_GRID.to_vec(), mus: vec![0.5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub cell: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub mu: f64,
    pub seed: u64,
    pub epochs_run: usize,
    pub val_mean_mse: f64,
    pub val_pinball: f64,
    pub test_mean_mse: Option<f64>,
    pub test_exceedance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    /// Cell with the lowest validation mean MSE.
    pub best: usize,
    /// Within the best (batch, lr), the mu with the lowest validation pinball
    /// loss for the VaR head.
    pub best_var_mu: f64,
}

/// Cell seeds depend only on the base seed and the cell index.
pub fn cell_seed(base: u64, cell: usize) -> u64 {
    let mut z = base.wrapping_add((cell as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn grid_search(data: &Dataset, base: &TrainConfig, spec: &GridSpec) -> Result<GridResult> {
    if spec.batch_sizes.is_empty() || spec.lrs.is_empty() || spec.mus.is_empty() {
        return Err(TrainingError::Config("every grid axis needs at least one value".into()));
    }
    let mut cells = Vec::new();
    for &b in &spec.batch_sizes {
        for &lr in &spec.lrs {
            for &mu in &spec.mus {
                cells.push((b, lr, mu));
            }
        }
    }
    let rows = cells
        .par_iter()
        .enumerate()
        .map(|(cell, &(batch_size, lr, mu))| {
            let seed = cell_seed(base.seed, cell);
            let cfg = TrainConfig { batch_size, lr, mu, seed, ..base.clone() };
            let out = train(data, &cfg)?;
            let best = out
                .metrics
                .iter()
                .find(|m| m.epoch == out.best_epoch)
                .or(out.metrics.last())
                .ok_or_else(|| TrainingError::Config(format!("cell {cell} finished no epoch")))?;
            let val = best.validation.as_ref().unwrap_or(&best.train);
            Ok(GridRow {
                cell,
                batch_size,
                lr,
                mu,
                seed,
                epochs_run: out.metrics.len(),
                val_mean_mse: val.mean_mse,
                val_pinball: val.pinball,
                test_mean_mse: best.test.as_ref().map(|t| t.mean_mse),
                test_exceedance: best.test.as_ref().map(|t| t.exceedance),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = argmin(rows.iter().map(|r| r.val_mean_mse));
    let b = &rows[best];
    let same = rows.iter().filter(|r| r.batch_size == b.batch_size && r.lr == b.lr).collect::<Vec<_>>();
    let best_var_mu = same[argmin(same.iter().map(|r| r.val_pinball))].mu;
    Ok(GridResult { best, best_var_mu, rows })
}

fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn write_grid<W: std::io::Write>(writer: W, result: &GridResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "cell",
        "batch_size",
        "lr",
        "mu",
        "seed",
        "epochs_run",
        "val_mean_mse",
        "val_pinball",
        "test_mean_mse",
        "test_exceedance",
        "best",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &result.rows {
        w.write_record([
            r.cell.to_string(),
            r.batch_size.to_string(),
            format!("{:e}", r.lr),
            r.mu.to_string(),
            r.seed.to_string(),
            r.epochs_run.to_string(),
            r.val_mean_mse.to_string(),
            r.val_pinball.to_string(),
            opt(r.test_mean_mse),
            opt(r.test_exceedance),
            (r.cell == result.best).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
