use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::engine::{BacktestReport, DayRecord, SkippedDay};
use super::{BacktestConfig, BacktestError, Result};
use crate::bayes_var::io::write_aep_stats;
use crate::market::io::parse_date;

pub const PREDICTIONS_HEADER: [&str; 12] = [
    "date",
    "pred_3d",
    "real_3d",
    "pred_7d",
    "real_7d",
    "pred_15d",
    "real_15d",
    "pred_30d",
    "real_30d",
    "var_pred",
    "realized_return",
    "call_weight",
];

pub const VAR_PLOT_HEADER: [&str; 3] = ["date", "var_pred", "realized"];

#[derive(Serialize)]
struct Metadata<'a> {
    predictor: &'a str,
    config: &'a BacktestConfig,
    predictions: usize,
    realized_vol_days: usize,
    skipped: &'a [SkippedDay],
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `predictions.csv`, `aep_stats.csv`, `exceedance.txt`,
/// `var_plot.csv` and `metadata.json`. Floats are written in shortest
/// round-trip form so the files reproduce the report exactly.
pub fn emit_report(report: &BacktestReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let path = |name: &str| dir.join(name);

    let mut w = csv::Writer::from_path(path("predictions.csv"))?;
    w.write_record(PREDICTIONS_HEADER)?;
    for r in &report.records {
        let mut row = vec![r.date.to_string()];
        for k in 0..4 {
            row.push(r.predicted[k].to_string());
            row.push(opt(r.realized.map(|v| v[k])));
        }
        row.push(r.var_pred.to_string());
        row.push(r.realized_return.to_string());
        row.push(opt(r.call_weight));
        w.write_record(&row)?;
    }
    w.flush()?;

    write_aep_stats(BufWriter::new(File::create(path("aep_stats.csv"))?), &report.aep_stats)
        .map_err(|e| BacktestError::Format(e.to_string()))?;

    let mut f = BufWriter::new(File::create(path("exceedance.txt"))?);
    writeln!(f, "exceedance_rate: {}", report.exceedance)?;
    writeln!(f, "q: {}", report.config.q)?;
    writeln!(f, "days: {}", report.records.len())?;
    writeln!(f, "breaches: {}", report.breaches())?;
    writeln!(f, "skipped: {}", report.skipped.len())?;
    f.flush()?;

    let mut w = csv::Writer::from_path(path("var_plot.csv"))?;
    w.write_record(VAR_PLOT_HEADER)?;
    for r in &report.records {
        w.write_record([r.date.to_string(), r.var_pred.to_string(), r.realized_return.to_string()])?;
    }
    w.flush()?;

    let meta = Metadata {
        predictor: &report.predictor,
        config: &report.config,
        predictions: report.records.len(),
        realized_vol_days: report.records.iter().filter(|r| r.realized.is_some()).count(),
        skipped: &report.skipped,
    };
    let mut f = BufWriter::new(File::create(path("metadata.json"))?);
    serde_json::to_writer_pretty(&mut f, &meta)?;
    writeln!(f)?;
    f.flush()?;

    Ok(["predictions.csv", "aep_stats.csv", "exceedance.txt", "var_plot.csv", "metadata.json"]
        .iter()
        .map(|n| path(n))
        .collect())
}

/// Parses a `predictions.csv` written by [`emit_report`].
pub fn read_predictions<R: Read>(reader: R) -> Result<Vec<DayRecord>> {
    let mut rd = csv::Reader::from_reader(reader);
    if rd.headers()?.iter().ne(PREDICTIONS_HEADER) {
        return Err(BacktestError::Format("unexpected predictions header".into()));
    }
    let num = |s: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| BacktestError::Format(format!("bad number {s:?}")))
    };
    let maybe = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { num(s).map(Some) } };
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let date = parse_date(&row[0]).map_err(|e| BacktestError::Format(e.to_string()))?;
        let mut predicted = [0.0; 4];
        let mut realized = [None; 4];
        for k in 0..4 {
            predicted[k] = num(&row[1 + 2 * k])?;
            realized[k] = maybe(&row[2 + 2 * k])?;
        }
        let realized = match realized {
            [Some(a), Some(b), Some(c), Some(d)] => Some([a, b, c, d]),
            [None, None, None, None] => None,
            _ => return Err(BacktestError::Format(format!("partial realization on {date}"))),
        };
        out.push(DayRecord {
            date,
            predicted,
            realized,
            var_pred: num(&row[9])?,
            realized_return: num(&row[10])?,
            call_weight: maybe(&row[11])?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backtest::{rolling_backtest, BacktestData};
    use crate::market::ReturnSeries;
    use chrono::NaiveDate;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StudentT};

    fn report(iterations: usize) -> BacktestReport {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = StudentT::new(4.0).unwrap();
        let r: Vec<f64> = (0..400).map(|_| 0.01 * t.sample(&mut rng)).collect();
        let data = BacktestData::new(ReturnSeries::from_returns(NaiveDate::from_ymd_opt(2018, 3, 1).unwrap(), r).unwrap());
        rolling_backtest(&data, &BacktestConfig { iterations, window: 120, ..Default::default() }).unwrap()
    }

    #[test]
    fn round_trip_recomputes_exceedance() {
        let rep = report(250);
        let dir = tempfile::tempdir().unwrap();
        emit_report(&rep, dir.path()).unwrap();
        let back = read_predictions(File::open(dir.path().join("predictions.csv")).unwrap()).unwrap();
        assert_eq!(back, rep.records);
        let hits = back.iter().filter(|r| r.realized_return < r.var_pred).count();
        let rate = hits as f64 / back.len() as f64;
        assert!((rate - rep.exceedance).abs() < 1e-12);
        let txt = fs::read_to_string(dir.path().join("exceedance.txt")).unwrap();
        let first = txt.lines().next().unwrap().strip_prefix("exceedance_rate: ").unwrap();
        assert!((first.parse::<f64>().unwrap() - rep.exceedance).abs() < 1e-12);
    }

    #[test]
    fn column_schema() {
        let rep = report(1);
        let dir = tempfile::tempdir().unwrap();
        emit_report(&rep, dir.path()).unwrap();
        let pred = fs::read_to_string(dir.path().join("predictions.csv")).unwrap();
        let lines: Vec<&str> = pred.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(
            lines[0],
            "date,pred_3d,real_3d,pred_7d,real_7d,pred_15d,real_15d,pred_30d,real_30d,var_pred,realized_return,call_weight"
        );
        let plot = fs::read_to_string(dir.path().join("var_plot.csv")).unwrap();
        assert!(plot.starts_with("date,var_pred,realized\n"));
        let aep = fs::read_to_string(dir.path().join("aep_stats.csv")).unwrap();
        assert_eq!(aep.lines().count(), 5);
        assert!(aep.lines().nth(1).unwrap().starts_with("3-Day,1,"));
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("metadata.json")).unwrap()).unwrap();
        assert_eq!(meta["predictions"], 1);
        assert_eq!(meta["predictor"], "historical");
    }

    #[test]
    fn emission_is_byte_reproducible() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        emit_report(&report(40), a.path()).unwrap();
        emit_report(&report(40), b.path()).unwrap();
        for name in ["predictions.csv", "aep_stats.csv", "exceedance.txt", "var_plot.csv", "metadata.json"] {
            assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
        }
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_predictions("a,b\n1,2\n".as_bytes()).is_err());
    }
}
