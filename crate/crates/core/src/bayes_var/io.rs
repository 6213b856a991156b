//! CSV formats for the log-vol panel, posterior summaries, rolling records
//! and AEP statistics.

use std::io::{Read, Write};

use super::diagnostics::ParamSummary;
use super::panel::{LogVolPanel, PanelRow};
use super::rolling::{AepStats, RollingRecord};
use super::Result;
use crate::market::io::{parse_date, CsvError};

pub const PANEL_HEADER: [&str; 9] = ["date", "back3", "back7", "back15", "back30", "fwd3", "fwd7", "fwd15", "fwd30"];

pub const SUMMARY_HEADER: [&str; 12] = [
    "dependent",
    "independent",
    "n",
    "mean",
    "sd",
    "hdi_3",
    "hdi_97",
    "mcse_mean",
    "mcse_sd",
    "ess_bulk",
    "ess_tail",
    "r_hat",
];

pub const AEP_HEADER: [&str; 11] = ["variable", "n", "mean", "sd", "skewness", "kurtosis", "p5", "p25", "p50", "p75", "p95"];

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

pub fn write_panel<W: Write>(writer: W, panel: &LogVolPanel) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PANEL_HEADER).map_err(CsvError::from)?;
    for (d, row) in panel.dates.iter().zip(&panel.rows) {
        let mut rec = vec![d.to_string()];
        rec.extend(row.backward.iter().chain(&row.forward).map(|v| v.to_string()));
        w.write_record(&rec).map_err(CsvError::from)?;
    }
    w.flush().map_err(CsvError::from)?;
    Ok(())
}

pub fn read_panel<R: Read>(reader: R) -> Result<LogVolPanel> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers().map_err(CsvError::from)?.clone();
    if header.iter().map(str::trim).ne(PANEL_HEADER) {
        return Err(CsvError::Date(format!("unexpected panel header {header:?}")).into());
    }
    let mut dates = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(CsvError::from)?;
        dates.push(parse_date(&rec[0])?);
        let mut v = [0.0; 8];
        for (k, x) in v.iter_mut().enumerate() {
            *x = rec[k + 1]
                .trim()
                .parse()
                .map_err(|_| CsvError::Date(format!("bad number {:?}", &rec[k + 1])))?;
        }
        rows.push(PanelRow {
            backward: [v[0], v[1], v[2], v[3]],
            forward: [v[4], v[5], v[6], v[7]],
        });
    }
    LogVolPanel::new(dates, rows)
}

pub fn write_summary<W: Write>(writer: W, summary: &[ParamSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_HEADER).map_err(CsvError::from)?;
    for s in summary {
        w.write_record([
            s.dependent.clone(),
            s.independent.clone(),
            s.n.to_string(),
            f6(s.mean),
            f6(s.sd),
            f6(s.hdi_3),
            f6(s.hdi_97),
            f6(s.mcse_mean),
            f6(s.mcse_sd),
            f6(s.ess_bulk),
            f6(s.ess_tail),
            f6(s.r_hat),
        ])
        .map_err(CsvError::from)?;
    }
    w.flush().map_err(CsvError::from)?;
    Ok(())
}

pub fn write_aep_stats<W: Write>(writer: W, stats: &[AepStats]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(AEP_HEADER).map_err(CsvError::from)?;
    for s in stats {
        w.write_record([
            s.variable.clone(),
            s.n.to_string(),
            f6(s.mean),
            f6(s.sd),
            f6(s.skewness),
            f6(s.kurtosis),
            f6(s.p5),
            f6(s.p25),
            f6(s.p50),
            f6(s.p75),
            f6(s.p95),
        ])
        .map_err(CsvError::from)?;
    }
    w.flush().map_err(CsvError::from)?;
    Ok(())
}

/// One line per rolling day: predicted, realized and signed AEP for each
/// horizon.
pub fn write_rolling_records<W: Write>(writer: W, records: &[RollingRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["date".to_string()];
    for tau in [3, 7, 15, 30] {
        header.push(format!("pred{tau}"));
        header.push(format!("real{tau}"));
        header.push(format!("aep{tau}"));
    }
    w.write_record(&header).map_err(CsvError::from)?;
    for r in records {
        let mut rec = vec![r.date.to_string()];
        for k in 0..4 {
            rec.push(r.predicted[k].to_string());
            rec.push(r.realized[k].to_string());
            rec.push(r.aep[k].signed.to_string());
        }
        w.write_record(&rec).map_err(CsvError::from)?;
    }
    w.flush().map_err(CsvError::from)?;
    Ok(())
}
