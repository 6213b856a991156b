//! CSV formats for prices (`date,adj_close`), volatility labels
//! (`date,vol3,vol7,vol15,vol30`) and VIX levels (`date,vix`).

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::Deserialize;
use thiserror::Error;

use super::{volatility_labels, MarketError, PriceSeries, ReturnSeries};

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad date {0:?}: expected ISO-8601 (YYYY-MM-DD)")]
    Date(String),
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Debug, Deserialize)]
struct PriceRow {
    date: String,
    adj_close: f64,
}

pub fn parse_date(s: &str) -> Result<NaiveDate, CsvError> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d").map_err(|_| CsvError::Date(s.to_string()))
}

pub fn read_prices<R: Read>(reader: R) -> Result<PriceSeries, CsvError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut dates = Vec::new();
    let mut prices = Vec::new();
    for row in rdr.deserialize() {
        let row: PriceRow = row?;
        dates.push(parse_date(&row.date)?);
        prices.push(row.adj_close);
    }
    Ok(PriceSeries::new(dates, prices)?)
}

pub fn write_prices<W: Write>(writer: W, prices: &PriceSeries) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "adj_close"])?;
    for (d, p) in prices.dates().iter().zip(prices.prices()) {
        w.write_record([d.to_string(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes one label row per return date. Insufficient windows and
/// zero-variance windows leave the cell empty.
pub fn write_labels<W: Write>(writer: W, returns: &ReturnSeries) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "vol3", "vol7", "vol15", "vol30"])?;
    for (d, row) in returns.dates().iter().zip(volatility_labels(returns)) {
        let mut rec = vec![d.to_string()];
        rec.extend(row.iter().map(|v| cell(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a labels CSV back into `(date, [vol3, vol7, vol15, vol30])`.
pub fn read_labels<R: Read>(reader: R) -> Result<Vec<(NaiveDate, [Option<f64>; 4])>, CsvError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let date = parse_date(&rec[0])?;
        let mut row = [None; 4];
        for (i, slot) in row.iter_mut().enumerate() {
            let s = rec.get(i + 1).unwrap_or("");
            if !s.is_empty() {
                *slot = Some(s.parse::<f64>().map_err(|e| {
                    CsvError::Market(MarketError::InvalidInput(format!("{s:?}: {e}")))
                })?);
            }
        }
        out.push((date, row));
    }
    Ok(out)
}

#[derive(Debug, Deserialize)]
struct VixRow {
    date: String,
    vix: f64,
}

pub fn read_vix<R: Read>(reader: R) -> Result<Vec<(NaiveDate, f64)>, CsvError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: VixRow = row?;
        out.push((parse_date(&row.date)?, row.vix));
    }
    Ok(out)
}

pub fn write_vix<W: Write>(writer: W, vix: &[(NaiveDate, f64)]) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "vix"])?;
    for (d, v) in vix {
        w.write_record([d.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::compute_returns;

    #[test]
    fn prices_round_trip() {
        let p = PriceSeries::from_prices(
            NaiveDate::from_ymd_opt(2021, 3, 1).unwrap(),
            vec![10.0, 10.5, 10.25, 11.125],
        )
        .unwrap();
        let mut buf = Vec::new();
        write_prices(&mut buf, &p).unwrap();
        assert!(buf.starts_with(b"date,adj_close\n2021-03-01,10\n"));
        assert_eq!(read_prices(buf.as_slice()).unwrap(), p);
    }

    #[test]
    fn vix_round_trip() {
        let d = NaiveDate::from_ymd_opt(2020, 2, 3).unwrap();
        let v = vec![(d, 0.1834), (d.succ_opt().unwrap(), 0.2)];
        let mut buf = Vec::new();
        write_vix(&mut buf, &v).unwrap();
        assert_eq!(read_vix(buf.as_slice()).unwrap(), v);
    }

    #[test]
    fn bad_date_rejected() {
        let csv = "date,adj_close\n03/01/2021,10\n";
        assert!(matches!(read_prices(csv.as_bytes()), Err(CsvError::Date(_))));
    }

    #[test]
    fn labels_schema() {
        let prices: Vec<f64> = (0..40).map(|i| 100.0 + (i as f64 * 0.7).sin()).collect();
        let p = PriceSeries::from_prices(NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(), prices).unwrap();
        let r = compute_returns(&p).unwrap();
        let mut buf = Vec::new();
        write_labels(&mut buf, &r).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("date,vol3,vol7,vol15,vol30"));
        assert_eq!(lines.next(), Some("2021-01-02,,,,"));
        let back = read_labels(buf.as_slice()).unwrap();
        assert_eq!(back.len(), r.len());
        assert!(back[3].1[0].is_some() && back[3].1[1].is_none());
    }
}
