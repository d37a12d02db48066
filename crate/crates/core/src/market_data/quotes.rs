use std::collections::HashSet;
use std::io::{Read, Write};

use chrono::NaiveDate;

use super::{expect_fields, open_csv, parse_f64, record_line};
use crate::error::{Error, Result};

const QUOTE_HEADER: &[&str] = &["date", "ticker", "open", "high", "low", "close", "volume"];
const QUOTE_HEADER_ADJ: &[&str] = &[
    "date",
    "ticker",
    "open",
    "high",
    "low",
    "close",
    "volume",
    "adjustment",
];

/// One daily observation for one ticker, as read from the quote file.
///
/// `adjustment` is the multiplicative split factor effective on `date`:
/// every price strictly before `date` gets multiplied by it.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteRow {
    pub date: NaiveDate,
    pub ticker: String,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: u64,
    pub adjustment: f64,
}

impl QuoteRow {
    pub fn validate(&self) -> Result<()> {
        let prices = [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ];
        for (name, value) in prices {
            if !(value > 0.0) {
                return Err(Error::InvalidQuote(format!("{name} must be positive, got {value}")));
            }
        }
        let body_lo = self.open.min(self.close);
        let body_hi = self.open.max(self.close);
        if self.low > body_lo || body_hi > self.high {
            return Err(Error::InvalidQuote(format!(
                "inconsistent OHLC for {} on {}: low {} open {} close {} high {}",
                self.ticker, self.date, self.low, self.open, self.close, self.high
            )));
        }
        if !(self.adjustment > 0.0) || !self.adjustment.is_finite() {
            return Err(Error::InvalidQuote(format!(
                "adjustment must be positive, got {}",
                self.adjustment
            )));
        }
        Ok(())
    }
}

pub fn parse_date(field: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(field, "%Y-%m-%d")
        .map_err(|_| Error::Malformed(format!("`{field}` is not an ISO-8601 date")))
}

fn parse_row(record: &csv::StringRecord, with_adjustment: bool) -> Result<QuoteRow> {
    expect_fields(record, if with_adjustment { 8 } else { 7 })?;
    let ticker = record[1].to_owned();
    if ticker.is_empty() {
        return Err(Error::Malformed("empty ticker".into()));
    }
    let volume = record[6]
        .parse::<u64>()
        .map_err(|_| Error::Malformed(format!("volume: `{}` is not a non-negative integer", &record[6])))?;
    let adjustment = match with_adjustment {
        true if !record[7].is_empty() => parse_f64(&record[7], "adjustment")?,
        _ => 1.0,
    };
    let row = QuoteRow {
        date: parse_date(&record[0])?,
        ticker,
        open: parse_f64(&record[2], "open")?,
        high: parse_f64(&record[3], "high")?,
        low: parse_f64(&record[4], "low")?,
        close: parse_f64(&record[5], "close")?,
        volume,
        adjustment,
    };
    row.validate()?;
    Ok(row)
}

/// Reads the quote CSV. Rows come back in file order; every error names
/// the offending line.
pub fn parse_quotes<R: Read>(source: R) -> Result<Vec<QuoteRow>> {
    let (mut reader, layout) = open_csv(source, &[QUOTE_HEADER, QUOTE_HEADER_ADJ])?;
    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        let row = parse_row(&record, layout == 1).map_err(|e| e.at_line(line))?;
        if !seen.insert((row.ticker.clone(), row.date)) {
            return Err(Error::Duplicate {
                what: "quote",
                key: format!("{} {}", row.ticker, row.date),
            }
            .at_line(line));
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Writes rows in the eight-column layout. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_quotes<'a, W: Write>(
    sink: W,
    rows: impl IntoIterator<Item = &'a QuoteRow>,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(QUOTE_HEADER_ADJ)?;
    for row in rows {
        writer.write_record([
            row.date.format("%Y-%m-%d").to_string(),
            row.ticker.clone(),
            row.open.to_string(),
            row.high.to_string(),
            row.low.to_string(),
            row.close.to_string(),
            row.volume.to_string(),
            row.adjustment.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
