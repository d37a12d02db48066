//! Raw market data: quotes, instruments, the sector taxonomy and portfolios,
//! plus the joined [`Dataset`] the rest of the crate works from.
//!
//! All inputs are UTF-8 CSV with a fixed header, `.` as decimal separator
//! and ISO-8601 dates.

mod dataset;
mod manifest;
mod quotes;
mod reference;

use std::io::Read;

pub use dataset::{Bar, Dataset, QuoteSeries};
pub use manifest::{sha256_hex, DatasetManifest, ManifestEntry};
pub use quotes::{parse_quotes, write_quotes, QuoteRow};
pub use reference::{
    parse_instruments, parse_portfolio, parse_taxonomy, write_instruments, write_portfolio,
    write_taxonomy, Instrument, Market, Portfolio, Position, SectorLevel, Taxonomy,
};

use crate::error::{Error, Result};

/// Opens a CSV reader and checks the header against the accepted layouts.
/// Returns the index of the layout that matched.
pub(crate) fn open_csv<R: Read>(source: R, layouts: &[&[&str]]) -> Result<(csv::Reader<R>, usize)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(source);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    for (i, layout) in layouts.iter().enumerate() {
        if header.len() == layout.len() && header.iter().zip(layout.iter()).all(|(h, e)| h == e) {
            return Ok((reader, i));
        }
    }
    Err(Error::Header {
        expected: layouts
            .iter()
            .map(|l| l.join(","))
            .collect::<Vec<_>>()
            .join("` or `"),
        found: header.join(","),
    })
}

pub(crate) fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

pub(crate) fn expect_fields(record: &csv::StringRecord, count: usize) -> Result<()> {
    if record.len() != count {
        return Err(Error::Malformed(format!(
            "expected {count} fields, found {}",
            record.len()
        )));
    }
    Ok(())
}

pub(crate) fn parse_f64(field: &str, what: &str) -> Result<f64> {
    let value: f64 = field
        .parse()
        .map_err(|_| Error::Malformed(format!("{what}: `{field}` is not a number")))?;
    if !value.is_finite() {
        return Err(Error::Malformed(format!("{what}: `{field}` is not finite")));
    }
    Ok(value)
}
