use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;

use super::manifest::sha256_hex;
use super::quotes::{write_quotes, QuoteRow};
use super::reference::{write_instruments, write_taxonomy, Instrument, Taxonomy};
use crate::error::{Error, Result};

/// A split-adjusted daily bar. Volumes become fractional once a split
/// factor has been applied to them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

/// Date-ordered quotes of one ticker, kept both raw and split-adjusted.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSeries {
    ticker: String,
    rows: Vec<QuoteRow>,
    bars: Vec<Bar>,
}

impl QuoteSeries {
    /// Sorts the rows by date and applies split factors backward: each row's
    /// prices are multiplied by the product of the adjustments of all later
    /// rows, and its volume divided by it.
    pub fn from_rows(ticker: &str, mut rows: Vec<QuoteRow>) -> Result<Self> {
        if let Some(other) = rows.iter().find(|r| r.ticker != ticker) {
            return Err(Error::InvalidQuote(format!(
                "row for `{}` in series `{ticker}`",
                other.ticker
            )));
        }
        rows.sort_by_key(|r| r.date);
        if let Some(w) = rows.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(Error::Duplicate {
                what: "quote",
                key: format!("{ticker} {}", w[0].date),
            });
        }
        let mut bars = vec![None; rows.len()];
        let mut factor = 1.0;
        for (slot, row) in bars.iter_mut().zip(&rows).rev() {
            *slot = Some(Bar {
                date: row.date,
                open: row.open * factor,
                high: row.high * factor,
                low: row.low * factor,
                close: row.close * factor,
                volume: row.volume as f64 / factor,
            });
            factor *= row.adjustment;
        }
        Ok(Self {
            ticker: ticker.to_owned(),
            rows,
            bars: bars.into_iter().flatten().collect(),
        })
    }

    pub fn ticker(&self) -> &str {
        &self.ticker
    }

    pub fn rows(&self) -> &[QuoteRow] {
        &self.rows
    }

    pub fn bars(&self) -> &[Bar] {
        &self.bars
    }

    pub fn len(&self) -> usize {
        self.bars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bars.is_empty()
    }

    /// Index of the last bar dated at or before `at`.
    pub fn position_at(&self, at: NaiveDate) -> Result<usize> {
        match self.bars.partition_point(|b| b.date <= at) {
            0 => Err(Error::NoQuoteBefore(at)),
            n => Ok(n - 1),
        }
    }

    /// Number of trading days available at or before `at`.
    pub fn history_at(&self, at: NaiveDate) -> usize {
        self.bars.partition_point(|b| b.date <= at)
    }
}

/// Joined, validated market data. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    series: BTreeMap<String, QuoteSeries>,
    instruments: BTreeMap<String, Instrument>,
    taxonomy: Taxonomy,
    calendar: Vec<NaiveDate>,
}

impl Dataset {
    pub fn build(quotes: Vec<QuoteRow>, instruments: Vec<Instrument>, taxonomy: Taxonomy) -> Result<Self> {
        if quotes.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut by_ticker: BTreeMap<String, Instrument> = BTreeMap::new();
        for instrument in instruments {
            if !taxonomy.contains_l3(&instrument.sector_l3) {
                return Err(Error::UnknownSector(instrument.sector_l3));
            }
            if by_ticker.contains_key(&instrument.ticker) {
                return Err(Error::Duplicate {
                    what: "ticker",
                    key: instrument.ticker,
                });
            }
            by_ticker.insert(instrument.ticker.clone(), instrument);
        }

        let mut grouped: BTreeMap<String, Vec<QuoteRow>> = BTreeMap::new();
        let mut dates = BTreeSet::new();
        for row in quotes {
            if !by_ticker.contains_key(&row.ticker) {
                return Err(Error::UnknownTicker(row.ticker));
            }
            dates.insert(row.date);
            grouped.entry(row.ticker.clone()).or_default().push(row);
        }
        let series = grouped
            .into_iter()
            .map(|(ticker, rows)| Ok((ticker.clone(), QuoteSeries::from_rows(&ticker, rows)?)))
            .collect::<Result<_>>()?;

        Ok(Self {
            series,
            instruments: by_ticker,
            taxonomy,
            calendar: dates.into_iter().collect(),
        })
    }

    pub fn series(&self, ticker: &str) -> Result<&QuoteSeries> {
        self.series
            .get(ticker)
            .ok_or_else(|| Error::UnknownTicker(ticker.to_owned()))
    }

    pub fn instrument(&self, ticker: &str) -> Result<&Instrument> {
        self.instruments
            .get(ticker)
            .ok_or_else(|| Error::UnknownTicker(ticker.to_owned()))
    }

    /// Quoted tickers, sorted.
    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.series.keys().map(String::as_str)
    }

    pub fn instruments(&self) -> impl Iterator<Item = &Instrument> {
        self.instruments.values()
    }

    pub fn taxonomy(&self) -> &Taxonomy {
        &self.taxonomy
    }

    pub fn calendar(&self) -> &[NaiveDate] {
        &self.calendar
    }

    pub fn last_date(&self) -> NaiveDate {
        *self.calendar.last().expect("dataset is never empty")
    }

    pub fn quote_rows(&self) -> impl Iterator<Item = &QuoteRow> {
        self.series.values().flat_map(|s| s.rows())
    }

    /// The dataset serialized to its three CSV files, in canonical order.
    pub fn to_csv(&self) -> Result<(Vec<u8>, Vec<u8>, Vec<u8>)> {
        let mut quotes = Vec::new();
        write_quotes(&mut quotes, self.quote_rows())?;
        let mut instruments = Vec::new();
        write_instruments(&mut instruments, self.instruments())?;
        let mut taxonomy = Vec::new();
        write_taxonomy(&mut taxonomy, &self.taxonomy)?;
        Ok((quotes, instruments, taxonomy))
    }

    /// SHA-256 over the canonical serialization.
    pub fn checksum(&self) -> Result<String> {
        let (q, i, t) = self.to_csv()?;
        Ok(sha256_hex(&[q, i, t].concat()))
    }
}
