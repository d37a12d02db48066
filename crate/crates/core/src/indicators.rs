//! Per-stock scalar indicators evaluated as of an analysis date.
//!
//! Windows count the ticker's own trading days: "1 mois" is 20 of them and
//! "2 semaines" is 10. Returns are simple close-to-close returns on
//! split-adjusted prices, and every standard deviation is a population one.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::market_data::{open_csv, parse_f64, record_line, Dataset, QuoteSeries};

/// Trading days in one month.
pub const MONTH: usize = 20;
/// Trading days in two weeks.
pub const TWO_WEEKS: usize = 10;
/// History needed for a full [`IndicatorVector`].
pub const MIN_HISTORY: usize = MONTH + 1;

fn check_window(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidWindow)
    } else {
        Ok(())
    }
}

/// The last `len` bars ending at the analysis date.
fn window(series: &QuoteSeries, at: NaiveDate, len: usize) -> Result<&[crate::market_data::Bar]> {
    let end = series.position_at(at)? + 1;
    if end < len {
        return Err(Error::InsufficientHistory {
            needed: len,
            available: end,
        });
    }
    Ok(&series.bars()[end - len..end])
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len() as f64;
    values.sum::<f64>() / n
}

/// Percent change of the close over the last `n` trading days.
pub fn performance(series: &QuoteSeries, at: NaiveDate, n: usize) -> Result<f64> {
    check_window(n)?;
    let bars = window(series, at, n + 1)?;
    let (first, last) = (bars[0].close, bars[n].close);
    Ok(100.0 * (last - first) / first)
}

/// Market value in billions of euros.
pub fn capitalization(series: &QuoteSeries, at: NaiveDate, shares_outstanding: f64) -> Result<f64> {
    let close = series.bars()[series.position_at(at)?].close;
    Ok(close * shares_outstanding / 1e9)
}

/// Mean daily traded capital (volume × close, euros) over the last `n` days.
pub fn avg_traded_capital(series: &QuoteSeries, at: NaiveDate, n: usize) -> Result<f64> {
    check_window(n)?;
    let bars = window(series, at, n)?;
    Ok(mean(bars.iter().map(|b| b.volume * b.close)))
}

/// Mean daily share turnover in per-mille of shares outstanding.
pub fn capital_volatility(
    series: &QuoteSeries,
    at: NaiveDate,
    n: usize,
    shares_outstanding: f64,
) -> Result<f64> {
    check_window(n)?;
    let bars = window(series, at, n)?;
    Ok(mean(bars.iter().map(|b| 1000.0 * b.volume / shares_outstanding)))
}

/// Population standard deviation of the last `n` daily returns, in percent.
pub fn price_volatility(series: &QuoteSeries, at: NaiveDate, n: usize) -> Result<f64> {
    check_window(n)?;
    let bars = window(series, at, n + 1)?;
    let returns: Vec<f64> = bars
        .windows(2)
        .map(|w| 100.0 * (w[1].close - w[0].close) / w[0].close)
        .collect();
    let m = mean(returns.iter().copied());
    Ok(mean(returns.iter().map(|r| (r - m) * (r - m))).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndicatorKind {
    Perf,
    CapitalVolatility,
    AvgTradedCapital,
    Capitalization,
    PriceVolatility,
}

/// A named indicator with its window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IndicatorSpec {
    pub kind: IndicatorKind,
    pub window_days: Option<usize>,
}

impl IndicatorSpec {
    pub const PERFMOIS: Self = Self::windowed(IndicatorKind::Perf, MONTH);
    pub const PERF2SEM: Self = Self::windowed(IndicatorKind::Perf, TWO_WEEKS);
    pub const VOLAT20: Self = Self::windowed(IndicatorKind::CapitalVolatility, MONTH);
    pub const VOLAT10: Self = Self::windowed(IndicatorKind::CapitalVolatility, TWO_WEEKS);
    pub const CAPIM10: Self = Self::windowed(IndicatorKind::AvgTradedCapital, TWO_WEEKS);
    pub const CAPITMDS: Self = Self {
        kind: IndicatorKind::Capitalization,
        window_days: None,
    };
    pub const SD_RET: Self = Self::windowed(IndicatorKind::PriceVolatility, MONTH);

    const fn windowed(kind: IndicatorKind, days: usize) -> Self {
        Self {
            kind,
            window_days: Some(days),
        }
    }

    pub fn evaluate(&self, series: &QuoteSeries, at: NaiveDate, shares_outstanding: f64) -> Result<f64> {
        let n = self.window_days.unwrap_or(0);
        match self.kind {
            IndicatorKind::Perf => performance(series, at, n),
            IndicatorKind::CapitalVolatility => capital_volatility(series, at, n, shares_outstanding),
            IndicatorKind::AvgTradedCapital => avg_traded_capital(series, at, n),
            IndicatorKind::Capitalization => capitalization(series, at, shares_outstanding),
            IndicatorKind::PriceVolatility => price_volatility(series, at, n),
        }
    }
}

/// Names of the standard indicators, in CSV column order.
pub const STANDARD: [(&str, IndicatorSpec); 6] = [
    ("perfmois", IndicatorSpec::PERFMOIS),
    ("perf2sem", IndicatorSpec::PERF2SEM),
    ("volat20", IndicatorSpec::VOLAT20),
    ("volat10", IndicatorSpec::VOLAT10),
    ("capim10", IndicatorSpec::CAPIM10),
    ("capitmds", IndicatorSpec::CAPITMDS),
];

pub const SD_RET: &str = "sd_ret";

/// Unit of a numeric indicator, for table descriptors.
pub fn unit_of(name: &str) -> Option<&'static str> {
    Some(match name {
        "perfmois" | "perf2sem" | "sd_ret" => "%",
        "volat20" | "volat10" => "permille",
        "capim10" => "EUR",
        "capitmds" => "GEUR",
        _ => return None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorVector {
    pub ticker: String,
    pub perfmois: f64,
    pub perf2sem: f64,
    pub volat20: f64,
    pub volat10: f64,
    pub capim10: f64,
    pub capitmds: f64,
    pub sd_ret: Option<f64>,
}

impl IndicatorVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "perfmois" => Some(self.perfmois),
            "perf2sem" => Some(self.perf2sem),
            "volat20" => Some(self.volat20),
            "volat10" => Some(self.volat10),
            "capim10" => Some(self.capim10),
            "capitmds" => Some(self.capitmds),
            SD_RET => self.sd_ret,
            _ => None,
        }
    }

    fn values(&self) -> [f64; 6] {
        [
            self.perfmois,
            self.perf2sem,
            self.volat20,
            self.volat10,
            self.capim10,
            self.capitmds,
        ]
    }
}

/// All standard indicators of `ticker` as of `at`, plus `sd_ret`.
pub fn indicator_vector(dataset: &Dataset, ticker: &str, at: NaiveDate) -> Result<IndicatorVector> {
    let series = dataset.series(ticker)?;
    let shares = dataset.instrument(ticker)?.shares_outstanding;
    let eval = |name: &'static str, spec: IndicatorSpec| {
        spec.evaluate(series, at, shares).map_err(|e| Error::Indicator {
            ticker: ticker.to_owned(),
            indicator: name,
            source: Box::new(e),
        })
    };
    let mut values = [0.0; 6];
    for (slot, (name, spec)) in values.iter_mut().zip(STANDARD) {
        *slot = eval(name, spec)?;
    }
    let [perfmois, perf2sem, volat20, volat10, capim10, capitmds] = values;
    Ok(IndicatorVector {
        ticker: ticker.to_owned(),
        perfmois,
        perf2sem,
        volat20,
        volat10,
        capim10,
        capitmds,
        sd_ret: Some(eval(SD_RET, IndicatorSpec::SD_RET)?),
    })
}

const HEADER: [&str; 7] = ["ticker", "perfmois", "perf2sem", "volat20", "volat10", "capim10", "capitmds"];
const HEADER_SD: [&str; 8] = [
    "ticker", "perfmois", "perf2sem", "volat20", "volat10", "capim10", "capitmds", "sd_ret",
];

/// Writes the indicator CSV; the `sd_ret` column appears when every vector
/// carries it.
pub fn write_indicators<W: Write>(sink: W, vectors: &[IndicatorVector]) -> Result<()> {
    let with_sd = !vectors.is_empty() && vectors.iter().all(|v| v.sd_ret.is_some());
    let mut writer = csv::Writer::from_writer(sink);
    if with_sd {
        writer.write_record(HEADER_SD)?;
    } else {
        writer.write_record(HEADER)?;
    }
    for v in vectors {
        let mut record = vec![v.ticker.clone()];
        record.extend(v.values().iter().map(f64::to_string));
        if with_sd {
            record.push(v.sd_ret.unwrap_or_default().to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn parse_indicators<R: Read>(source: R) -> Result<Vec<IndicatorVector>> {
    let (mut reader, layout) = open_csv(source, &[&HEADER, &HEADER_SD])?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        let parse = || -> Result<IndicatorVector> {
            crate::market_data::expect_fields(&record, if layout == 1 { 8 } else { 7 })?;
            let mut values = [0.0; 6];
            for (i, slot) in values.iter_mut().enumerate() {
                *slot = parse_f64(&record[i + 1], HEADER[i + 1])?;
            }
            let [perfmois, perf2sem, volat20, volat10, capim10, capitmds] = values;
            Ok(IndicatorVector {
                ticker: record[0].to_owned(),
                perfmois,
                perf2sem,
                volat20,
                volat10,
                capim10,
                capitmds,
                sd_ret: (layout == 1).then(|| parse_f64(&record[7], SD_RET)).transpose()?,
            })
        };
        out.push(parse().map_err(|e| e.at_line(line))?);
    }
    Ok(out)
}

impl fmt::Display for IndicatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IndicatorKind::Perf => "perf",
            IndicatorKind::CapitalVolatility => "capital_volatility",
            IndicatorKind::AvgTradedCapital => "avg_traded_capital",
            IndicatorKind::Capitalization => "capitalization",
            IndicatorKind::PriceVolatility => "price_volatility",
        })
    }
}

impl FromStr for IndicatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "perf" => IndicatorKind::Perf,
            "capital_volatility" => IndicatorKind::CapitalVolatility,
            "avg_traded_capital" => IndicatorKind::AvgTradedCapital,
            "capitalization" => IndicatorKind::Capitalization,
            "price_volatility" => IndicatorKind::PriceVolatility,
            other => return Err(Error::UnknownVariable(other.to_owned())),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::QuoteRow;

    fn series(closes: &[f64], volumes: &[u64]) -> QuoteSeries {
        let start = NaiveDate::from_ymd_opt(2000, 1, 3).unwrap();
        let rows = closes
            .iter()
            .zip(volumes)
            .enumerate()
            .map(|(i, (&c, &v))| QuoteRow {
                date: start + chrono::Days::new(i as u64),
                ticker: "T".into(),
                open: c,
                high: c,
                low: c,
                close: c,
                volume: v,
                adjustment: 1.0,
            })
            .collect();
        QuoteSeries::from_rows("T", rows).unwrap()
    }

    fn last(s: &QuoteSeries) -> NaiveDate {
        s.bars().last().unwrap().date
    }

    #[test]
    fn performance_examples() {
        let mut closes = vec![100.0; 11];
        closes[10] = 95.0;
        let s = series(&closes, &[1; 11]);
        assert_eq!(performance(&s, last(&s), 10).unwrap(), -5.0);

        let flat = series(&[42.0; 30], &[1; 30]);
        for n in 1..30 {
            assert_eq!(performance(&flat, last(&flat), n).unwrap(), 0.0);
        }

        let short = series(&[1.0; 10], &[1; 10]);
        assert!(matches!(
            performance(&short, last(&short), 10),
            Err(Error::InsufficientHistory { needed: 11, available: 10 })
        ));
        assert!(matches!(performance(&short, last(&short), 0), Err(Error::InvalidWindow)));
        let before = NaiveDate::from_ymd_opt(1999, 1, 1).unwrap();
        assert!(matches!(performance(&short, before, 1), Err(Error::NoQuoteBefore(_))));
    }

    #[test]
    fn capitalization_examples() {
        let s = series(&[150.0], &[1]);
        assert_eq!(capitalization(&s, last(&s), 1e9).unwrap(), 150.0);
        let s = series(&[150.324997], &[1]);
        assert!((capitalization(&s, last(&s), 1e9).unwrap() - 150.324997).abs() < 1e-12);
    }

    #[test]
    fn traded_capital_examples() {
        let s = series(&[5.0, 10.0], &[10, 20]);
        assert_eq!(avg_traded_capital(&s, last(&s), 2).unwrap(), 125.0);
        let z = series(&[5.0, 10.0], &[0, 0]);
        assert_eq!(avg_traded_capital(&z, last(&z), 2).unwrap(), 0.0);
        assert!(avg_traded_capital(&z, last(&z), 3).is_err());
    }

    #[test]
    fn capital_volatility_examples() {
        let s = series(&[10.0; 20], &[1_000_000; 20]);
        assert_eq!(capital_volatility(&s, last(&s), 20, 1e9).unwrap(), 1.0);
        let z = series(&[10.0; 20], &[0; 20]);
        assert_eq!(capital_volatility(&z, last(&z), 20, 1e9).unwrap(), 0.0);
    }

    #[test]
    fn price_volatility_examples() {
        let s = series(&[100.0, 110.0, 99.0], &[1; 3]);
        assert_eq!(price_volatility(&s, last(&s), 2).unwrap(), 10.0);
        assert_eq!(price_volatility(&s, last(&s), 1).unwrap(), 0.0);
        let flat = series(&[7.0; 5], &[1; 5]);
        assert_eq!(price_volatility(&flat, last(&flat), 4).unwrap(), 0.0);
    }

    #[test]
    fn csv_with_and_without_sd_ret() {
        let v = IndicatorVector {
            ticker: "A".into(),
            perfmois: -1.5,
            perf2sem: 0.1,
            volat20: 2.0,
            volat10: 3.0,
            capim10: 1e7,
            capitmds: 1.25,
            sd_ret: Some(0.3),
        };
        let mut buf = Vec::new();
        write_indicators(&mut buf, std::slice::from_ref(&v)).unwrap();
        assert!(buf.starts_with(b"ticker,perfmois,perf2sem,volat20,volat10,capim10,capitmds,sd_ret\n"));
        assert_eq!(parse_indicators(buf.as_slice()).unwrap(), vec![v.clone()]);

        let bare = IndicatorVector { sd_ret: None, ..v };
        let mut buf = Vec::new();
        write_indicators(&mut buf, std::slice::from_ref(&bare)).unwrap();
        assert_eq!(parse_indicators(buf.as_slice()).unwrap(), vec![bare]);
    }
}
