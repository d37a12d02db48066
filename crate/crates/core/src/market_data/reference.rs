use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use super::{expect_fields, open_csv, parse_f64, record_line};
use crate::error::{Error, Result};

const INSTRUMENT_HEADER: &[&str] = &["ticker", "name", "market", "sector_l3", "shares_outstanding"];
const TAXONOMY_HEADER: &[&str] = &["sector_l3", "sector_l2", "sector_l1"];
const PORTFOLIO_HEADER: &[&str] = &["ticker", "quantity"];

/// The four Paris market segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Market {
    /// Règlement mensuel.
    Rm,
    /// Règlement mensuel étranger.
    Rme,
    /// Second marché.
    Sm,
    /// Nouveau marché.
    Nm,
}

impl Market {
    pub const ALL: [Market; 4] = [Market::Rm, Market::Rme, Market::Sm, Market::Nm];

    pub fn code(self) -> &'static str {
        match self {
            Market::Rm => "RM",
            Market::Rme => "RME",
            Market::Sm => "SM",
            Market::Nm => "NM",
        }
    }
}

impl fmt::Display for Market {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Market {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Market::ALL
            .into_iter()
            .find(|m| m.code() == s)
            .ok_or_else(|| Error::UnknownMarket(s.to_owned()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instrument {
    pub ticker: String,
    pub name: String,
    pub market: Market,
    pub sector_l3: String,
    pub shares_outstanding: f64,
}

pub fn parse_instruments<R: Read>(source: R) -> Result<Vec<Instrument>> {
    let (mut reader, _) = open_csv(source, &[INSTRUMENT_HEADER])?;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        let parse = || -> Result<Instrument> {
            expect_fields(&record, 5)?;
            let ticker = record[0].to_owned();
            if ticker.is_empty() {
                return Err(Error::Malformed("empty ticker".into()));
            }
            let shares = parse_f64(&record[4], "shares_outstanding")?;
            if shares <= 0.0 {
                return Err(Error::NonPositiveShares(ticker));
            }
            Ok(Instrument {
                name: record[1].to_owned(),
                market: record[2].parse()?,
                sector_l3: record[3].to_owned(),
                shares_outstanding: shares,
                ticker,
            })
        };
        let instrument = parse().map_err(|e| e.at_line(line))?;
        if !seen.insert(instrument.ticker.clone()) {
            return Err(Error::Duplicate {
                what: "ticker",
                key: instrument.ticker,
            }
            .at_line(line));
        }
        out.push(instrument);
    }
    Ok(out)
}

pub fn write_instruments<'a, W: Write>(
    sink: W,
    instruments: impl IntoIterator<Item = &'a Instrument>,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(INSTRUMENT_HEADER)?;
    for i in instruments {
        writer.write_record([
            i.ticker.as_str(),
            i.name.as_str(),
            i.market.code(),
            i.sector_l3.as_str(),
            &i.shares_outstanding.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SectorLevel {
    L1,
    L2,
    L3,
}

impl SectorLevel {
    pub fn name(self) -> &'static str {
        match self {
            SectorLevel::L1 => "l1",
            SectorLevel::L2 => "l2",
            SectorLevel::L3 => "l3",
        }
    }
}

impl fmt::Display for SectorLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SectorLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" | "1" => Ok(SectorLevel::L1),
            "l2" | "2" => Ok(SectorLevel::L2),
            "l3" | "3" => Ok(SectorLevel::L3),
            other => Err(Error::InvalidQuery(format!("unknown sector level `{other}`"))),
        }
    }
}

/// Three-level sector tree: every leaf (l3) has one l2 parent, every l2 one
/// l1 parent. A code may repeat across levels (e.g. a one-child branch).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Taxonomy {
    l3_parent: BTreeMap<String, String>,
    l2_parent: BTreeMap<String, String>,
}

impl Taxonomy {
    pub fn insert(&mut self, l3: &str, l2: &str, l1: &str) -> Result<()> {
        if let Some(existing) = self.l3_parent.get(l3) {
            if existing != l2 {
                return Err(Error::Parentage {
                    child: l3.to_owned(),
                    first: existing.clone(),
                    second: l2.to_owned(),
                });
            }
            return Err(Error::Duplicate {
                what: "sector",
                key: l3.to_owned(),
            });
        }
        if let Some(existing) = self.l2_parent.get(l2) {
            if existing != l1 {
                return Err(Error::Parentage {
                    child: l2.to_owned(),
                    first: existing.clone(),
                    second: l1.to_owned(),
                });
            }
        }
        self.l3_parent.insert(l3.to_owned(), l2.to_owned());
        self.l2_parent.insert(l2.to_owned(), l1.to_owned());
        Ok(())
    }

    pub fn contains_l3(&self, l3: &str) -> bool {
        self.l3_parent.contains_key(l3)
    }

    /// The ancestor of leaf `l3` at `level`.
    pub fn rollup(&self, l3: &str, level: SectorLevel) -> Option<&str> {
        let l2 = self.l3_parent.get(l3)?;
        match level {
            SectorLevel::L3 => self.l3_parent.get_key_value(l3).map(|(k, _)| k.as_str()),
            SectorLevel::L2 => Some(l2),
            SectorLevel::L1 => self.l2_parent.get(l2).map(String::as_str),
        }
    }

    /// The ancestor at `to` of `code` read as a sector of level `from`;
    /// `None` when `to` is finer than `from` or the code is unknown.
    pub fn ancestor(&self, code: &str, from: SectorLevel, to: SectorLevel) -> Option<&str> {
        match from {
            SectorLevel::L3 => self.rollup(code, to),
            SectorLevel::L2 => {
                let (l2, l1) = self.l2_parent.get_key_value(code)?;
                match to {
                    SectorLevel::L3 => None,
                    SectorLevel::L2 => Some(l2),
                    SectorLevel::L1 => Some(l1),
                }
            }
            SectorLevel::L1 => match to {
                SectorLevel::L1 => self.l2_parent.values().find(|l1| *l1 == code).map(String::as_str),
                _ => None,
            },
        }
    }

    pub fn codes(&self, level: SectorLevel) -> BTreeSet<&str> {
        match level {
            SectorLevel::L3 => self.l3_parent.keys().map(String::as_str).collect(),
            SectorLevel::L2 => self.l2_parent.keys().map(String::as_str).collect(),
            SectorLevel::L1 => self.l2_parent.values().map(String::as_str).collect(),
        }
    }

    /// Finest level at which `code` names a sector.
    pub fn level_of(&self, code: &str) -> Option<SectorLevel> {
        [SectorLevel::L3, SectorLevel::L2, SectorLevel::L1]
            .into_iter()
            .find(|&level| self.codes(level).contains(code))
    }

    /// Rows `(l3, l2, l1)` in leaf order.
    pub fn rows(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.l3_parent.iter().map(|(l3, l2)| {
            let l1 = &self.l2_parent[l2];
            (l3.as_str(), l2.as_str(), l1.as_str())
        })
    }

    pub fn is_empty(&self) -> bool {
        self.l3_parent.is_empty()
    }
}

pub fn parse_taxonomy<R: Read>(source: R) -> Result<Taxonomy> {
    let (mut reader, _) = open_csv(source, &[TAXONOMY_HEADER])?;
    let mut taxonomy = Taxonomy::default();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        expect_fields(&record, 3).map_err(|e| e.at_line(line))?;
        if record.iter().any(str::is_empty) {
            return Err(Error::Malformed("empty sector code".into()).at_line(line));
        }
        taxonomy
            .insert(&record[0], &record[1], &record[2])
            .map_err(|e| e.at_line(line))?;
    }
    Ok(taxonomy)
}

pub fn write_taxonomy<W: Write>(sink: W, taxonomy: &Taxonomy) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(TAXONOMY_HEADER)?;
    for (l3, l2, l1) in taxonomy.rows() {
        writer.write_record([l3, l2, l1])?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Position {
    pub ticker: String,
    pub quantity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Portfolio {
    pub positions: Vec<Position>,
}

impl Portfolio {
    pub fn contains(&self, ticker: &str) -> bool {
        self.positions.iter().any(|p| p.ticker == ticker)
    }

    pub fn tickers(&self) -> impl Iterator<Item = &str> {
        self.positions.iter().map(|p| p.ticker.as_str())
    }
}

pub fn parse_portfolio<R: Read>(source: R) -> Result<Portfolio> {
    let (mut reader, _) = open_csv(source, &[PORTFOLIO_HEADER])?;
    let mut seen = HashSet::new();
    let mut positions = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record_line(&record);
        let parse = || -> Result<Position> {
            expect_fields(&record, 2)?;
            let ticker = record[0].to_owned();
            let quantity = parse_f64(&record[1], "quantity")?;
            if quantity <= 0.0 {
                return Err(Error::NonPositiveQuantity(ticker));
            }
            Ok(Position { ticker, quantity })
        };
        let position = parse().map_err(|e| e.at_line(line))?;
        if !seen.insert(position.ticker.clone()) {
            return Err(Error::Duplicate {
                what: "position",
                key: position.ticker,
            }
            .at_line(line));
        }
        positions.push(position);
    }
    if positions.is_empty() {
        return Err(Error::EmptyPortfolio);
    }
    Ok(Portfolio { positions })
}

pub fn write_portfolio<W: Write>(sink: W, portfolio: &Portfolio) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    writer.write_record(PORTFOLIO_HEADER)?;
    for p in &portfolio.positions {
        writer.write_record([p.ticker.clone(), p.quantity.to_string()])?;
    }
    writer.flush()?;
    Ok(())
}
