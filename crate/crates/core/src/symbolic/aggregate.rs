//! Individual rows → symbolic objects: numeric variables become
//! `[min, max]` intervals over the group, categorical ones become relative
//! frequencies.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::table::{SymbolicTable, VariableDescriptor};
use super::value::{Interval, Modal, SymbolicValue, VariableKind};
use crate::error::{Error, Result};
use crate::market_data::{Market, SectorLevel, Taxonomy};

#[derive(Debug, Clone, PartialEq)]
pub enum Observation {
    Number(f64),
    Category(String),
}

/// One individual (a stock, or a stock on one day) with the keys it can be
/// grouped by and its observed variables.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualRow {
    pub ticker: String,
    pub market: Market,
    /// Sector codes at levels l1, l2, l3.
    pub sectors: [String; 3],
    /// ISO week label such as `2000-W09`, for per-day rows.
    pub week: Option<String>,
    pub in_portfolio: bool,
    pub values: BTreeMap<String, Observation>,
}

impl IndividualRow {
    pub fn sector(&self, level: SectorLevel) -> &str {
        match level {
            SectorLevel::L1 => &self.sectors[0],
            SectorLevel::L2 => &self.sectors[1],
            SectorLevel::L3 => &self.sectors[2],
        }
    }
}

pub const PORTFOLIO_GROUP: &str = "PORTFOLIO";
pub const OUTSIDE_GROUP: &str = "OUTSIDE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GroupKey {
    All,
    Market,
    Sector(SectorLevel),
    Portfolio,
    Week,
    Ticker,
}

impl GroupKey {
    pub fn label_of(&self, row: &IndividualRow) -> Result<String> {
        Ok(match self {
            GroupKey::All => "ALL".to_owned(),
            GroupKey::Market => row.market.code().to_owned(),
            GroupKey::Sector(level) => row.sector(*level).to_owned(),
            GroupKey::Portfolio if row.in_portfolio => PORTFOLIO_GROUP.to_owned(),
            GroupKey::Portfolio => OUTSIDE_GROUP.to_owned(),
            GroupKey::Week => row.week.clone().ok_or_else(|| Error::MissingVariable {
                row: row.ticker.clone(),
                variable: "week".into(),
            })?,
            GroupKey::Ticker => row.ticker.clone(),
        })
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKey::All => f.write_str("all"),
            GroupKey::Market => f.write_str("market"),
            GroupKey::Sector(level) => write!(f, "sector_{level}"),
            GroupKey::Portfolio => f.write_str("portfolio"),
            GroupKey::Week => f.write_str("week"),
            GroupKey::Ticker => f.write_str("action"),
        }
    }
}

impl FromStr for GroupKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => GroupKey::All,
            "market" => GroupKey::Market,
            "sector_l1" => GroupKey::Sector(SectorLevel::L1),
            "sector_l2" => GroupKey::Sector(SectorLevel::L2),
            "sector_l3" => GroupKey::Sector(SectorLevel::L3),
            "portfolio" => GroupKey::Portfolio,
            "week" => GroupKey::Week,
            "action" | "ticker" => GroupKey::Ticker,
            other => return Err(Error::InvalidQuery(format!("unknown group key `{other}`"))),
        })
    }
}

fn observation<'a>(row: &'a IndividualRow, variable: &str) -> Result<&'a Observation> {
    row.values.get(variable).ok_or_else(|| Error::MissingVariable {
        row: row.ticker.clone(),
        variable: variable.to_owned(),
    })
}

/// Groups `rows` by `key` and describes each group by the requested
/// variables. Objects come out sorted by label.
pub fn aggregate(
    rows: &[IndividualRow],
    key: GroupKey,
    variables: &[VariableDescriptor],
) -> Result<SymbolicTable> {
    if rows.is_empty() {
        return Err(Error::EmptyGroups);
    }
    let mut groups: BTreeMap<String, Vec<&IndividualRow>> = BTreeMap::new();
    for row in rows {
        groups.entry(key.label_of(row)?).or_default().push(row);
    }

    let mut descriptors = Vec::with_capacity(variables.len());
    for var in variables {
        let kind = match observation(&rows[0], &var.name)? {
            Observation::Number(_) => VariableKind::Interval,
            Observation::Category(_) => VariableKind::Modal,
        };
        descriptors.push(VariableDescriptor {
            kind,
            ..var.clone()
        });
    }

    let mut labels = Vec::with_capacity(groups.len());
    let mut members = Vec::with_capacity(groups.len());
    let mut cells = Vec::with_capacity(groups.len());
    for (label, group) in groups {
        let mut row_cells = Vec::with_capacity(descriptors.len());
        for var in &descriptors {
            row_cells.push(describe_group(&group, var)?);
        }
        labels.push(label);
        members.push(group.len());
        cells.push(row_cells);
    }
    SymbolicTable::new(&key.to_string(), labels, members, descriptors, cells)
}

fn describe_group(group: &[&IndividualRow], var: &VariableDescriptor) -> Result<SymbolicValue> {
    let mismatch = |found: &str| Error::KindMismatch {
        variable: var.name.clone(),
        expected: var.kind.to_string(),
        found: found.to_owned(),
    };
    match var.kind {
        VariableKind::Modal => {
            let mut cats = Vec::with_capacity(group.len());
            for row in group {
                match observation(row, &var.name)? {
                    Observation::Category(c) => cats.push((c.as_str(), 1.0)),
                    Observation::Number(_) => return Err(mismatch("number")),
                }
            }
            Ok(SymbolicValue::Modal(Modal::from_counts(cats)?))
        }
        _ => {
            let mut span: Option<Interval> = None;
            for row in group {
                match observation(row, &var.name)? {
                    Observation::Number(x) if x.is_finite() => match span.as_mut() {
                        Some(i) => i.include(*x),
                        None => span = Some(Interval::point(*x)),
                    },
                    Observation::Number(x) => {
                        return Err(Error::InvalidValue(format!("{} = {x}", var.name)))
                    }
                    Observation::Category(_) => return Err(mismatch("category")),
                }
            }
            Ok(SymbolicValue::Interval(span.expect("groups are non-empty")))
        }
    }
}

/// Regroups a table of sectors at a coarser (or the same) taxonomy level.
/// Intervals merge by union, modal values by member-count-weighted
/// average, singles become intervals.
pub fn taxonomy_rollup(
    table: &SymbolicTable,
    taxonomy: &Taxonomy,
    target: SectorLevel,
) -> Result<SymbolicTable> {
    let source = match table.group_key().parse::<GroupKey>() {
        Ok(GroupKey::Sector(level)) if level >= target => level,
        _ => {
            return Err(Error::InvalidTable(format!(
                "cannot roll a table grouped by {} up to {}",
                table.group_key(),
                GroupKey::Sector(target)
            )))
        }
    };
    let mut parents: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in table.labels().iter().enumerate() {
        let parent = taxonomy
            .ancestor(label, source, target)
            .ok_or_else(|| Error::UnknownSector(label.clone()))?;
        parents.entry(parent).or_default().push(i);
    }

    let variables: Vec<VariableDescriptor> = table
        .variables()
        .iter()
        .map(|v| VariableDescriptor {
            kind: if v.kind == VariableKind::Single {
                VariableKind::Interval
            } else {
                v.kind
            },
            ..v.clone()
        })
        .collect();

    let mut labels = Vec::new();
    let mut members = Vec::new();
    let mut cells = Vec::new();
    for (parent, children) in parents {
        let mut row = Vec::with_capacity(variables.len());
        for j in 0..variables.len() {
            row.push(merge_cells(table, &children, j)?);
        }
        labels.push(parent.to_owned());
        members.push(children.iter().map(|&i| table.members()[i]).sum());
        cells.push(row);
    }
    SymbolicTable::new(
        &GroupKey::Sector(target).to_string(),
        labels,
        members,
        variables,
        cells,
    )
}

fn merge_cells(table: &SymbolicTable, children: &[usize], j: usize) -> Result<SymbolicValue> {
    if table.variables()[j].kind == VariableKind::Modal {
        let mut weighted = Vec::new();
        for &i in children {
            let weight = table.members()[i] as f64;
            let modal = table.row(i)[j].as_modal().expect("modal column");
            weighted.extend(modal.iter().map(|(c, p)| (c, p * weight)));
        }
        return Ok(SymbolicValue::Modal(Modal::from_counts(weighted)?));
    }
    let span = children
        .iter()
        .map(|&i| table.row(i)[j].as_interval().expect("numeric column"))
        .reduce(|a, b| a.union(&b))
        .expect("parents have children");
    Ok(SymbolicValue::Interval(span))
}
