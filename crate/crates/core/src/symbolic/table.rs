use std::io::{Read, Write};

use ndarray::Array2;

use super::value::{SymbolicValue, VariableKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariableDescriptor {
    pub name: String,
    pub kind: VariableKind,
    pub unit: Option<String>,
}

impl VariableDescriptor {
    pub fn new(name: &str, kind: VariableKind, unit: Option<&str>) -> Self {
        Self {
            name: name.to_owned(),
            kind,
            unit: unit.map(str::to_owned),
        }
    }
}

/// Objects × variables, each cell a [`SymbolicValue`] whose kind matches the
/// column descriptor. Also records how the objects were formed: the grouping
/// key and the number of individuals behind each object.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicTable {
    group_key: String,
    labels: Vec<String>,
    members: Vec<usize>,
    variables: Vec<VariableDescriptor>,
    cells: Vec<Vec<SymbolicValue>>,
}

impl SymbolicTable {
    pub fn new(
        group_key: &str,
        labels: Vec<String>,
        members: Vec<usize>,
        variables: Vec<VariableDescriptor>,
        cells: Vec<Vec<SymbolicValue>>,
    ) -> Result<Self> {
        if labels.len() != cells.len() || labels.len() != members.len() {
            return Err(Error::InvalidTable(format!(
                "{} labels, {} member counts, {} rows",
                labels.len(),
                members.len(),
                cells.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, label) in labels.iter().enumerate() {
            if !seen.insert(label) {
                return Err(Error::Duplicate {
                    what: "object",
                    key: label.clone(),
                });
            }
            if members[i] == 0 {
                return Err(Error::InvalidTable(format!("object `{label}` has no member")));
            }
            if cells[i].len() != variables.len() {
                return Err(Error::InvalidTable(format!(
                    "row `{label}` has {} cells for {} variables",
                    cells[i].len(),
                    variables.len()
                )));
            }
            for (cell, var) in cells[i].iter().zip(&variables) {
                if cell.kind() != var.kind {
                    return Err(Error::KindMismatch {
                        variable: var.name.clone(),
                        expected: var.kind.to_string(),
                        found: cell.kind().to_string(),
                    });
                }
            }
        }
        Ok(Self {
            group_key: group_key.to_owned(),
            labels,
            members,
            variables,
            cells,
        })
    }

    pub fn group_key(&self) -> &str {
        &self.group_key
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn variables(&self) -> &[VariableDescriptor] {
        &self.variables
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[SymbolicValue] {
        &self.cells[i]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[SymbolicValue]> {
        self.cells.iter().map(Vec::as_slice)
    }

    pub fn variable_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_owned()))
    }

    pub fn cell(&self, object: usize, variable: &str) -> Result<&SymbolicValue> {
        Ok(&self.cells[object][self.variable_index(variable)?])
    }

    /// Names of the numeric (single or interval) variables.
    pub fn numeric_variables(&self) -> Vec<String> {
        self.variables
            .iter()
            .filter(|v| v.kind.is_numeric())
            .map(|v| v.name.clone())
            .collect()
    }

    /// A copy restricted to the named variables, in the given order.
    pub fn select(&self, names: &[String]) -> Result<SymbolicTable> {
        let idx = names
            .iter()
            .map(|n| self.variable_index(n))
            .collect::<Result<Vec<_>>>()?;
        Ok(SymbolicTable {
            group_key: self.group_key.clone(),
            labels: self.labels.clone(),
            members: self.members.clone(),
            variables: idx.iter().map(|&j| self.variables[j].clone()).collect(),
            cells: self
                .cells
                .iter()
                .map(|row| idx.iter().map(|&j| row[j].clone()).collect())
                .collect(),
        })
    }

    /// Interval midpoints of the named numeric variables as an
    /// objects × variables matrix.
    pub fn midpoints(&self, names: &[String]) -> Result<Array2<f64>> {
        let idx = names
            .iter()
            .map(|n| {
                let j = self.variable_index(n)?;
                if !self.variables[j].kind.is_numeric() {
                    return Err(Error::KindMismatch {
                        variable: n.clone(),
                        expected: "numeric".into(),
                        found: self.variables[j].kind.to_string(),
                    });
                }
                Ok(j)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Array2::from_shape_fn((self.len(), idx.len()), |(i, k)| {
            self.cells[i][idx[k]]
                .as_interval()
                .expect("numeric column")
                .midpoint()
        }))
    }

    /// Writes the table CSV. The header reads
    /// `label:<group key>,members,<var>:<kind>[:<unit>],...`; cells use the
    /// `v`, `[lo:hi]` and `{cat=p;cat=p}` syntaxes.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        let mut header = vec![format!("label:{}", self.group_key), "members".to_owned()];
        header.extend(self.variables.iter().map(|v| match &v.unit {
            Some(unit) => format!("{}:{}:{}", v.name, v.kind, unit),
            None => format!("{}:{}", v.name, v.kind),
        }));
        writer.write_record(&header)?;
        for ((label, members), row) in self.labels.iter().zip(&self.members).zip(&self.cells) {
            let mut record = vec![label.clone(), members.to_string()];
            record.extend(row.iter().map(ToString::to_string));
            writer.write_record(&record)?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn parse_csv<R: Read>(source: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(source);
        let header = reader.headers()?.clone();
        let group_key = header
            .get(0)
            .and_then(|h| h.strip_prefix("label:"))
            .ok_or_else(|| Error::InvalidTable("first column must be `label:<group key>`".into()))?
            .to_owned();
        if header.get(1) != Some("members") {
            return Err(Error::InvalidTable("second column must be `members`".into()));
        }
        let variables = header
            .iter()
            .skip(2)
            .map(|h| {
                let mut parts = h.splitn(3, ':');
                let name = parts.next().unwrap_or_default();
                let kind = parts
                    .next()
                    .ok_or_else(|| Error::InvalidTable(format!("column `{h}` lacks a kind")))?
                    .parse()?;
                Ok(VariableDescriptor::new(name, kind, parts.next()))
            })
            .collect::<Result<Vec<_>>>()?;

        let (mut labels, mut members, mut cells) = (Vec::new(), Vec::new(), Vec::new());
        for record in reader.records() {
            let record = record?;
            let line = crate::market_data::record_line(&record);
            let parse = || -> Result<(String, usize, Vec<SymbolicValue>)> {
                let count = record[1]
                    .parse()
                    .map_err(|_| Error::Malformed(format!("member count `{}`", &record[1])))?;
                let row = record
                    .iter()
                    .skip(2)
                    .map(str::parse)
                    .collect::<Result<Vec<SymbolicValue>>>()?;
                Ok((record[0].to_owned(), count, row))
            };
            let (label, count, row) = parse().map_err(|e| e.at_line(line))?;
            labels.push(label);
            members.push(count);
            cells.push(row);
        }
        Self::new(&group_key, labels, members, variables, cells)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbolic::value::{Interval, Modal};

    fn sample() -> SymbolicTable {
        SymbolicTable::new(
            "sector_l3",
            vec!["A".into(), "B, Inc".into()],
            vec![3, 1],
            vec![
                VariableDescriptor::new("perfmois", VariableKind::Interval, Some("%")),
                VariableDescriptor::new("market", VariableKind::Modal, None),
                VariableDescriptor::new("x", VariableKind::Single, None),
            ],
            vec![
                vec![
                    SymbolicValue::Interval(Interval::new(-1.0, 0.1 + 0.2).unwrap()),
                    SymbolicValue::Modal(Modal::from_counts([("RM", 2.0), ("NM", 1.0)]).unwrap()),
                    SymbolicValue::Single(1e-7),
                ],
                vec![
                    SymbolicValue::Interval(Interval::point(2.5)),
                    SymbolicValue::Modal(Modal::from_counts([("SM", 1.0)]).unwrap()),
                    SymbolicValue::Single(-3.0),
                ],
            ],
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let table = sample();
        let mut buf = Vec::new();
        table.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label:sector_l3,members,perfmois:interval:%,market:modal,x:single\n"));
        assert_eq!(SymbolicTable::parse_csv(buf.as_slice()).unwrap(), table);
    }

    #[test]
    fn kind_mismatch_rejected() {
        let err = SymbolicTable::new(
            "all",
            vec!["A".into()],
            vec![1],
            vec![VariableDescriptor::new("v", VariableKind::Interval, None)],
            vec![vec![SymbolicValue::Single(1.0)]],
        );
        assert!(matches!(err, Err(Error::KindMismatch { .. })));
    }

    #[test]
    fn zero_members_rejected() {
        let err = SymbolicTable::new("all", vec!["A".into()], vec![0], vec![], vec![vec![]]);
        assert!(err.is_err());
    }

    #[test]
    fn midpoints_skip_nothing_and_reject_modal() {
        let t = sample();
        let m = t.midpoints(&["perfmois".into(), "x".into()]).unwrap();
        assert_eq!(m[[1, 0]], 2.5);
        assert_eq!(m[[1, 1]], -3.0);
        assert!(t.midpoints(&["market".into()]).is_err());
    }
}
