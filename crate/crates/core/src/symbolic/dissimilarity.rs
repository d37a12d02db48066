use std::io::{Read, Write};

use ndarray::Array2;

use super::table::SymbolicTable;
use super::value::{SymbolicValue, VariableKind};
use crate::error::{Error, Result};

/// Per-variable normalization used by [`dissimilarity`]. `None` marks a
/// variable that does not enter the measure through a range: modal
/// variables, and numeric ones that are constant across the table.
#[derive(Debug, Clone, PartialEq)]
pub struct DissimilaritySpec {
    pub ranges: Vec<Option<f64>>,
}

impl DissimilaritySpec {
    /// Global min-to-max span of every numeric variable.
    pub fn from_table(table: &SymbolicTable) -> Self {
        let ranges = table
            .variables()
            .iter()
            .enumerate()
            .map(|(j, var)| {
                if var.kind == VariableKind::Modal {
                    return None;
                }
                let (lo, hi) = table.rows().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), row| {
                    let i = row[j].as_interval().expect("numeric column");
                    (lo.min(i.lo()), hi.max(i.hi()))
                });
                (hi > lo).then_some(hi - lo)
            })
            .collect();
        Self { ranges }
    }
}

/// Sum over variables of range-normalized Hausdorff distances (numeric) and
/// half-L1 distances (modal).
pub fn dissimilarity(a: &[SymbolicValue], b: &[SymbolicValue], spec: &DissimilaritySpec) -> Result<f64> {
    if a.len() != b.len() || a.len() != spec.ranges.len() {
        return Err(Error::InvalidTable(format!(
            "rows of {} and {} cells for {} variables",
            a.len(),
            b.len(),
            spec.ranges.len()
        )));
    }
    let mut total = 0.0;
    for (j, (x, y)) in a.iter().zip(b).enumerate() {
        match (x, y) {
            (SymbolicValue::Modal(p), SymbolicValue::Modal(q)) => total += p.half_l1(q),
            (SymbolicValue::Modal(_), other) | (other, SymbolicValue::Modal(_)) => {
                return Err(Error::KindMismatch {
                    variable: format!("#{j}"),
                    expected: "modal".into(),
                    found: other.kind().to_string(),
                })
            }
            _ => {
                let Some(range) = spec.ranges[j] else { continue };
                if !(range > 0.0) {
                    return Err(Error::InvalidValue(format!("range {range} for variable #{j}")));
                }
                let (p, q) = (x.as_interval().unwrap(), y.as_interval().unwrap());
                total += (p.lo() - q.lo()).abs().max((p.hi() - q.hi()).abs()) / range;
            }
        }
    }
    Ok(total)
}

/// Symmetric, zero-diagonal matrix of pairwise dissimilarities.
pub fn dissimilarity_matrix(table: &SymbolicTable, spec: &DissimilaritySpec) -> Result<Array2<f64>> {
    let n = table.len();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = dissimilarity(table.row(i), table.row(j), spec)?;
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    Ok(d)
}

/// Writes a labeled square matrix: header `label,<l1>,<l2>,...`, then one
/// row per object.
pub fn write_dissimilarity<W: Write>(sink: W, labels: &[String], d: &Array2<f64>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["label".to_owned()];
    header.extend(labels.iter().cloned());
    writer.write_record(&header)?;
    for (i, label) in labels.iter().enumerate() {
        let mut record = vec![label.clone()];
        record.extend(d.row(i).iter().map(f64::to_string));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn parse_dissimilarity<R: Read>(source: R) -> Result<(Vec<String>, Array2<f64>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let header = reader.headers()?.clone();
    if header.get(0) != Some("label") {
        return Err(Error::InvalidDissimilarity("first column must be `label`".into()));
    }
    let labels: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let n = labels.len();
    let mut d = Array2::zeros((n, n));
    let mut count = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if i >= n || record.get(0) != Some(labels[i].as_str()) {
            return Err(Error::InvalidDissimilarity(format!(
                "row {} must be labeled like column {}",
                i + 1,
                i + 1
            )));
        }
        for j in 0..n {
            d[[i, j]] = crate::market_data::parse_f64(record.get(j + 1).unwrap_or(""), "dissimilarity")
                .map_err(|e| e.at_line(crate::market_data::record_line(&record)))?;
        }
        count += 1;
    }
    if count != n {
        return Err(Error::InvalidDissimilarity(format!("{count} rows for {n} columns")));
    }
    Ok((labels, d))
}
