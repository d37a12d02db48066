use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// Population mean and standard deviation of each column.
pub fn column_moments(matrix: &Array2<f64>) -> Vec<(f64, f64)> {
    let n = matrix.nrows() as f64;
    matrix
        .axis_iter(Axis(1))
        .map(|col| {
            let mean = col.sum() / n;
            let var = col.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect()
}

/// Divides every column by its population standard deviation. Returns the
/// scaled matrix and the divisor of each column, so thresholds found in the
/// scaled space can be reported in original units.
pub fn normalize(matrix: &Array2<f64>, names: &[String]) -> Result<(Array2<f64>, Vec<f64>)> {
    if matrix.nrows() < 2 {
        return Err(Error::TooFewObjects {
            needed: 2,
            found: matrix.nrows(),
        });
    }
    for (j, col) in matrix.axis_iter(Axis(1)).enumerate() {
        let first = col[0];
        if col.iter().all(|&x| x == first) {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
            return Err(Error::ZeroVariance(name));
        }
    }
    let scales: Vec<f64> = column_moments(matrix).into_iter().map(|(_, sd)| sd).collect();
    let mut out = matrix.clone();
    for (mut col, &sd) in out.axis_iter_mut(Axis(1)).zip(&scales) {
        col.mapv_inplace(|x| x / sd);
    }
    Ok((out, scales))
}
