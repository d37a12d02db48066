//! Interval principal component analysis by the centers method.
//!
//! Interval midpoints are standardized and the correlation matrix is
//! diagonalized; each object is then drawn as the smallest rectangle
//! containing the projections of every vertex of its standardized
//! hyper-rectangle.

use std::io::Write;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::svg::{self, Document};
use crate::symbolic::{column_moments, Interval, SymbolicTable};

/// Default convergence tolerance for [`symmetric_eigen`].
pub const EIGEN_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += 2.0 * a[[i, j]] * a[[i, j]];
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi diagonalization of a symmetric matrix.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as columns, each with its largest-magnitude component
/// positive. `tol` bounds both the accepted asymmetry and the final
/// off-diagonal residual, relative to the Frobenius norm of the input.
pub fn symmetric_eigen(matrix: &Array2<f64>, tol: f64) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::InvalidTable(format!("{}x{} matrix is not square", n, matrix.ncols())));
    }
    let scale = matrix.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in (i + 1)..n {
            let gap = (matrix[[i, j]] - matrix[[j, i]]).abs();
            if gap > tol * scale.max(1.0) {
                return Err(Error::NotSymmetric { row: i, col: j, gap });
            }
        }
    }

    let mut a = matrix.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
    let mut v = Array2::<f64>::eye(n);
    let mut sweeps = 0;
    while off_diagonal_norm(&a) > tol * scale {
        if sweeps == MAX_SWEEPS {
            return Err(Error::NoConvergence {
                residual: off_diagonal_norm(&a),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a[[p, p]] -= t * apq;
                a[[q, q]] += t * apq;
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let (arp, arq) = (a[[r, p]], a[[r, q]]);
                        a[[r, p]] = c * arp - s * arq;
                        a[[p, r]] = a[[r, p]];
                        a[[r, q]] = s * arp + c * arq;
                        a[[q, r]] = a[[r, q]];
                    }
                    let (vrp, vrq) = (v[[r, p]], v[[r, q]]);
                    v[[r, p]] = c * vrp - s * vrq;
                    v[[r, q]] = s * vrp + c * vrq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vectors = Array2::zeros((n, n));
    for (k, &i) in order.iter().enumerate() {
        let mut col = v.column(i).to_owned();
        let pivot = (0..n).fold(0, |best, r| if col[r].abs() > col[best].abs() { r } else { best });
        if col[pivot] < 0.0 {
            col.mapv_inplace(|x| -x);
        }
        vectors.column_mut(k).assign(&col);
    }
    Ok((values, vectors))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub variables: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub correlation: Array2<f64>,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` holds the loadings of axis `k + 1`.
    pub axes: Array2<f64>,
    /// Percent of inertia per axis.
    pub explained: Vec<f64>,
}

impl FactorModel {
    pub fn n_axes(&self) -> usize {
        self.eigenvalues.len()
    }

    fn axis_column(&self, axis: usize) -> Result<usize> {
        if axis == 0 || axis > self.n_axes() {
            return Err(Error::InvalidAxis {
                axis,
                available: self.n_axes(),
            });
        }
        Ok(axis - 1)
    }

    /// Coordinates of a point given in original units.
    pub fn project_point(&self, point: &[f64], axes: &[usize]) -> Result<Vec<f64>> {
        let z: Vec<f64> = point
            .iter()
            .zip(self.means.iter().zip(&self.sds))
            .map(|(x, (m, s))| (x - m) / s)
            .collect();
        axes.iter()
            .map(|&a| {
                let k = self.axis_column(a)?;
                Ok(z.iter().enumerate().map(|(j, zj)| self.axes[[j, k]] * zj).sum())
            })
            .collect()
    }

    pub fn write_summary<W: Write>(&self, mut sink: W) -> Result<()> {
        writeln!(sink, "axis,eigenvalue,explained_percent")?;
        for (k, (l, e)) in self.eigenvalues.iter().zip(&self.explained).enumerate() {
            writeln!(sink, "{},{l},{e}", k + 1)?;
        }
        Ok(())
    }
}

/// Principal components of the interval midpoints of `variables`,
/// standardized by population standard deviation.
pub fn centers_pca(table: &SymbolicTable, variables: &[String]) -> Result<FactorModel> {
    if table.len() < 2 {
        return Err(Error::TooFewObjects {
            needed: 2,
            found: table.len(),
        });
    }
    if variables.is_empty() {
        return Err(Error::InvalidQuery("no variable for PCA".into()));
    }
    let mids = table.midpoints(variables)?;
    for (j, name) in variables.iter().enumerate() {
        let col = mids.column(j);
        if col.iter().all(|&x| x == col[0]) {
            return Err(Error::ZeroVariance(name.clone()));
        }
    }
    let moments = column_moments(&mids);
    let (n, p) = mids.dim();
    let z = Array2::from_shape_fn((n, p), |(i, j)| (mids[[i, j]] - moments[j].0) / moments[j].1);
    let mut correlation = z.t().dot(&z) / n as f64;
    for i in 0..p {
        for j in (i + 1)..p {
            let m = 0.5 * (correlation[[i, j]] + correlation[[j, i]]);
            correlation[[i, j]] = m;
            correlation[[j, i]] = m;
        }
    }
    let (eigenvalues, axes) = symmetric_eigen(&correlation, EIGEN_TOL)?;
    let mass: f64 = eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let explained = eigenvalues.iter().map(|l| 100.0 * l.max(0.0) / mass).collect();
    Ok(FactorModel {
        variables: variables.to_vec(),
        means: moments.iter().map(|m| m.0).collect(),
        sds: moments.iter().map(|m| m.1).collect(),
        correlation,
        eigenvalues,
        axes,
        explained,
    })
}

/// Projection of one object on a set of factor axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Rectangle {
    pub label: String,
    /// 1-based axis numbers.
    pub axes: Vec<usize>,
    pub bounds: Vec<Interval>,
}

impl Rectangle {
    pub fn is_point(&self) -> bool {
        self.bounds.iter().all(|b| b.lo() == b.hi())
    }
}

/// Projects the box `intervals` (original units, one per model variable)
/// on `axes`: per axis, the sum over variables of the min and max of the
/// loading times each standardized bound.
pub fn project_intervals(
    model: &FactorModel,
    label: &str,
    intervals: &[Interval],
    axes: &[usize],
) -> Result<Rectangle> {
    if intervals.len() != model.variables.len() {
        return Err(Error::InvalidTable(format!(
            "{} intervals for {} variables",
            intervals.len(),
            model.variables.len()
        )));
    }
    let bounds = axes
        .iter()
        .map(|&a| {
            let k = model.axis_column(a)?;
            let (mut lo, mut hi) = (0.0, 0.0);
            for (j, iv) in intervals.iter().enumerate() {
                let u = model.axes[[j, k]];
                let za = u * (iv.lo() - model.means[j]) / model.sds[j];
                let zb = u * (iv.hi() - model.means[j]) / model.sds[j];
                lo += za.min(zb);
                hi += za.max(zb);
            }
            Interval::new(lo, hi.max(lo))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Rectangle {
        label: label.to_owned(),
        axes: axes.to_vec(),
        bounds,
    })
}

/// [`project_intervals`] for object `object` of `table`.
pub fn project_rectangle(
    model: &FactorModel,
    table: &SymbolicTable,
    object: usize,
    axes: &[usize],
) -> Result<Rectangle> {
    let intervals = model
        .variables
        .iter()
        .map(|name| {
            table
                .cell(object, name)?
                .as_interval()
                .ok_or_else(|| Error::KindMismatch {
                    variable: name.clone(),
                    expected: "interval".into(),
                    found: "modal".into(),
                })
        })
        .collect::<Result<Vec<_>>>()?;
    project_intervals(model, &table.labels()[object], &intervals, axes)
}

pub fn project_all(model: &FactorModel, table: &SymbolicTable, axes: &[usize]) -> Result<Vec<Rectangle>> {
    (0..table.len())
        .map(|i| project_rectangle(model, table, i, axes))
        .collect()
}

/// `label,axis<k>_lo,axis<k>_hi,...`
pub fn write_rectangles<W: Write>(sink: W, rectangles: &[Rectangle]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    if let Some(first) = rectangles.first() {
        let mut header = vec!["label".to_owned()];
        for a in &first.axes {
            header.push(format!("axis{a}_lo"));
            header.push(format!("axis{a}_hi"));
        }
        writer.write_record(&header)?;
    }
    for r in rectangles {
        let mut record = vec![r.label.clone()];
        for b in &r.bounds {
            record.push(b.lo().to_string());
            record.push(b.hi().to_string());
        }
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 720.0;
const PAD_LEFT: f64 = 70.0;
const PAD_RIGHT: f64 = 30.0;
const PAD_TOP: f64 = 30.0;
const PAD_BOTTOM: f64 = 60.0;
const MARGIN_FRACTION: f64 = 0.05;

fn viewport(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (0.0f64, 0.0f64);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    (lo - MARGIN_FRACTION * span, hi + MARGIN_FRACTION * span)
}

/// Factor plane with one outlined, labeled rectangle per object. Axes cross
/// at the origin; titles carry the axis number and its share of inertia.
pub fn render_factor_plot(model: &FactorModel, rectangles: &[Rectangle], axes: (usize, usize)) -> Result<String> {
    if rectangles.is_empty() {
        return Err(Error::EmptyPlot);
    }
    let (ax, ay) = axes;
    let pos = |r: &Rectangle, a: usize| {
        r.axes
            .iter()
            .position(|&x| x == a)
            .ok_or(Error::InvalidAxis {
                axis: a,
                available: model.n_axes(),
            })
    };
    let mut boxes = Vec::with_capacity(rectangles.len());
    for r in rectangles {
        boxes.push((r, r.bounds[pos(r, ax)?], r.bounds[pos(r, ay)?]));
    }
    let (x0, x1) = viewport(boxes.iter().flat_map(|(_, x, _)| [x.lo(), x.hi()]));
    let (y0, y1) = viewport(boxes.iter().flat_map(|(_, _, y)| [y.lo(), y.hi()]));
    let plot_w = WIDTH - PAD_LEFT - PAD_RIGHT;
    let plot_h = HEIGHT - PAD_TOP - PAD_BOTTOM;
    let sx = |x: f64| PAD_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| PAD_TOP + (y1 - y) / (y1 - y0) * plot_h;

    let mut doc = Document::new(WIDTH as u32, HEIGHT as u32);
    doc.raw(&format!(
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#999999"/>"##,
        svg::num(PAD_LEFT),
        svg::num(PAD_TOP),
        svg::num(plot_w),
        svg::num(plot_h)
    ));
    let axis_style = r##"stroke="#444444" stroke-dasharray="4 3""##;
    doc.line(sx(x0), sy(0.0), sx(x1), sy(0.0), axis_style);
    doc.line(sx(0.0), sy(y0), sx(0.0), sy(y1), axis_style);
    let explained = |a: usize| model.explained.get(a - 1).copied().unwrap_or(0.0);
    doc.text(
        PAD_LEFT + plot_w / 2.0,
        HEIGHT - 20.0,
        &format!("Axis {ax} ({:.1}%)", explained(ax)),
        r#"text-anchor="middle" font-size="13""#,
    );
    let (tx, ty) = (20.0, PAD_TOP + plot_h / 2.0);
    doc.text(
        tx,
        ty,
        &format!("Axis {ay} ({:.1}%)", explained(ay)),
        &format!(
            r#"text-anchor="middle" font-size="13" transform="rotate(-90 {} {})""#,
            svg::num(tx),
            svg::num(ty)
        ),
    );

    let shape = r##"fill="none" stroke="#1f4e9c" stroke-width="1.2""##;
    for (r, x, y) in boxes {
        let (left, right, top, bottom) = (sx(x.lo()), sx(x.hi()), sy(y.hi()), sy(y.lo()));
        match (x.lo() == x.hi(), y.lo() == y.hi()) {
            (true, true) => doc.raw(&format!(
                r##"<circle cx="{}" cy="{}" r="3" fill="#1f4e9c"/>"##,
                svg::num(left),
                svg::num(top)
            )),
            (true, false) | (false, true) => doc.line(left, top, right, bottom, shape),
            (false, false) => doc.raw(&format!(
                r#"<rect x="{}" y="{}" width="{}" height="{}" {shape}/>"#,
                svg::num(left),
                svg::num(top),
                svg::num(right - left),
                svg::num(bottom - top)
            )),
        }
        doc.text(left + 3.0, top - 3.0, &r.label, r##"fill="#1f4e9c""##);
    }
    Ok(doc.finish())
}
