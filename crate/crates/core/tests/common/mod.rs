//! Fixtures and independent reference implementations shared by the
//! integration tests.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::sync::OnceLock;

use chrono::{Duration, NaiveDate};
use ndarray::Array2;
use symbourse::market_data::{Dataset, Portfolio, QuoteRow, QuoteSeries};
use symbourse::pyramid::Pyramid;
use symbourse::synth::{market_sample, SampleConfig};

pub struct Fixture {
    pub dataset: Dataset,
    pub portfolio: Portfolio,
}

/// The default synthetic market, built once per test binary.
pub fn sample() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let s = market_sample(&SampleConfig::default());
        Fixture {
            dataset: s.dataset().expect("synthetic sample builds"),
            portfolio: s.portfolio.clone(),
        }
    })
}

pub fn day(i: usize) -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).unwrap() + Duration::days(i as i64)
}

pub fn quote(i: usize, ticker: &str, close: f64, volume: u64, adjustment: f64) -> QuoteRow {
    QuoteRow {
        date: day(i),
        ticker: ticker.to_owned(),
        open: close,
        high: close,
        low: close,
        close,
        volume,
        adjustment,
    }
}

/// A series on consecutive days from closes and volumes, no splits.
pub fn series(closes: &[f64], volumes: &[u64]) -> QuoteSeries {
    let rows = closes
        .iter()
        .zip(volumes)
        .enumerate()
        .map(|(i, (&c, &v))| quote(i, "T", c, v, 1.0))
        .collect();
    QuoteSeries::from_rows("T", rows).unwrap()
}

pub fn labels(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("o{i:02}")).collect()
}

// ---------------------------------------------------------------- inertia

/// Σ_{i ∈ members} ‖x_i − g‖² / n, straight from the definition.
pub fn inertia_of(x: &Array2<f64>, members: &[usize], n: usize) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let p = x.ncols();
    let mut total = 0.0;
    for j in 0..p {
        let g: f64 = members.iter().map(|&i| x[[i, j]]).sum::<f64>() / members.len() as f64;
        total += members.iter().map(|&i| (x[[i, j]] - g).powi(2)).sum::<f64>();
    }
    total / n as f64
}

/// Each column divided by its population standard deviation.
pub fn scale_columns(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows() as f64;
    let mut out = x.clone();
    for j in 0..x.ncols() {
        let col = x.column(j);
        let mean = col.sum() / n;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        out.column_mut(j).mapv_inplace(|v| v / sd);
    }
    out
}

#[derive(Debug, Clone)]
pub struct OracleSplit {
    pub variable: usize,
    pub threshold: f64,
    pub gain: f64,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct OracleTree {
    pub splits: Vec<OracleSplit>,
    pub leaves: Vec<Vec<usize>>,
    pub explained: f64,
}

/// Greedy divisive clustering by exhaustive enumeration: every leaf, every
/// variable, every pair of consecutive distinct values, gain computed as
/// parent inertia minus both children. Near-equal gains (relative 1e-10) go
/// to the earliest leaf, then the lowest variable, then the lowest threshold.
pub fn greedy_div(x: &Array2<f64>, k: usize, normalize: bool) -> OracleTree {
    let n = x.nrows();
    let w = if normalize { scale_columns(x) } else { x.clone() };
    let all: Vec<usize> = (0..n).collect();
    let total = inertia_of(&w, &all, n);
    let mut leaves = vec![all];
    let mut splits = Vec::new();
    while leaves.len() < k {
        let mut candidates = Vec::new();
        for (li, leaf) in leaves.iter().enumerate() {
            let parent = inertia_of(&w, leaf, n);
            for j in 0..w.ncols() {
                let mut values: Vec<f64> = leaf.iter().map(|&i| w[[i, j]]).collect();
                values.sort_by(f64::total_cmp);
                values.dedup();
                for pair in values.windows(2) {
                    let (left, right): (Vec<usize>, Vec<usize>) =
                        leaf.iter().partition(|&&i| w[[i, j]] <= pair[0]);
                    let gain = parent - inertia_of(&w, &left, n) - inertia_of(&w, &right, n);
                    candidates.push((li, j, gain, left, right));
                }
            }
        }
        let Some(top) = candidates.iter().map(|c| c.2).reduce(f64::max) else {
            break;
        };
        let pick = candidates
            .into_iter()
            .find(|c| c.2 >= top - 1e-10 * top.abs())
            .unwrap();
        let (li, j, gain, mut left, mut right) = pick;
        left.sort_unstable();
        right.sort_unstable();
        let lo = left.iter().map(|&i| x[[i, j]]).fold(f64::NEG_INFINITY, f64::max);
        let hi = right.iter().map(|&i| x[[i, j]]).fold(f64::INFINITY, f64::min);
        splits.push(OracleSplit {
            variable: j,
            threshold: 0.5 * (lo + hi),
            gain,
            left: left.clone(),
            right: right.clone(),
        });
        leaves.remove(li);
        leaves.push(left);
        leaves.push(right);
    }
    let within: f64 = leaves.iter().map(|l| inertia_of(&w, l, n)).sum();
    let explained = if total > 0.0 { 100.0 * (1.0 - within / total) } else { 0.0 };
    OracleTree {
        splits,
        leaves,
        explained,
    }
}

// ---------------------------------------------------------------- pca

/// Correlation matrix of the columns of `x` (population moments) and the
/// standardized data.
pub fn correlation(x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
    let (n, p) = x.dim();
    let mut z = x.clone();
    for j in 0..p {
        let col = x.column(j);
        let mean = col.sum() / n as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        z.column_mut(j).mapv_inplace(|v| (v - mean) / sd);
    }
    let mut r = Array2::zeros((p, p));
    for a in 0..p {
        for b in 0..p {
            r[[a, b]] = (0..n).map(|i| z[[i, a]] * z[[i, b]]).sum::<f64>() / n as f64;
        }
    }
    (r, z)
}

/// Eigenpairs of a symmetric positive semi-definite matrix by power
/// iteration with deflation, largest first.
pub fn power_eigen(a: &Array2<f64>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = a.nrows();
    let mut m = a.clone();
    let mut values = Vec::new();
    let mut vectors = Vec::new();
    for k in 0..p {
        let mut v: Vec<f64> = (0..p).map(|i| 1.0 + ((i * 7 + k * 3) % 5) as f64 * 0.1).collect();
        let mut lambda = 0.0;
        for _ in 0..200_000 {
            let mut w: Vec<f64> = (0..p).map(|i| (0..p).map(|j| m[[i, j]] * v[j]).sum()).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            w.iter_mut().for_each(|x| *x /= norm);
            let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = w;
            lambda = norm;
            if delta < 1e-15 {
                break;
            }
        }
        for i in 0..p {
            for j in 0..p {
                m[[i, j]] -= lambda * v[i] * v[j];
            }
        }
        values.push(lambda);
        vectors.push(v);
    }
    (values, vectors)
}

// ---------------------------------------------------------------- pyramid

/// Structural checks written against the public fields only.
pub fn audit(p: &Pyramid) -> Result<(), String> {
    let n = p.labels().len();
    let order = p.order();
    let mut pos = vec![usize::MAX; n];
    for (i, &o) in order.iter().enumerate() {
        if o >= n || pos[o] != usize::MAX {
            return Err(format!("order {order:?} is not a permutation"));
        }
        pos[o] = i;
    }
    let clusters = p.clusters();
    let singletons: BTreeSet<usize> = clusters
        .iter()
        .filter(|c| c.members.len() == 1)
        .map(|c| c.members[0])
        .collect();
    if singletons.len() != n || clusters.iter().filter(|c| c.members.len() == 1).any(|c| c.index != 0.0) {
        return Err("singletons missing or with non-zero index".into());
    }
    if !clusters.iter().any(|c| c.members.len() == n) {
        return Err("full set missing".into());
    }
    let mut seen = BTreeSet::new();
    let mut used = vec![0usize; clusters.len()];
    let mut last_palier = 0;
    for c in clusters {
        if !seen.insert(c.members.clone()) {
            return Err(format!("cluster {:?} created twice", c.members));
        }
        let lo = c.members.iter().map(|&m| pos[m]).min().unwrap();
        let hi = c.members.iter().map(|&m| pos[m]).max().unwrap();
        if hi - lo + 1 != c.members.len() {
            return Err(format!("cluster {:?} not contiguous", c.members));
        }
        if let Some((a, b)) = c.children {
            used[a] += 1;
            used[b] += 1;
            let (ca, cb) = (&clusters[a], &clusters[b]);
            if c.index < ca.index || c.index < cb.index {
                return Err(format!("index inversion at {:?}", c.members));
            }
            let union: BTreeSet<usize> = ca.members.iter().chain(&cb.members).copied().collect();
            if union.into_iter().collect::<Vec<_>>() != c.members {
                return Err(format!("{:?} is not the union of its children", c.members));
            }
            match c.palier {
                Some(k) if k == last_palier + 1 => last_palier = k,
                other => return Err(format!("palier {other:?} after {last_palier}")),
            }
        }
    }
    if let Some(c) = used.iter().position(|&u| u > 2) {
        return Err(format!("cluster {:?} merged {} times", clusters[c].members, used[c]));
    }
    Ok(())
}

/// A binary tree with a height on every internal node.
#[derive(Debug, Clone)]
pub enum Dendro {
    Leaf(usize),
    Node(f64, Box<Dendro>, Box<Dendro>),
}

pub fn node(h: f64, a: Dendro, b: Dendro) -> Dendro {
    Dendro::Node(h, Box::new(a), Box::new(b))
}

impl Dendro {
    pub fn leaves(&self) -> Vec<usize> {
        match self {
            Dendro::Leaf(i) => vec![*i],
            Dendro::Node(_, a, b) => {
                let mut l = a.leaves();
                l.extend(b.leaves());
                l
            }
        }
    }

    /// `(sorted members, height)` of every internal node.
    pub fn clusters(&self) -> Vec<(Vec<usize>, f64)> {
        match self {
            Dendro::Leaf(_) => Vec::new(),
            Dendro::Node(h, a, b) => {
                let mut out = a.clusters();
                out.extend(b.clusters());
                let mut m = self.leaves();
                m.sort_unstable();
                out.push((m, *h));
                out
            }
        }
    }

    /// The ultrametric it induces: d(i, j) is the height of their lowest
    /// common ancestor.
    pub fn ultrametric(&self, n: usize) -> Array2<f64> {
        let mut d = Array2::zeros((n, n));
        fn fill(t: &Dendro, d: &mut Array2<f64>) {
            if let Dendro::Node(h, a, b) = t {
                for i in a.leaves() {
                    for j in b.leaves() {
                        d[[i, j]] = *h;
                        d[[j, i]] = *h;
                    }
                }
                fill(a, d);
                fill(b, d);
            }
        }
        fill(self, &mut d);
        d
    }
}

/// Non-singleton clusters of a pyramid as `(sorted labels, index)`.
pub fn labelled_paliers(p: &Pyramid) -> Vec<(Vec<String>, f64)> {
    let mut out: Vec<(Vec<String>, f64)> = p
        .paliers()
        .map(|c| {
            let mut names: Vec<String> = c.members.iter().map(|&m| p.labels()[m].clone()).collect();
            names.sort();
            (names, c.index)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
