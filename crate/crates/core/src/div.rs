//! Monothetic divisive clustering.
//!
//! Starting from one cluster holding every object, each step picks, over all
//! current leaves, variables and midpoints between consecutive distinct
//! values, the binary question `[var <= c]` with the largest drop in
//! within-cluster inertia, and splits that leaf. Objects carry uniform
//! weights `1/n`; with normalization on, every column is first divided by
//! its population standard deviation.

use std::fmt::Write as _;
use std::io::Write;

use ndarray::{Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::symbolic::normalize;

/// Relative tolerance under which two gains count as tied.
pub const GAIN_TIE_REL: f64 = 1e-10;

fn better(gain: f64, best: f64) -> bool {
    best == f64::NEG_INFINITY || gain > best + GAIN_TIE_REL * best.abs()
}

/// A binary question on one variable; members with `value <= threshold` go
/// left. The threshold is expressed in the variable's original units.
#[derive(Debug, Clone, PartialEq)]
pub struct Cut {
    pub variable: String,
    pub variable_index: usize,
    pub threshold: f64,
}

impl Cut {
    pub fn question(&self) -> String {
        format!("[{} <= {:.6}]", self.variable, self.threshold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Left part of its parent split (`Ng`).
    Left,
    /// Right part of its parent split (`Nd`).
    Right,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DivisionNode {
    Leaf {
        class: usize,
        members: Vec<usize>,
        side: Side,
    },
    Split {
        /// 1-based execution order.
        order: usize,
        cut: Cut,
        /// Between-group inertia of the split, in the working space.
        gain: f64,
        left: Box<DivisionNode>,
        right: Box<DivisionNode>,
    },
}

impl DivisionNode {
    /// Object indices below this node, in leaf order.
    pub fn members(&self) -> Vec<usize> {
        match self {
            DivisionNode::Leaf { members, .. } => members.clone(),
            DivisionNode::Split { left, right, .. } => {
                let mut m = left.members();
                m.extend(right.members());
                m
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DivisionTree {
    pub root: DivisionNode,
    pub labels: Vec<String>,
    pub k: usize,
    /// Percent of total inertia explained by the partition.
    pub explained_inertia: f64,
    pub total_inertia: f64,
    /// Column divisors when normalization was applied.
    pub scales: Option<Vec<f64>>,
}

impl DivisionTree {
    /// `(class, members)` of every leaf, by class number.
    pub fn leaves(&self) -> Vec<(usize, Vec<usize>)> {
        fn walk(node: &DivisionNode, out: &mut Vec<(usize, Vec<usize>)>) {
            match node {
                DivisionNode::Leaf { class, members, .. } => out.push((*class, members.clone())),
                DivisionNode::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out.sort_by_key(|(c, _)| *c);
        out
    }

    /// Class of each object, in object order.
    pub fn assignments(&self) -> Vec<usize> {
        let mut classes = vec![0; self.labels.len()];
        for (class, members) in self.leaves() {
            for m in members {
                classes[m] = class;
            }
        }
        classes
    }

    /// Splits in execution order.
    pub fn splits(&self) -> Vec<(&Cut, f64, Vec<usize>, Vec<usize>)> {
        type Step<'a> = (usize, &'a Cut, f64, Vec<usize>, Vec<usize>);
        fn walk<'a>(node: &'a DivisionNode, out: &mut Vec<Step<'a>>) {
            if let DivisionNode::Split { order, cut, gain, left, right } = node {
                out.push((*order, cut, *gain, left.members(), right.members()));
                walk(left, out);
                walk(right, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out.sort_by_key(|s| s.0);
        out.into_iter().map(|(_, c, g, l, r)| (c, g, l, r)).collect()
    }

    pub fn write_assignments<W: Write>(&self, sink: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(sink);
        writer.write_record(["label", "class"])?;
        for (label, class) in self.labels.iter().zip(self.assignments()) {
            writer.write_record([label.clone(), class.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn centroid(matrix: &Array2<f64>, members: &[usize]) -> Vec<f64> {
    let mut g = vec![0.0; matrix.ncols()];
    for &i in members {
        for (gj, x) in g.iter_mut().zip(matrix.row(i)) {
            *gj += x;
        }
    }
    let n = members.len() as f64;
    g.iter_mut().for_each(|x| *x /= n);
    g
}

fn sq_dist(row: ArrayView1<f64>, g: &[f64]) -> f64 {
    row.iter().zip(g).map(|(x, c)| (x - c) * (x - c)).sum()
}

/// Inertia of `members` around their own centroid, each object weighing
/// `1 / n_total`.
pub fn within_inertia(matrix: &Array2<f64>, members: &[usize], n_total: usize) -> f64 {
    if members.is_empty() {
        return 0.0;
    }
    let g = centroid(matrix, members);
    members.iter().map(|&i| sq_dist(matrix.row(i), &g)).sum::<f64>() / n_total as f64
}

/// Σ (1/n) ‖x_i − g‖² over all rows.
pub fn total_inertia(matrix: &Array2<f64>) -> Result<f64> {
    if matrix.nrows() == 0 {
        return Err(Error::TooFewObjects { needed: 1, found: 0 });
    }
    let all: Vec<usize> = (0..matrix.nrows()).collect();
    Ok(within_inertia(matrix, &all, matrix.nrows()))
}

/// The best question for one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct CutChoice {
    pub variable_index: usize,
    /// Threshold in the units of the matrix searched.
    pub threshold: f64,
    pub gain: f64,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

/// Searches every variable and every midpoint between consecutive distinct
/// values of `members` for the largest between-group inertia
/// `(n_L n_R / n_C) ‖g_L − g_R‖² / n_total`. Ties go to the lower variable
/// index, then the lower threshold. `None` when all variables are constant
/// on the cluster.
pub fn best_cut(matrix: &Array2<f64>, members: &[usize], n_total: usize) -> Option<CutChoice> {
    let m = members.len();
    if m < 2 {
        return None;
    }
    let p = matrix.ncols();
    let total: Vec<f64> = (0..p)
        .map(|j| members.iter().map(|&i| matrix[[i, j]]).sum())
        .collect();
    let mut best: Option<(usize, usize, f64, Vec<usize>)> = None;
    let mut best_gain = f64::NEG_INFINITY;
    for j in 0..p {
        let mut order = members.to_vec();
        order.sort_by(|&a, &b| matrix[[a, j]].total_cmp(&matrix[[b, j]]).then(a.cmp(&b)));
        let mut prefix = vec![0.0; p];
        for s in 1..m {
            for (acc, x) in prefix.iter_mut().zip(matrix.row(order[s - 1])) {
                *acc += x;
            }
            if matrix[[order[s - 1], j]] == matrix[[order[s], j]] {
                continue;
            }
            let (nl, nr) = (s as f64, (m - s) as f64);
            let dist: f64 = prefix
                .iter()
                .zip(&total)
                .map(|(&l, &t)| {
                    let d = l / nl - (t - l) / nr;
                    d * d
                })
                .sum();
            let gain = nl * nr / m as f64 * dist / n_total as f64;
            if better(gain, best_gain) {
                best_gain = gain;
                best = Some((j, s, gain, order.clone()));
            }
        }
    }
    best.map(|(j, s, gain, order)| {
        let threshold = 0.5 * (matrix[[order[s - 1], j]] + matrix[[order[s], j]]);
        let mut left = order[..s].to_vec();
        let mut right = order[s..].to_vec();
        left.sort_unstable();
        right.sort_unstable();
        CutChoice {
            variable_index: j,
            threshold,
            gain,
            left,
            right,
        }
    })
}

enum Slot {
    Leaf {
        class: usize,
        members: Vec<usize>,
        side: Side,
        best: Option<CutChoice>,
    },
    Split {
        order: usize,
        cut: Cut,
        gain: f64,
        left: usize,
        right: usize,
    },
}

fn original_threshold(original: &Array2<f64>, choice: &CutChoice) -> f64 {
    let j = choice.variable_index;
    let lo = choice
        .left
        .iter()
        .map(|&i| original[[i, j]])
        .fold(f64::NEG_INFINITY, f64::max);
    let hi = choice
        .right
        .iter()
        .map(|&i| original[[i, j]])
        .fold(f64::INFINITY, f64::min);
    0.5 * (lo + hi)
}

/// Greedy divisive clustering into `k` classes.
///
/// `matrix` holds objects × variables in original units; `names` and
/// `labels` name its columns and rows. Class numbers follow the split
/// history: the left part of a split keeps its parent's number and the
/// right part takes the next unused one.
pub fn div_cluster(
    matrix: &Array2<f64>,
    names: &[String],
    labels: &[String],
    k: usize,
    normalize_columns: bool,
) -> Result<DivisionTree> {
    let n = matrix.nrows();
    if names.len() != matrix.ncols() || labels.len() != n {
        return Err(Error::InvalidTable(format!(
            "{}x{} matrix with {} names and {} labels",
            n,
            matrix.ncols(),
            names.len(),
            labels.len()
        )));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidK { k, n });
    }
    let (work, scales) = if normalize_columns {
        let (m, s) = normalize(matrix, names)?;
        (m, Some(s))
    } else {
        (matrix.clone(), None)
    };
    let total = total_inertia(&work)?;

    let all: Vec<usize> = (0..n).collect();
    let mut slots = vec![Slot::Leaf {
        class: 1,
        best: best_cut(&work, &all, n),
        members: all,
        side: Side::Left,
    }];
    let mut leaves = 1;
    while leaves < k {
        let mut chosen: Option<(usize, f64)> = None;
        for (id, slot) in slots.iter().enumerate() {
            if let Slot::Leaf { best: Some(c), .. } = slot {
                if chosen.is_none_or(|(_, g)| better(c.gain, g)) {
                    chosen = Some((id, c.gain));
                }
            }
        }
        let Some((id, _)) = chosen else { break };
        let placeholder = Slot::Split {
            order: 0,
            cut: Cut {
                variable: String::new(),
                variable_index: 0,
                threshold: 0.0,
            },
            gain: 0.0,
            left: 0,
            right: 0,
        };
        let Slot::Leaf { class, best: Some(choice), .. } = std::mem::replace(&mut slots[id], placeholder)
        else {
            unreachable!("chosen slot is a splittable leaf")
        };
        let left_id = slots.len();
        slots.push(Slot::Leaf {
            class,
            best: best_cut(&work, &choice.left, n),
            members: choice.left.clone(),
            side: Side::Left,
        });
        slots.push(Slot::Leaf {
            class: leaves + 1,
            best: best_cut(&work, &choice.right, n),
            members: choice.right.clone(),
            side: Side::Right,
        });
        slots[id] = Slot::Split {
            order: leaves,
            cut: Cut {
                variable: names[choice.variable_index].clone(),
                variable_index: choice.variable_index,
                threshold: original_threshold(matrix, &choice),
            },
            gain: choice.gain,
            left: left_id,
            right: left_id + 1,
        };
        leaves += 1;
    }

    let within: f64 = slots
        .iter()
        .map(|s| match s {
            Slot::Leaf { members, .. } => within_inertia(&work, members, n),
            Slot::Split { .. } => 0.0,
        })
        .sum();
    let explained = if total > 0.0 {
        (100.0 * (1.0 - within / total)).clamp(0.0, 100.0)
    } else {
        0.0
    };
    let tree = DivisionTree {
        root: build_node(&mut slots, 0),
        labels: labels.to_vec(),
        k: leaves,
        explained_inertia: explained,
        total_inertia: total,
        scales,
    };
    if leaves < k {
        return Err(Error::EarlyStop {
            requested: k,
            achieved: leaves,
            tree: Box::new(tree),
        });
    }
    Ok(tree)
}

fn build_node(slots: &mut [Slot], id: usize) -> DivisionNode {
    match &mut slots[id] {
        Slot::Leaf { class, members, side, .. } => DivisionNode::Leaf {
            class: *class,
            members: std::mem::take(members),
            side: *side,
        },
        Slot::Split { order, cut, gain, left, right } => {
            let (order, cut, gain, left, right) = (*order, cut.clone(), *gain, *left, *right);
            DivisionNode::Split {
                order,
                cut,
                gain,
                left: Box::new(build_node(slots, left)),
                right: Box::new(build_node(slots, right)),
            }
        }
    }
}

const MARGIN: &str = "          ";

/// Text report: header with the class count and explained inertia, then the
/// tree drawn sideways, left subtree above each split line and right
/// subtree below, `!` marking the vertical bar of every open split.
pub fn render_division_tree(tree: &DivisionTree) -> String {
    struct Row {
        depth: usize,
        text: String,
    }
    fn collect(node: &DivisionNode, depth: usize, rows: &mut Vec<Row>, spans: &mut Vec<(usize, usize, usize)>) -> usize {
        match node {
            DivisionNode::Leaf { class, members, side } => {
                let tag = match side {
                    Side::Left => "Ng",
                    Side::Right => "Nd",
                };
                rows.push(Row {
                    depth,
                    text: format!("+---- Classe {class} ({tag}={})", members.len()),
                });
                rows.len() - 1
            }
            DivisionNode::Split { order, cut, left, right, .. } => {
                let top = collect(left, depth + 1, rows, spans);
                rows.push(Row {
                    depth,
                    text: format!("!----{order}- {}", cut.question()),
                });
                let me = rows.len() - 1;
                let bottom = collect(right, depth + 1, rows, spans);
                spans.push((depth, top, bottom));
                me
            }
        }
    }

    let mut rows = Vec::new();
    let mut spans = Vec::new();
    collect(&tree.root, 0, &mut rows, &mut spans);
    let max_depth = rows.iter().map(|r| r.depth).max().unwrap_or(0);
    let bars = |depth_limit: usize, covers: &dyn Fn(usize, usize) -> bool| -> String {
        let mut s = String::new();
        for level in 0..depth_limit {
            let open = spans.iter().any(|&(d, a, b)| d == level && covers(a, b));
            s.push_str(if open { "! " } else { "  " });
        }
        s
    };

    let mut out = String::new();
    let _ = writeln!(out, "PARTITION IN {} CLUSTERS :", tree.k);
    let _ = writeln!(out, "Explicated inertia : {:.6}", tree.explained_inertia);
    out.push('\n');
    for (r, row) in rows.iter().enumerate() {
        let prefix = bars(row.depth, &|a, b| a <= r && r <= b);
        let _ = writeln!(out, "{MARGIN}{prefix}{}", row.text);
        if r + 1 < rows.len() {
            let sep = bars(max_depth, &|a, b| a <= r && r < b);
            let _ = writeln!(out, "{}", format!("{MARGIN}{sep}").trim_end());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn four_points() -> Array2<f64> {
        array![[0.0], [1.0], [10.0], [11.0]]
    }

    fn names() -> Vec<String> {
        vec!["x".into()]
    }

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("o{i}")).collect()
    }

    #[test]
    fn inertia_examples() {
        assert_eq!(total_inertia(&four_points()).unwrap(), 25.25);
        assert_eq!(total_inertia(&array![[3.0, 4.0]]).unwrap(), 0.0);
        assert_eq!(total_inertia(&array![[1.0, 2.0], [1.0, 2.0]]).unwrap(), 0.0);
        assert!(total_inertia(&Array2::zeros((0, 1))).is_err());
    }

    #[test]
    fn best_cut_examples() {
        let m = four_points();
        let c = best_cut(&m, &[0, 1, 2, 3], 4).unwrap();
        assert_eq!(c.threshold, 5.5);
        assert!((c.gain - 25.0).abs() < 1e-12);
        assert_eq!(c.left, vec![0, 1]);

        assert_eq!(best_cut(&array![[2.0], [2.0], [2.0]], &[0, 1, 2], 3), None);
        let two = best_cut(&array![[1.0], [3.0], [1.0]], &[0, 1, 2], 3).unwrap();
        assert_eq!(two.threshold, 2.0);
        assert_eq!(two.right, vec![1]);
    }

    #[test]
    fn tie_goes_to_lower_variable() {
        let m = array![[0.0, 0.0], [1.0, 1.0]];
        let c = best_cut(&m, &[0, 1], 2).unwrap();
        assert_eq!(c.variable_index, 0);
    }

    #[test]
    fn k_extremes() {
        let m = four_points();
        let one = div_cluster(&m, &names(), &labels(4), 1, true).unwrap();
        assert_eq!(one.explained_inertia, 0.0);
        let all = div_cluster(&m, &names(), &labels(4), 4, true).unwrap();
        assert_eq!(all.explained_inertia, 100.0);
        assert!(matches!(
            div_cluster(&m, &names(), &labels(4), 5, true),
            Err(Error::InvalidK { k: 5, n: 4 })
        ));
        assert!(div_cluster(&m, &names(), &labels(4), 0, true).is_err());
    }

    #[test]
    fn two_classes_on_four_points() {
        for normalize in [false, true] {
            let t = div_cluster(&four_points(), &names(), &labels(4), 2, normalize).unwrap();
            assert!((t.explained_inertia - 100.0 * 25.0 / 25.25).abs() < 1e-9);
            assert_eq!(t.assignments(), vec![1, 1, 2, 2]);
            assert_eq!(t.splits()[0].0.threshold, 5.5);
        }
    }

    #[test]
    fn early_stop_reports_achieved_k() {
        let m = array![[1.0], [1.0], [2.0]];
        match div_cluster(&m, &names(), &labels(3), 3, false) {
            Err(Error::EarlyStop { requested: 3, achieved: 2, tree }) => assert_eq!(tree.k, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_variance_with_normalization() {
        let m = array![[1.0, 5.0], [2.0, 5.0]];
        let names = vec!["a".to_string(), "flat".to_string()];
        assert!(matches!(
            div_cluster(&m, &names, &labels(2), 2, true),
            Err(Error::ZeroVariance(v)) if v == "flat"
        ));
    }

    #[test]
    fn render_single_class() {
        let t = div_cluster(&four_points(), &names(), &labels(4), 1, false).unwrap();
        assert_eq!(
            render_division_tree(&t),
            "PARTITION IN 1 CLUSTERS :\nExplicated inertia : 0.000000\n\n          +---- Classe 1 (Ng=4)\n"
        );
    }

    #[test]
    fn render_golden_four_points() {
        let t = div_cluster(&four_points(), &names(), &labels(4), 3, false).unwrap();
        let expected = "\
PARTITION IN 3 CLUSTERS :
Explicated inertia : 99.504950

            ! +---- Classe 1 (Ng=1)
            !
          ! !----2- [x <= 0.500000]
          ! !
          ! ! +---- Classe 3 (Nd=1)
          !
          !----1- [x <= 5.500000]
          !
          ! +---- Classe 2 (Nd=2)
";
        assert_eq!(render_division_tree(&t), expected);
    }
}
