//! Ascending pyramidal classification with complete linkage.
//!
//! Clusters may overlap but every cluster stays an interval of a single
//! total order of the objects, which is built up while merging: two clusters
//! living in different chains glue their chains end to end, two clusters in
//! the same chain must already sit next to each other.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::rc::Rc;
use std::fmt::Write as _;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::svg::{self, Document};

#[derive(Debug, Clone, PartialEq)]
pub struct PyramidCluster {
    /// Object indices, ascending.
    pub members: Vec<usize>,
    /// Creation rank of a merged cluster; `None` for singletons.
    pub palier: Option<usize>,
    pub index: f64,
    pub children: Option<(usize, usize)>,
    pub parents: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    labels: Vec<String>,
    order: Vec<usize>,
    clusters: Vec<PyramidCluster>,
}

impl Pyramid {
    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Object indices in base order.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Singletons first (in object order), then merged clusters by palier.
    pub fn clusters(&self) -> &[PyramidCluster] {
        &self.clusters
    }

    pub fn paliers(&self) -> impl Iterator<Item = &PyramidCluster> {
        self.clusters.iter().filter(|c| c.palier.is_some())
    }

    pub fn member_labels(&self, cluster: &PyramidCluster) -> Vec<&str> {
        let rank = self.positions();
        let mut members = cluster.members.clone();
        members.sort_by_key(|&m| rank[m]);
        members.iter().map(|&m| self.labels[m].as_str()).collect()
    }

    fn positions(&self) -> Vec<usize> {
        let mut rank = vec![0; self.order.len()];
        for (p, &o) in self.order.iter().enumerate() {
            rank[o] = p;
        }
        rank
    }

    /// Re-checks the structural invariants.
    pub fn audit(&self) -> Result<()> {
        let n = self.labels.len();
        let fail = |msg: String| Err(Error::Consistency(msg));
        let mut sorted = self.order.clone();
        sorted.sort_unstable();
        if sorted != (0..n).collect::<Vec<_>>() {
            return fail("base order is not a permutation".into());
        }
        let rank = self.positions();
        let mut seen = HashSet::new();
        let mut last_palier = 0;
        for (id, c) in self.clusters.iter().enumerate() {
            if c.members.is_empty() || !seen.insert(c.members.clone()) {
                return fail(format!("cluster {id} is empty or repeated"));
            }
            let lo = c.members.iter().map(|&m| rank[m]).min().unwrap_or(0);
            let hi = c.members.iter().map(|&m| rank[m]).max().unwrap_or(0);
            if hi - lo + 1 != c.members.len() {
                return fail(format!("cluster {id} is not contiguous in the base order"));
            }
            if c.parents.len() > 2 {
                return fail(format!("cluster {id} merged {} times", c.parents.len()));
            }
            match (id < n, c.palier, c.children) {
                (true, None, None) if c.members == [id] && c.index == 0.0 => {}
                (false, Some(p), Some((a, b))) if p > last_palier && a < id && b < id => {
                    last_palier = p;
                    if c.index < self.clusters[a].index || c.index < self.clusters[b].index {
                        return fail(format!("palier {p} index below a child"));
                    }
                }
                _ => return fail(format!("cluster {id} has inconsistent bookkeeping")),
            }
        }
        if n > 0 && !seen.contains(&(0..n).collect::<Vec<_>>()) {
            return fail("full set missing".into());
        }
        Ok(())
    }
}

/// Base order as labels, after checking every cluster is contiguous in it.
pub fn compatible_order(pyramid: &Pyramid) -> Result<Vec<String>> {
    pyramid.audit()?;
    Ok(pyramid.order.iter().map(|&o| pyramid.labels[o].clone()).collect())
}

fn check_dissimilarity(d: &Array2<f64>, n: usize) -> Result<()> {
    if d.dim() != (n, n) {
        return Err(Error::InvalidDissimilarity(format!(
            "{}x{} matrix for {n} labels",
            d.nrows(),
            d.ncols()
        )));
    }
    for i in 0..n {
        if d[[i, i]] != 0.0 {
            return Err(Error::InvalidDissimilarity(format!("nonzero diagonal at {i}")));
        }
        for j in 0..n {
            let x = d[[i, j]];
            if !x.is_finite() || x < 0.0 {
                return Err(Error::InvalidDissimilarity(format!("entry ({i},{j}) = {x}")));
            }
            if x != d[[j, i]] {
                return Err(Error::InvalidDissimilarity(format!("asymmetric at ({i},{j})")));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Layout {
    /// Union is already an interval of one chain.
    InPlace,
    /// Concatenate the two chains, reversing the flagged ones first.
    Join { reverse_a: bool, reverse_b: bool },
}

/// A candidate merge. The derived order is the merge preference: smallest
/// linkage, then smallest first labels, then larger union, then full label
/// keys. None of these change once both clusters exist.
#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct Candidate {
    /// Bits of a non-negative float, which order like the float.
    linkage: u64,
    min_a: usize,
    min_b: usize,
    union_size: Reverse<usize>,
    key_a: Rc<[usize]>,
    key_b: Rc<[usize]>,
    a: usize,
    b: usize,
}

struct Builder {
    n: usize,
    label_rank: Vec<usize>,
    /// Objects of each chain in order; emptied chains stay as holes.
    chains: Vec<Vec<usize>>,
    chain_clusters: Vec<Vec<usize>>,
    chain_of: Vec<usize>,
    /// First and last chain position of each cluster.
    span: Vec<(usize, usize)>,
    clusters: Vec<PyramidCluster>,
    /// Largest dissimilarity inside each cluster.
    diameter: Vec<f64>,
    linkage: HashMap<(usize, usize), f64>,
    active: Vec<usize>,
    /// Sorted label ranks of each cluster's members.
    keys: Vec<Rc<[usize]>>,
    heap: BinaryHeap<Reverse<Candidate>>,
}

impl Builder {
    fn link(&self, a: usize, b: usize) -> f64 {
        self.linkage[&(a.min(b), a.max(b))]
    }

    fn push(&mut self, x: usize, y: usize) {
        let (a, b) = if self.keys[x] <= self.keys[y] { (x, y) } else { (y, x) };
        let (ma, mb) = (&self.clusters[a].members, &self.clusters[b].members);
        let shared = ma.iter().filter(|m| mb.binary_search(m).is_ok()).count();
        // + 0.0 folds a negative zero into zero
        let linkage = (self.link(a, b) + 0.0).to_bits();
        self.heap.push(Reverse(Candidate {
            linkage,
            min_a: self.keys[a][0],
            min_b: self.keys[b][0],
            union_size: Reverse(ma.len() + mb.len() - shared),
            key_a: Rc::clone(&self.keys[a]),
            key_b: Rc::clone(&self.keys[b]),
            a,
            b,
        }));
    }

    fn layout(&self, a: usize, b: usize) -> Option<Layout> {
        let (ca, cb) = (self.chain_of[a], self.chain_of[b]);
        let ((sa, ea), (sb, eb)) = (self.span[a], self.span[b]);
        if ca == cb {
            if sa.max(sb) > ea.min(eb) + 1 {
                return None;
            }
            let (lo, hi) = (sa.min(sb), ea.max(eb));
            // covers "already created" and any union nested in an existing cluster
            let nested = self.chain_clusters[ca].iter().any(|&c| {
                let (s, e) = self.span[c];
                s <= lo && e >= hi
            });
            return (!nested).then_some(Layout::InPlace);
        }
        let (end_a, end_b) = (self.chains[ca].len() - 1, self.chains[cb].len() - 1);
        [(false, false), (false, true), (true, false), (true, true)]
            .into_iter()
            .find(|&(ra, rb)| {
                let a_ok = if ra { sa == 0 } else { ea == end_a };
                let b_ok = if rb { eb == end_b } else { sb == 0 };
                a_ok && b_ok
            })
            .map(|(reverse_a, reverse_b)| Layout::Join { reverse_a, reverse_b })
    }

    /// Moves chain `from` behind chain `into`, reversing either first.
    fn join(&mut self, into: usize, from: usize, reverse_into: bool, reverse_from: bool) {
        let len_into = self.chains[into].len();
        let len_from = self.chains[from].len();
        if reverse_into {
            self.chains[into].reverse();
            for &c in &self.chain_clusters[into] {
                let (s, e) = self.span[c];
                self.span[c] = (len_into - 1 - e, len_into - 1 - s);
            }
        }
        let mut objects = std::mem::take(&mut self.chains[from]);
        let moved = std::mem::take(&mut self.chain_clusters[from]);
        if reverse_from {
            objects.reverse();
        }
        for &c in &moved {
            let (s, e) = self.span[c];
            let (s, e) = if reverse_from { (len_from - 1 - e, len_from - 1 - s) } else { (s, e) };
            self.span[c] = (s + len_into, e + len_into);
            self.chain_of[c] = into;
        }
        self.chains[into].extend(objects);
        self.chain_clusters[into].extend(moved);
    }

    /// Creates `a ∪ b` and queues its pairs. Returns the new cluster's size.
    fn merge(&mut self, a: usize, b: usize, layout: Layout) -> usize {
        if let Layout::Join { reverse_a, reverse_b } = layout {
            self.join(self.chain_of[a], self.chain_of[b], reverse_a, reverse_b);
        }
        let linkage = self.link(a, b);
        let index = linkage.max(self.clusters[a].index).max(self.clusters[b].index);
        let mut members = self.clusters[a].members.clone();
        members.extend(&self.clusters[b].members);
        members.sort_unstable();
        members.dedup();
        let size = members.len();
        let id = self.clusters.len();
        for child in [a, b] {
            self.clusters[child].parents.push(id);
        }
        let chain = self.chain_of[a];
        let ((sa, ea), (sb, eb)) = (self.span[a], self.span[b]);
        self.span.push((sa.min(sb), ea.max(eb)));
        self.chain_of.push(chain);
        self.chain_clusters[chain].push(id);
        self.diameter.push(self.diameter[a].max(self.diameter[b]).max(linkage));

        self.active.retain(|&c| self.clusters[c].parents.len() < 2);
        for &other in &self.active {
            let via = |child: usize| {
                if child == other {
                    self.diameter[child]
                } else {
                    self.link(child, other)
                }
            };
            let l = via(a).max(via(b));
            self.linkage.insert((other, id), l);
        }
        let mut key: Vec<usize> = members.iter().map(|&m| self.label_rank[m]).collect();
        key.sort_unstable();
        self.keys.push(key.into());
        self.clusters.push(PyramidCluster {
            members,
            palier: Some(id + 1 - self.n),
            index,
            children: Some((a, b)),
            parents: Vec::new(),
        });
        let others: Vec<usize> = self.active.iter().copied().filter(|&c| c != a && c != b).collect();
        for other in others {
            self.push(other, id);
        }
        self.active.push(id);
        size
    }
}

/// Builds the pyramid of `labels` under dissimilarity `d`.
///
/// At each step the admissible pair with the smallest complete linkage is
/// merged; ties go to the smallest (first label of A, first label of B) in
/// string order, then to the larger union. A pair is admissible when both
/// clusters were merged fewer than twice, the union can be laid out
/// contiguously and the union is not contained in an existing cluster.
/// A pair that fails once never qualifies again, so candidates sit in one
/// queue and are dropped lazily.
pub fn pyr_cluster(d: &Array2<f64>, labels: &[String]) -> Result<Pyramid> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::TooFewObjects { needed: 1, found: 0 });
    }
    check_dissimilarity(d, n)?;
    let mut by_label: Vec<usize> = (0..n).collect();
    by_label.sort_by(|&i, &j| labels[i].cmp(&labels[j]).then(i.cmp(&j)));
    let mut label_rank = vec![0; n];
    for (r, &i) in by_label.iter().enumerate() {
        label_rank[i] = r;
    }
    let mut linkage = HashMap::new();
    for i in 0..n {
        for j in (i + 1)..n {
            linkage.insert((i, j), d[[i, j]]);
        }
    }
    let mut b = Builder {
        n,
        keys: label_rank.iter().map(|&r| Rc::from(vec![r])).collect(),
        label_rank,
        chains: (0..n).map(|i| vec![i]).collect(),
        chain_clusters: (0..n).map(|i| vec![i]).collect(),
        chain_of: (0..n).collect(),
        span: vec![(0, 0); n],
        clusters: (0..n)
            .map(|i| PyramidCluster {
                members: vec![i],
                palier: None,
                index: 0.0,
                children: None,
                parents: Vec::new(),
            })
            .collect(),
        diameter: vec![0.0; n],
        linkage,
        active: (0..n).collect(),
        heap: BinaryHeap::new(),
    };
    for i in 0..n {
        for j in (i + 1)..n {
            b.push(i, j);
        }
    }

    let mut complete = n == 1;
    while !complete {
        let Reverse(c) = b
            .heap
            .pop()
            .ok_or_else(|| Error::Consistency("no admissible merge left".into()))?;
        if b.clusters[c.a].parents.len() >= 2 || b.clusters[c.b].parents.len() >= 2 {
            continue;
        }
        if let Some(layout) = b.layout(c.a, c.b) {
            complete = b.merge(c.a, c.b, layout) == n;
        }
    }

    let order = b.chains[b.chain_of[0]].clone();
    let pyramid = Pyramid {
        labels: labels.to_vec(),
        order,
        clusters: b.clusters,
    };
    pyramid.audit()?;
    Ok(pyramid)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RenderFormat {
    Text,
    Svg,
}

pub fn render_pyramid(pyramid: &Pyramid, format: RenderFormat) -> String {
    match format {
        RenderFormat::Text => render_text(pyramid),
        RenderFormat::Svg => render_svg(pyramid),
    }
}

fn render_text(pyramid: &Pyramid) -> String {
    let mut out = String::new();
    for c in pyramid.paliers() {
        let _ = writeln!(
            out,
            "palier {}: {{{}}} index={:.6}",
            c.palier.unwrap_or(0),
            pyramid.member_labels(c).join(", "),
            c.index
        );
    }
    out
}

const STEP: f64 = 48.0;
const SIDE: f64 = 40.0;
const TOP: f64 = 30.0;
const PLOT_H: f64 = 320.0;
const LABEL_BAND: f64 = 110.0;

fn render_svg(pyramid: &Pyramid) -> String {
    let n = pyramid.labels.len();
    let width = 2.0 * SIDE + STEP * n as f64;
    let height = TOP + PLOT_H + LABEL_BAND;
    let rank = pyramid.positions();
    let top_index = pyramid.clusters.iter().map(|c| c.index).fold(0.0, f64::max);
    let base = TOP + PLOT_H;
    let y_of = |index: f64| {
        if top_index > 0.0 {
            base - index / top_index * PLOT_H
        } else {
            base
        }
    };
    let x_of = |p: usize| SIDE + STEP * (p as f64 + 0.5);
    let anchor = |c: &PyramidCluster| {
        let lo = c.members.iter().map(|&m| rank[m]).min().unwrap_or(0);
        let hi = c.members.iter().map(|&m| rank[m]).max().unwrap_or(0);
        ((x_of(lo) + x_of(hi)) / 2.0, y_of(c.index))
    };

    let mut doc = Document::new(width.ceil() as u32, height.ceil() as u32);
    doc.line(SIDE, base, width - SIDE, base, r##"stroke="#888888""##);
    for (p, &o) in pyramid.order.iter().enumerate() {
        let (x, y) = (x_of(p), base + 14.0);
        doc.text(
            x,
            y,
            &pyramid.labels[o],
            &format!(
                r#"text-anchor="end" transform="rotate(-60 {} {})""#,
                svg::num(x),
                svg::num(y)
            ),
        );
    }
    let style = r##"stroke="#7a1f1f" stroke-width="1.2" fill="none""##;
    for c in pyramid.paliers() {
        let Some((a, b)) = c.children else { continue };
        let (px, py) = anchor(c);
        let (ax, ay) = anchor(&pyramid.clusters[a]);
        let (bx, by) = anchor(&pyramid.clusters[b]);
        doc.raw(&format!(
            r#"<polyline points="{},{} {},{} {},{} {},{}" {style}/>"#,
            svg::num(ax),
            svg::num(ay),
            svg::num(ax),
            svg::num(py),
            svg::num(bx),
            svg::num(py),
            svg::num(bx),
            svg::num(by)
        ));
        doc.text(
            px,
            py - 4.0,
            &c.palier.unwrap_or(0).to_string(),
            r##"text-anchor="middle" font-size="9" fill="#7a1f1f""##,
        );
    }
    doc.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| ((b'a' + i as u8) as char).to_string()).collect()
    }

    #[test]
    fn two_objects() {
        let p = pyr_cluster(&array![[0.0, 2.5], [2.5, 0.0]], &names(2)).unwrap();
        assert_eq!(p.paliers().count(), 1);
        assert_eq!(render_pyramid(&p, RenderFormat::Text), "palier 1: {a, b} index=2.500000\n");
        assert_eq!(compatible_order(&p).unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn single_object() {
        let p = pyr_cluster(&array![[0.0]], &names(1)).unwrap();
        assert_eq!(p.clusters().len(), 1);
        assert_eq!(render_pyramid(&p, RenderFormat::Text), "");
    }

    #[test]
    fn three_points_on_a_line_overlap() {
        let d = array![[0.0, 1.0, 2.0], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]];
        let p = pyr_cluster(&d, &names(3)).unwrap();
        let sets: Vec<Vec<usize>> = p.paliers().map(|c| c.members.clone()).collect();
        assert_eq!(sets[0], vec![0, 1]);
        assert_eq!(sets[1], vec![1, 2]);
        assert_eq!(sets.last().unwrap(), &vec![0, 1, 2]);
        assert_eq!(p.clusters()[1].parents.len(), 2);
    }

    #[test]
    fn rejects_bad_matrices() {
        let l = names(2);
        assert!(pyr_cluster(&array![[0.0, 1.0], [2.0, 0.0]], &l).is_err());
        assert!(pyr_cluster(&array![[0.0, -1.0], [-1.0, 0.0]], &l).is_err());
        assert!(pyr_cluster(&array![[1.0, 1.0], [1.0, 0.0]], &l).is_err());
        assert!(pyr_cluster(&array![[0.0]], &l).is_err());
    }
}
