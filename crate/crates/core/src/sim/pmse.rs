//! Propensity-score utility of synthetic data.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::frame::DataTable;
use crate::linalg::Matrix;
use crate::par;
use crate::rng::{fork_key, substream, StreamRng};

/// Minimum rows per class.
pub const MIN_CLASS_ROWS: usize = 10;

pub const DEFAULT_FOLDS: usize = 5;

const TAG_FOLD: u64 = 0x504D_5345_0000_0001;
const TAG_TREE: u64 = 0x504D_5345_0000_0002;

/// A probabilistic binary classifier.
pub trait Classifier: Sync {
    /// Trains on `(x, y)` and returns `P(y = 1)` for every row of `test`.
    fn fit_predict(&self, x: &Matrix, y: &[bool], test: &Matrix, rng: &mut StreamRng) -> Result<Vec<f64>>;
}

/// Predicts a fixed probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantClassifier(pub f64);

impl Classifier for ConstantClassifier {
    fn fit_predict(&self, _: &Matrix, _: &[bool], test: &Matrix, _: &mut StreamRng) -> Result<Vec<f64>> {
        Ok(vec![self.0; test.rows()])
    }
}

/// Bootstrap-aggregated Gini trees on histogram-binned features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaggedTrees {
    pub trees: usize,
    pub max_depth: usize,
    /// At most this many bins per feature.
    pub max_bins: usize,
    pub min_split: usize,
}

impl Default for BaggedTrees {
    fn default() -> Self {
        Self { trees: 50, max_depth: 6, max_bins: 64, min_split: 2 }
    }
}

/// Split points of one feature: midpoints between distinct values, thinned
/// to quantiles when there are too many.
fn bin_edges(values: &mut [f64], max_bins: usize) -> Vec<f64> {
    values.sort_by(f64::total_cmp);
    let mut distinct: Vec<f64> = Vec::new();
    for &v in values.iter() {
        if distinct.last() != Some(&v) {
            distinct.push(v);
        }
    }
    let mids: Vec<f64> = distinct.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    if mids.len() < max_bins {
        return mids;
    }
    let mut edges: Vec<f64> = (1..max_bins)
        .map(|b| {
            let pos = b * values.len() / max_bins;
            values[pos.min(values.len() - 1)]
        })
        .collect();
    edges.dedup();
    edges
}

fn bin_of(edges: &[f64], x: f64) -> u8 {
    edges.partition_point(|&e| e < x) as u8
}

fn bin_matrix(x: &Matrix, edges: &[Vec<f64>]) -> Vec<Vec<u8>> {
    (0..x.rows()).map(|i| x.row(i).iter().zip(edges).map(|(&v, e)| bin_of(e, v)).collect()).collect()
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split { feature: usize, bin: u8, left: usize, right: usize },
}

fn gini(n0: f64, n1: f64) -> f64 {
    let n = n0 + n1;
    if n == 0.0 {
        0.0
    } else {
        let p = n1 / n;
        2.0 * n * p * (1.0 - p)
    }
}

struct TreeBuilder<'a> {
    bins: &'a [Vec<u8>],
    y: &'a [bool],
    n_bins: Vec<usize>,
    config: BaggedTrees,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let n1 = rows.iter().filter(|&&i| self.y[i]).count() as f64;
        let n0 = rows.len() as f64 - n1;
        let leaf = Node::Leaf(if rows.is_empty() { 0.5 } else { n1 / rows.len() as f64 });
        if depth >= self.config.max_depth || rows.len() < self.config.min_split || n0 == 0.0 || n1 == 0.0 {
            self.nodes.push(leaf);
            return self.nodes.len() - 1;
        }
        let parent = gini(n0, n1);
        let mut best: Option<(f64, usize, u8)> = None;
        for (f, &nb) in self.n_bins.iter().enumerate() {
            if nb < 2 {
                continue;
            }
            let mut hist = vec![[0.0f64; 2]; nb];
            for &i in &rows {
                hist[self.bins[i][f] as usize][self.y[i] as usize] += 1.0;
            }
            let (mut l0, mut l1) = (0.0, 0.0);
            for (b, h) in hist.iter().enumerate().take(nb - 1) {
                l0 += h[0];
                l1 += h[1];
                if l0 + l1 == 0.0 || l0 + l1 == n0 + n1 {
                    continue;
                }
                let gain = parent - gini(l0, l1) - gini(n0 - l0, n1 - l1);
                if gain > 1e-12 && best.is_none_or(|(g, _, _)| gain > g) {
                    best = Some((gain, f, b as u8));
                }
            }
        }
        let Some((_, feature, bin)) = best else {
            self.nodes.push(leaf);
            return self.nodes.len() - 1;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = rows.into_iter().partition(|&i| self.bins[i][feature] <= bin);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf(0.5));
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[at] = Node::Split { feature, bin, left, right };
        at
    }
}

fn predict(nodes: &[Node], row: &[u8]) -> f64 {
    let mut at = 0;
    loop {
        match nodes[at] {
            Node::Leaf(p) => return p,
            Node::Split { feature, bin, left, right } => {
                at = if row[feature] <= bin { left } else { right };
            }
        }
    }
}

impl Classifier for BaggedTrees {
    fn fit_predict(&self, x: &Matrix, y: &[bool], test: &Matrix, rng: &mut StreamRng) -> Result<Vec<f64>> {
        if x.rows() != y.len() || x.rows() == 0 || x.cols() != test.cols() {
            return Err(Error::Shape("training and test data do not match".into()));
        }
        let edges: Vec<Vec<f64>> =
            (0..x.cols()).map(|f| bin_edges(&mut x.col(f), self.max_bins.clamp(2, 256))).collect();
        let n_bins: Vec<usize> = edges.iter().map(|e| e.len() + 1).collect();
        let train = bin_matrix(x, &edges);
        let held = bin_matrix(test, &edges);
        let key = fork_key(rng);
        let n = x.rows();
        let per_tree: Vec<Vec<f64>> = par::map_indexed(self.trees, |t| {
            let mut r = substream(key, TAG_TREE, t as u64);
            let rows: Vec<usize> = (0..n).map(|_| r.random_range(0..n)).collect();
            let mut builder = TreeBuilder { bins: &train, y, n_bins: n_bins.clone(), config: *self, nodes: Vec::new() };
            builder.grow(rows, 0);
            held.iter().map(|row| predict(&builder.nodes, row)).collect()
        });
        let mut out = vec![0.0; test.rows()];
        for p in &per_tree {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v / self.trees as f64;
            }
        }
        Ok(out)
    }
}

/// pMSE with the default classifier and fold count.
pub fn pmse_evaluate<R: Rng + ?Sized>(real: &DataTable, synthetic: &DataTable, rng: &mut R) -> Result<f64> {
    pmse_with(real, synthetic, DEFAULT_FOLDS, &BaggedTrees::default(), rng)
}

/// Stacks `real` (label 0) over `synthetic` (label 1) and returns the mean
/// over stratified folds of the held-out `mean (p - 0.5)^2`.
pub fn pmse_with<R: Rng + ?Sized>(
    real: &DataTable,
    synthetic: &DataTable,
    folds: usize,
    classifier: &dyn Classifier,
    rng: &mut R,
) -> Result<f64> {
    if real.j() != synthetic.j() {
        return Err(Error::Shape(format!("real data has {} columns, synthetic data has {}", real.j(), synthetic.j())));
    }
    if folds < 2 {
        return Err(Error::Invalid("pMSE needs at least two folds".into()));
    }
    let (n0, n1) = (real.n(), synthetic.n());
    if n0 < MIN_CLASS_ROWS.max(folds) || n1 < MIN_CLASS_ROWS.max(folds) {
        return Err(Error::Invalid(format!(
            "pMSE needs at least {} rows per class, got {n0} real and {n1} synthetic",
            MIN_CLASS_ROWS.max(folds)
        )));
    }
    let j = real.j();
    let mut x = Matrix::zeros(n0 + n1, j);
    for i in 0..n0 {
        x.row_mut(i).copy_from_slice(real.values().row(i));
    }
    for i in 0..n1 {
        x.row_mut(n0 + i).copy_from_slice(synthetic.values().row(i));
    }
    let y: Vec<bool> = (0..n0 + n1).map(|i| i >= n0).collect();
    let mut fold_of = vec![0usize; n0 + n1];
    for (start, len) in [(0, n0), (n0, n1)] {
        let mut idx: Vec<usize> = (start..start + len).collect();
        for i in (1..len).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        for (pos, &i) in idx.iter().enumerate() {
            fold_of[i] = pos % folds;
        }
    }
    let key = fork_key(rng);
    let scores: Vec<Result<f64>> = par::map_indexed(folds, |f| {
        let train: Vec<usize> = (0..n0 + n1).filter(|&i| fold_of[i] != f).collect();
        let test: Vec<usize> = (0..n0 + n1).filter(|&i| fold_of[i] == f).collect();
        let pick = |rows: &[usize]| {
            let mut m = Matrix::zeros(rows.len(), j);
            for (r, &i) in rows.iter().enumerate() {
                m.row_mut(r).copy_from_slice(x.row(i));
            }
            m
        };
        let ty: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let mut r = substream(key, TAG_FOLD, f as u64);
        let p = classifier.fit_predict(&pick(&train), &ty, &pick(&test), &mut r)?;
        Ok(p.iter().map(|v| (v - 0.5) * (v - 0.5)).sum::<f64>() / p.len() as f64)
    });
    let mut total = 0.0;
    for s in scores {
        total += s?;
    }
    Ok(total / folds as f64)
}
