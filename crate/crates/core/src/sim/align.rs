//! Latent label alignment and parameter recovery metrics.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{DdeParams, WeightMatrix};

/// Minimum-cost assignment for a square cost matrix: row `r` is matched with
/// column `perm[r]`.
pub fn hungarian(cost: &Matrix) -> Result<Vec<usize>> {
    let n = cost.rows();
    if cost.cols() != n {
        return Err(Error::Shape(format!("assignment needs a square matrix, got {}x{}", n, cost.cols())));
    }
    if !cost.is_finite() {
        return Err(Error::Domain("assignment costs must be finite".into()));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    // Shortest augmenting paths with row and column potentials, 1-based with
    // a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for row in 1..=n {
        owner[0] = row;
        let mut col0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[col0] = true;
            let r0 = owner[col0];
            let mut delta = f64::INFINITY;
            let mut col1 = 0;
            for c in 1..=n {
                if used[c] {
                    continue;
                }
                let reduced = cost.row(r0 - 1)[c - 1] - u[r0] - v[c];
                if reduced < minv[c] {
                    minv[c] = reduced;
                    way[c] = col0;
                }
                if minv[c] < delta {
                    delta = minv[c];
                    col1 = c;
                }
            }
            for c in 0..=n {
                if used[c] {
                    u[owner[c]] += delta;
                    v[c] -= delta;
                } else {
                    minv[c] -= delta;
                }
            }
            col0 = col1;
            if owner[col0] == 0 {
                break;
            }
        }
        loop {
            let prev = way[col0];
            owner[col0] = owner[prev];
            col0 = prev;
            if col0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for c in 1..=n {
        perm[owner[c] - 1] = c - 1;
    }
    Ok(perm)
}

/// Total cost of an assignment.
pub fn assignment_cost(cost: &Matrix, perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(r, &c)| cost.row(r)[c]).sum()
}

/// Truth and estimate brought to common shapes and matched latent labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// Zero-padded true weight matrices.
    pub truth: Vec<Matrix>,
    /// Zero-padded, permuted estimates.
    pub estimate: Vec<Matrix>,
    /// `permutations[l][k]` is the estimated unit matched to true unit `k`.
    pub permutations: Vec<Vec<usize>>,
    /// `flips[l][k]`: the matched estimated unit was recoded as `1 - a`.
    pub flips: Vec<Vec<bool>>,
    /// Whether layer `l` needed zero padding.
    pub padded: Vec<bool>,
}

fn pad(m: &Matrix, rows: usize, cols: usize) -> Matrix {
    let mut out = Matrix::zeros(rows, cols);
    for r in 0..m.rows() {
        out.row_mut(r)[..m.cols()].copy_from_slice(m.row(r));
    }
    out
}

/// Squared distances between non-intercept columns `a` of `t` and `b` of
/// `e`, as given and with `e`'s column negated.
fn column_costs(t: &Matrix, e: &Matrix) -> (Matrix, Matrix) {
    let k = t.cols() - 1;
    let mut same = Matrix::zeros(k, k);
    let mut flipped = Matrix::zeros(k, k);
    for a in 0..k {
        for b in 0..k {
            let (mut d0, mut d1) = (0.0, 0.0);
            for r in 0..t.rows() {
                let (x, y) = (t.row(r)[a + 1], e.row(r)[b + 1]);
                d0 += (x - y) * (x - y);
                d1 += (x + y) * (x + y);
            }
            same.row_mut(a)[b] = d0;
            flipped.row_mut(a)[b] = d1;
        }
    }
    (same, flipped)
}

/// Bottom-up label matching. Layer 0 columns are matched by squared
/// distance, the rows of the next estimate are reordered by that match, and
/// so on upward. Layers of different widths are zero-padded first.
///
/// A binary unit and its complement `1 - a` describe the same model, so
/// each pair is scored at the better of the two codings. A complemented
/// unit has its column negated (with the intercepts absorbing the shift)
/// and its row one layer up negated.
pub fn align_permutations(truth: &[WeightMatrix], estimate: &[WeightMatrix]) -> Result<Alignment> {
    if truth.len() != estimate.len() {
        return Err(Error::Shape(format!("truth has {} layers, estimate has {}", truth.len(), estimate.len())));
    }
    if let (Some(t), Some(e)) = (truth.first(), estimate.first()) {
        if t.rows() != e.rows() {
            return Err(Error::Shape(format!("truth has {} observed columns, estimate has {}", t.rows(), e.rows())));
        }
    }
    let mut out = Alignment {
        truth: Vec::new(),
        estimate: Vec::new(),
        permutations: Vec::new(),
        flips: Vec::new(),
        padded: Vec::new(),
    };
    let mut row_perm: Option<(Vec<usize>, Vec<bool>)> = None;
    for (t, e) in truth.iter().zip(estimate) {
        let rows = t.rows().max(e.rows());
        let cols = 1 + t.latent().max(e.latent());
        let padded = t.latent() != e.latent() || t.rows() != e.rows();
        let tp = pad(t.matrix(), rows, cols);
        let mut ep = pad(e.matrix(), rows, cols);
        if let Some((p, flips)) = &row_perm {
            let src = ep.clone();
            for (r, (&s, &flip)) in p.iter().zip(flips).enumerate() {
                let sign = if flip { -1.0 } else { 1.0 };
                for (dst, v) in ep.row_mut(r).iter_mut().zip(src.row(s)) {
                    *dst = sign * v;
                }
            }
        }
        let (same, flipped) = column_costs(&tp, &ep);
        let mut cost = same.clone();
        for (c, f) in cost.as_mut_slice().iter_mut().zip(flipped.as_slice()) {
            *c = c.min(*f);
        }
        let perm = hungarian(&cost)?;
        let flips: Vec<bool> = perm.iter().enumerate().map(|(a, &b)| flipped.row(a)[b] < same.row(a)[b]).collect();
        let src = ep.clone();
        for r in 0..rows {
            let row = ep.row_mut(r);
            for (k, (&s, &flip)) in perm.iter().zip(&flips).enumerate() {
                let v = src.row(r)[s + 1];
                row[k + 1] = if flip { -v } else { v };
                if flip {
                    row[0] += v;
                }
            }
        }
        out.truth.push(tp);
        out.estimate.push(ep);
        out.permutations.push(perm.clone());
        out.flips.push(flips.clone());
        out.padded.push(padded);
        row_perm = Some((perm, flips));
    }
    Ok(out)
}

fn check_pair(truth: &[Matrix], estimate: &[Matrix]) -> Result<()> {
    if truth.len() != estimate.len() {
        return Err(Error::Shape("layer counts differ".into()));
    }
    for (l, (t, e)) in truth.iter().zip(estimate).enumerate() {
        if t.rows() != e.rows() || t.cols() != e.cols() {
            return Err(Error::Shape(format!("layer {} shapes differ", l + 1)));
        }
    }
    Ok(())
}

fn per_layer(truth: &[Matrix], estimate: &[Matrix], f: impl Fn(f64, f64) -> f64) -> Result<Vec<f64>> {
    check_pair(truth, estimate)?;
    Ok(truth
        .iter()
        .zip(estimate)
        .map(|(t, e)| {
            let mut total = 0.0;
            let mut count = 0usize;
            for r in 0..t.rows() {
                for (a, b) in t.row(r)[1..].iter().zip(&e.row(r)[1..]) {
                    total += f(*a, *b);
                    count += 1;
                }
            }
            if count == 0 {
                0.0
            } else {
                total / count as f64
            }
        })
        .collect())
}

/// Per layer, the fraction of non-intercept entries whose zero pattern agrees.
pub fn graph_recovery(truth: &[Matrix], estimate: &[Matrix]) -> Result<Vec<f64>> {
    per_layer(truth, estimate, |a, b| ((a != 0.0) == (b != 0.0)) as u8 as f64)
}

/// Per layer, the mean squared difference of non-intercept entries.
pub fn entrywise_mse(truth: &[Matrix], estimate: &[Matrix]) -> Result<Vec<f64>> {
    per_layer(truth, estimate, |a, b| (a - b) * (a - b))
}

/// Parameter recovery summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub recovery: Vec<f64>,
    pub mse: Vec<f64>,
    /// Estimated widths: columns with a nonzero non-intercept entry.
    pub widths: Vec<usize>,
    pub permutations: Vec<Vec<usize>>,
    pub flips: Vec<Vec<bool>>,
    pub padded: Vec<bool>,
}

fn nonzero_columns(w: &WeightMatrix) -> usize {
    (0..w.latent()).filter(|&k| (0..w.rows()).any(|r| w.coef(r, k) != 0.0)).count()
}

/// Aligns `estimate` to `truth` and scores it.
pub fn evaluate(truth: &DdeParams, estimate: &DdeParams) -> Result<EvalReport> {
    let al = align_permutations(&truth.weights, &estimate.weights)?;
    Ok(EvalReport {
        recovery: graph_recovery(&al.truth, &al.estimate)?,
        mse: entrywise_mse(&al.truth, &al.estimate)?,
        widths: estimate.weights.iter().map(nonzero_columns).collect(),
        permutations: al.permutations,
        flips: al.flips,
        padded: al.padded,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let id = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let sw = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_eq!(hungarian(&id).unwrap(), vec![0, 1]);
        assert_eq!(hungarian(&sw).unwrap(), vec![1, 0]);
    }

    #[test]
    fn counting_examples() {
        let t = Matrix::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]).unwrap();
        let e = Matrix::from_rows(&[[0.0, 1.0, 1.0], [0.0, 1.0, 1.0]]).unwrap();
        assert_eq!(graph_recovery(std::slice::from_ref(&t), &[e]).unwrap(), vec![0.5]);
        let shifted = Matrix::from_rows(&[[0.1, 1.1, 0.1], [0.1, 0.1, 1.1]]).unwrap();
        assert!((entrywise_mse(std::slice::from_ref(&t), &[shifted]).unwrap()[0] - 0.01).abs() < 1e-15);
        let zero = Matrix::zeros(2, 3);
        let dense = Matrix::from_rows(&[[0.0, 1.0, 1.0], [0.0, 1.0, 1.0]]).unwrap();
        assert_eq!(graph_recovery(&[zero], &[dense]).unwrap(), vec![0.0]);
    }
}
