//! Shared fixtures and brute-force oracles for the integration suites.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use ddecop_core::linalg::{BinaryMatrix, Matrix};
use ddecop_core::model::{DdeDims, DdeParams, LatentState, WeightMatrix};
use ddecop_core::rng::StreamRng;
use rand::Rng;

/// Random model with coefficients in `[-2, 2]`.
pub fn random_params(rng: &mut StreamRng, observed: usize, widths: &[usize]) -> DdeParams {
    let dims = DdeDims::new(observed, widths.to_vec()).unwrap();
    let mut weights = Vec::new();
    for l in 0..widths.len() {
        let rows = if l == 0 { observed } else { widths[l - 1] };
        let data = (0..rows * (1 + widths[l])).map(|_| rng.random_range(-2.0..2.0)).collect();
        weights.push(WeightMatrix::new(Matrix::from_vec(rows, 1 + widths[l], data).unwrap()).unwrap());
    }
    let gamma = (0..observed).map(|_| rng.random_range(0.3..2.0)).collect();
    let pi = (0..widths[widths.len() - 1]).map(|_| rng.random_range(0.2..0.8)).collect();
    DdeParams::new(dims, weights, gamma, pi).unwrap()
}

/// One-row state with the given binary layers and `Z` row.
pub fn single_row(layers: &[Vec<u8>], z: &[f64]) -> LatentState {
    LatentState {
        layers: layers.iter().map(|a| BinaryMatrix::from_vec(1, a.len(), a.clone()).unwrap()).collect(),
        z: Matrix::from_vec(1, z.len(), z.to_vec()).unwrap(),
    }
}

fn bern_log(p: f64, a: u8) -> f64 {
    if a == 1 {
        p.ln()
    } else {
        (1.0 - p).ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn predictor(row: &[f64], parents: &[u8]) -> f64 {
    row[0] + parents.iter().zip(&row[1..]).map(|(&a, &b)| a as f64 * b).sum::<f64>()
}

/// Joint log-density of one row, written out term by term.
pub fn oracle_log_density(params: &DdeParams, layers: &[Vec<u8>], z: &[f64]) -> f64 {
    let depth = layers.len();
    let mut total = 0.0;
    for (k, &a) in layers[depth - 1].iter().enumerate() {
        total += bern_log(params.pi[k], a);
    }
    for l in 0..depth - 1 {
        let w = &params.weights[l + 1];
        for (k, &a) in layers[l].iter().enumerate() {
            total += bern_log(sigmoid(predictor(w.row(k), &layers[l + 1])), a);
        }
    }
    let w = &params.weights[0];
    for (j, &zj) in z.iter().enumerate() {
        let mean = predictor(w.row(j), &layers[0]);
        let var = params.gamma[j];
        total += -0.5 * (2.0 * std::f64::consts::PI * var).ln() - (zj - mean).powi(2) / (2.0 * var);
    }
    total
}

/// Every binary configuration of the given layer widths.
pub fn all_configs(widths: &[usize]) -> Vec<Vec<Vec<u8>>> {
    let total: usize = widths.iter().sum();
    (0..1usize << total)
        .map(|bits| {
            let mut offset = 0;
            widths
                .iter()
                .map(|&w| {
                    let layer = (0..w).map(|k| ((bits >> (offset + k)) & 1) as u8).collect();
                    offset += w;
                    layer
                })
                .collect()
        })
        .collect()
}

/// Strict rank-consistency of `z` against the columns of `y`.
pub fn rank_consistent(y: &Matrix, z: &Matrix) -> bool {
    for j in 0..y.cols() {
        for i in 0..y.rows() {
            for l in 0..y.rows() {
                if y[(i, j)] < y[(l, j)] && !(z[(i, j)] < z[(l, j)]) {
                    return false;
                }
            }
        }
    }
    true
}

/// Mean of `N(mu, var)` truncated to `(lo, hi)`.
pub fn truncated_mean(mu: f64, var: f64, lo: f64, hi: f64) -> (f64, f64) {
    use statrs::distribution::{Continuous, ContinuousCDF, Normal};
    let sd = var.sqrt();
    let n = Normal::new(0.0, 1.0).unwrap();
    let a = (lo - mu) / sd;
    let b = (hi - mu) / sd;
    let mass = if a > 0.0 { n.sf(a) - n.sf(b) } else { n.cdf(b) - n.cdf(a) };
    let pdf = |x: f64| if x.is_finite() { n.pdf(x) } else { 0.0 };
    let xpdf = |x: f64| if x.is_finite() { x * n.pdf(x) } else { 0.0 };
    let m1 = (pdf(a) - pdf(b)) / mass;
    let m2 = 1.0 + (xpdf(a) - xpdf(b)) / mass;
    let mean = mu + sd * m1;
    let variance = var * (m2 - m1 * m1);
    (mean, variance)
}
