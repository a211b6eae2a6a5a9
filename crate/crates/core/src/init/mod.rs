//! Starting values: a rank-consistent `Z` from spectral clustering of column
//! pairs, and layer-wise double-SVD estimates of the binary layers and
//! weights.

pub mod kmeans;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::frame::{DataTable, RankFrame};
use crate::linalg::{truncated_svd, BinaryMatrix, Matrix};
use crate::model::{DdeDims, DdeParams, LatentState, WeightMatrix};
use crate::mstep::solvers::{gram, lasso_gram, logistic_grouped, GroupedBinomial, SOLVER_TOL};
use crate::rng::{fork_key, substream};

pub use kmeans::{elbow_select, kmeans, KMeans, Point};

const TAG_SPECTRAL: u64 = 0x5350_4543_0000_0001;
const TAG_DOUBLE_SVD: u64 = 0x4453_5644_0000_0001;

/// Energy fraction that fixes the denoising rank.
pub const ENERGY_THRESHOLD: f64 = 0.8;

/// Bounds on the initial top-layer probabilities.
pub const INIT_PI_CLAMP: f64 = 0.05;

/// Smallest `k` whose leading squared singular values carry at least
/// `threshold` of the total energy.
pub fn select_energy_rank(singular_values: &[f64], threshold: f64) -> Result<usize> {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if !(total > 0.0) {
        return Err(Error::Domain("all singular values are zero".into()));
    }
    let mut cum = 0.0;
    for (k, s) in singular_values.iter().enumerate() {
        cum += s * s;
        if cum / total >= threshold {
            return Ok(k + 1);
        }
    }
    Ok(singular_values.len())
}

/// Spectral summary of the observed columns.
#[derive(Debug, Clone)]
pub struct SpectralEmbedding {
    pub singular_values: Vec<f64>,
    /// `J x r` right singular vectors.
    pub v: Matrix,
    /// `D_ij = |V_i - V_j|^2` over the leading `rank` coordinates.
    pub distances: Matrix,
    pub rank: usize,
    /// Rank-`rank` reconstruction of the data.
    pub denoised: Matrix,
}

pub fn spectral_embedding(y: &Matrix) -> Result<SpectralEmbedding> {
    let full = y.rows().min(y.cols());
    let svd = truncated_svd(y, full)?;
    let rank = select_energy_rank(&svd.singular_values, ENERGY_THRESHOLD)?;
    let j_dim = y.cols();
    let mut distances = Matrix::zeros(j_dim, j_dim);
    for a in 0..j_dim {
        for b in 0..j_dim {
            distances[(a, b)] = (0..rank).map(|l| sq(svd.v[(a, l)] - svd.v[(b, l)])).sum();
        }
    }
    let truncated = truncated_svd(y, rank)?;
    Ok(SpectralEmbedding {
        singular_values: svd.singular_values,
        v: svd.v,
        distances,
        rank,
        denoised: truncated.reconstruct(),
    })
}

/// Nearest other column of `j` under `distances` (itself when `J = 1`).
pub fn nearest_column(distances: &Matrix, j: usize) -> usize {
    let mut best = j;
    let mut best_d = f64::INFINITY;
    for i in 0..distances.cols() {
        if i != j && distances[(j, i)] < best_d {
            best = i;
            best_d = distances[(j, i)];
        }
    }
    best
}

/// Fits k-means for `k = 1..=min(K_MAX, m)` and keeps the elbow choice.
pub fn elbow_kmeans<R: Rng + ?Sized>(points: &[Point], rng: &mut R) -> Result<KMeans> {
    let k_max = kmeans::K_MAX.min(points.len());
    let fits: Vec<KMeans> = (1..=k_max).map(|k| kmeans(points, k, rng)).collect::<Result<_>>()?;
    let inertias: Vec<f64> = fits.iter().map(|f| f.inertia).collect();
    let k = elbow_select(&inertias).max(1);
    Ok(fits.into_iter().nth(k - 1).expect("k within range"))
}

/// `n` second coordinates drawn from the isotropic mixture fitted by `fit`.
fn sq(x: f64) -> f64 {
    x * x
}

fn simulate_mixture<R: Rng + ?Sized>(points: &[Point], fit: &KMeans, n: usize, rng: &mut R) -> Vec<f64> {
    let k = fit.centers.len();
    let mut msd = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (p, &c) in points.iter().zip(&fit.labels) {
        let d = fit.centers[c];
        msd[c] += sq(p[0] - d[0]) + sq(p[1] - d[1]);
        counts[c] += 1;
    }
    let spread: f64 = {
        let m = points.len() as f64;
        let mean = points.iter().map(|p| p[1]).sum::<f64>() / m;
        points.iter().map(|p| sq(p[1] - mean)).sum::<f64>() / m
    };
    let floor = 1e-8 * (1.0 + spread);
    let sds: Vec<f64> = msd
        .iter()
        .zip(&counts)
        .map(|(s, &c)| libm::sqrt((if c > 0 { s / c as f64 / 2.0 } else { 0.0 }).max(floor)))
        .collect();
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut c = k - 1;
            for (idx, w) in fit.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    c = idx;
                    break;
                }
            }
            let e: f64 = StandardNormal.sample(rng);
            fit.centers[c][1] + sds[c] * e
        })
        .collect()
}

/// Assigns sorted `draws` to rows in the order of `y` (ties in row order)
/// and separates adjacent tie groups strictly.
fn rank_match(frame: &RankFrame, j: usize, mut draws: Vec<f64>) -> Vec<f64> {
    draws.sort_by(f64::total_cmp);
    let ranks = frame.column(j);
    let mut out = vec![0.0; draws.len()];
    let mut prev_group_max = f64::NEG_INFINITY;
    let mut pos = 0;
    for g in 0..ranks.n_groups() {
        let mut group_max = f64::NEG_INFINITY;
        for &i in ranks.group_rows(g) {
            let mut v = draws[pos];
            if v <= prev_group_max {
                v = prev_group_max.next_up();
            }
            out[i] = v;
            group_max = group_max.max(v);
            pos += 1;
        }
        prev_group_max = group_max;
    }
    out
}

/// Rank-consistent starting `Z` by spectral clustering of column pairs.
pub fn spectral_init_z<R: Rng + ?Sized>(frame: &RankFrame, rng: &mut R) -> Result<Matrix> {
    let table: &DataTable = frame.table();
    let (n, j_dim) = (table.n(), table.j());
    let key = fork_key(rng);
    let embedding = spectral_embedding(table.values());
    let columns: Vec<Result<Vec<f64>>> = crate::par::map_indexed(j_dim, |j| {
        let mut stream = substream(key, TAG_SPECTRAL, j as u64);
        if frame.column(j).n_groups() == 1 {
            let mut draws: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut stream)).collect();
            draws.sort_by(f64::total_cmp);
            return Ok(draws);
        }
        let embedding = embedding.as_ref().map_err(|e| e.clone())?;
        let partner = nearest_column(&embedding.distances, j);
        let points: Vec<Point> =
            (0..n).map(|r| [embedding.denoised[(r, partner)], embedding.denoised[(r, j)]]).collect();
        let fit = elbow_kmeans(&points, &mut stream)?;
        let draws = simulate_mixture(&points, &fit, n, &mut stream);
        Ok(rank_match(frame, j, draws))
    });
    let mut z = Matrix::zeros(n, j_dim);
    for (j, col) in columns.into_iter().enumerate() {
        z.set_col(j, &col?);
    }
    Ok(z)
}

fn center_columns(m: &Matrix) -> Matrix {
    let mut out = m.clone();
    let n = m.rows() as f64;
    for j in 0..m.cols() {
        let col = m.col(j);
        let mean = col.iter().sum::<f64>() / n;
        let centered: Vec<f64> = col.iter().map(|v| v - mean).collect();
        out.set_col(j, &centered);
    }
    out
}

fn median(values: &[f64]) -> f64 {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Median split of each score column; constant columns become fair coins.
fn binarize_scores<R: Rng + ?Sized>(scores: &Matrix, width: usize, rng: &mut R) -> BinaryMatrix {
    let n = scores.rows();
    let mut a = BinaryMatrix::zeros(n, width);
    for k in 0..width {
        let col = if k < scores.cols() { scores.col(k) } else { vec![0.0; n] };
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let spread = hi - lo;
        if !(spread > 1e-12 * (1.0 + hi.abs().max(lo.abs()))) {
            for i in 0..n {
                a.set(i, k, rng.random::<bool>());
            }
            continue;
        }
        let med = median(&col);
        let above = col.iter().filter(|&&v| v > med).count();
        for (i, &v) in col.iter().enumerate() {
            a.set(i, k, if above > 0 { v > med } else { v >= med });
        }
    }
    a
}

fn layer_scores<R: Rng + ?Sized>(data: &Matrix, width: usize, rng: &mut R) -> Result<BinaryMatrix> {
    let centered = center_columns(data);
    let rank = width.min(data.rows().min(data.cols()));
    let svd = truncated_svd(&centered, rank)?;
    Ok(binarize_scores(&svd.scores(), width, rng))
}

fn with_intercept(a: &BinaryMatrix) -> Matrix {
    let mut x = Matrix::zeros(a.rows(), a.cols() + 1);
    for i in 0..a.rows() {
        let row = x.row_mut(i);
        row[0] = 1.0;
        for (dst, &v) in row[1..].iter_mut().zip(a.row(i)) {
            *dst = v as f64;
        }
    }
    x
}

/// Layer-wise double-SVD initialization on a starting `Z`.
///
/// Each layer's scores are split at their medians; the first layer is then
/// regressed on by least squares and deeper layers by unpenalized logistic
/// fits.
pub fn double_svd_init<R: Rng + ?Sized>(
    z: &Matrix,
    dims: &DdeDims,
    rng: &mut R,
) -> Result<(DdeParams, Vec<BinaryMatrix>)> {
    if z.cols() != dims.observed() {
        return Err(Error::Shape(format!("Z has {} columns, dims expect {}", z.cols(), dims.observed())));
    }
    if z.rows() < 2 {
        return Err(Error::Invalid("initialization needs at least two rows".into()));
    }
    let key = fork_key(rng);
    let n = z.rows();
    let mut layers = Vec::with_capacity(dims.depth());
    let mut data = z.clone();
    for l in 0..dims.depth() {
        let mut stream = substream(key, TAG_DOUBLE_SVD, l as u64);
        let a = layer_scores(&data, dims.width(l), &mut stream)?;
        data = a.to_matrix();
        layers.push(a);
    }

    let mut weights = Vec::with_capacity(dims.depth());
    // Layer 1: least squares of each Z column on (1, A^(1)).
    let x = with_intercept(&layers[0]);
    let g = gram(&x);
    let p = x.cols();
    let mut w1 = WeightMatrix::zeros(dims.observed(), dims.width(0));
    let mut gamma = Vec::with_capacity(dims.observed());
    for j in 0..dims.observed() {
        let y = z.col(j);
        let mut xty = vec![0.0; p];
        for (row, &yi) in x.row_iter().zip(&y) {
            for (acc, &xv) in xty.iter_mut().zip(row) {
                *acc += xv * yi;
            }
        }
        let yty: f64 = y.iter().map(|v| v * v).sum();
        let b = lasso_gram(&g, &xty, yty, &vec![0.0; p], 1.0, &vec![0.0; p], SOLVER_TOL);
        let rss: f64 = x
            .row_iter()
            .zip(&y)
            .map(|(row, &yi)| {
                let fit: f64 = row.iter().zip(&b).map(|(a, c)| a * c).sum();
                sq(yi - fit)
            })
            .sum();
        let var_y = {
            let mean = y.iter().sum::<f64>() / n as f64;
            y.iter().map(|v| sq(v - mean)).sum::<f64>() / n as f64
        };
        gamma.push((rss / n as f64).max(1e-6 * (1.0 + var_y)));
        w1.row_mut(j).copy_from_slice(&b);
    }
    weights.push(w1);

    // Deeper layers: logistic fits of A^(l-1) on (1, A^(l)).
    for l in 1..dims.depth() {
        let x = with_intercept(&layers[l]);
        let mut w = WeightMatrix::zeros(dims.width(l - 1), dims.width(l));
        for r in 0..dims.width(l - 1) {
            let y = layers[l - 1].col_f64(r);
            let data = GroupedBinomial::from_design(&x, &y);
            let fit = logistic_grouped(&data, &vec![0.0; x.cols()], 1.0, &vec![0.0; x.cols()], SOLVER_TOL);
            w.row_mut(r).copy_from_slice(&fit.coef);
        }
        weights.push(w);
    }

    let top = &layers[dims.depth() - 1];
    let pi = (0..top.cols()).map(|k| top.col_mean(k).clamp(INIT_PI_CLAMP, 1.0 - INIT_PI_CLAMP)).collect();
    let params = DdeParams::new(dims.clone(), weights, gamma, pi)?;
    Ok((params, layers))
}

/// Starting parameters and latent state for a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct InitState {
    pub params: DdeParams,
    pub latent: LatentState,
}

/// Spectral `Z` followed by double-SVD on it.
pub fn initialize<R: Rng + ?Sized>(frame: &RankFrame, dims: &DdeDims, rng: &mut R) -> Result<InitState> {
    let z = spectral_init_z(frame, rng)?;
    let (params, layers) = double_svd_init(&z, dims, rng)?;
    Ok(InitState { params, latent: LatentState { layers, z } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn energy_rank_examples() {
        assert_eq!(select_energy_rank(&[3.0, 1.0], 0.8).unwrap(), 1);
        assert_eq!(select_energy_rank(&[1.0; 5], 0.8).unwrap(), 4);
        assert_eq!(select_energy_rank(&[2.0], 0.8).unwrap(), 1);
        assert!(select_energy_rank(&[0.0, 0.0], 0.8).is_err());
    }

    #[test]
    fn correlated_pair_are_neighbours() {
        let y = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [-1.0, -2.0]]).unwrap();
        let e = spectral_embedding(&y).unwrap();
        assert_eq!(e.rank, 1);
        assert_eq!(nearest_column(&e.distances, 0), 1);
        assert_eq!(nearest_column(&e.distances, 1), 0);
    }

    #[test]
    fn median_split() {
        let scores = Matrix::from_rows(&[[1.0], [3.0], [2.0], [4.0]]).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let a = binarize_scores(&scores, 1, &mut rng);
        assert_eq!(a.as_slice(), &[0, 1, 0, 1]);
    }
}
