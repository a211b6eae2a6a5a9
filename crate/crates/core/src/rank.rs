//! Extended-rank-likelihood data augmentation: Gibbs resampling of the
//! Gaussian layer `Z` inside the set of matrices whose within-column order
//! agrees with the data.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::frame::{ColumnRanks, RankFrame};
use crate::linalg::{BinaryMatrix, Matrix};
use crate::model::DdeParams;
use crate::rng::{fork_key, substream};
use crate::special::normal_cdf;

const TAG_Z: u64 = 0x5a5f_5357_4545_5000;

/// Number of ULPs a draw that lands on a finite bound is moved inward.
pub const BOUND_NUDGE_ULPS: u32 = 1000;

/// Open truncation interval `(lo, hi)` for one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationBounds {
    pub lo: f64,
    pub hi: f64,
}

impl TruncationBounds {
    pub const UNBOUNDED: Self = Self { lo: f64::NEG_INFINITY, hi: f64::INFINITY };
}

fn step_ulps(mut x: f64, n: u32, up: bool) -> f64 {
    for _ in 0..n {
        x = if up { x.next_up() } else { x.next_down() };
    }
    x
}

/// Forces `v` strictly inside `(lo, hi)`.
fn keep_inside(v: f64, lo: f64, hi: f64) -> Result<f64> {
    if v > lo && v < hi {
        return Ok(v);
    }
    let candidate =
        if v <= lo { step_ulps(lo, BOUND_NUDGE_ULPS, true) } else { step_ulps(hi, BOUND_NUDGE_ULPS, false) };
    if candidate > lo && candidate < hi {
        return Ok(candidate);
    }
    let mid = if lo.is_finite() && hi.is_finite() { lo + 0.5 * (hi - lo) } else { candidate };
    if mid > lo && mid < hi {
        Ok(mid)
    } else {
        Err(Error::InvalidInterval { lo, hi })
    }
}

/// Standard normal restricted to `(a, b)` with `0 <= a < b`.
fn right_tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    // Exponential proposal with the optimal rate; acceptance is at least
    // exp(-1/2) for every a >= 0.
    let alpha = 0.5 * (a + libm::sqrt(a * a + 4.0));
    let width = b - a;
    let mass = if width.is_finite() { -libm::expm1(-alpha * width) } else { 1.0 };
    loop {
        let u: f64 = rng.random();
        let x = a - libm::log1p(-u * mass) / alpha;
        let d = x - alpha;
        let accept: f64 = rng.random();
        if accept < libm::exp(-0.5 * d * d) && x < b {
            return x;
        }
    }
}

/// Standard normal restricted to `(a, b)`.
fn standard_truncated<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return StandardNormal.sample(rng);
    }
    if a >= 0.0 {
        return right_tail(a, b, rng);
    }
    if b <= 0.0 {
        return -right_tail(-b, -a, rng);
    }
    // a < 0 < b
    let mass = normal_cdf(b) - normal_cdf(a);
    if mass >= 0.25 {
        loop {
            let x: f64 = StandardNormal.sample(rng);
            if x > a && x < b {
                return x;
            }
        }
    }
    // Narrow interval around zero: uniform proposal.
    loop {
        let u: f64 = rng.random();
        let x = a + u * (b - a);
        let accept: f64 = rng.random();
        if accept < libm::exp(-0.5 * x * x) && x > a {
            return x;
        }
    }
}

/// One draw from `Normal(mu, var)` conditioned on `(lo, hi)`. The result is
/// always strictly inside the interval.
pub fn sample_truncated_normal<R: Rng + ?Sized>(mu: f64, var: f64, lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(var > 0.0) || !var.is_finite() || !mu.is_finite() {
        return Err(Error::Domain(format!(
            "truncated normal needs finite mean and positive variance, got ({mu}, {var})"
        )));
    }
    if lo.is_nan() || hi.is_nan() || !(lo < hi) {
        return Err(Error::InvalidInterval { lo, hi });
    }
    let sd = libm::sqrt(var);
    let a = (lo - mu) / sd;
    let b = (hi - mu) / sd;
    let x = if a < b { standard_truncated(a, b, rng) } else { a };
    keep_inside(mu + sd * x, lo, hi)
}

/// Checks that strictly larger observations carry strictly larger `Z`.
pub fn check_rank_consistency(frame: &RankFrame, z: &Matrix) -> Result<()> {
    if z.rows() != frame.n() || z.cols() != frame.j() {
        return Err(Error::Shape(format!("Z is {}x{}, data is {}x{}", z.rows(), z.cols(), frame.n(), frame.j())));
    }
    for j in 0..frame.j() {
        let ranks = frame.column(j);
        let col = z.col(j);
        if let Some(row) = first_violation(ranks, &col) {
            return Err(Error::RankViolation { row, col: j });
        }
    }
    Ok(())
}

fn first_violation(ranks: &ColumnRanks, col: &[f64]) -> Option<usize> {
    let mut prev_max = f64::NEG_INFINITY;
    for g in 0..ranks.n_groups() {
        let rows = ranks.group_rows(g);
        let mut max = f64::NEG_INFINITY;
        for &i in rows {
            if !col[i].is_finite() || col[i] <= prev_max {
                return Some(i);
            }
            max = max.max(col[i]);
        }
        prev_max = max;
    }
    None
}

fn extreme(rows: &[usize], col: &[f64], max: bool) -> f64 {
    let it = rows.iter().map(|&i| col[i]);
    if max {
        it.fold(f64::NEG_INFINITY, f64::max)
    } else {
        it.fold(f64::INFINITY, f64::min)
    }
}

/// Resamples one column in ascending row order against in-progress values.
fn sweep_column<R: Rng + ?Sized>(
    ranks: &ColumnRanks,
    col: &mut [f64],
    mu: &[f64],
    var: f64,
    rng: &mut R,
) -> Result<()> {
    let groups = ranks.n_groups();
    let mut gmax: Vec<f64> = (0..groups).map(|g| extreme(ranks.group_rows(g), col, true)).collect();
    let mut gmin: Vec<f64> = (0..groups).map(|g| extreme(ranks.group_rows(g), col, false)).collect();
    for i in 0..col.len() {
        let g = ranks.group_of(i);
        let lo = if g > 0 { gmax[g - 1] } else { f64::NEG_INFINITY };
        let hi = if g + 1 < groups { gmin[g + 1] } else { f64::INFINITY };
        let old = col[i];
        let new = sample_truncated_normal(mu[i], var, lo, hi, rng)?;
        col[i] = new;
        if new >= gmax[g] {
            gmax[g] = new;
        } else if old == gmax[g] {
            gmax[g] = extreme(ranks.group_rows(g), col, true);
        }
        if new <= gmin[g] {
            gmin[g] = new;
        } else if old == gmin[g] {
            gmin[g] = extreme(ranks.group_rows(g), col, false);
        }
    }
    Ok(())
}

/// Bounds `(L_ij, U_ij)` of every row of column `j` for the current `Z`.
pub fn column_bounds(frame: &RankFrame, z: &Matrix, j: usize) -> Vec<TruncationBounds> {
    let ranks = frame.column(j);
    let col = z.col(j);
    let groups = ranks.n_groups();
    let gmax: Vec<f64> = (0..groups).map(|g| extreme(ranks.group_rows(g), &col, true)).collect();
    let gmin: Vec<f64> = (0..groups).map(|g| extreme(ranks.group_rows(g), &col, false)).collect();
    (0..col.len())
        .map(|i| {
            let g = ranks.group_of(i);
            TruncationBounds {
                lo: if g > 0 { gmax[g - 1] } else { f64::NEG_INFINITY },
                hi: if g + 1 < groups { gmin[g + 1] } else { f64::INFINITY },
            }
        })
        .collect()
}

/// One Gibbs sweep over every cell of `z`, with variance `gamma_j / tau`.
///
/// Columns are processed in parallel; each column draws from its own
/// substream of a key taken from `rng`.
pub fn gibbs_sweep_z<R: Rng + ?Sized>(
    frame: &RankFrame,
    z: &mut Matrix,
    first_layer: &BinaryMatrix,
    params: &DdeParams,
    tau: f64,
    rng: &mut R,
) -> Result<()> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Domain(format!("temperature {tau} outside (0, 1]")));
    }
    check_rank_consistency(frame, z)?;
    if first_layer.rows() != frame.n() || first_layer.cols() != params.dims.width(0) {
        return Err(Error::Shape("first binary layer does not match the data".into()));
    }
    if params.observed() != frame.j() {
        return Err(Error::Shape("model and data disagree on the number of columns".into()));
    }
    let key = fork_key(rng);
    let n = frame.n();
    let snapshot = &*z;
    let columns: Vec<Result<Vec<f64>>> = crate::par::map_indexed(frame.j(), |j| {
        let mut col = snapshot.col(j);
        let mu: Vec<f64> = (0..n).map(|i| params.mean(j, first_layer.row(i))).collect();
        let mut stream = substream(key, TAG_Z, j as u64);
        sweep_column(frame.column(j), &mut col, &mu, params.gamma[j] / tau, &mut stream)?;
        Ok(col)
    });
    for (j, col) in columns.into_iter().enumerate() {
        z.set_col(j, &col?);
    }
    Ok(())
}
