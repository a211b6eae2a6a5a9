//! Closed-form parameter updates, thresholding, gating, the temperature
//! schedule and the stopping rule.

use alloc::vec::Vec;

use crate::linalg::{BinaryMatrix, Matrix};
use crate::model::WeightMatrix;

/// Bounds applied to updated top-layer probabilities.
pub const PI_CLAMP: f64 = 1e-6;

/// Stabilizer in the relative Frobenius change.
pub const REL_EPS: f64 = 1e-8;

/// Column means of `q`, clamped to `[1e-6, 1 - 1e-6]`.
pub fn update_pi(q: &Matrix) -> Vec<f64> {
    let n = q.rows().max(1) as f64;
    (0..q.cols()).map(|k| (q.col(k).iter().sum::<f64>() / n).clamp(PI_CLAMP, 1.0 - PI_CLAMP)).collect()
}

/// As [`update_pi`] over the stacked draws of a binary layer.
pub fn update_pi_draws(draws: &[&BinaryMatrix]) -> Vec<f64> {
    let k = draws.first().map_or(0, |a| a.cols());
    let total: usize = draws.iter().map(|a| a.rows()).sum();
    (0..k)
        .map(|c| {
            let ones: usize = draws.iter().map(|a| (0..a.rows()).map(|i| a.get(i, c) as usize).sum::<usize>()).sum();
            (ones as f64 / total.max(1) as f64).clamp(PI_CLAMP, 1.0 - PI_CLAMP)
        })
        .collect()
}

/// `(1 + rss / 2) / (1 + n C / 2 + 1)`.
pub fn update_gamma(residual_ss: f64, n: usize, c: usize) -> f64 {
    (1.0 + 0.5 * residual_ss) / (1.0 + 0.5 * (n * c) as f64 + 1.0)
}

/// Default threshold `max(0.3, 3 n^-0.3)`.
pub fn default_xi(n: usize) -> f64 {
    f64::max(0.3, 3.0 * libm::pow(n as f64, -0.3))
}

/// Zeroes non-intercept entries with `|b| < xi`.
pub fn threshold_matrix(b: &WeightMatrix, xi: f64) -> WeightMatrix {
    let mut out = b.clone();
    for r in 0..out.rows() {
        for v in &mut out.row_mut(r)[1..] {
            if v.abs() < xi {
                *v = 0.0;
            }
        }
    }
    out
}

/// Zeroes (intercept included) every row `k` of the next layer's weights
/// whose unit is in the spike, i.e. `c_k <= k`.
pub fn apply_gating(c: &[usize], b_next: &WeightMatrix) -> WeightMatrix {
    let mut out = b_next.clone();
    for (k0, &ck) in c.iter().enumerate() {
        if ck <= k0 + 1 {
            out.row_mut(k0).iter_mut().for_each(|v| *v = 0.0);
        }
    }
    out
}

/// `min(1, tau + increment * ((t - burn) - 1))` after burn-in, `tau` before.
pub fn temperature_step(tau: f64, t: usize, burn: usize, increment: f64) -> f64 {
    if t <= burn {
        tau
    } else {
        f64::min(1.0, tau + increment * ((t - burn) as f64 - 1.0))
    }
}

/// `|new - old|_F / (|old|_F + eps)`.
pub fn relative_change(new: &Matrix, old: &Matrix) -> f64 {
    new.distance(old) / (old.frobenius_norm() + REL_EPS)
}

/// True when every layer's last `window` relative changes have standard
/// deviation below `tol` and the temperature has reached 1.
pub fn convergence_check(trace: &[Vec<f64>], window: usize, tol: f64, tau: f64) -> bool {
    if tau < 1.0 || window < 2 || trace.is_empty() {
        return false;
    }
    trace.iter().all(|series| {
        if series.len() < window {
            return false;
        }
        let tail = &series[series.len() - window..];
        let mean = tail.iter().sum::<f64>() / window as f64;
        let var = tail.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (window - 1) as f64;
        libm::sqrt(var) < tol
    })
}
