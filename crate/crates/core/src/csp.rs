//! Cumulative shrinkage process (CSP) prior over the columns of each weight
//! matrix.
//!
//! Column `k` (1-based) of layer `d` carries an allocation `c_k` in
//! `1..=K+1`. It is in the spike (switched off) when `c_k <= k` and in the
//! slab otherwise. Spike and slab are Laplace kernels parameterized by a
//! scale: the spike scale `lambda1` is fixed, the slab scale is integrated
//! against a Gamma(1, 5) hyperprior and resampled each iteration. Allocation
//! probabilities come from a stick-breaking construction with concentration
//! `alpha = K`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};

use crate::linalg::Matrix;
use crate::model::WeightMatrix;
use crate::special::ln_gamma;

/// Slab hyperprior shape and rate.
pub const SLAB_SHAPE: f64 = 1.0;
pub const SLAB_RATE: f64 = 5.0;

/// CSP state for one layer with `K` candidate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CspLayerState {
    /// 1-based allocations, `c[k]` in `1..=K+1` for 0-based column `k`.
    pub c: Vec<usize>,
    /// Stick variables, length `K + 1`, last entry 1.
    pub v: Vec<f64>,
    /// Allocation weights, length `K + 1`.
    pub omega: Vec<f64>,
    pub lambda0: Vec<f64>,
    pub lambda1: f64,
    pub alpha: f64,
}

impl CspLayerState {
    /// All columns active, sticks at their prior mean `1 / (1 + alpha)`,
    /// unit slab scales.
    pub fn new(k_max: usize, lambda1: f64) -> Self {
        let alpha = k_max as f64;
        let mut v = vec![1.0 / (1.0 + alpha); k_max + 1];
        v[k_max] = 1.0;
        let omega = stick_breaking(&v);
        Self { c: vec![k_max + 1; k_max], v, omega, lambda0: vec![1.0; k_max], lambda1, alpha }
    }

    pub fn k_max(&self) -> usize {
        self.c.len()
    }

    pub fn active(&self) -> Vec<bool> {
        active_columns(&self.c)
    }

    pub fn effective_width(&self) -> usize {
        effective_width(&self.c)
    }

    /// One CSP update: MAP allocations from the current weights, then fresh
    /// sticks and slab scales. `columns[k]` is column `k` of the weight
    /// matrix restricted to active rows.
    pub fn update<R: Rng + ?Sized>(&mut self, columns: &[Vec<f64>], rng: &mut R) {
        self.c = allocate_c(&self.omega, self.lambda1, columns);
        let (v, omega) = update_sticks(&self.c, self.alpha, rng);
        self.v = v;
        self.omega = omega;
        self.lambda0 = sample_slab_rates(columns, &self.c, self.lambda1, rng);
    }
}

/// Default spike scale for layer `layer` (0-based) of a model on `observed`
/// columns.
pub fn default_lambda1(observed: usize, layer: usize) -> f64 {
    match (layer, observed >= 100) {
        (0, false) => 0.02,
        (0, true) => 0.05,
        (1, false) => 0.04,
        (1, true) => 0.1,
        _ => 0.005,
    }
}

fn l1(col: &[f64]) -> f64 {
    col.iter().map(|x| x.abs()).sum()
}

/// Laplace(scale `lambda1`) log-density of `col`: `-m log(2 lambda1) - |col|_1 / lambda1`.
pub fn spike_log_marginal(col: &[f64], lambda1: f64) -> f64 {
    let m = col.len() as f64;
    -m * libm::log(2.0 * lambda1) - l1(col) / lambda1
}

/// Laplace log-density of `col` with its rate integrated against Gamma(1, 5).
pub fn slab_log_marginal(col: &[f64]) -> f64 {
    let m = col.len() as f64;
    libm::log(SLAB_RATE) - m * core::f64::consts::LN_2 + ln_gamma(SLAB_SHAPE + m)
        - ln_gamma(SLAB_SHAPE)
        - (SLAB_SHAPE + m) * libm::log(SLAB_RATE + l1(col))
}

/// Scores `log omega_l + (spike if l <= k else slab)` for `l = 1..=K+1`.
pub fn allocation_scores(omega: &[f64], spike: f64, slab: f64, k: usize) -> Vec<f64> {
    omega.iter().enumerate().map(|(idx, &w)| libm::log(w) + if idx < k { spike } else { slab }).collect()
}

/// MAP allocation of every column; ties go to the smallest state.
pub fn allocate_c(omega: &[f64], lambda1: f64, columns: &[Vec<f64>]) -> Vec<usize> {
    columns
        .iter()
        .enumerate()
        .map(|(k0, col)| {
            let scores = allocation_scores(omega, spike_log_marginal(col, lambda1), slab_log_marginal(col), k0 + 1);
            let mut best = 0;
            for (idx, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = idx;
                }
            }
            best + 1
        })
        .collect()
}

/// `omega_l = v_l * prod_{m < l} (1 - v_m)`.
pub fn stick_breaking(v: &[f64]) -> Vec<f64> {
    let mut remaining = 1.0;
    v.iter()
        .map(|&vl| {
            let w = vl * remaining;
            remaining *= 1.0 - vl;
            w
        })
        .collect()
}

/// Beta parameters `(1 + n_l, alpha + n_{>l})` of the first `K` sticks.
pub fn stick_parameters(c: &[usize], alpha: f64) -> Vec<(f64, f64)> {
    let k_max = c.len();
    (1..=k_max)
        .map(|l| {
            let at = c.iter().filter(|&&ck| ck == l).count() as f64;
            let above = c.iter().filter(|&&ck| ck > l).count() as f64;
            (1.0 + at, alpha + above)
        })
        .collect()
}

/// Draws sticks `v_l ~ Beta(1 + n_l, alpha + n_{>l})`, `v_{K+1} = 1`, and
/// returns them with the implied weights.
pub fn update_sticks<R: Rng + ?Sized>(c: &[usize], alpha: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut v: Vec<f64> = stick_parameters(c, alpha)
        .into_iter()
        .map(|(a, b)| {
            let draw: f64 = Beta::new(a, b).expect("positive Beta parameters").sample(rng);
            // keep log(omega) finite
            draw.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
        })
        .collect();
    v.push(1.0);
    let omega = stick_breaking(&v);
    (v, omega)
}

/// Slab scales `Gamma(shape 1 + m, rate 5 + |col|_1)` for active columns;
/// spike columns get `lambda1`.
pub fn sample_slab_rates<R: Rng + ?Sized>(columns: &[Vec<f64>], c: &[usize], lambda1: f64, rng: &mut R) -> Vec<f64> {
    columns
        .iter()
        .zip(c)
        .enumerate()
        .map(|(k0, (col, &ck))| {
            if ck > k0 + 1 {
                let shape = SLAB_SHAPE + col.len() as f64;
                let rate = SLAB_RATE + l1(col);
                Gamma::new(shape, 1.0 / rate).expect("positive Gamma parameters").sample(rng)
            } else {
                lambda1
            }
        })
        .collect()
}

/// Per-entry l1 weights for a weight matrix with `rows` rows: 0 for the
/// intercept column, `1 / lambda` elsewhere.
pub fn penalty_weights(layer: &CspLayerState, rows: usize) -> Matrix {
    let k_max = layer.k_max();
    let mut out = Matrix::zeros(rows, k_max + 1);
    for k0 in 0..k_max {
        let lambda = if layer.c[k0] > k0 + 1 { layer.lambda0[k0] } else { layer.lambda1 };
        for r in 0..rows {
            out[(r, k0 + 1)] = 1.0 / lambda;
        }
    }
    out
}

pub fn active_columns(c: &[usize]) -> Vec<bool> {
    c.iter().enumerate().map(|(k0, &ck)| ck > k0 + 1).collect()
}

/// Number of slab columns, `sum_k 1(c_k > k)`.
pub fn effective_width(c: &[usize]) -> usize {
    active_columns(c).into_iter().filter(|&a| a).count()
}

/// Non-intercept columns of `weights` restricted to the rows flagged in
/// `active_rows`.
pub fn restricted_columns(weights: &WeightMatrix, active_rows: &[bool]) -> Vec<Vec<f64>> {
    (0..weights.latent())
        .map(|k| (0..weights.rows()).filter(|&r| active_rows[r]).map(|r| weights.coef(r, k)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn marginal_hand_values() {
        assert_eq!(spike_log_marginal(&[0.0, 0.0], 0.5), 0.0);
        assert!((spike_log_marginal(&[1.0], 1.0) + 1.6931471805599454).abs() < 1e-14);
        assert!((slab_log_marginal(&[0.0]) + libm::log(10.0)).abs() < 1e-14);
        let expected = -core::f64::consts::LN_2 + libm::log(5.0) - 2.0 * libm::log(10.0);
        assert!((slab_log_marginal(&[5.0]) - expected).abs() < 1e-14);
    }

    #[test]
    fn slab_beats_small_spike_for_large_columns() {
        let col = [50.0, 50.0];
        assert!(slab_log_marginal(&col) - spike_log_marginal(&col, 0.02) > 4000.0);
    }

    #[test]
    fn stick_breaking_product() {
        assert_eq!(stick_breaking(&[0.5, 0.5, 1.0]), vec![0.5, 0.25, 0.25]);
    }

    #[test]
    fn stick_counts() {
        // all allocations at K+1 = 4
        let p = stick_parameters(&[4, 4, 4], 3.0);
        assert_eq!(p, vec![(1.0, 6.0), (1.0, 6.0), (1.0, 6.0)]);
        let p = stick_parameters(&[1, 3, 4], 3.0);
        assert_eq!(p, vec![(2.0, 5.0), (1.0, 5.0), (2.0, 4.0)]);
    }

    #[test]
    fn widths() {
        assert_eq!(effective_width(&[3, 1, 4]), 2);
        assert_eq!(effective_width(&[2, 3, 4]), 3);
        assert_eq!(effective_width(&[1, 1, 1]), 0);
    }

    #[test]
    fn penalty_reciprocals() {
        let mut s = CspLayerState::new(2, 0.02);
        s.c = vec![1, 3];
        s.lambda0 = vec![7.0, 2.0];
        let w = penalty_weights(&s, 3);
        for r in 0..3 {
            assert_eq!(w[(r, 0)], 0.0);
            assert_eq!(w[(r, 1)], 50.0);
            assert_eq!(w[(r, 2)], 0.5);
        }
    }

    #[test]
    fn zero_column_goes_to_spike() {
        let s = CspLayerState::new(3, 0.02);
        let c = allocate_c(&s.omega, s.lambda1, &[vec![0.0; 5], vec![0.0; 5], vec![0.0; 5]]);
        assert_eq!(effective_width(&c), 0);
    }

    #[test]
    fn slab_forced_by_prior() {
        let omega = [0.0, 0.0, 0.0, 1.0];
        let c = allocate_c(&omega, 0.02, &[vec![0.0; 4], vec![0.0; 4], vec![0.0; 4]]);
        assert_eq!(c, vec![4, 4, 4]);
    }

    #[test]
    fn slab_rates_mean() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += sample_slab_rates(&[vec![0.0]], &[2], 0.02, &mut rng)[0];
        }
        let mean = sum / n as f64;
        // Gamma(2, rate 5): mean 0.4, sd sqrt(2)/5
        let se = libm::sqrt(2.0) / 5.0 / libm::sqrt(n as f64);
        assert!((mean - 0.4).abs() < 3.0 * se, "{mean}");
    }
}
