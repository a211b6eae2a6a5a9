//! Sampling of the binary latent layers.
//!
//! Every coordinate `A^(l)_ik` has a full-conditional log-odds `Delta` made of
//! a prior term (the top-layer logit or the parent linear predictor) and a
//! contrast of the child likelihood with the coordinate switched on and off.
//! The mean-field sweep evaluates all `Delta` against the previous
//! configuration and draws every coordinate at once; the exact sweep visits
//! coordinates one at a time against the in-progress configuration.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{BinaryMatrix, Matrix};
use crate::model::{DdeParams, LatentState};
use crate::rng::{fork_key, substream, ROW_BLOCK};
use crate::special::{bernoulli_log_pmf, logistic, logit};

const TAG_MEAN_FIELD: u64 = 0x4d46_5357_4545_5000;
const TAG_EXACT: u64 = 0x4547_5357_4545_5000;

/// Log-odds of every binary coordinate; `layers[l]` is `n x K_l`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogOddsField {
    pub layers: Vec<Matrix>,
}

/// Per-row linear predictors of every child given the current configuration.
struct RowCache {
    /// `mu[j]`: Gaussian mean of `Z_ij`.
    mu: Vec<f64>,
    /// `eta[l][c]`: logistic predictor of `A^(l)_ic` from layer `l + 1`.
    eta: Vec<Vec<f64>>,
}

impl RowCache {
    fn new(params: &DdeParams, row: &[Vec<u8>]) -> Self {
        let depth = params.depth();
        let mu = (0..params.observed()).map(|j| params.mean(j, &row[0])).collect();
        let eta = (0..depth - 1)
            .map(|l| {
                let w = &params.weights[l + 1];
                (0..w.rows()).map(|c| w.linear_predictor(c, &row[l + 1])).collect()
            })
            .collect();
        Self { mu, eta }
    }

    /// Propagates a flip of `A^(l)_k` to the cached child predictors.
    fn flip(&mut self, params: &DdeParams, l: usize, k: usize, now_on: bool) {
        let sign = if now_on { 1.0 } else { -1.0 };
        let w = &params.weights[l];
        let target = if l == 0 { &mut self.mu } else { &mut self.eta[l - 1] };
        for (c, t) in target.iter_mut().enumerate() {
            *t += sign * w.coef(c, k);
        }
    }
}

fn check_params(params: &DdeParams) -> Result<()> {
    if let Some(k) = params.pi.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
        return Err(Error::Domain(format!("pi[{k}] = {} must lie in (0, 1)", params.pi[k])));
    }
    if let Some(j) = params.gamma.iter().position(|&g| !(g > 0.0)) {
        return Err(Error::Domain(format!("gamma[{j}] must be positive")));
    }
    Ok(())
}

/// Prior part of the log-odds of `A^(l)_k`.
fn prior_term(params: &DdeParams, cache: &RowCache, l: usize, k: usize) -> f64 {
    if l + 1 == params.depth() {
        logit(params.pi[k])
    } else {
        cache.eta[l][k]
    }
}

/// `log p(children | A^(l)_k = 1) - log p(children | A^(l)_k = 0)`.
fn child_contrast(params: &DdeParams, cache: &RowCache, row: &[Vec<u8>], z: &[f64], l: usize, k: usize) -> f64 {
    let on = row[l][k] != 0;
    let w = &params.weights[l];
    if l == 0 {
        let mut total = 0.0;
        for (j, (&zj, &mu)) in z.iter().zip(&cache.mu).enumerate() {
            let b = w.coef(j, k);
            let (mu1, mu0) = if on { (mu, mu - b) } else { (mu + b, mu) };
            let d0 = zj - mu0;
            let d1 = zj - mu1;
            total += (d0 * d0 - d1 * d1) / (2.0 * params.gamma[j]);
        }
        total
    } else {
        let children = &row[l - 1];
        let mut total = 0.0;
        for (c, &eta) in cache.eta[l - 1].iter().enumerate() {
            let b = w.coef(c, k);
            if b == 0.0 {
                continue;
            }
            let (eta1, eta0) = if on { (eta, eta - b) } else { (eta + b, eta) };
            let a = children[c] != 0;
            total += bernoulli_log_pmf(a, eta1) - bernoulli_log_pmf(a, eta0);
        }
        total
    }
}

fn delta(params: &DdeParams, cache: &RowCache, row: &[Vec<u8>], z: &[f64], l: usize, k: usize) -> f64 {
    prior_term(params, cache, l, k) + child_contrast(params, cache, row, z, l, k)
}

fn row_config(state: &LatentState, i: usize) -> Vec<Vec<u8>> {
    state.layers.iter().map(|a| a.row(i).to_vec()).collect()
}

/// Full-conditional log-odds of `A^(layer)_ik` (layers counted from 0 at the
/// Gaussian end) given every other coordinate of row `i`.
pub fn log_odds(params: &DdeParams, state: &LatentState, i: usize, layer: usize, k: usize) -> Result<f64> {
    check_params(params)?;
    state.check_shapes(params)?;
    if layer >= params.depth() || k >= params.dims.width(layer) || i >= state.n() {
        return Err(Error::Shape(format!("coordinate ({i}, {layer}, {k}) out of range")));
    }
    let row = row_config(state, i);
    let cache = RowCache::new(params, &row);
    Ok(delta(params, &cache, &row, state.z.row(i), layer, k))
}

/// Log-odds of a top-layer coordinate.
pub fn log_odds_top(params: &DdeParams, state: &LatentState, i: usize, k: usize) -> Result<f64> {
    log_odds(params, state, i, params.depth() - 1, k)
}

/// Log-odds of a coordinate in a layer strictly between the top and bottom.
pub fn log_odds_middle(params: &DdeParams, state: &LatentState, i: usize, layer: usize, k: usize) -> Result<f64> {
    if layer == 0 || layer + 1 >= params.depth() {
        return Err(Error::Invalid(format!("layer {layer} is not an intermediate layer")));
    }
    log_odds(params, state, i, layer, k)
}

/// Log-odds of a coordinate of the layer directly above `Z`.
pub fn log_odds_bottom(params: &DdeParams, state: &LatentState, i: usize, k: usize) -> Result<f64> {
    log_odds(params, state, i, 0, k)
}

/// Log-odds of every coordinate, all evaluated at the current configuration.
pub fn log_odds_field(params: &DdeParams, state: &LatentState) -> Result<LogOddsField> {
    check_params(params)?;
    state.check_shapes(params)?;
    let n = state.n();
    let widths = params.dims.widths();
    let rows: Vec<Vec<Vec<f64>>> = crate::par::map_indexed(n, |i| row_field(params, state, i));
    let mut layers: Vec<Matrix> = widths.iter().map(|&k| Matrix::zeros(n, k)).collect();
    for (i, row) in rows.into_iter().enumerate() {
        for (l, d) in row.into_iter().enumerate() {
            layers[l].row_mut(i).copy_from_slice(&d);
        }
    }
    Ok(LogOddsField { layers })
}

fn row_field(params: &DdeParams, state: &LatentState, i: usize) -> Vec<Vec<f64>> {
    let row = row_config(state, i);
    let cache = RowCache::new(params, &row);
    let z = state.z.row(i);
    (0..params.depth()).map(|l| (0..row[l].len()).map(|k| delta(params, &cache, &row, z, l, k)).collect()).collect()
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau <= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("temperature {tau} outside (0, 1]")))
    }
}

/// Writes per-block row results back into the binary layers.
fn scatter(layers: &mut [BinaryMatrix], blocks: Vec<Vec<Vec<Vec<u8>>>>) {
    let mut i = 0;
    for block in blocks {
        for row in block {
            for (l, values) in row.into_iter().enumerate() {
                layers[l].row_mut(i).copy_from_slice(&values);
            }
            i += 1;
        }
    }
}

/// Product-form Gibbs step: every `A^(l)_ik ~ Bernoulli(logistic(tau * Delta))`
/// with all `Delta` taken from the incoming configuration.
pub fn mean_field_sweep<R: Rng + ?Sized>(
    state: &mut LatentState,
    params: &DdeParams,
    tau: f64,
    rng: &mut R,
) -> Result<()> {
    check_tau(tau)?;
    check_params(params)?;
    state.check_shapes(params)?;
    let key = fork_key(rng);
    let n = state.n();
    let frozen = &*state;
    let blocks = crate::par::map_indexed(n.div_ceil(ROW_BLOCK), |b| {
        let mut stream = substream(key, TAG_MEAN_FIELD, b as u64);
        (b * ROW_BLOCK..n.min((b + 1) * ROW_BLOCK))
            .map(|i| {
                row_field(params, frozen, i)
                    .into_iter()
                    .map(|d| {
                        d.into_iter()
                            .map(|x| {
                                let u: f64 = stream.random();
                                (u < logistic(tau * x)) as u8
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    });
    scatter(&mut state.layers, blocks);
    Ok(())
}

/// Sequential Gibbs step: layers from the Gaussian end upward, coordinates in
/// ascending order, each drawn from its tempered full conditional given the
/// in-progress configuration.
pub fn exact_gibbs_sweep<R: Rng + ?Sized>(
    state: &mut LatentState,
    params: &DdeParams,
    tau: f64,
    rng: &mut R,
) -> Result<()> {
    check_tau(tau)?;
    check_params(params)?;
    state.check_shapes(params)?;
    let key = fork_key(rng);
    let n = state.n();
    let frozen = &*state;
    let blocks = crate::par::map_indexed(n.div_ceil(ROW_BLOCK), |b| {
        let mut stream = substream(key, TAG_EXACT, b as u64);
        (b * ROW_BLOCK..n.min((b + 1) * ROW_BLOCK))
            .map(|i| {
                let mut row = row_config(frozen, i);
                let mut cache = RowCache::new(params, &row);
                let z = frozen.z.row(i);
                for l in 0..params.depth() {
                    for k in 0..row[l].len() {
                        let d = delta(params, &cache, &row, z, l, k);
                        let u: f64 = stream.random();
                        let on = u < logistic(tau * d);
                        if on != (row[l][k] != 0) {
                            row[l][k] = on as u8;
                            cache.flip(params, l, k, on);
                        }
                    }
                }
                row
            })
            .collect()
    });
    scatter(&mut state.layers, blocks);
    Ok(())
}

/// Probability of `A = 1` for one coordinate at temperature `tau`.
pub fn activation_probability(delta: f64, tau: f64) -> f64 {
    logistic(tau * delta)
}
