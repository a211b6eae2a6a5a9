//! DDE copula parameterization, forward sampling, layer-conditional densities
//! and canonical normalization.
//!
//! Layers are indexed from zero in code: layer 0 is the shallowest binary
//! layer `A^(1)` and `weights[0]` is the `J x (1 + K1)` Gaussian loading
//! matrix. For `l >= 1`, `weights[l]` holds the logistic regressions of
//! layer `l - 1` on layer `l` and has shape `K_{l-1} x (1 + K_l)`. Column 0
//! of every weight matrix is the intercept.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{BinaryMatrix, Matrix};
use crate::special;

pub use crate::special::logistic;

/// Layer widths of a DDE.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DdeDims {
    observed: usize,
    widths: Vec<usize>,
}

impl DdeDims {
    /// `widths[l]` is the width of binary layer `l` (shallowest first).
    pub fn new(observed: usize, widths: Vec<usize>) -> Result<Self> {
        if observed == 0 {
            return Err(Error::Invalid("observed dimension must be positive".into()));
        }
        if widths.is_empty() {
            return Err(Error::Invalid("a DDE needs at least one latent layer".into()));
        }
        let mut above = observed;
        for (l, &k) in widths.iter().enumerate() {
            if k == 0 {
                return Err(Error::Invalid(format!("layer {} has zero width", l + 1)));
            }
            if k > above {
                return Err(Error::Invalid(format!("layer {} width {k} exceeds the width {above} below it", l + 1)));
            }
            above = k;
        }
        Ok(Self { observed, widths })
    }

    /// Maximal widths `K_l = floor(K_{l-1} / 3)` starting from `K_0 = J`.
    pub fn maximal(observed: usize, depth: usize) -> Result<Self> {
        let mut widths = Vec::with_capacity(depth);
        let mut k = observed;
        for _ in 0..depth {
            k /= 3;
            widths.push(k);
        }
        Self::new(observed, widths)
    }

    pub fn observed(&self) -> usize {
        self.observed
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    pub fn width(&self, layer: usize) -> usize {
        self.widths[layer]
    }

    /// Number of rows of `weights[layer]`.
    pub fn rows_of(&self, layer: usize) -> usize {
        if layer == 0 {
            self.observed
        } else {
            self.widths[layer - 1]
        }
    }

    pub fn total_latent(&self) -> usize {
        self.widths.iter().sum()
    }
}

/// Weight matrix with the intercept stored in column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix(Matrix);

impl WeightMatrix {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.cols() == 0 {
            return Err(Error::Shape("weight matrix needs an intercept column".into()));
        }
        if !matrix.is_finite() {
            return Err(Error::Domain("weight matrix entries must be finite".into()));
        }
        Ok(Self(matrix))
    }

    pub fn zeros(rows: usize, latent: usize) -> Self {
        Self(Matrix::zeros(rows, latent + 1))
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    /// Number of parent latents (columns excluding the intercept).
    pub fn latent(&self) -> usize {
        self.0.cols() - 1
    }

    pub fn intercept(&self, r: usize) -> f64 {
        self.0[(r, 0)]
    }

    pub fn coef(&self, r: usize, k: usize) -> f64 {
        self.0[(r, k + 1)]
    }

    pub fn set_coef(&mut self, r: usize, k: usize, value: f64) {
        self.0[(r, k + 1)] = value;
    }

    /// Full row including the intercept.
    pub fn row(&self, r: usize) -> &[f64] {
        self.0.row(r)
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        self.0.row_mut(r)
    }

    /// Non-intercept column `k`.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.0.col(k + 1)
    }

    pub fn linear_predictor(&self, r: usize, parents: &[u8]) -> f64 {
        linear_predictor(self.row(r), parents)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn matrix_mut(&mut self) -> &mut Matrix {
        &mut self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }
}

#[inline]
pub(crate) fn linear_predictor(row: &[f64], parents: &[u8]) -> f64 {
    let mut eta = row[0];
    for (b, &a) in row[1..].iter().zip(parents) {
        if a != 0 {
            eta += b;
        }
    }
    eta
}

/// `logistic(row[0] + sum_l row[l+1] * alpha[l])`.
pub fn child_activation_prob(row: &[f64], alpha: &[u8]) -> Result<f64> {
    if row.len() != alpha.len() + 1 {
        return Err(Error::Shape(format!("weight row of length {} does not match {} parents", row.len(), alpha.len())));
    }
    Ok(logistic(linear_predictor(row, alpha)))
}

/// Model parameters `(B, gamma, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DdeParams {
    pub dims: DdeDims,
    pub weights: Vec<WeightMatrix>,
    /// Conditional variance of each Gaussian coordinate.
    pub gamma: Vec<f64>,
    /// Activation probabilities of the top layer.
    pub pi: Vec<f64>,
}

impl DdeParams {
    pub fn new(dims: DdeDims, weights: Vec<WeightMatrix>, gamma: Vec<f64>, pi: Vec<f64>) -> Result<Self> {
        let params = Self { dims, weights, gamma, pi };
        params.validate()?;
        Ok(params)
    }

    /// Checks shapes, `gamma > 0` and `pi` in `[0, 1]`.
    ///
    /// Degenerate `pi` in {0, 1} is admitted for forward simulation; the
    /// estimation steps that need logits reject it themselves.
    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if self.weights.len() != d.depth() {
            return Err(Error::Shape(format!(
                "{} weight matrices for a depth-{} model",
                self.weights.len(),
                d.depth()
            )));
        }
        for (l, w) in self.weights.iter().enumerate() {
            if w.rows() != d.rows_of(l) || w.latent() != d.width(l) {
                return Err(Error::Shape(format!(
                    "weight matrix {} is {}x{}, expected {}x{}",
                    l + 1,
                    w.rows(),
                    w.latent() + 1,
                    d.rows_of(l),
                    d.width(l) + 1
                )));
            }
            if !w.matrix().is_finite() {
                return Err(Error::Domain(format!("weight matrix {} is not finite", l + 1)));
            }
        }
        if self.gamma.len() != d.observed() {
            return Err(Error::Shape(format!("{} variances for {} observed columns", self.gamma.len(), d.observed())));
        }
        if let Some(j) = self.gamma.iter().position(|&g| !(g > 0.0 && g.is_finite())) {
            return Err(Error::Domain(format!("gamma[{j}] = {} is not positive", self.gamma[j])));
        }
        if self.pi.len() != d.width(d.depth() - 1) {
            return Err(Error::Shape(format!(
                "{} top-layer probabilities for width {}",
                self.pi.len(),
                d.width(d.depth() - 1)
            )));
        }
        if let Some(k) = self.pi.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Domain(format!("pi[{k}] = {} outside [0, 1]", self.pi[k])));
        }
        Ok(())
    }

    pub fn depth(&self) -> usize {
        self.dims.depth()
    }

    pub fn observed(&self) -> usize {
        self.dims.observed()
    }

    /// Conditional mean of `Z_j` given a first-layer configuration.
    pub fn mean(&self, j: usize, first_layer: &[u8]) -> f64 {
        self.weights[0].linear_predictor(j, first_layer)
    }
}

/// Per-row binary layers and the Gaussian layer `Z`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    /// `layers[l]` is `n x K_l`.
    pub layers: Vec<BinaryMatrix>,
    /// `n x J`.
    pub z: Matrix,
}

impl LatentState {
    pub fn n(&self) -> usize {
        self.z.rows()
    }

    pub fn check_shapes(&self, params: &DdeParams) -> Result<()> {
        let n = self.n();
        if self.z.cols() != params.observed() {
            return Err(Error::Shape(format!("Z has {} columns, model has {}", self.z.cols(), params.observed())));
        }
        if self.layers.len() != params.depth() {
            return Err(Error::Shape(format!(
                "{} binary layers for a depth-{} model",
                self.layers.len(),
                params.depth()
            )));
        }
        for (l, a) in self.layers.iter().enumerate() {
            if a.rows() != n || a.cols() != params.dims.width(l) {
                return Err(Error::Shape(format!(
                    "layer {} is {}x{}, expected {n}x{}",
                    l + 1,
                    a.rows(),
                    a.cols(),
                    params.dims.width(l)
                )));
            }
        }
        Ok(())
    }
}

/// Draws `n` independent rows `(A^(D), ..., A^(1), Z)` top-down.
pub fn ancestral_sample<R: Rng + ?Sized>(params: &DdeParams, n: usize, rng: &mut R) -> Result<LatentState> {
    params.validate()?;
    let depth = params.depth();
    let mut layers: Vec<BinaryMatrix> = params.dims.widths().iter().map(|&k| BinaryMatrix::zeros(n, k)).collect();
    let j_dim = params.observed();
    let mut z = Matrix::zeros(n, j_dim);
    let sds: Vec<f64> = params.gamma.iter().map(|g| libm::sqrt(*g)).collect();
    for i in 0..n {
        for (k, &p) in params.pi.iter().enumerate() {
            let u: f64 = rng.random();
            layers[depth - 1].set(i, k, u < p);
        }
        for l in (0..depth - 1).rev() {
            let (lower, upper) = layers.split_at_mut(l + 1);
            let parents = upper[0].row(i);
            let w = &params.weights[l + 1];
            for k in 0..w.rows() {
                let p = logistic(w.linear_predictor(k, parents));
                let u: f64 = rng.random();
                lower[l].set(i, k, u < p);
            }
        }
        let a1 = layers[0].row(i);
        let zi = z.row_mut(i);
        for j in 0..j_dim {
            let e: f64 = StandardNormal.sample(rng);
            zi[j] = params.mean(j, a1) + sds[j] * e;
        }
    }
    Ok(LatentState { layers, z })
}

/// `log p(Z_i | A^(1)_i) + sum_l log p(A^(l)_i | A^(l+1)_i) + log p(A^(D)_i)`.
pub fn complete_log_density(params: &DdeParams, state: &LatentState, row: usize) -> Result<f64> {
    state.check_shapes(params)?;
    if let Some(j) = params.gamma.iter().position(|&g| g <= 0.0) {
        return Err(Error::Domain(format!("gamma[{j}] must be positive")));
    }
    let depth = params.depth();
    let mut total = 0.0;
    for (k, &p) in params.pi.iter().enumerate() {
        total += if state.layers[depth - 1].get(row, k) != 0 { libm::log(p) } else { libm::log1p(-p) };
    }
    for l in (0..depth - 1).rev() {
        let parents = state.layers[l + 1].row(row);
        let children = state.layers[l].row(row);
        let w = &params.weights[l + 1];
        for (k, &a) in children.iter().enumerate() {
            total += special::bernoulli_log_pmf(a != 0, w.linear_predictor(k, parents));
        }
    }
    let a1 = state.layers[0].row(row);
    for (j, &z) in state.z.row(row).iter().enumerate() {
        total += special::normal_log_pdf(z, params.mean(j, a1), params.gamma[j]);
    }
    Ok(total)
}

/// Largest sum of two adjacent layer widths handled by exact enumeration.
pub const MAX_ENUMERATION_BITS: usize = 24;

fn decode(config: usize, width: usize) -> Vec<u8> {
    (0..width).map(|k| ((config >> k) & 1) as u8).collect()
}

/// Exact marginal distribution of the first binary layer, as
/// `(configuration, probability)` pairs with zero-probability states dropped.
pub fn first_layer_distribution(params: &DdeParams) -> Result<Vec<(Vec<u8>, f64)>> {
    params.validate()?;
    let depth = params.depth();
    let widths = params.dims.widths();
    for l in 0..depth {
        let pair = widths[l] + if l + 1 < depth { widths[l + 1] } else { 0 };
        if pair > MAX_ENUMERATION_BITS {
            return Err(Error::Domain(format!("exact enumeration over {pair} bits is not supported")));
        }
    }
    let top = widths[depth - 1];
    let mut dist: Vec<f64> = (0..1usize << top)
        .map(|c| decode(c, top).iter().zip(&params.pi).map(|(&a, &p)| if a != 0 { p } else { 1.0 - p }).product())
        .collect();
    for l in (0..depth - 1).rev() {
        let w = &params.weights[l + 1];
        let width = widths[l];
        let mut next = vec![0.0; 1usize << width];
        for (parent, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let alpha = decode(parent, widths[l + 1]);
            let probs: Vec<f64> = (0..width).map(|k| logistic(w.linear_predictor(k, &alpha))).collect();
            for (child, slot) in next.iter_mut().enumerate() {
                let mut p = mass;
                for (k, &q) in probs.iter().enumerate() {
                    p *= if (child >> k) & 1 == 1 { q } else { 1.0 - q };
                }
                *slot += p;
            }
        }
        dist = next;
    }
    Ok(dist.into_iter().enumerate().filter(|(_, p)| *p > 0.0).map(|(c, p)| (decode(c, widths[0]), p)).collect())
}

/// Per-column affine map `z -> (z - shift) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineMap {
    pub shift: f64,
    pub scale: f64,
}

impl AffineMap {
    pub fn apply(&self, z: f64) -> f64 {
        (z - self.shift) / self.scale
    }
}

fn maps_from_moments(params: &DdeParams, moments: &[(f64, f64)]) -> Result<Vec<AffineMap>> {
    moments
        .iter()
        .enumerate()
        .map(|(j, &(mean, var_mu))| {
            let s2 = params.gamma[j] + var_mu;
            if !(s2 > 0.0) || !s2.is_finite() {
                return Err(Error::DegenerateVariance(j));
            }
            Ok(AffineMap { shift: mean, scale: libm::sqrt(s2) })
        })
        .collect()
}

/// Canonicalizing maps estimated from the first layer of a latent sample:
/// `shift = mean(mu_j)`, `scale^2 = gamma_j + var(mu_j)`.
pub fn canonical_maps(params: &DdeParams, sample: &LatentState) -> Result<Vec<AffineMap>> {
    params.validate()?;
    let a1 = &sample.layers[0];
    let n = a1.rows();
    if n == 0 {
        return Err(Error::Invalid("canonicalization needs a non-empty latent sample".into()));
    }
    if a1.cols() != params.dims.width(0) {
        return Err(Error::Shape("latent sample does not match the first layer width".into()));
    }
    // Group identical configurations so wide samples stay cheap.
    let mut counts: BTreeMap<&[u8], usize> = BTreeMap::new();
    for i in 0..n {
        *counts.entry(a1.row(i)).or_default() += 1;
    }
    let weighted: Vec<(&[u8], f64)> = counts.into_iter().map(|(c, m)| (c, m as f64 / n as f64)).collect();
    let moments = mixture_moments(params, weighted.iter().map(|(c, w)| (*c, *w)));
    maps_from_moments(params, &moments)
}

/// Canonicalizing maps from the exact first-layer distribution.
pub fn canonical_maps_exact(params: &DdeParams) -> Result<Vec<AffineMap>> {
    let dist = first_layer_distribution(params)?;
    let moments = mixture_moments(params, dist.iter().map(|(c, w)| (c.as_slice(), *w)));
    maps_from_moments(params, &moments)
}

fn mixture_moments<'a>(params: &DdeParams, configs: impl Iterator<Item = (&'a [u8], f64)> + Clone) -> Vec<(f64, f64)> {
    (0..params.observed())
        .map(|j| {
            let mean: f64 = configs.clone().map(|(c, w)| w * params.mean(j, c)).sum();
            let var: f64 = configs
                .clone()
                .map(|(c, w)| {
                    let d = params.mean(j, c) - mean;
                    w * d * d
                })
                .sum();
            (mean, var)
        })
        .collect()
}

/// Rewrites `(B^(1), gamma)` so that `Z' = map(Z)` has the same law under the
/// new parameters. Deeper layers are unchanged.
pub fn apply_maps(params: &DdeParams, maps: &[AffineMap]) -> DdeParams {
    let mut out = params.clone();
    let w = out.weights[0].matrix_mut();
    for (j, m) in maps.iter().enumerate() {
        let row = w.row_mut(j);
        row[0] = (row[0] - m.shift) / m.scale;
        for b in &mut row[1..] {
            *b /= m.scale;
        }
        out.gamma[j] /= m.scale * m.scale;
    }
    out
}

/// Post-hoc normalization to zero mean and unit variance of every `Z_j`,
/// with moments taken from a latent sample.
pub fn canonicalize(params: &DdeParams, latent_sample: &LatentState) -> Result<DdeParams> {
    let maps = canonical_maps(params, latent_sample)?;
    Ok(apply_maps(params, &maps))
}

/// As [`canonicalize`], with moments from exact enumeration.
pub fn canonicalize_exact(params: &DdeParams) -> Result<DdeParams> {
    let maps = canonical_maps_exact(params)?;
    Ok(apply_maps(params, &maps))
}
