//! Conditional maximization steps and the Monte Carlo EM driver.

pub mod solvers;
pub mod updates;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::csp::{self, CspLayerState};
use crate::error::{Error, Result};
use crate::frame::RankFrame;
use crate::init::{self, InitState};
use crate::latent;
use crate::linalg::{BinaryMatrix, Matrix};
use crate::model::{DdeDims, DdeParams, LatentState, WeightMatrix};
use crate::rank;
use crate::rng::{substream, StreamRng};
use crate::special::normal_log_pdf;

pub use solvers::{
    lasso_gram, logistic_grouped, solve_weighted_l1_gaussian, solve_weighted_l1_logistic, GroupedBinomial, LogisticFit,
    SOLVER_TOL,
};
pub use updates::{
    apply_gating, convergence_check, default_xi, relative_change, temperature_step, threshold_matrix, update_gamma,
    update_pi, update_pi_draws,
};

const TAG_FIT: u64 = 0x4649_5400_0000_0001;

/// Binary-layer update used in the E-step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Variant {
    /// Product-form step with all log-odds from the previous configuration.
    #[default]
    MeanField,
    /// Sequential single-site Gibbs.
    ExactGibbs,
}

/// Settings of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_iters: usize,
    pub burn_in: usize,
    pub tau0: f64,
    pub tau_increment: f64,
    /// Coefficient threshold; `None` uses `max(0.3, 3 n^-0.3)`.
    pub xi: Option<f64>,
    pub window: usize,
    pub tol: f64,
    /// E-step draws per iteration.
    pub monte_carlo_count: usize,
    pub solver_tol: f64,
    pub seed: u64,
    pub variant: Variant,
    /// Number of binary layers.
    pub depth: usize,
    /// Candidate widths; `None` uses `K_l = floor(K_{l-1} / 3)` from `J`.
    pub max_widths: Option<Vec<usize>>,
    /// Spike scales per layer; `None` uses [`csp::default_lambda1`].
    pub lambda1: Option<Vec<f64>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            burn_in: 10,
            tau0: 0.9,
            tau_increment: 0.01,
            xi: None,
            window: 10,
            tol: 1e-3,
            monte_carlo_count: 1,
            solver_tol: SOLVER_TOL,
            seed: 0,
            variant: Variant::MeanField,
            depth: 2,
            max_widths: None,
            lambda1: None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau0 > 0.0 && self.tau0 <= 1.0) {
            return Err(Error::Invalid(format!("tau0 = {} outside (0, 1]", self.tau0)));
        }
        if let Some(xi) = self.xi {
            if !(xi >= 0.0) {
                return Err(Error::Invalid(format!("xi = {xi} must be nonnegative")));
            }
        }
        if self.monte_carlo_count == 0 {
            return Err(Error::Invalid("monte_carlo_count must be at least 1".into()));
        }
        if self.window < 2 {
            return Err(Error::Invalid("convergence window must be at least 2".into()));
        }
        if self.depth == 0 {
            return Err(Error::Invalid("depth must be at least 1".into()));
        }
        if !(self.tau_increment >= 0.0) || !(self.tol > 0.0) || !(self.solver_tol > 0.0) {
            return Err(Error::Invalid("tolerances and increments must be positive".into()));
        }
        Ok(())
    }

    /// Candidate dimensions for data with `observed` columns. Without
    /// explicit widths, layers whose maximal width would be zero are dropped.
    pub fn dims(&self, observed: usize) -> Result<DdeDims> {
        match &self.max_widths {
            Some(w) => {
                if w.len() != self.depth {
                    return Err(Error::Invalid(format!("{} widths given for depth {}", w.len(), self.depth)));
                }
                DdeDims::new(observed, w.clone())
            }
            None => {
                let mut depth = self.depth;
                let mut k = observed;
                for l in 0..self.depth {
                    k /= 3;
                    if k == 0 {
                        depth = l;
                        break;
                    }
                }
                if depth == 0 {
                    return Err(Error::Invalid(format!(
                        "{observed} observed columns leave no room for a latent layer"
                    )));
                }
                if depth < self.depth {
                    log::warn!("{observed} columns support only {depth} latent layer(s); fitting depth {depth}");
                }
                DdeDims::maximal(observed, depth)
            }
        }
    }
}

/// One row of the convergence trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// Temperature used during the iteration.
    pub tau: f64,
    /// Relative Frobenius change of each weight matrix.
    pub rel_change: Vec<f64>,
    pub widths: Vec<usize>,
    /// Average Gaussian log-density of `Z` under the updated parameters.
    pub gaussian_loglik: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: DdeParams,
    pub csp: Vec<CspLayerState>,
    /// Final E-step draw.
    pub latent: LatentState,
    /// Majority-vote binary layers over the draws of the final iteration.
    pub binary_estimate: Vec<BinaryMatrix>,
    pub effective_widths: Vec<usize>,
    pub trace: Vec<TraceRow>,
    pub iterations_run: usize,
    pub converged: bool,
    /// Some logistic coefficient reached the magnitude cap.
    pub capped: bool,
}

fn non_finite(iteration: usize, block: &str) -> Error {
    Error::NonFinite { iteration, block: String::from(block) }
}

fn intercept_design(layers: &[&BinaryMatrix], active: &[bool]) -> Matrix {
    let cols: Vec<usize> = active.iter().enumerate().filter(|(_, a)| **a).map(|(k, _)| k).collect();
    let n: usize = layers.iter().map(|a| a.rows()).sum();
    let mut x = Matrix::zeros(n, cols.len() + 1);
    let mut i = 0;
    for a in layers {
        for r in 0..a.rows() {
            let row = x.row_mut(i);
            row[0] = 1.0;
            for (dst, &k) in row[1..].iter_mut().zip(&cols) {
                *dst = a.get(r, k) as f64;
            }
            i += 1;
        }
    }
    x
}

fn restrict(row: &[f64], active: &[bool]) -> Vec<f64> {
    let mut out = vec![row[0]];
    out.extend(row[1..].iter().zip(active).filter(|(_, a)| **a).map(|(v, _)| *v));
    out
}

fn expand(coef: &[f64], active: &[bool]) -> Vec<f64> {
    let mut out = vec![0.0; active.len() + 1];
    out[0] = coef[0];
    let mut it = coef[1..].iter();
    for (k, &a) in active.iter().enumerate() {
        if a {
            out[k + 1] = *it.next().expect("one coefficient per active column");
        }
    }
    out
}

/// Majority vote over draws; exact ties keep `previous`.
fn majority_vote(draws: &[&BinaryMatrix], previous: &BinaryMatrix) -> BinaryMatrix {
    let c = draws.len();
    let mut out = previous.clone();
    for i in 0..previous.rows() {
        for k in 0..previous.cols() {
            let ones: usize = draws.iter().map(|a| a.get(i, k) as usize).sum();
            if 2 * ones > c {
                out.set(i, k, true);
            } else if 2 * ones < c {
                out.set(i, k, false);
            }
        }
    }
    out
}

/// Monte Carlo EM for a DDE copula. Without `init`, starts from the spectral
/// `Z` and double-SVD parameters at the candidate widths.
pub fn fit(frame: &RankFrame, config: &FitConfig, init: Option<InitState>) -> Result<FitResult> {
    config.validate()?;
    let mut rng: StreamRng = substream(config.seed, TAG_FIT, 0);
    let n = frame.n();
    let j_dim = frame.j();
    let InitState { mut params, mut latent } = match init {
        Some(s) => s,
        None => {
            let dims = config.dims(j_dim)?;
            init::initialize(frame, &dims, &mut rng)?
        }
    };
    params.validate()?;
    latent.check_shapes(&params)?;
    rank::check_rank_consistency(frame, &latent.z)?;
    let dims = params.dims.clone();
    let depth = dims.depth();
    if n < 3 * dims.width(0) {
        log::warn!("n = {n} is below 3 K1 = {}; initialization may be poor", 3 * dims.width(0));
    }
    let lambda1: Vec<f64> = match &config.lambda1 {
        Some(v) if v.len() == depth => v.clone(),
        Some(v) => return Err(Error::Invalid(format!("{} spike scales given for depth {depth}", v.len()))),
        None => (0..depth).map(|l| csp::default_lambda1(j_dim, l)).collect(),
    };
    if let Some(l) = lambda1.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Invalid(format!("spike scale of layer {} must be positive", l + 1)));
    }
    let xi = config.xi.unwrap_or_else(|| default_xi(n));
    let c_draws = config.monte_carlo_count;

    let mut csp_state: Vec<CspLayerState> = (0..depth).map(|l| CspLayerState::new(dims.width(l), lambda1[l])).collect();
    let mut binary_estimate = latent.layers.clone();
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut series: Vec<Vec<f64>> = vec![Vec::new(); depth];
    let mut tau = config.tau0;
    let mut converged = false;
    let mut capped = false;
    let mut iterations_run = 0;

    for t in 1..=config.max_iters {
        iterations_run = t;
        // E-step
        let mut draws: Vec<LatentState> = Vec::with_capacity(c_draws);
        for _ in 0..c_draws {
            rank::gibbs_sweep_z(frame, &mut latent.z, &latent.layers[0], &params, tau, &mut rng)?;
            match config.variant {
                Variant::MeanField => latent::mean_field_sweep(&mut latent, &params, tau, &mut rng)?,
                Variant::ExactGibbs => latent::exact_gibbs_sweep(&mut latent, &params, tau, &mut rng)?,
            }
            draws.push(latent.clone());
        }
        if !latent.z.is_finite() {
            return Err(non_finite(t, "Z"));
        }

        // CSP updates, shallowest layer first so each layer sees the
        // current activity of the layer below.
        for l in 0..depth {
            let active_rows = if l == 0 { vec![true; j_dim] } else { csp_state[l - 1].active() };
            let columns = csp::restricted_columns(&params.weights[l], &active_rows);
            csp_state[l].update(&columns, &mut rng);
        }

        // M-step
        let old: Vec<Matrix> = params.weights.iter().map(|w| w.matrix().clone()).collect();
        let tops: Vec<&BinaryMatrix> = draws.iter().map(|d| &d.layers[depth - 1]).collect();
        params.pi = update_pi_draws(&tops);

        for l in (1..depth).rev() {
            let active = csp_state[l].active();
            let unit_active = csp_state[l - 1].active();
            let parents: Vec<&BinaryMatrix> = draws.iter().map(|d| &d.layers[l]).collect();
            let x = intercept_design(&parents, &active);
            let penalty = csp::penalty_weights(&csp_state[l], dims.width(l - 1));
            let w_old = &params.weights[l];
            let rows: Vec<(Vec<f64>, bool)> = crate::par::map_indexed(dims.width(l - 1), |r| {
                if !unit_active[r] {
                    return (vec![0.0; dims.width(l) + 1], false);
                }
                let y: Vec<f64> = draws.iter().flat_map(|d| d.layers[l - 1].col_f64(r)).collect();
                let data = GroupedBinomial::from_design(&x, &y);
                let w = restrict(penalty.row(r), &active);
                let start = restrict(w_old.row(r), &active);
                let fit = logistic_grouped(&data, &w, tau, &start, config.solver_tol);
                (expand(&fit.coef, &active), fit.capped)
            });
            let mut next = WeightMatrix::zeros(dims.width(l - 1), dims.width(l));
            for (r, (row, hit)) in rows.into_iter().enumerate() {
                next.row_mut(r).copy_from_slice(&row);
                capped |= hit;
            }
            params.weights[l] = next;
        }

        {
            let active = csp_state[0].active();
            let firsts: Vec<&BinaryMatrix> = draws.iter().map(|d| &d.layers[0]).collect();
            let x = intercept_design(&firsts, &active);
            let g = solvers::gram(&x);
            let penalty = csp::penalty_weights(&csp_state[0], j_dim);
            let w_old = &params.weights[0];
            let gamma_old = &params.gamma;
            let rows: Vec<(Vec<f64>, f64)> = crate::par::map_indexed(j_dim, |j| {
                let y: Vec<f64> = draws.iter().flat_map(|d| d.z.col(j)).collect();
                let mut xty = vec![0.0; x.cols()];
                for (row, &yi) in x.row_iter().zip(&y) {
                    for (acc, &xv) in xty.iter_mut().zip(row) {
                        *acc += xv * yi;
                    }
                }
                let yty: f64 = y.iter().map(|v| v * v).sum();
                let w = restrict(penalty.row(j), &active);
                let start = restrict(w_old.row(j), &active);
                let b = lasso_gram(&g, &xty, yty, &w, tau / gamma_old[j], &start, config.solver_tol);
                let rss: f64 = x
                    .row_iter()
                    .zip(&y)
                    .map(|(row, &yi)| {
                        let fit: f64 = row.iter().zip(&b).map(|(a, c)| a * c).sum();
                        (yi - fit) * (yi - fit)
                    })
                    .sum();
                (expand(&b, &active), update_gamma(rss, n, c_draws))
            });
            let mut next = WeightMatrix::zeros(j_dim, dims.width(0));
            for (j, (row, gamma)) in rows.into_iter().enumerate() {
                next.row_mut(j).copy_from_slice(&row);
                params.gamma[j] = gamma;
            }
            params.weights[0] = next;
        }

        for l in 0..depth {
            params.weights[l] = threshold_matrix(&params.weights[l], xi);
        }
        for l in 1..depth {
            params.weights[l] = apply_gating(&csp_state[l - 1].c, &params.weights[l]);
        }
        for l in 0..depth {
            if !params.weights[l].matrix().is_finite() {
                return Err(non_finite(t, &format!("B{}", l + 1)));
            }
        }
        if params.gamma.iter().any(|g| !g.is_finite()) {
            return Err(non_finite(t, "gamma"));
        }
        if params.pi.iter().any(|p| !p.is_finite()) {
            return Err(non_finite(t, "pi"));
        }

        binary_estimate = (0..depth)
            .map(|l| {
                let layer: Vec<&BinaryMatrix> = draws.iter().map(|d| &d.layers[l]).collect();
                majority_vote(&layer, &binary_estimate[l])
            })
            .collect();

        let rel: Vec<f64> = (0..depth).map(|l| relative_change(params.weights[l].matrix(), &old[l])).collect();
        for (s, r) in series.iter_mut().zip(&rel) {
            s.push(*r);
        }
        let loglik = gaussian_loglik(&params, &latent);
        trace.push(TraceRow {
            iteration: t,
            tau,
            rel_change: rel,
            widths: csp_state.iter().map(|s| s.effective_width()).collect(),
            gaussian_loglik: loglik,
        });
        log::debug!(
            "iteration {t}: tau {tau:.3}, widths {:?}, changes {:?}",
            trace[t - 1].widths,
            trace[t - 1].rel_change
        );

        if convergence_check(&series, config.window, config.tol, tau) {
            converged = true;
            break;
        }
        tau = temperature_step(tau, t, config.burn_in, config.tau_increment);
    }

    let effective_widths = csp_state.iter().map(|s| s.effective_width()).collect();
    Ok(FitResult {
        params,
        csp: csp_state,
        latent,
        binary_estimate,
        effective_widths,
        trace,
        iterations_run,
        converged,
        capped,
    })
}

fn gaussian_loglik(params: &DdeParams, state: &LatentState) -> f64 {
    let n = state.n();
    if n == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let a1 = state.layers[0].row(i);
        for (j, &z) in state.z.row(i).iter().enumerate() {
            total += normal_log_pdf(z, params.mean(j, a1), params.gamma[j]);
        }
    }
    total / n as f64
}
