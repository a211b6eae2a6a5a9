//! Weighted-l1 penalized least squares and logistic regression.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::special::{log1p_exp, logistic};

/// Default convergence tolerance on the largest coefficient change.
pub const SOLVER_TOL: f64 = 1e-8;

/// Magnitude at which logistic coefficients are clamped.
pub const LOGISTIC_CAP: f64 = 30.0;

const MAX_CYCLES: usize = 10_000;
const MAX_NEWTON: usize = 200;

#[inline]
pub fn soft_threshold(x: f64, w: f64) -> f64 {
    if x > w {
        x - w
    } else if x < -w {
        x + w
    } else {
        0.0
    }
}

fn check_inputs(design: &Matrix, response: &[f64], weights: &[f64], start: &[f64], tau: f64) -> Result<()> {
    let p = design.cols();
    if response.len() != design.rows() {
        return Err(Error::Shape(format!("{} responses for {} design rows", response.len(), design.rows())));
    }
    if weights.len() != p || start.len() != p {
        return Err(Error::Shape(format!(
            "design has {p} columns but {} weights and {} start values",
            weights.len(),
            start.len()
        )));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::Domain("penalty weights must be nonnegative".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("temperature {tau} must be positive")));
    }
    Ok(())
}

/// `X^T X` of a row-major design.
pub fn gram(design: &Matrix) -> Matrix {
    let p = design.cols();
    let mut g = Matrix::zeros(p, p);
    for row in design.row_iter() {
        accumulate_outer(&mut g, row, 1.0);
    }
    g
}

fn accumulate_outer(g: &mut Matrix, x: &[f64], weight: f64) {
    let p = x.len();
    for a in 0..p {
        let xa = x[a] * weight;
        if xa == 0.0 {
            continue;
        }
        let row = g.row_mut(a);
        for b in 0..p {
            row[b] += xa * x[b];
        }
    }
}

/// Penalized least squares from sufficient statistics:
/// minimizes `scale / 2 * (yty - 2 b'xty + b'Gb) + sum_k w_k |b_k|` by cyclic
/// coordinate descent with exact soft-threshold updates.
pub fn lasso_gram(
    gram: &Matrix,
    xty: &[f64],
    yty: f64,
    weights: &[f64],
    scale: f64,
    start: &[f64],
    tol: f64,
) -> Vec<f64> {
    let p = xty.len();
    let mut b = start.to_vec();
    let mut gb: Vec<f64> = (0..p).map(|k| (0..p).map(|l| gram[(k, l)] * b[l]).sum()).collect();
    let objective = |b: &[f64], gb: &[f64]| {
        let quad: f64 = b.iter().zip(gb).map(|(x, y)| x * y).sum();
        let lin: f64 = b.iter().zip(xty).map(|(x, y)| x * y).sum();
        let pen: f64 = b.iter().zip(weights).map(|(x, w)| w * x.abs()).sum();
        0.5 * scale * (yty - 2.0 * lin + quad) + pen
    };
    let mut last = objective(&b, &gb);
    for _ in 0..MAX_CYCLES {
        let mut max_change: f64 = 0.0;
        for k in 0..p {
            let gkk = gram[(k, k)];
            let new = if gkk > 0.0 {
                let r = xty[k] - gb[k] + gkk * b[k];
                soft_threshold(scale * r, weights[k]) / (scale * gkk)
            } else {
                0.0
            };
            let delta = new - b[k];
            if delta != 0.0 {
                for (l, g) in gb.iter_mut().enumerate() {
                    *g += delta * gram[(l, k)];
                }
                b[k] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        if cfg!(debug_assertions) {
            let now = objective(&b, &gb);
            debug_assert!(
                now <= last + 1e-9 * (1.0 + last.abs()),
                "coordinate descent increased the objective: {last} -> {now}"
            );
            last = now;
        }
        // Linear convergence: stop well below the requested tolerance so
        // the remaining error is also below it.
        if max_change < 1e-2 * tol {
            break;
        }
    }
    b
}

/// Minimizes `tau / (2 noise_var) * |response - design b|^2 + sum_k w_k |b_k|`.
pub fn solve_weighted_l1_gaussian(
    design: &Matrix,
    response: &[f64],
    weights: &[f64],
    noise_var: f64,
    tau: f64,
    start: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    check_inputs(design, response, weights, start, tau)?;
    if !(noise_var > 0.0) {
        return Err(Error::Domain(format!("noise variance {noise_var} must be positive")));
    }
    let g = gram(design);
    let p = design.cols();
    let mut xty = vec![0.0; p];
    for (row, &y) in design.row_iter().zip(response) {
        for (acc, &x) in xty.iter_mut().zip(row) {
            *acc += x * y;
        }
    }
    let yty = response.iter().map(|y| y * y).sum();
    Ok(lasso_gram(&g, &xty, yty, weights, tau / noise_var, start, tol))
}

/// Logistic fit with a flag set when any coefficient reached the cap.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticFit {
    pub coef: Vec<f64>,
    pub capped: bool,
}

/// Logistic data collapsed onto distinct design rows: `trials[g]` rows
/// share design row `g`, and `successes[g]` of them have response 1.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupedBinomial {
    pub rows: Vec<Vec<f64>>,
    pub trials: Vec<f64>,
    pub successes: Vec<f64>,
}

impl GroupedBinomial {
    pub fn from_design(design: &Matrix, response: &[f64]) -> Self {
        let mut index: BTreeMap<Vec<u64>, usize> = BTreeMap::new();
        let mut out = Self { rows: Vec::new(), trials: Vec::new(), successes: Vec::new() };
        for (row, &y) in design.row_iter().zip(response) {
            let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
            let g = *index.entry(key).or_insert_with(|| {
                out.rows.push(row.to_vec());
                out.trials.push(0.0);
                out.successes.push(0.0);
                out.rows.len() - 1
            });
            out.trials[g] += 1.0;
            out.successes[g] += y;
        }
        out
    }

    fn linear(&self, b: &[f64]) -> Vec<f64> {
        self.rows.iter().map(|x| x.iter().zip(b).map(|(a, c)| a * c).sum()).collect()
    }

    /// Negative log-likelihood.
    pub fn nll(&self, b: &[f64]) -> f64 {
        self.linear(b)
            .iter()
            .zip(self.trials.iter().zip(&self.successes))
            .map(|(&eta, (&n, &s))| n * log1p_exp(eta) - s * eta)
            .sum()
    }

    /// Gradient of the negative log-likelihood.
    pub fn gradient(&self, b: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; b.len()];
        for ((x, eta), (&n, &s)) in self.rows.iter().zip(self.linear(b)).zip(self.trials.iter().zip(&self.successes)) {
            let r = n * logistic(eta) - s;
            for (gk, &xk) in g.iter_mut().zip(x) {
                *gk += r * xk;
            }
        }
        g
    }
}

fn penalized(data: &GroupedBinomial, b: &[f64], weights: &[f64], tau: f64) -> f64 {
    tau * data.nll(b) + b.iter().zip(weights).map(|(x, w)| w * x.abs()).sum::<f64>()
}

/// Proximal Newton for `tau * nll(b) + sum_k w_k |b_k|` on grouped data.
pub fn logistic_grouped(data: &GroupedBinomial, weights: &[f64], tau: f64, start: &[f64], tol: f64) -> LogisticFit {
    let p = start.len();
    let mut b = start.to_vec();
    let mut capped = false;
    for v in &mut b {
        if v.abs() > LOGISTIC_CAP {
            *v = v.clamp(-LOGISTIC_CAP, LOGISTIC_CAP);
            capped = true;
        }
    }
    let mut f = penalized(data, &b, weights, tau);
    for _ in 0..MAX_NEWTON {
        let grad: Vec<f64> = data.gradient(&b).into_iter().map(|g| tau * g).collect();
        let mut h = Matrix::zeros(p, p);
        for ((x, eta), &n) in data.rows.iter().zip(data.linear(&b)).zip(&data.trials) {
            let q = logistic(eta);
            accumulate_outer(&mut h, x, tau * n * q * (1.0 - q));
        }
        let max_diag = (0..p).map(|k| h[(k, k)]).fold(0.0, f64::max);
        let ridge = 1e-10 * (1.0 + max_diag);
        for k in 0..p {
            h[(k, k)] += ridge;
        }

        // Coordinate descent on the local quadratic model.
        let mut target = b.clone();
        let mut hd = vec![0.0; p];
        for _ in 0..MAX_CYCLES {
            let mut max_change: f64 = 0.0;
            for k in 0..p {
                let a = h[(k, k)];
                let c = grad[k] + hd[k] - a * (target[k] - b[k]);
                let new = soft_threshold(a * b[k] - c, weights[k]) / a;
                let delta = new - target[k];
                if delta != 0.0 {
                    for (l, v) in hd.iter_mut().enumerate() {
                        *v += delta * h[(l, k)];
                    }
                    target[k] = new;
                    max_change = max_change.max(delta.abs());
                }
            }
            if max_change < 0.1 * tol {
                break;
            }
        }
        let d: Vec<f64> = target.iter().zip(&b).map(|(t, x)| t - x).collect();
        let max_step = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if max_step < tol {
            break;
        }
        let pen_old: f64 = b.iter().zip(weights).map(|(x, w)| w * x.abs()).sum();
        let pen_new: f64 = target.iter().zip(weights).map(|(x, w)| w * x.abs()).sum();
        let decrease = grad.iter().zip(&d).map(|(g, v)| g * v).sum::<f64>() + pen_new - pen_old;

        let mut t = 1.0;
        let mut accepted = None;
        while t > 1e-12 {
            let trial: Vec<f64> = b.iter().zip(&d).map(|(x, v)| x + t * v).collect();
            let ft = penalized(data, &trial, weights, tau);
            if ft <= f + 1e-4 * t * decrease.min(0.0) {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((mut next, mut fnext)) = accepted else {
            break;
        };
        let mut clamped = false;
        for v in &mut next {
            if v.abs() > LOGISTIC_CAP {
                *v = v.clamp(-LOGISTIC_CAP, LOGISTIC_CAP);
                clamped = true;
            }
        }
        if clamped {
            capped = true;
            fnext = penalized(data, &next, weights, tau);
        }
        let moved = next.iter().zip(&b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        b = next;
        f = fnext;
        if moved < tol {
            break;
        }
    }
    LogisticFit { coef: b, capped }
}

/// Minimizes `tau * (negative Bernoulli log-likelihood) + sum_k w_k |b_k|`.
pub fn solve_weighted_l1_logistic(
    design: &Matrix,
    response: &[f64],
    weights: &[f64],
    tau: f64,
    start: &[f64],
    tol: f64,
) -> Result<LogisticFit> {
    check_inputs(design, response, weights, start, tau)?;
    if response.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Domain("logistic response must be 0 or 1".into()));
    }
    let data = GroupedBinomial::from_design(design, response);
    Ok(logistic_grouped(&data, weights, tau, start, tol))
}
