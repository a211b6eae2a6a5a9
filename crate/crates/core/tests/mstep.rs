mod common;

use common::rank_consistent;
use ddecop_core::csp::effective_width;
use ddecop_core::frame::{build_rank_frame, DataTable};
use ddecop_core::linalg::Matrix;
use ddecop_core::model::{ancestral_sample, canonicalize_exact, DdeDims, DdeParams, WeightMatrix};
use ddecop_core::mstep::{
    apply_gating, convergence_check, default_xi, solve_weighted_l1_gaussian, solve_weighted_l1_logistic,
    temperature_step, threshold_matrix, update_gamma, update_pi, FitConfig,
};
use ddecop_core::rng::{substream, StreamRng};
use ddecop_core::sim::evaluate;
use ddecop_core::{fit, Variant};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

const TIGHT: f64 = 1e-12;

fn random_binary_design(rng: &mut StreamRng, n: usize, k: usize) -> Matrix {
    let mut x = Matrix::zeros(n, k + 1);
    for i in 0..n {
        x[(i, 0)] = 1.0;
        for c in 1..=k {
            x[(i, c)] = f64::from(rng.random_bool(0.5) as u8);
        }
    }
    x
}

fn gaussian_objective(x: &Matrix, y: &[f64], w: &[f64], var: f64, tau: f64, b: &[f64]) -> f64 {
    let rss: f64 = (0..x.rows())
        .map(|i| {
            let fit: f64 = x.row(i).iter().zip(b).map(|(a, c)| a * c).sum();
            (y[i] - fit).powi(2)
        })
        .sum();
    tau / (2.0 * var) * rss + w.iter().zip(b).map(|(w, b)| w * b.abs()).sum::<f64>()
}

fn logistic_gradient(x: &Matrix, y: &[f64], tau: f64, b: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; b.len()];
    for (i, &yi) in y.iter().enumerate() {
        let eta: f64 = x.row(i).iter().zip(b).map(|(a, c)| a * c).sum();
        let p = 1.0 / (1.0 + (-eta).exp());
        for (gk, xk) in g.iter_mut().zip(x.row(i)) {
            *gk += tau * (p - yi) * xk;
        }
    }
    g
}

fn normal_equations(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let xm = DMatrix::from_row_slice(x.rows(), x.cols(), x.as_slice());
    let yv = DVector::from_column_slice(y);
    let xtx = xm.transpose() * &xm;
    let xty = xm.transpose() * yv;
    xtx.lu().solve(&xty).unwrap().iter().copied().collect()
}

fn newton_logistic(x: &Matrix, y: &[f64]) -> Vec<f64> {
    let xm = DMatrix::from_row_slice(x.rows(), x.cols(), x.as_slice());
    let mut b = DVector::zeros(x.cols());
    for _ in 0..100 {
        let eta = &xm * &b;
        let p = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let grad = xm.transpose() * (&p - DVector::from_column_slice(y));
        let wdiag = p.map(|q| q * (1.0 - q));
        let mut h = DMatrix::zeros(x.cols(), x.cols());
        for i in 0..x.rows() {
            let row = xm.row(i);
            h += wdiag[i] * row.transpose() * row;
        }
        let step = h.lu().solve(&grad).unwrap();
        b -= &step;
        if step.norm() < 1e-14 {
            break;
        }
    }
    b.iter().copied().collect()
}

#[test]
fn least_squares_two_by_two() {
    let x = Matrix::from_rows(&[[1.0, 0.0], [1.0, 1.0]]).unwrap();
    let b = solve_weighted_l1_gaussian(&x, &[0.0, 1.0], &[0.0, 0.0], 1.0, 1.0, &[0.0, 0.0], TIGHT).unwrap();
    assert!((b[0]).abs() < 1e-10 && (b[1] - 1.0).abs() < 1e-10);
}

#[test]
fn enormous_penalties_leave_the_mean() {
    let mut rng = substream(1, 0, 0);
    let x = random_binary_design(&mut rng, 40, 3);
    let y: Vec<f64> = (0..40).map(|_| rng.random_range(-2.0..3.0)).collect();
    let b = solve_weighted_l1_gaussian(&x, &y, &[0.0, 1e9, 1e9, 1e9], 0.7, 1.0, &[0.0; 4], TIGHT).unwrap();
    let mean = y.iter().sum::<f64>() / 40.0;
    assert!((b[0] - mean).abs() < 1e-10);
    assert_eq!(&b[1..], &[0.0, 0.0, 0.0]);

    let yb: Vec<f64> = (0..40).map(|i| f64::from((i % 4 != 0) as u8)).collect();
    let fit = solve_weighted_l1_logistic(&x, &yb, &[0.0, 1e9, 1e9, 1e9], 1.0, &[0.0; 4], TIGHT).unwrap();
    assert!((fit.coef[0] - 3f64.ln()).abs() < 1e-8);
    assert_eq!(&fit.coef[1..], &[0.0, 0.0, 0.0]);
}

#[test]
fn constant_design_column_is_zero() {
    let x = Matrix::from_rows(&[[1.0, 0.0, 1.0], [1.0, 0.0, 0.0], [1.0, 0.0, 1.0]]).unwrap();
    let b = solve_weighted_l1_gaussian(&x, &[1.0, 2.0, 0.5], &[0.0, 0.3, 0.1], 1.0, 1.0, &[0.0; 3], TIGHT).unwrap();
    assert_eq!(b[1], 0.0);
}

#[test]
fn intercept_only_logistic_is_the_logit_of_the_mean() {
    let x = Matrix::from_vec(8, 1, vec![1.0; 8]).unwrap();
    let y = [1.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
    let fit = solve_weighted_l1_logistic(&x, &y, &[0.0], 1.0, &[0.0], TIGHT).unwrap();
    assert!((fit.coef[0] - 1.0986122886681098).abs() < 1e-8);
    assert!(!fit.capped);
}

#[test]
fn separated_data_is_capped_and_flagged() {
    let x = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0], [1.0, 1.0], [1.0, 1.0]]).unwrap();
    let fit = solve_weighted_l1_logistic(&x, &[0.0, 0.0, 1.0, 1.0], &[0.0, 0.0], 1.0, &[0.0, 0.0], TIGHT).unwrap();
    assert!(fit.capped);
    assert!(fit.coef.iter().all(|c| c.abs() <= 30.0));
}

#[test]
fn gaussian_solver_matches_a_grid_search() {
    for p in 0..100u64 {
        let mut rng = substream(2, p, 0);
        let n = rng.random_range(5..60);
        let x = random_binary_design(&mut rng, n, 1);
        let slope = rng.random_range(-3.0..3.0);
        let y: Vec<f64> = (0..n).map(|i| 0.5 + slope * x[(i, 1)] + rng.random_range(-1.0..1.0)).collect();
        let w = [0.0, rng.random_range(0.0..20.0)];
        let var = rng.random_range(0.2..2.0);
        let tau = rng.random_range(0.5..=1.0);
        let b = solve_weighted_l1_gaussian(&x, &y, &w, var, tau, &[0.0, 0.0], TIGHT).unwrap();
        let ours = gaussian_objective(&x, &y, &w, var, tau, &b);
        // Profile out the intercept for every grid slope.
        let mut best = f64::INFINITY;
        let steps = 100_000;
        for s in -steps..=steps {
            let b1 = s as f64 * 1e-4;
            let b0 = (0..n).map(|i| y[i] - b1 * x[(i, 1)]).sum::<f64>() / n as f64;
            best = best.min(gaussian_objective(&x, &y, &w, var, tau, &[b0, b1]));
        }
        assert!((ours - best).abs() < 1e-6, "problem {p}: {ours} vs grid {best}");
    }
}

#[test]
fn logistic_solver_satisfies_the_subgradient_condition() {
    for p in 0..100u64 {
        let mut rng = substream(3, p, 0);
        let n = rng.random_range(40..150);
        let x = random_binary_design(&mut rng, n, 5);
        let y: Vec<f64> = (0..n).map(|_| f64::from(rng.random_bool(0.5) as u8)).collect();
        let mut w = vec![0.0];
        w.extend((0..5).map(|_| rng.random_range(0.5..4.0)));
        let tau = rng.random_range(0.5..=1.0);
        let fit = solve_weighted_l1_logistic(&x, &y, &w, tau, &[0.0; 6], TIGHT).unwrap();
        assert!(!fit.capped);
        let g = logistic_gradient(&x, &y, tau, &fit.coef);
        for k in 0..6 {
            if fit.coef[k] == 0.0 {
                assert!(g[k].abs() <= w[k] + 1e-5, "problem {p}, k {k}: |{}| > {}", g[k], w[k]);
            } else {
                assert!((g[k] + w[k] * fit.coef[k].signum()).abs() <= 1e-5, "problem {p}, k {k}");
            }
        }
    }
}

#[test]
fn zero_penalty_fits_match_unpenalized_oracles() {
    for p in 0..20u64 {
        let mut rng = substream(4, p, 0);
        let n = 400;
        let x = random_binary_design(&mut rng, n, 4);
        let truth = [-0.5, 1.0, -0.8, 0.4, 0.3];
        let eta = |i: usize| (0..5).map(|k| x[(i, k)] * truth[k]).sum::<f64>();
        let yg: Vec<f64> = (0..n).map(|i| eta(i) + rng.random_range(-1.0..1.0)).collect();
        let b = solve_weighted_l1_gaussian(&x, &yg, &[0.0; 5], 1.3, 1.0, &[0.0; 5], TIGHT).unwrap();
        for (a, o) in b.iter().zip(normal_equations(&x, &yg)) {
            assert!((a - o).abs() < 1e-5, "{a} vs {o}");
        }
        let yb: Vec<f64> = (0..n).map(|i| f64::from(rng.random_bool(1.0 / (1.0 + (-eta(i)).exp())) as u8)).collect();
        let fit = solve_weighted_l1_logistic(&x, &yb, &[0.0; 5], 1.0, &[0.0; 5], TIGHT).unwrap();
        for (a, o) in fit.coef.iter().zip(newton_logistic(&x, &yb)) {
            assert!((a - o).abs() < 1e-5, "{a} vs {o}");
        }
    }
}

#[test]
fn gamma_examples() {
    assert!((update_gamma(0.0, 2, 1) - 1.0 / 3.0).abs() < 1e-15);
    assert!((update_gamma(4.0, 2, 1) - 1.0).abs() < 1e-15);
    let n = 1_000_000;
    let s2 = 0.37;
    assert!((update_gamma(s2 * n as f64, n, 1) - s2).abs() < 1e-5);
}

#[test]
fn pi_examples() {
    let q = Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 0.0, 1.0], [1.0, 0.0, 1.0]]).unwrap();
    let pi = update_pi(&q);
    assert!((pi[0] - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(pi[1], 1e-6);
    assert_eq!(pi[2], 1.0 - 1e-6);
}

#[test]
fn threshold_examples() {
    let b = WeightMatrix::new(Matrix::from_rows(&[[-0.1, 0.29, 0.31, -0.29]]).unwrap()).unwrap();
    assert_eq!(threshold_matrix(&b, 0.0), b);
    let t = threshold_matrix(&b, 0.3);
    assert_eq!(t.row(0), &[-0.1, 0.0, 0.31, 0.0]);
    assert!((default_xi(10_000) - 0.3).abs() < 1e-15);
    assert!((default_xi(1000) - 3.0 * 1000f64.powf(-0.3)).abs() < 1e-15);
    assert!((default_xi(10) - 3.0 * 10f64.powf(-0.3)).abs() < 1e-15);
}

#[test]
fn gating_examples() {
    let b = WeightMatrix::new(Matrix::from_rows(&[[0.5, 1.0], [-0.5, 2.0]]).unwrap()).unwrap();
    assert_eq!(apply_gating(&[2, 3], &b), b);
    let g = apply_gating(&[1, 3], &b);
    assert_eq!(g.row(0), &[0.0, 0.0]);
    assert_eq!(g.row(1), b.row(1));
    let z = apply_gating(&[1, 2], &b);
    assert!(z.matrix().as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn temperature_examples() {
    assert!((temperature_step(0.7, 21, 10, 0.01) - 0.8).abs() < 1e-12);
    assert_eq!(temperature_step(0.99, 500, 10, 0.01), 1.0);
    assert_eq!(temperature_step(0.7, 10, 10, 0.01), 0.7);
    assert_eq!(temperature_step(0.7, 3, 10, 0.01), 0.7);
}

#[test]
fn convergence_examples() {
    assert!(convergence_check(&[vec![0.0; 12]], 10, 1e-3, 1.0));
    let alternating: Vec<f64> = (0..12).map(|i| if i % 2 == 0 { 0.5 } else { 0.0 }).collect();
    assert!(!convergence_check(&[alternating], 10, 1e-3, 1.0));
    assert!(!convergence_check(&[vec![0.0; 12]], 10, 1e-3, 0.99));
    assert!(!convergence_check(&[vec![0.0; 5]], 10, 1e-3, 1.0));
}

#[test]
fn config_validation() {
    assert!(FitConfig { tau0: 0.0, ..Default::default() }.validate().is_err());
    assert!(FitConfig { tau0: 1.5, ..Default::default() }.validate().is_err());
    assert!(FitConfig { xi: Some(-1.0), ..Default::default() }.validate().is_err());
    assert!(FitConfig { monte_carlo_count: 0, ..Default::default() }.validate().is_err());
    assert!(FitConfig::default().validate().is_ok());
}

fn one_layer_truth() -> DdeParams {
    let w = WeightMatrix::new(Matrix::from_rows(&[[0.0, 2.5], [1.0, -2.0], [-0.5, 3.0], [0.2, 2.0]]).unwrap()).unwrap();
    let p = DdeParams::new(DdeDims::new(4, vec![1]).unwrap(), vec![w], vec![0.5, 1.0, 0.7, 1.2], vec![0.4]).unwrap();
    canonicalize_exact(&p).unwrap()
}

#[test]
fn single_latent_model_is_recovered() {
    let truth = one_layer_truth();
    let state = ancestral_sample(&truth, 4000, &mut substream(5, 0, 0)).unwrap();
    let frame = build_rank_frame(DataTable::unnamed(state.z.clone()).unwrap());
    let config = FitConfig { depth: 1, seed: 5, ..Default::default() };
    let result = fit(&frame, &config, None).unwrap();
    let estimate = canonicalize_exact(&result.params).unwrap();
    let report = evaluate(&truth, &estimate).unwrap();
    assert_eq!(result.effective_widths, vec![1]);
    assert_eq!(report.recovery, vec![1.0]);
    assert!(report.mse[0] < 0.05, "mse {}", report.mse[0]);
}

#[test]
fn fit_is_deterministic_and_keeps_its_invariants() {
    let truth = ddecop_core::sim::block_params(12, 4, 1).unwrap();
    let state = ancestral_sample(&truth, 300, &mut substream(6, 0, 0)).unwrap();
    // Coarsen to create ties.
    let mut y = state.z.clone();
    y.as_mut_slice().iter_mut().for_each(|v| *v = (*v * 2.0).round());
    let frame = build_rank_frame(DataTable::unnamed(y.clone()).unwrap());
    for variant in [Variant::MeanField, Variant::ExactGibbs] {
        let config = FitConfig { max_iters: 30, burn_in: 5, seed: 9, variant, ..Default::default() };
        let a = fit(&frame, &config, None).unwrap();
        let b = fit(&frame, &config, None).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.latent, b.latent);
        assert_eq!(a.trace.len(), a.iterations_run);
        assert!(rank_consistent(&y, &a.latent.z));
        for (l, layer) in a.csp.iter().enumerate() {
            assert_eq!(a.effective_widths[l], effective_width(&layer.c));
            if l + 1 < a.params.depth() {
                let next = &a.params.weights[l + 1];
                for (k0, &ck) in layer.c.iter().enumerate() {
                    if ck <= k0 + 1 {
                        assert!(next.row(k0).iter().all(|&v| v == 0.0));
                    }
                }
            }
        }
        assert!(a.params.validate().is_ok());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn gamma_is_positive_and_bounded(rss in 0.0f64..1e6, n in 0usize..10_000, c in 1usize..5) {
        let g = update_gamma(rss, n, c);
        prop_assert!(g > 0.0);
        prop_assert!(g <= (1.0 + 0.5 * rss) / 2.0 + 1e-12);
    }

    #[test]
    fn unpenalized_gaussian_solves_the_normal_equations(seed in any::<u64>(), k in 1usize..5) {
        let mut rng = substream(seed, 0, 0);
        let n = 60;
        let x = random_binary_design(&mut rng, n, k);
        let oracle_ok = {
            let xm = DMatrix::from_row_slice(n, k + 1, x.as_slice());
            (xm.transpose() * &xm).determinant().abs() > 1.0
        };
        prop_assume!(oracle_ok);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b = solve_weighted_l1_gaussian(&x, &y, &vec![0.0; k + 1], 1.0, 1.0, &vec![0.0; k + 1], TIGHT).unwrap();
        for (a, o) in b.iter().zip(normal_equations(&x, &y)) {
            prop_assert!((a - o).abs() < 1e-8);
        }
    }

    #[test]
    fn warm_starts_do_not_change_the_optimum(seed in any::<u64>()) {
        let mut rng = substream(seed, 0, 0);
        let x = random_binary_design(&mut rng, 50, 3);
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(-3.0..3.0)).collect();
        let w = [0.0, 2.0, 5.0, 0.5];
        let cold = solve_weighted_l1_gaussian(&x, &y, &w, 1.0, 1.0, &[0.0; 4], TIGHT).unwrap();
        let warm = solve_weighted_l1_gaussian(&x, &y, &w, 1.0, 1.0, &[3.0, -2.0, 1.0, 4.0], TIGHT).unwrap();
        let f = |b: &[f64]| gaussian_objective(&x, &y, &w, 1.0, 1.0, b);
        prop_assert!((f(&cold) - f(&warm)).abs() < 1e-8);
    }
}
