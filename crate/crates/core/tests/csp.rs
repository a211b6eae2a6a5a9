use ddecop_core::csp::{
    allocate_c, allocation_scores, effective_width, penalty_weights, sample_slab_rates, slab_log_marginal,
    spike_log_marginal, stick_breaking, stick_parameters, update_sticks, CspLayerState,
};
use ddecop_core::rng::substream;
use proptest::prelude::*;
use statrs::function::gamma::ln_gamma;

const EPS: f64 = 1e-12;

/// Laplace(scale) log density integrated against a Gamma(1, 5) rate, from
/// the closed form `5 Gamma(1 + m) / (2^m (5 + s)^(1 + m))`.
fn slab_oracle(col: &[f64]) -> f64 {
    let m = col.len() as f64;
    let s: f64 = col.iter().map(|x| x.abs()).sum();
    5f64.ln() + ln_gamma(1.0 + m) - m * 2f64.ln() - (1.0 + m) * (5.0 + s).ln()
}

#[test]
fn spike_examples() {
    assert!(spike_log_marginal(&[0.0, 0.0], 0.5).abs() < EPS);
    assert!((spike_log_marginal(&[1.0], 1.0) - (-(2f64.ln()) - 1.0)).abs() < EPS);
    assert!((spike_log_marginal(&[1.0], 1.0) + 1.6931471805599454).abs() < EPS);
    assert_eq!(spike_log_marginal(&[0.0; 3], 0.1), spike_log_marginal(&[0.0; 3], 0.1));
    assert!((spike_log_marginal(&[0.0; 3], 0.1) + 3.0 * 0.2f64.ln()).abs() < EPS);
}

#[test]
fn slab_examples() {
    assert!((slab_log_marginal(&[0.0]) + 10f64.ln()).abs() < EPS);
    let expected = -(2f64.ln()) + 5f64.ln() - 2.0 * 10f64.ln();
    assert!((slab_log_marginal(&[5.0]) - expected).abs() < EPS);
    assert!((expected + 3.6888794541139363).abs() < EPS);
}

#[test]
fn slab_dominates_for_large_columns_and_small_spike_scale() {
    let col = vec![25.0; 4];
    let margin = slab_log_marginal(&col) - spike_log_marginal(&col, 0.02);
    assert!(margin > 4000.0, "{margin}");
    let wider = vec![50.0; 4];
    assert!(slab_log_marginal(&wider) - spike_log_marginal(&wider, 0.02) > margin);
}

#[test]
fn stick_breaking_example() {
    let w = stick_breaking(&[0.5, 0.5, 1.0]);
    assert_eq!(w, vec![0.5, 0.25, 0.25]);
}

#[test]
fn prior_mass_on_the_last_state_forces_the_slab() {
    let omega = stick_breaking(&[0.0, 0.0, 0.0, 1.0]);
    let cols = vec![vec![0.0; 5], vec![1e-9; 5], vec![3.0; 5]];
    assert_eq!(allocate_c(&omega, 0.02, &cols), vec![4, 4, 4]);
}

#[test]
fn ties_pick_the_smallest_state() {
    let omega = vec![0.25; 4];
    // spike == slab for this column, so every state scores the same.
    let col: Vec<f64> = vec![];
    assert_eq!(allocate_c(&omega, 0.5, &[col.clone(), col.clone(), col]), vec![1, 1, 1]);
}

#[test]
fn penalty_weight_examples() {
    let mut layer = CspLayerState::new(2, 0.02);
    layer.c = vec![1, 3];
    layer.lambda0 = vec![7.0, 2.0];
    let w = penalty_weights(&layer, 3);
    for r in 0..3 {
        assert_eq!(w[(r, 0)], 0.0);
        assert!((w[(r, 1)] - 50.0).abs() < EPS);
        assert_eq!(w[(r, 2)], 0.5);
    }
}

#[test]
fn effective_width_examples() {
    assert_eq!(effective_width(&[3, 1, 4]), 2);
    assert_eq!(effective_width(&[2, 3, 4]), 3);
    assert_eq!(effective_width(&[1, 1, 1]), 0);
}

#[test]
fn stick_posterior_counts() {
    assert_eq!(stick_parameters(&[1, 3, 4], 3.0), vec![(2.0, 5.0), (1.0, 5.0), (2.0, 4.0)]);
}

#[test]
fn larger_columns_get_stochastically_smaller_rates() {
    let small = vec![0.1, -0.2, 0.1];
    let large = vec![2.0, -3.0, 1.0];
    let cols = vec![small.clone(), large.clone()];
    let mut rng = substream(11, 0, 0);
    let n = 100_000;
    let mut sums = [0.0; 2];
    for _ in 0..n {
        let r = sample_slab_rates(&cols, &[3, 3], 0.02, &mut rng);
        sums[0] += r[0];
        sums[1] += r[1];
    }
    let means = [sums[0] / n as f64, sums[1] / n as f64];
    assert!(means[1] < means[0]);
    // Gamma(1 + m, rate 5 + |col|_1) means.
    for (mean, col) in means.iter().zip([&small, &large]) {
        let s: f64 = col.iter().map(|x| x.abs()).sum();
        let shape = 4.0;
        let rate = 5.0 + s;
        let sd = (shape / (rate * rate) / n as f64).sqrt();
        assert!((mean - shape / rate).abs() < 4.0 * sd);
    }
    assert_eq!(sample_slab_rates(&cols, &[1, 2], 0.02, &mut rng), vec![0.02, 0.02]);
}

#[test]
fn layer_update_keeps_a_valid_state() {
    let mut layer = CspLayerState::new(4, 0.02);
    let cols = vec![vec![2.0, 1.5], vec![0.0, 0.0], vec![1e-4, 0.0], vec![3.0, -2.0]];
    for t in 0..50 {
        layer.update(&cols, &mut substream(12, t, 0));
        assert!((layer.omega.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(layer.c.iter().all(|&c| (1..=5).contains(&c)));
        assert_eq!(layer.v.len(), 5);
        assert_eq!(layer.v[4], 1.0);
        assert_eq!(layer.lambda1, 0.02);
    }
}

fn margin(omega: &[f64], spike: f64, slab: f64, k: usize) -> f64 {
    let scores = allocation_scores(omega, spike, slab, k);
    let best_spike = scores[..k].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let best_slab = scores[k..].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    best_slab - best_spike
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn omega_is_a_probability_vector(mut v in prop::collection::vec(0.0f64..=1.0, 0..12)) {
        v.push(1.0);
        let w = stick_breaking(&v);
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut rest = 1.0;
        for (l, &vl) in v.iter().enumerate() {
            prop_assert!((w[l] - vl * rest).abs() < 1e-15);
            rest *= 1.0 - vl;
        }
    }

    #[test]
    fn sticks_drawn_from_allocations_are_valid(c in prop::collection::vec(1usize..=6, 5), seed in any::<u64>()) {
        let (v, omega) = update_sticks(&c, 5.0, &mut substream(seed, 0, 0));
        prop_assert_eq!(v.len(), 6);
        prop_assert!(v[..5].iter().all(|&x| x > 0.0 && x < 1.0));
        prop_assert!((omega.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(omega.iter().all(|w| w.ln().is_finite()));
    }

    #[test]
    fn slab_marginal_matches_the_closed_form(col in prop::collection::vec(-50.0f64..50.0, 0..20)) {
        prop_assert!((slab_log_marginal(&col) - slab_oracle(&col)).abs() < 1e-9);
    }

    #[test]
    fn scores_are_finite(cols in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 1..6), 1..6), lambda1 in 1e-3f64..1.0, seed in any::<u64>()) {
        let k = cols.len();
        let (_, omega) = update_sticks(&vec![k + 1; k], k as f64, &mut substream(seed, 0, 0));
        for (k0, col) in cols.iter().enumerate() {
            let s = allocation_scores(&omega, spike_log_marginal(col, lambda1), slab_log_marginal(col), k0 + 1);
            prop_assert!(s.iter().all(|x| x.is_finite()));
        }
        let c = allocate_c(&omega, lambda1, &cols);
        prop_assert!(c.iter().all(|&x| (1..=k + 1).contains(&x)));
    }

    #[test]
    fn shrinkage_margin_is_monotone_in_the_column_index(col in prop::collection::vec(-3.0f64..3.0, 1..5), k_max in 2usize..8, lambda1 in 1e-3f64..1.0) {
        let spike = spike_log_marginal(&col, lambda1);
        let slab = slab_log_marginal(&col);
        let uniform = vec![1.0 / (k_max + 1) as f64; k_max + 1];
        let flat: Vec<f64> = (1..=k_max).map(|k| margin(&uniform, spike, slab, k)).collect();
        prop_assert!(flat.iter().all(|m| (m - flat[0]).abs() < 1e-9));
        let alpha = k_max as f64;
        let mut v = vec![1.0 / (1.0 + alpha); k_max];
        v.push(1.0);
        let omega = stick_breaking(&v);
        let stick: Vec<f64> = (1..=k_max).map(|k| margin(&omega, spike, slab, k)).collect();
        prop_assert!(stick.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }

    #[test]
    fn effective_width_counts_slab_penalties(c in prop::collection::vec(1usize..=7, 1..7)) {
        let k_max = c.len();
        let c: Vec<usize> = c.into_iter().map(|x| x.min(k_max + 1)).collect();
        let mut layer = CspLayerState::new(k_max, 0.02);
        layer.c = c.clone();
        layer.lambda0 = (0..k_max).map(|k| 1.0 + k as f64).collect();
        let w = penalty_weights(&layer, 2);
        let slab_cols = (0..k_max).filter(|&k| (w[(0, k + 1)] - 50.0).abs() > 1e-9).count();
        prop_assert_eq!(effective_width(&c), slab_cols);
        prop_assert_eq!(layer.effective_width(), slab_cols);
    }
}
