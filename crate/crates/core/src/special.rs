//! Scalar special functions: logistic link, normal and gamma distribution
//! functions, and discrete/continuous quantile inversion.

#![allow(clippy::excessive_precision)]

use core::f64::consts::{FRAC_1_SQRT_2, PI};

/// Distance kept from 0 and 1 before taking logits.
pub const PROB_CLAMP: f64 = 1e-12;

/// `1 / (1 + exp(-x))`, evaluated without overflow for any finite `x`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// `log(logistic(x))`.
pub fn log_logistic(x: f64) -> f64 {
    if x >= 0.0 {
        -libm::log1p(libm::exp(-x))
    } else {
        x - libm::log1p(libm::exp(x))
    }
}

/// `log(1 + exp(x))`.
pub fn log1p_exp(x: f64) -> f64 {
    -log_logistic(-x)
}

/// Log-odds of `p`, with `p` clamped [`PROB_CLAMP`] away from the boundary.
pub fn logit(p: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    libm::log(p) - libm::log1p(-p)
}

/// Bernoulli log-mass of `value` under success log-odds `eta`.
pub fn bernoulli_log_pmf(value: bool, eta: f64) -> f64 {
    if value {
        log_logistic(eta)
    } else {
        log_logistic(-eta)
    }
}

pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (libm::log(2.0 * PI * var) + d * d / var)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal upper tail `1 - Phi(x)`, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI)
}

/// Standard normal quantile (Wichura's AS 241, about 1e-16 relative accuracy).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let mut r = if q < 0.0 { p } else { 1.0 - p };
    r = libm::sqrt(-libm::log(r));
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966) * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5) * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma function `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * libm::exp(-x + a * libm::log(x) - ln_gamma(a))
}

fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    libm::exp(-x + a * libm::log(x) - ln_gamma(a)) * h
}

/// Absolute tolerance of [`gamma_quantile`].
pub const QUANTILE_TOL: f64 = 1e-12;

/// Quantile of Gamma(`shape`, `scale`) at probability `q`, by bracketing and
/// bisection to [`QUANTILE_TOL`].
///
/// At `q = 1` this returns the smallest point where the CDF rounds to one.
pub fn gamma_quantile(shape: f64, scale: f64, q: f64) -> f64 {
    if q <= 0.0 {
        return 0.0;
    }
    let q = q.min(1.0);
    let cdf = |x: f64| gamma_p(shape, x / scale);
    let mut lo = 0.0;
    let mut hi = scale * shape.max(1.0);
    while cdf(hi) < q {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::MAX;
        }
    }
    while hi - lo > QUANTILE_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Smallest `k` with `P(Poisson(rate) <= k) >= q`, by direct CDF summation.
///
/// Summation stops once the remaining mass is below machine precision, so
/// `q = 1` maps to the end of the numerically representable support.
pub fn poisson_quantile(rate: f64, q: f64) -> u64 {
    let mut pmf = libm::exp(-rate);
    let mut cdf = pmf;
    let mut k: u64 = 0;
    while cdf < q {
        k += 1;
        pmf *= rate / k as f64;
        cdf += pmf;
        if (k as f64) > rate && pmf < f64::EPSILON * 1e-2 {
            break;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_values() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(libm::log(3.0)) - 0.75).abs() < 1e-15);
        let tiny = logistic(-50.0);
        assert!(tiny > 0.0 && tiny < 1e-20);
        assert_eq!(logistic(800.0), 1.0);
        assert!(logistic(-800.0) >= 0.0);
    }

    #[test]
    fn log_logistic_matches_direct() {
        for &x in &[-30.0, -2.0, 0.0, 0.3, 5.0] {
            assert!((log_logistic(x) - libm::log(logistic(x))).abs() < 1e-12);
        }
        assert!((log_logistic(-800.0) + 800.0).abs() < 1e-9);
    }

    #[test]
    fn normal_quantile_inverts_cdf() {
        for &p in &[1e-300, 1e-20, 1e-5, 0.01, 0.3, 0.5, 0.77, 0.99, 1.0 - 1e-12] {
            let x = normal_quantile(p);
            let back = normal_cdf(x);
            assert!(((back - p) / p).abs() < 1e-10, "p={p} x={x} back={back}");
        }
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-14);
    }

    #[test]
    fn gamma_p_closed_form_shape_two() {
        // P(2, x) = 1 - e^{-x}(1 + x)
        for &x in &[0.01, 0.5, 1.0, 2.5, 7.0, 30.0] {
            let exact = 1.0 - libm::exp(-x) * (1.0 + x);
            assert!((gamma_p(2.0, x) - exact).abs() < 1e-14, "x={x}");
            assert!((gamma_q(2.0, x) - (1.0 - exact)).abs() < 1e-14);
        }
    }

    #[test]
    fn gamma_quantile_round_trip() {
        for &scale in &[1.0, 3.0, 10.0] {
            for &q in &[1e-6, 0.1, 0.5, 0.9, 0.999] {
                let x = gamma_quantile(2.0, scale, q);
                assert!((gamma_p(2.0, x / scale) - q).abs() < 1e-10);
            }
        }
        assert_eq!(gamma_quantile(2.0, 1.0, 0.0), 0.0);
        assert!(gamma_quantile(2.0, 1.0, 1.0).is_finite());
    }

    #[test]
    fn poisson_quantile_hand_values() {
        // CDF(0) = e^-1 ~ 0.3679 < 0.5 <= CDF(1) ~ 0.7358
        assert_eq!(poisson_quantile(1.0, 0.5), 1);
        assert_eq!(poisson_quantile(1.0, 0.3), 0);
        assert_eq!(poisson_quantile(1.0, 0.0), 0);
        let top = poisson_quantile(10.0, 1.0);
        assert!(top > 20 && top < 200);
    }
}
