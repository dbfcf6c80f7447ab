//! Library functions checked against independent computations: statrs for
//! special functions, finite differences for the Fisher information and an
//! explicit covariance-matrix solution for the GMM weights.

use approx::assert_abs_diff_eq;
use cape_core::estimators::{
    conditional_mle_closed_form, conditional_mle_numeric, fisher_information, gmm_variance, gmm_weights,
    marginal_mle, mme_variance, optimal_gmm,
};
use cape_core::intervals::{clopper_pearson, normal_critical_value};
use cape_core::model::{tau_probabilities, ErrorRates, OfficialContext, SurveyCounts};
use cape_core::special;
use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF, Normal};

#[test]
fn special_functions_match_statrs() {
    for &(a, b) in &[(0.5, 0.5), (2.0, 3.0), (71.0, 2217.0), (39.0, 2249.0), (500.0, 20.0)] {
        let dist = Beta::new(a, b).unwrap();
        for &x in &[1e-4, 0.01, 0.03, 0.3, 0.7, 0.99] {
            assert_abs_diff_eq!(special::reg_inc_beta(x, a, b), dist.cdf(x), epsilon = 1e-10);
        }
        for &p in &[0.005, 0.025, 0.5, 0.975, 0.995] {
            assert_abs_diff_eq!(special::beta_quantile(p, a, b), dist.inverse_cdf(p), epsilon = 1e-8);
        }
    }
    for &x in &[0.5, 1.0, 3.7, 50.0, 2288.0] {
        assert_abs_diff_eq!(special::ln_gamma(x), statrs::function::gamma::ln_gamma(x), epsilon = 1e-9);
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    for &p in &[0.001, 0.1, 0.5, 0.9, 0.975, 0.995] {
        assert_abs_diff_eq!(special::normal_quantile(p), normal.inverse_cdf(p), epsilon = 1e-9);
    }
    for &(k, n, p) in &[(0u64, 10u64, 0.3), (3, 10, 0.3), (100, 2000, 0.05), (1990, 2000, 0.995)] {
        let dist = Binomial::new(p, n).unwrap();
        assert_abs_diff_eq!(special::binomial_cdf(k, n, p), dist.cdf(k), epsilon = 1e-10);
    }
    assert_abs_diff_eq!(normal_critical_value(0.99).unwrap(), normal.inverse_cdf(0.995), epsilon = 1e-9);
}

#[test]
fn clopper_pearson_matches_statrs_quantiles() {
    for &(r, n) in &[(1u64, 10u64), (71, 2287), (39, 2287), (499, 500), (250, 500)] {
        let (lo, hi) = clopper_pearson(r, n, 0.95).unwrap();
        let lo_ref = Beta::new(r as f64, (n - r + 1) as f64).unwrap().inverse_cdf(0.025);
        let hi_ref = Beta::new((r + 1) as f64, (n - r) as f64).unwrap().inverse_cdf(0.975);
        assert_abs_diff_eq!(lo, lo_ref, epsilon = 1e-9);
        assert_abs_diff_eq!(hi, hi_ref, epsilon = 1e-9);
    }
}

/// `-d^2/dpi^2 sum_l tau_l(p) ln tau_l(pi)` at `pi = p` by finite differences.
fn expected_curvature(pi: f64, ctx: &OfficialContext, rates: &ErrorRates) -> f64 {
    let weights = tau_probabilities(pi, ctx, rates).unwrap().as_array();
    let ell = |x: f64| {
        let tau = tau_probabilities(x, ctx, rates).unwrap().as_array();
        weights
            .iter()
            .zip(tau)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, t)| w * t.ln())
            .sum::<f64>()
    };
    let h = 1e-4 * pi.min(1.0 - pi);
    -(ell(pi + h) - 2.0 * ell(pi) + ell(pi - h)) / (h * h)
}

#[test]
fn fisher_information_matches_numeric_curvature() {
    let cases = [
        (0.05, 0.013105, ErrorRates::exact()),
        (0.05, 0.013105, ErrorRates { alpha: 0.01, beta: 0.1, alpha0: 0.0 }),
        (0.2, 0.1, ErrorRates { alpha: 0.01, beta: 0.02, alpha0: 0.0 }),
        (0.3, 0.1, ErrorRates { alpha: 0.02, beta: 0.05, alpha0: 0.01 }),
        (0.75, 0.5, ErrorRates { alpha: 0.0, beta: 0.02, alpha0: 0.003 }),
    ];
    for (pi, pi0, rates) in cases {
        let ctx = OfficialContext::new(pi0, &rates).unwrap();
        let info = fisher_information(pi, &ctx, &rates).unwrap();
        let numeric = expected_curvature(pi, &ctx, &rates);
        assert!((info / numeric - 1.0).abs() < 1e-4, "pi={pi} info={info} numeric={numeric}");
    }
}

#[test]
fn no_error_information_closed_form() {
    let rates = ErrorRates::exact();
    for &(pi, pi0) in &[(0.05, 0.01), (0.2, 0.1), (0.75, 0.5), (0.5, 0.0)] {
        let ctx = OfficialContext::new(pi0, &rates).unwrap();
        let inv = 1.0 / fisher_information(pi, &ctx, &rates).unwrap();
        assert_abs_diff_eq!(inv, (pi - pi0) * (1.0 - pi) / (1.0 - pi0), epsilon = 1e-14);
    }
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let c = |r: usize, s: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (s1, s2) = ((s + 1) % 3, (s + 2) % 3);
        m[r1][s1] * m[r2][s2] - m[r1][s2] * m[r2][s1]
    };
    let det = m[0][0] * c(0, 0) + m[0][1] * c(0, 1) + m[0][2] * c(0, 2);
    let mut inv = [[0.0; 3]; 3];
    for (r, row) in inv.iter_mut().enumerate() {
        for (s, v) in row.iter_mut().enumerate() {
            *v = c(s, r) / det;
        }
    }
    inv
}

#[test]
fn gmm_weights_solve_the_covariance_system() {
    let n = 2000;
    for &(pi, pi0, a0) in &[(0.05, 0.02, 0.001), (0.2, 0.1, 0.01), (0.5, 0.3, 0.05), (0.1, 0.05, 0.04)] {
        let rates = ErrorRates { alpha: 0.01, beta: 0.05, alpha0: a0 };
        let ctx = OfficialContext::new(pi0, &rates).unwrap();
        let tau = tau_probabilities(pi, &ctx, &rates).unwrap().as_array();
        // slopes of tau11, tau10, tau01 in pi, by differencing
        let h = 1e-3;
        let up = tau_probabilities(pi + h, &ctx, &rates).unwrap().as_array();
        let slope: Vec<f64> = (0..3).map(|l| (up[l] - tau[l]) / h).collect();
        let mut sigma = [[0.0; 3]; 3];
        for l in 0..3 {
            for m in 0..3 {
                let cov = if l == m { tau[l] * (1.0 - tau[l]) } else { -tau[l] * tau[m] };
                sigma[l][m] = cov / (n as f64 * slope[l] * slope[m]);
            }
        }
        let inv = invert3(sigma);
        let row: Vec<f64> = inv.iter().map(|r| r.iter().sum()).collect();
        let total: f64 = row.iter().sum();
        let w = gmm_weights(pi, &ctx, &rates).unwrap();
        for (got, want) in w.as_array().iter().zip(&row) {
            assert_abs_diff_eq!(*got, want / total, epsilon = 1e-8);
        }
        assert_abs_diff_eq!(w.sum(), 1.0, epsilon = 1e-12);
        let var = gmm_variance(&w, pi, n, &ctx, &rates);
        assert!((var * total - 1.0).abs() < 1e-6, "var={var} oracle={}", 1.0 / total);
        assert!(var <= mme_variance(pi, n, &ctx, &rates) * (1.0 + 1e-12));
    }
}

#[test]
fn numeric_cmle_agrees_with_closed_form() {
    let rates = ErrorRates { alpha: 0.01, beta: 0.1, alpha0: 0.0 };
    let counts = SurveyCounts::from_partial(2287, 71, 32).unwrap();
    let ctx = OfficialContext::new(0.013105, &rates).unwrap();
    let closed = conditional_mle_closed_form(&counts, &ctx, &rates).unwrap();
    let numeric = conditional_mle_numeric(&counts, &ctx, &rates).unwrap().point;
    assert_abs_diff_eq!(closed, numeric, epsilon = 1e-9);
    assert_abs_diff_eq!(closed, 0.021_194_101_746_431_16, epsilon = 1e-12);
}

#[test]
fn marginal_mle_close_to_conditional_for_large_samples() {
    let rates = ErrorRates { alpha: 0.01, beta: 0.02, alpha0: 0.0 };
    let ctx = OfficialContext::new(0.1, &rates).unwrap();
    let tau = tau_probabilities(0.2, &ctx, &rates).unwrap().as_array();
    let n = 1_000_000u64;
    let r11 = (tau[0] * n as f64).round() as u64;
    let r01 = (tau[2] * n as f64).round() as u64;
    let e = marginal_mle(r11, r01, n, &ctx, &rates).unwrap();
    assert!((e.point - 0.2).abs() < 1e-4, "{}", e.point);
    let info = fisher_information(0.2, &ctx, &rates).unwrap();
    assert!(e.info.unwrap() <= info * 1.001);
}

#[test]
fn gmm_reduces_to_mme_without_official_false_positives() {
    let rates = ErrorRates { alpha: 0.01, beta: 0.1, alpha0: 0.0 };
    let counts = SurveyCounts::from_partial(2287, 71, 32).unwrap();
    let ctx = OfficialContext::new(0.013105, &rates).unwrap();
    let (e, w) = optimal_gmm(&counts, &ctx, &rates, None).unwrap();
    assert_eq!(w.as_array(), [0.0, 0.0, 1.0]);
    assert_abs_diff_eq!(e.raw, 0.021_176_862_628_535_492, epsilon = 1e-13);
}
