//! Generalized gamma in the log-location-scale form with shape `lambda`.
//!
//! With `w = (ln y - mu) / sigma`, `k = 1 / lambda^2` and `u = lambda w`, the
//! log density is
//! `-ln sigma - ln y - ln sqrt(2 pi) - c(k) - w^2 g(u)`, where
//! `g(u) = (e^u - 1 - u) / u^2` and `c` is the Stirling correction of
//! `ln Gamma`. Both pieces are smooth through `lambda = 0` (lognormal).

use crate::special::{
    gamma_p, gamma_q, inv_gamma_p, norm_cdf, norm_quantile, stirling_correction,
    stirling_correction_deriv, LN_SQRT_2PI,
};

const SERIES_CUT: f64 = 0.05;
const LAMBDA_TINY: f64 = 1e-6;
/// Above this `k` the Wilson-Hilferty normal approximation is used for the
/// cdf and quantile.
const WH_KAPPA: f64 = 1e5;

/// `(e^u - 1 - u) / u^2`.
pub fn g(u: f64) -> f64 {
    if u.abs() < SERIES_CUT {
        let mut term = 0.5;
        let mut sum = term;
        for j in 3..=11 {
            term *= u / j as f64;
            sum += term;
        }
        sum
    } else {
        (u.exp_m1() - u) / (u * u)
    }
}

/// `(e^u - 1) / u`.
pub fn h(u: f64) -> f64 {
    if u.abs() < SERIES_CUT {
        let mut term = 1.0;
        let mut sum = term;
        for j in 2..=11 {
            term *= u / j as f64;
            sum += term;
        }
        sum
    } else {
        u.exp_m1() / u
    }
}

/// `g'(u) = (h(u) - 2 g(u)) / u`.
pub fn k(u: f64) -> f64 {
    if u.abs() < SERIES_CUT {
        // sum_{j>=3} (j-2)/j! u^(j-3)
        let mut fact = 6.0;
        let mut pow = 1.0;
        let mut sum = 0.0;
        for j in 3..=13 {
            if j > 3 {
                fact *= j as f64;
                pow *= u;
            }
            sum += (j - 2) as f64 / fact * pow;
        }
        sum
    } else {
        (h(u) - 2.0 * g(u)) / u
    }
}

/// `c(1/lambda^2)` and `-d/dlambda c(1/lambda^2)`.
pub fn shape_terms(lambda: f64) -> (f64, f64) {
    if lambda.abs() < LAMBDA_TINY {
        (lambda * lambda / 12.0, -lambda / 6.0)
    } else {
        let kappa = 1.0 / (lambda * lambda);
        let c = stirling_correction(kappa);
        let d = 2.0 * stirling_correction_deriv(kappa) / (lambda * lambda * lambda);
        (c, d)
    }
}

pub fn ln_pdf(y: f64, mu: f64, sigma: f64, lambda: f64) -> f64 {
    if !(y > 0.0) || y.is_infinite() {
        return f64::NEG_INFINITY;
    }
    let ly = y.ln();
    let w = (ly - mu) / sigma;
    let (c, _) = shape_terms(lambda);
    let v = -sigma.ln() - ly - LN_SQRT_2PI - c - w * w * g(lambda * w);
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Log-likelihood over `log_y` and its gradient in `(mu, ln sigma, lambda)`.
/// `sum_log_y` is subtracted so the value is the true log-likelihood.
pub fn loglik_grad(log_y: &[f64], sum_log_y: f64, theta: &[f64], grad: &mut [f64]) -> f64 {
    let (mu, s, lambda) = (theta[0], theta[1], theta[2]);
    let sigma = s.exp();
    let (c, dc) = shape_terms(lambda);
    let n = log_y.len() as f64;
    let mut ll = -n * (s + LN_SQRT_2PI + c) - sum_log_y;
    let (mut g_mu, mut g_s, mut g_l) = (0.0, -n, n * dc);
    for &ly in log_y {
        let w = (ly - mu) / sigma;
        let u = lambda * w;
        let hu = h(u);
        ll -= w * w * g(u);
        g_mu += w * hu;
        g_s += w * w * hu;
        g_l -= w * w * w * k(u);
    }
    grad[0] = g_mu / sigma;
    grad[1] = g_s;
    grad[2] = g_l;
    ll
}

pub fn cdf(y: f64, mu: f64, sigma: f64, lambda: f64) -> f64 {
    if !(y > 0.0) {
        return 0.0;
    }
    if y.is_infinite() {
        return 1.0;
    }
    let w = (y.ln() - mu) / sigma;
    if lambda.abs() < LAMBDA_TINY {
        return norm_cdf(w);
    }
    let kappa = 1.0 / (lambda * lambda);
    if kappa > WH_KAPPA {
        let z = 3.0 * (lambda * w / 3.0).exp_m1() / lambda + lambda / 3.0;
        return norm_cdf(z);
    }
    let x = kappa * (lambda * w).exp();
    if lambda > 0.0 {
        gamma_p(kappa, x)
    } else {
        gamma_q(kappa, x)
    }
}

pub fn quantile(p: f64, mu: f64, sigma: f64, lambda: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let w = if lambda.abs() < LAMBDA_TINY {
        norm_quantile(p)
    } else {
        let kappa = 1.0 / (lambda * lambda);
        if kappa > WH_KAPPA {
            let z = norm_quantile(p);
            3.0 * (lambda * (z - lambda / 3.0) / 3.0).ln_1p() / lambda
        } else {
            let q = if lambda > 0.0 { p } else { 1.0 - p };
            (inv_gamma_p(kappa, q) / kappa).ln() / lambda
        }
    };
    (mu + sigma * w).exp()
}
