//! Weibull fit for Type-I censored life tests: `n` units on test, failures
//! observed up to `t_c`, the rest censored at `t_c`.

use super::fit::weibull_profile_shape;
use super::{Family, FamilySpec, FittedModel, ParamVector};
use crate::error::{Error, Result};

/// Censored Weibull log-likelihood
/// `sum ln f(t_i) + (n - r) ln S(t_c)`.
pub fn weibull_censored_loglik(times: &[f64], n: usize, t_c: f64, beta: f64, eta: f64) -> f64 {
    let r = times.len();
    let mut ll = 0.0;
    for &t in times {
        let z = t / eta;
        ll += beta.ln() - eta.ln() + (beta - 1.0) * z.ln() - z.powf(beta);
    }
    ll - (n - r) as f64 * (t_c / eta).powf(beta)
}

fn validate(times: &[f64], n: usize, t_c: f64) -> Result<()> {
    if !(t_c > 0.0 && t_c.is_finite()) {
        return Err(Error::Invalid(format!(
            "censoring time must be positive, got {t_c}"
        )));
    }
    if times.is_empty() {
        return Err(Error::NoFailures);
    }
    if times.len() > n {
        return Err(Error::Invalid(format!(
            "{} failures but only {n} units",
            times.len()
        )));
    }
    if let Some(t) = times.iter().find(|&&t| !(t > 0.0 && t <= t_c)) {
        return Err(Error::Invalid(format!("failure time {t} outside (0, t_c]")));
    }
    Ok(())
}

pub fn fit_ml_type1_censored(times: &[f64], n: usize, t_c: f64) -> Result<FittedModel> {
    validate(times, n, t_c)?;
    let logs: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let r = times.len();
    let w = weibull_profile_shape(&logs, Some((t_c.ln(), (n - r) as f64)), r as f64)?;
    let eta = w.ln_eta.exp();
    let params =
        ParamVector::new(Family::Weibull, &[w.beta, eta]).map_err(|e| Error::FitFailed {
            iterations: w.iterations,
            detail: e.to_string(),
        })?;
    let spec = FamilySpec::new(Family::Weibull)?;
    let log_likelihood = weibull_censored_loglik(times, n, t_c, w.beta, eta);
    Ok(FittedModel {
        spec,
        params,
        log_likelihood,
        converged: true,
        iterations: w.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_failure_at_censoring_time_is_rejected() {
        assert!(fit_ml_type1_censored(&[2.0], 1, 2.0).is_err());
        assert_eq!(
            fit_ml_type1_censored(&[], 5, 2.0).unwrap_err(),
            Error::NoFailures
        );
    }

    #[test]
    fn scale_equivariance() {
        let times = [0.2, 0.45, 0.5, 0.81, 0.9];
        let base = fit_ml_type1_censored(&times, 12, 1.0).unwrap();
        for c in [0.01, 7.0, 300.0] {
            let scaled: Vec<f64> = times.iter().map(|t| t * c).collect();
            let f = fit_ml_type1_censored(&scaled, 12, c).unwrap();
            assert!((f.params.values()[0] - base.params.values()[0]).abs() < 1e-8);
            assert!((f.params.values()[1] / (c * base.params.values()[1]) - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn stationary_point_of_censored_likelihood() {
        let times = [0.3, 0.5, 0.55, 0.7, 0.95];
        let f = fit_ml_type1_censored(&times, 9, 1.0).unwrap();
        let (b, e) = (f.params.values()[0], f.params.values()[1]);
        let ll = |b: f64, e: f64| weibull_censored_loglik(&times, 9, 1.0, b, e);
        let h = 1e-5;
        let db = (ll(b + h, e) - ll(b - h, e)) / (2.0 * h);
        let de = (ll(b, e + h) - ll(b, e - h)) / (2.0 * h);
        assert!(db.abs() < 1e-6 && de.abs() < 1e-6, "{db} {de}");
        assert!((f.log_likelihood - ll(b, e)).abs() < 1e-12);
    }
}
