//! Supremum of `f(y; theta_y)` over the varied component with the other
//! components held fixed.
//!
//! For every family the log supremum splits as `c(common) + k(y)`, which is
//! what lets the full-model fit ignore `y` except through a constant.

use super::{gengamma, Family, FamilySpec, ParamVector};
use crate::error::{Error, Result};
use crate::special::{ln_gamma, LN_SQRT_2PI};

/// `c(common)`: the part of the log supremum that depends on the common
/// components. `values` is a full parameter vector; the varied entry is ignored.
pub fn ln_single_obs_sup_common(spec: &FamilySpec, values: &[f64]) -> f64 {
    match spec.family {
        Family::Normal => -values[1].ln() - LN_SQRT_2PI,
        Family::NormalKnownSigma => -spec.known_sigma().unwrap_or(1.0).ln() - LN_SQRT_2PI,
        Family::Exponential => -1.0,
        Family::TwoParamExponential => -values[1].ln(),
        Family::UniformZeroTheta => 0.0,
        Family::Gamma => {
            let a = values[0];
            a * a.ln() - a - ln_gamma(a)
        }
        Family::Weibull => values[0].ln() - 1.0,
        Family::GeneralizedGamma => {
            -values[1].ln() - LN_SQRT_2PI - gengamma::shape_terms(values[2]).0
        }
    }
}

/// `k(y)`: the part of the log supremum that depends on `y`.
pub(crate) fn ln_sup_y_term(family: Family, y: f64) -> f64 {
    match family {
        Family::Normal | Family::NormalKnownSigma | Family::TwoParamExponential => 0.0,
        _ => -y.ln(),
    }
}

/// Value of the varied component attaining the supremum.
pub(crate) fn varied_at_sup(spec: &FamilySpec, values: &[f64], y: f64) -> f64 {
    match spec.family {
        Family::Gamma => y / values[0],
        Family::GeneralizedGamma => y.ln(),
        _ => y,
    }
}

/// `ln sup_{theta_y} f(y; theta_y, common)`.
pub fn ln_single_obs_sup(spec: &FamilySpec, params: &ParamVector, y: f64) -> Result<f64> {
    if params.family() != spec.family {
        return Err(Error::ParamDomain(
            "parameter vector belongs to another family".into(),
        ));
    }
    if !spec.uses_default_varied() {
        return Err(Error::Unsupported(format!(
            "closed-form supremum only for the default varied parameter of {}",
            spec.family
        )));
    }
    spec.check_support(y)?;
    Ok(ln_single_obs_sup_common(spec, params.values()) + ln_sup_y_term(spec.family, y))
}

/// `sup_{theta_y} f(y; theta_y, common)`.
pub fn single_obs_sup(spec: &FamilySpec, params: &ParamVector, y: f64) -> Result<f64> {
    ln_single_obs_sup(spec, params, y).map(f64::exp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::Dist;
    use crate::optim::{bracket_minimum, brent_minimize, Trace};
    use proptest::prelude::*;

    fn numeric_sup(spec: &FamilySpec, values: &[f64], y: f64) -> f64 {
        let idx = spec
            .family
            .param_names()
            .iter()
            .position(|n| *n == spec.varied_param)
            .unwrap();
        let positive = !matches!(
            spec.family,
            Family::Normal
                | Family::NormalKnownSigma
                | Family::GeneralizedGamma
                | Family::TwoParamExponential
        );
        let mut f = |t: f64| {
            let mut v = values.to_vec();
            v[idx] = if positive { t.exp() } else { t };
            match ParamVector::new(spec.family, &v) {
                Ok(p) => -Dist::from_params(spec, &p).ln_pdf(y),
                Err(_) => f64::INFINITY,
            }
        };
        let start = match spec.family {
            Family::TwoParamExponential => y - 1.0,
            _ if positive => y.ln() + 0.3,
            _ => values[idx],
        };
        let mut tr = Trace::default();
        let br = bracket_minimum(&mut f, start, 0.1, 60, &mut tr).unwrap();
        let (_, fx, _) = brent_minimize(&mut f, br, 1e-12, 500, &mut tr);
        -fx
    }

    #[test]
    fn examples() {
        let e = FamilySpec::new(Family::Exponential).unwrap();
        let p = ParamVector::new(Family::Exponential, &[3.0]).unwrap();
        assert!((single_obs_sup(&e, &p, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let g = FamilySpec::new(Family::Gamma).unwrap();
        let p = ParamVector::new(Family::Gamma, &[1.0, 1.0]).unwrap();
        assert!((single_obs_sup(&g, &p, 2.0).unwrap() - 0.183_939_720_585_721_17).abs() < 1e-12);
        let u = FamilySpec::new(Family::UniformZeroTheta).unwrap();
        let p = ParamVector::new(Family::UniformZeroTheta, &[1.0]).unwrap();
        assert_eq!(single_obs_sup(&u, &p, 4.0).unwrap(), 0.25);
        assert!(single_obs_sup(&u, &p, -1.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn closed_forms_match_numeric_sup(
            a in 0.2f64..6.0, b in 0.2f64..4.0, lam in -2.0f64..2.0, y in 0.05f64..20.0
        ) {
            let cases: Vec<(FamilySpec, Vec<f64>, f64)> = vec![
                (FamilySpec::new(Family::Normal).unwrap(), vec![a, b], y),
                (FamilySpec::normal_known_sigma(b).unwrap(), vec![a], y),
                (FamilySpec::new(Family::Exponential).unwrap(), vec![a], y),
                (FamilySpec::new(Family::TwoParamExponential).unwrap(), vec![a, b], y + 0.1),
                (FamilySpec::new(Family::Gamma).unwrap(), vec![a, b], y),
                (FamilySpec::new(Family::Weibull).unwrap(), vec![a, b], y),
                (FamilySpec::new(Family::GeneralizedGamma).unwrap(), vec![a, b, lam], y),
            ];
            for (spec, v, y) in cases {
                let p = ParamVector::new(spec.family, &v).unwrap();
                let closed = ln_single_obs_sup(&spec, &p, y).unwrap().exp();
                let numeric = numeric_sup(&spec, &v, y).exp();
                prop_assert!(((closed - numeric) / closed).abs() < 1e-8, "{:?} {} {}", spec.family, closed, numeric);
            }
        }
    }
}
