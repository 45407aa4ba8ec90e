//! Predicting the number of failures in `(t_c, t_w]` among the units still
//! running at the censoring time of a Weibull life test.

use serde::{Deserialize, Serialize};

use crate::bounds::Side;
use crate::discrete::{passing_run, IntegerPrediction};
use crate::error::{Error, Result};
use crate::families::{
    fit_ml, fit_ml_type1_censored, log_likelihood, weibull_censored_loglik, Dataset, Family,
    FamilySpec,
};
use crate::optim::{bfgs, nelder_mead, Tolerance};
use crate::special::{chisq_quantile, xlogy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoredSample {
    pub failure_times: Vec<f64>,
    pub n: usize,
    pub t_c: f64,
}

impl CensoredSample {
    /// Validates and sorts the failure times.
    pub fn new(mut failure_times: Vec<f64>, n: usize, t_c: f64) -> Result<Self> {
        if !(t_c > 0.0 && t_c.is_finite()) {
            return Err(Error::Invalid(format!(
                "censoring time must be positive, got {t_c}"
            )));
        }
        if failure_times.len() > n {
            return Err(Error::Invalid(format!(
                "{} failures but only {n} units",
                failure_times.len()
            )));
        }
        if let Some(t) = failure_times.iter().find(|&&t| !(t > 0.0 && t <= t_c)) {
            return Err(Error::Invalid(format!("failure time {t} outside (0, t_c]")));
        }
        failure_times.sort_by(f64::total_cmp);
        Ok(Self {
            failure_times,
            n,
            t_c,
        })
    }

    pub fn failures(&self) -> usize {
        self.failure_times.len()
    }

    pub fn at_risk(&self) -> usize {
        self.n - self.failure_times.len()
    }
}

/// Full model used in the statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Failure densities, survivor factor at `t_c` and a free `p`.
    #[default]
    SurvivalAdjusted,
    /// Failure densities and a free `p`, without the survivor factor.
    Literal,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "survival-adjusted" | "adjusted" => Ok(Variant::SurvivalAdjusted),
            "literal" => Ok(Variant::Literal),
            other => Err(Error::Invalid(format!(
                "unknown within-sample variant '{other}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WithinSampleQuery {
    pub t_w: f64,
    pub level: f64,
    pub variant: Variant,
}

/// A sample and window, with everything that does not depend on `y`.
/// Times are rescaled so that `t_c = 1`; the statistic is scale-free.
#[derive(Debug, Clone)]
pub struct WithinSampleContext {
    logs: Vec<f64>,
    at_risk: usize,
    ln_tw: f64,
    /// `sup_theta` of the full model's `theta` part.
    full_theta: f64,
    /// Start for the reduced fits, `(ln beta, ln eta)`.
    start: [f64; 2],
}

impl WithinSampleContext {
    pub fn new(sample: &CensoredSample, t_w: f64, variant: Variant) -> Result<Self> {
        if !(t_w > sample.t_c && t_w.is_finite()) {
            return Err(Error::Invalid(format!(
                "t_w = {t_w} must exceed t_c = {}",
                sample.t_c
            )));
        }
        let scaled: Vec<f64> = sample
            .failure_times
            .iter()
            .map(|t| t / sample.t_c)
            .collect();
        let logs: Vec<f64> = scaled.iter().map(|t| t.ln()).collect();
        let at_risk = sample.at_risk();
        let ln_tw = (t_w / sample.t_c).ln();
        if at_risk == 0 {
            return Ok(Self {
                logs,
                at_risk,
                ln_tw,
                full_theta: 0.0,
                start: [0.0, 0.0],
            });
        }
        if scaled.is_empty() {
            return Err(Error::NoFailures);
        }
        let cens = fit_ml_type1_censored(&scaled, sample.n, 1.0)?;
        let (b, e) = (cens.params.values()[0], cens.params.values()[1]);
        let full_theta = match variant {
            Variant::SurvivalAdjusted => weibull_censored_loglik(&scaled, sample.n, 1.0, b, e),
            Variant::Literal => {
                let spec = FamilySpec::new(Family::Weibull)?;
                let fit = fit_ml(&spec, &Dataset::new(scaled.clone())?)
                    .map_err(|e| Error::DegenerateData(format!("failure-only Weibull fit: {e}")))?;
                log_likelihood(&spec, &fit.params, &scaled)
            }
        };
        Ok(Self {
            logs,
            at_risk,
            ln_tw,
            full_theta,
            start: [b.ln(), e.ln()],
        })
    }

    pub fn at_risk(&self) -> usize {
        self.at_risk
    }

    /// Reduced log-likelihood and its gradient in `(ln beta, ln eta)`,
    /// binomial coefficient dropped.
    fn reduced(&self, y: f64, x: &[f64], grad: &mut [f64]) -> f64 {
        let beta = x[0].exp();
        let e = x[1];
        let k = self.at_risk as f64;
        let mut ll = 0.0;
        let (mut gb, mut ge) = (0.0, 0.0);
        for &l in &self.logs {
            let bz = beta * (l - e);
            let a = bz.exp();
            ll += x[0] - l + bz - a;
            gb += 1.0 + bz - a * bz;
            ge += -beta + beta * a;
        }
        let lc = -beta * e;
        let lw = beta * (self.ln_tw - e);
        let (ac, aw) = (lc.exp(), lw.exp());
        let d = aw - ac;
        ll += -y * ac - (k - y) * aw;
        gb += -y * ac * lc - (k - y) * aw * lw;
        ge += y * beta * ac + (k - y) * beta * aw;
        if y > 0.0 {
            ll += y * (-(-d).exp_m1()).ln();
            let gd = y / d.exp_m1();
            gb += gd * (aw * lw - ac * lc);
            ge += gd * (-beta * aw + beta * ac);
        }
        grad[0] = -gb;
        grad[1] = -ge;
        if ll.is_finite() {
            -ll
        } else {
            f64::INFINITY
        }
    }

    /// Maximized reduced log-likelihood at `y`, warm-started from `start`.
    fn reduced_sup(&self, y: u64, start: [f64; 2]) -> Result<(f64, [f64; 2])> {
        let yf = y as f64;
        let mut g = [0.0; 2];
        let tol = Tolerance {
            rel_f: 1e-14,
            grad: 1e-9,
            max_iter: 500,
        };
        let first = bfgs(|x, g| self.reduced(yf, x, g), &start, tol);
        let mut best = first.clone();
        if !first.converged {
            let mut f = |x: &[f64]| self.reduced(yf, x, &mut g);
            let nm = nelder_mead(&mut f, &first.x, 0.2, 1e-14, 4000);
            let polish = bfgs(|x, g| self.reduced(yf, x, g), &nm.x, tol);
            best = if polish.f <= nm.f { polish } else { nm };
            if !best.converged {
                return Err(Error::FitFailed {
                    iterations: best.iterations,
                    detail: format!("reduced within-sample fit at y = {y}"),
                });
            }
        }
        Ok((-best.f, [best.x[0], best.x[1]]))
    }

    fn full(&self, y: u64) -> f64 {
        let k = self.at_risk as f64;
        let y = y as f64;
        let p = y / k;
        self.full_theta + xlogy(y, p) + xlogy(k - y, 1.0 - p)
    }

    pub fn neg2_log_lr(&self, y: u64) -> Result<f64> {
        self.curve_from(y, self.start).map(|r| r.0)
    }

    fn curve_from(&self, y: u64, start: [f64; 2]) -> Result<(f64, [f64; 2])> {
        if y as usize > self.at_risk {
            return Err(Error::Invalid(format!(
                "y = {y} exceeds the {} units at risk",
                self.at_risk
            )));
        }
        if self.at_risk == 0 {
            return Ok((0.0, start));
        }
        let (red, x) = self.reduced_sup(y, start)?;
        Ok((2.0 * (self.full(y) - red), x))
    }

    /// Statistic for every `y` in `0..=at_risk`. Each fit starts from the
    /// censored fit and from its neighbour's optimum; the better one wins.
    pub fn curve(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.at_risk + 1);
        let mut prev = self.start;
        for y in 0..=self.at_risk as u64 {
            let a = self.curve_from(y, self.start);
            let b = if y > 0 {
                self.curve_from(y, prev)
            } else {
                a.clone()
            };
            let (v, x) = match (a, b) {
                (Ok(a), Ok(b)) => {
                    if a.0 <= b.0 {
                        a
                    } else {
                        b
                    }
                }
                (Ok(a), Err(_)) | (Err(_), Ok(a)) => a,
                (Err(e), Err(_)) => {
                    return Err(Error::LrEval {
                        y: y as f64,
                        detail: format!("{e}"),
                    });
                }
            };
            out.push(v);
            prev = x;
        }
        Ok(out)
    }
}

pub fn within_sample_neg2_log_lr(
    sample: &CensoredSample,
    query: &WithinSampleQuery,
    y: u64,
) -> Result<f64> {
    WithinSampleContext::new(sample, query.t_w, query.variant)?.neg2_log_lr(y)
}

/// `{y : -2 log Λ <= chi2_{1, level}}` over `0..=n - r`, as the contiguous
/// run around the minimizer.
pub fn within_sample_interval(
    sample: &CensoredSample,
    query: &WithinSampleQuery,
) -> Result<IntegerPrediction> {
    within_sample_predict(sample, query, Side::TwoSided)
}

/// Two-sided set, or a one-sided bound taken from the set calibrated at
/// `chi2_{1, 2 level - 1}`.
pub fn within_sample_predict(
    sample: &CensoredSample,
    query: &WithinSampleQuery,
    side: Side,
) -> Result<IntegerPrediction> {
    let ctx = WithinSampleContext::new(sample, query.t_w, query.variant)?;
    let vals = ctx.curve()?;
    set_from_curve(&vals, query.level, side)
}

/// Prediction set from precomputed statistic values at `y = 0, 1, ...`.
pub fn set_from_curve(vals: &[f64], level: f64, side: Side) -> Result<IntegerPrediction> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Invalid(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    let p = if side == Side::TwoSided {
        level
    } else {
        2.0 * level - 1.0
    };
    if !(p > 0.0) {
        return Err(Error::Invalid(format!(
            "one-sided level must exceed 0.5, got {level}"
        )));
    }
    let threshold = chisq_quantile(1, p);
    let (lo, hi, argmin_fallback) = passing_run(vals, threshold);
    let top = vals.len().saturating_sub(1) as u64;
    let (lo, hi) = match side {
        Side::TwoSided => (lo, hi),
        Side::Upper => (0, hi),
        Side::Lower => (lo, top),
    };
    Ok(IntegerPrediction {
        lo,
        hi,
        level,
        threshold,
        corrected: false,
        argmin_fallback,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example() -> CensoredSample {
        CensoredSample::new(vec![0.5, 0.8], 5, 1.0).unwrap()
    }

    fn q(variant: Variant) -> WithinSampleQuery {
        WithinSampleQuery {
            t_w: 2.0,
            level: 0.95,
            variant,
        }
    }

    #[test]
    fn nobody_at_risk() {
        let s = CensoredSample::new(vec![0.2, 0.5, 0.9], 3, 1.0).unwrap();
        assert_eq!(
            within_sample_neg2_log_lr(&s, &q(Variant::SurvivalAdjusted), 0).unwrap(),
            0.0
        );
        let p = within_sample_interval(&s, &q(Variant::SurvivalAdjusted)).unwrap();
        assert_eq!((p.lo, p.hi), (0, 0));
    }

    #[test]
    fn no_failures_rejected() {
        let s = CensoredSample::new(vec![], 5, 1.0).unwrap();
        assert_eq!(
            within_sample_neg2_log_lr(&s, &q(Variant::SurvivalAdjusted), 0).unwrap_err(),
            Error::NoFailures
        );
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = CensoredSample::new(vec![0.2, 0.35, 0.5, 0.8, 0.95], 12, 1.0).unwrap();
        let ctx = WithinSampleContext::new(&s, 1.7, Variant::SurvivalAdjusted).unwrap();
        for y in [0.0, 3.0, 7.0] {
            let x = [0.3, 0.4];
            let mut g = [0.0; 2];
            ctx.reduced(y, &x, &mut g);
            let mut scratch = [0.0; 2];
            for i in 0..2 {
                let h = 1e-6;
                let mut xp = x;
                xp[i] += h;
                let fp = ctx.reduced(y, &xp, &mut scratch);
                xp[i] -= 2.0 * h;
                let fm = ctx.reduced(y, &xp, &mut scratch);
                assert!(((fp - fm) / (2.0 * h) - g[i]).abs() < 1e-6, "y {y} i {i}");
            }
        }
    }

    #[test]
    fn wide_level_covers_everything() {
        let s = example();
        let p = within_sample_interval(
            &s,
            &WithinSampleQuery {
                level: 0.999_999,
                ..q(Variant::SurvivalAdjusted)
            },
        )
        .unwrap();
        let ctx = WithinSampleContext::new(&s, 2.0, Variant::SurvivalAdjusted).unwrap();
        if ctx.curve().unwrap().iter().all(|&v| v < p.threshold) {
            assert_eq!((p.lo, p.hi), (0, 3));
        }
    }

    #[test]
    fn literal_statistic_dominates_adjusted() {
        let s = CensoredSample::new(vec![0.2, 0.35, 0.5, 0.8, 0.95], 12, 1.0).unwrap();
        let a = WithinSampleContext::new(&s, 1.7, Variant::SurvivalAdjusted)
            .unwrap()
            .curve()
            .unwrap();
        let l = WithinSampleContext::new(&s, 1.7, Variant::Literal)
            .unwrap()
            .curve()
            .unwrap();
        for (x, y) in a.iter().zip(&l) {
            assert!(y + 1e-9 >= *x);
        }
    }

    fn weibull_sample(seed: u64, n: usize, beta: f64, t_c: f64) -> Option<CensoredSample> {
        let spec = FamilySpec::new(Family::Weibull).unwrap();
        let p = crate::families::ParamVector::new(Family::Weibull, &[beta, 1.0]).unwrap();
        let xs = crate::families::sample(&spec, &p, n, seed).unwrap();
        let fails: Vec<f64> = xs.into_iter().filter(|&t| t <= t_c).collect();
        if fails.len() < 2 {
            return None;
        }
        CensoredSample::new(fails, n, t_c).ok()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn scale_equivariant_nonnegative_unimodal(seed in 0u64..500, n in 8usize..40, beta in 0.8f64..3.0, c in 0.01f64..100.0) {
            let Some(s) = weibull_sample(seed, n, beta, 0.6) else { return Ok(()); };
            for variant in [Variant::SurvivalAdjusted, Variant::Literal] {
                let Ok(ctx) = WithinSampleContext::new(&s, 1.1, variant) else { continue; };
                let base = ctx.curve().unwrap();
                let scaled = CensoredSample::new(s.failure_times.iter().map(|t| t * c).collect(), s.n, s.t_c * c).unwrap();
                let other = WithinSampleContext::new(&scaled, 1.1 * c, variant).unwrap().curve().unwrap();
                for (a, b) in base.iter().zip(&other) {
                    prop_assert!((a - b).abs() < 1e-8 * a.abs().max(1.0), "{a} vs {b}");
                }
                prop_assert!(base.iter().all(|&v| v >= -1e-8));
                let diffs: Vec<f64> = base.windows(2).map(|w| w[1] - w[0]).filter(|d| d.abs() > 1e-9).collect();
                let changes = diffs.windows(2).filter(|w| w[0].signum() != w[1].signum()).count();
                prop_assert!(changes <= 1, "{base:?}");
            }
        }
    }
}
