//! The prediction likelihood-ratio statistic `-2 log Λ(x, y)`, its mode in
//! `y`, and the signed version used for one-sided bounds.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::families::sup::{ln_sup_y_term, varied_at_sup};
use crate::families::{
    fit_ml, fit_ml_from, full_fit_numeric, full_fit_structured, gg_boundary_objective, pooled_fit,
    Dataset, Family, FamilySpec, FitOptions, FittedModel, FullFit, ParamVector, PooledInput,
};
use crate::optim::{bracket_minimum, brent_minimize, Trace};

/// How `-2 log Λ` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPath {
    /// Closed forms where they exist, structured fits otherwise.
    #[default]
    Fast,
    /// Numeric full-model optimizer and `fit_ml` on the pooled sample.
    Generic,
}

#[derive(Debug, Clone, Default)]
pub struct PrepareOptions {
    pub path: EvalPath,
    /// Warm start for iterative data fits (bootstrap replicates pass the
    /// observed-data estimate).
    pub warm_start: Option<Vec<f64>>,
}

/// Everything needed to evaluate the statistic at any `y`, without the mode.
#[derive(Debug, Clone)]
pub(crate) struct LrCore {
    pub spec: FamilySpec,
    pub data: Dataset,
    pub data_fit: FittedModel,
    pub full: FullFit,
    pub pooled: PooledInput,
    pub path: EvalPath,
}

impl LrCore {
    pub fn new(spec: &FamilySpec, data: &Dataset, opts: &PrepareOptions) -> Result<Self> {
        if !spec.uses_default_varied() {
            return Err(Error::Unsupported(format!(
                "varied parameter '{}' for {}; only the default '{}' is implemented",
                spec.varied_param,
                spec.family,
                spec.family.default_varied()
            )));
        }
        let fit_opts = FitOptions {
            warm_start: opts.warm_start.clone(),
            tolerance: None,
        };
        let data_fit = fit_ml_from(spec, data, &fit_opts)?;
        let full = match opts.path {
            EvalPath::Fast => full_fit_structured(spec, data, &data_fit)?,
            EvalPath::Generic => full_fit_numeric(spec, data, data_fit.params.values())?,
        };
        Ok(Self {
            spec: spec.clone(),
            data: data.clone(),
            data_fit,
            full,
            pooled: PooledInput::new(spec, data),
            path: opts.path,
        })
    }

    fn closed_form(&self, y: f64) -> Option<f64> {
        if self.path != EvalPath::Fast {
            return None;
        }
        let s = &self.pooled.stats;
        let n = s.n;
        Some(match self.spec.family {
            Family::Normal => {
                let d = y - s.mean;
                (n + 1.0) * (n * d * d / ((n + 1.0) * s.ss)).ln_1p()
            }
            Family::NormalKnownSigma => {
                let sigma = self.spec.known_sigma()?;
                let z = (y - s.mean) / sigma;
                n / (n + 1.0) * z * z
            }
            Family::Exponential => {
                let pooled = (s.sum + y) / (n + 1.0);
                2.0 * ((n + 1.0) * (pooled / s.mean).ln() - (y / s.mean).ln())
            }
            Family::TwoParamExponential => {
                let full = s.sum - n * s.min;
                let red = s.sum + y - (n + 1.0) * s.min.min(y);
                2.0 * (n + 1.0) * (red / full).ln()
            }
            Family::UniformZeroTheta => {
                let m = s.max;
                if y < m {
                    2.0 * (m / y).ln()
                } else {
                    2.0 * n * (y / m).ln()
                }
            }
            _ => return None,
        })
    }

    pub fn neg2_log_lr(&self, y: f64) -> Result<f64> {
        self.spec.check_support(y)?;
        let value = match self.closed_form(y) {
            Some(v) => v,
            None => {
                let full = self.full.objective + ln_sup_y_term(self.spec.family, y);
                let reduced = self.reduced_loglik(y)?;
                2.0 * (full - reduced)
            }
        };
        if value.is_nan() {
            return Err(Error::LrEval {
                y,
                detail: "statistic is NaN".into(),
            });
        }
        // The reduced model is nested in the full one; tiny negatives are
        // optimizer noise.
        Ok(value.max(0.0))
    }

    fn reduced_loglik(&self, y: f64) -> Result<f64> {
        let wrap = |e: Error| Error::LrEval {
            y,
            detail: format!("pooled fit: {e}"),
        };
        match self.path {
            EvalPath::Fast => {
                let first = pooled_fit(&self.spec, &self.pooled, y, self.data_fit.params.values())
                    .map(|r| r.1);
                if self.spec.family != Family::GeneralizedGamma {
                    return first.map_err(wrap);
                }
                // The generalized gamma likelihood can have several local
                // maxima; the full-model fit is a second, distant seed.
                let second =
                    pooled_fit(&self.spec, &self.pooled, y, &self.full.params).map(|r| r.1);
                match (first, second) {
                    (Ok(a), Ok(b)) => Ok(a.max(b)),
                    (Ok(a), Err(_)) | (Err(_), Ok(a)) => Ok(a),
                    (Err(e), Err(_)) => Err(wrap(e)),
                }
            }
            EvalPath::Generic => {
                let mut all = self.data.values().to_vec();
                all.push(y);
                let d = Dataset::new(all).map_err(wrap)?;
                fit_ml(&self.spec, &d)
                    .map(|f| f.log_likelihood)
                    .map_err(wrap)
            }
        }
    }

    /// Whether the generalized gamma pooled supremum sits on the
    /// `lambda -> inf` edge when `y` is the sample minimum or maximum. The
    /// edge gains the most there, and where it wins the curve dips.
    fn reduced_edge_at_extremes(&self) -> bool {
        if self.spec.family != Family::GeneralizedGamma || self.path != EvalPath::Fast {
            return false;
        }
        let s = &self.pooled.stats;
        [s.min, s.max].into_iter().any(|y| {
            let Ok(red) = self.reduced_loglik(y) else {
                return false;
            };
            let mut logs = self.pooled.logs.clone();
            logs.push(y.ln());
            let edge = gg_boundary_objective(&logs, s.sum_log + y.ln(), 0.0);
            edge >= red
        })
    }

    /// Closed-form mode for the pivotal families.
    pub fn closed_form_mode(&self) -> Option<f64> {
        let s = &self.pooled.stats;
        match self.spec.family {
            Family::Normal | Family::NormalKnownSigma | Family::Exponential => Some(s.mean),
            Family::TwoParamExponential => Some(s.min),
            Family::UniformZeroTheta => Some(s.max),
            _ => None,
        }
    }

    /// True when `y` lies strictly left of the mode, decided from the local
    /// slope of the curve. For a unimodal curve this is the same as
    /// comparing with the located mode.
    pub fn left_of_mode(&self, y: f64, value: f64) -> Result<bool> {
        if let Some(m) = self.closed_form_mode() {
            return Ok(y < m);
        }
        let h: f64 = 1e-5;
        let (lo, hi) = if self.spec.family.positive_support() {
            (y * (-h).exp(), y * h.exp())
        } else {
            (y - h, y + h)
        };
        let right = self.neg2_log_lr(hi);
        let left = self.neg2_log_lr(lo);
        match (left, right) {
            (Ok(l), Ok(r)) => Ok(r < l || (r == l && r < value)),
            (Ok(l), Err(_)) => Ok(l > value),
            (Err(_), Ok(r)) => Ok(r < value),
            (Err(e), Err(_)) => Err(e),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        if self.spec.family.positive_support() {
            (0.0, f64::INFINITY)
        } else {
            (f64::NEG_INFINITY, f64::INFINITY)
        }
    }
}

/// A prepared prediction problem.
#[derive(Debug, Clone)]
pub struct LrContext {
    pub(crate) core: LrCore,
    pub y0: f64,
    pub support_lo: f64,
    pub support_hi: f64,
    /// Set when the mode search saw a non-unimodal curve.
    pub multimodal: bool,
    pub mode_evaluations: usize,
}

/// One point of the LR curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LrCurvePoint {
    pub y: f64,
    pub neg2_log_lr: f64,
    pub signed: f64,
}

pub fn prepare(spec: &FamilySpec, data: &Dataset) -> Result<LrContext> {
    prepare_with(spec, data, &PrepareOptions::default())
}

pub fn prepare_with(spec: &FamilySpec, data: &Dataset, opts: &PrepareOptions) -> Result<LrContext> {
    let core = LrCore::new(spec, data, opts)?;
    let (support_lo, support_hi) = core.support();
    let mode = mode_y0(&core)?;
    let multimodal = mode.multimodal || core.full.on_boundary || core.reduced_edge_at_extremes();
    Ok(LrContext {
        core,
        y0: mode.y0,
        support_lo,
        support_hi,
        multimodal,
        mode_evaluations: mode.evaluations,
    })
}

impl LrContext {
    pub fn spec(&self) -> &FamilySpec {
        &self.core.spec
    }

    pub fn data(&self) -> &Dataset {
        &self.core.data
    }

    pub fn data_fit(&self) -> &FittedModel {
        &self.core.data_fit
    }

    pub fn path(&self) -> EvalPath {
        self.core.path
    }

    /// Whether the y-free part of the full-model fit converged, and its
    /// iteration count.
    pub fn full_fit_status(&self) -> (bool, usize) {
        (self.core.full.converged, self.core.full.iterations)
    }

    /// Curve evaluated on a set of points.
    pub fn curve(&self, ys: &[f64]) -> Result<Vec<LrCurvePoint>> {
        ys.iter()
            .map(|&y| {
                let v = neg2_log_lr(self, y)?;
                Ok(LrCurvePoint {
                    y,
                    neg2_log_lr: v,
                    signed: if y <= self.y0 { -v } else { v },
                })
            })
            .collect()
    }
}

pub fn neg2_log_lr(ctx: &LrContext, y: f64) -> Result<f64> {
    ctx.core.neg2_log_lr(y)
}

/// `zeta(x, y) = sign(y - y0) * (-2 log Λ)`, negative for `y <= y0`.
pub fn signed_lr(ctx: &LrContext, y: f64) -> Result<f64> {
    let v = ctx.core.neg2_log_lr(y)?;
    Ok(if y <= ctx.y0 { -v } else { v })
}

/// Full-model ML at `y`: the parameters shared with the data and the
/// predictand's own value of the varied component.
pub fn joint_full_ml(ctx: &LrContext, y: f64) -> Result<(ParamVector, f64)> {
    ctx.core.spec.check_support(y)?;
    let p = ParamVector::new(ctx.core.spec.family, &ctx.core.full.params)?;
    let vy = varied_at_sup(&ctx.core.spec, &ctx.core.full.params, y);
    Ok((p, vy))
}

pub(crate) struct Mode {
    pub y0: f64,
    pub multimodal: bool,
    pub evaluations: usize,
}

/// Minimizer of the curve. Closed form for the pivotal families; otherwise
/// Brent's method on an expanding bracket (in `ln y` for positive
/// families) seeded at the sample mean.
pub(crate) fn mode_y0(core: &LrCore) -> Result<Mode> {
    if let Some(y0) = core.closed_form_mode() {
        if core.path == EvalPath::Fast {
            return Ok(Mode {
                y0,
                multimodal: false,
                evaluations: 0,
            });
        }
    }
    let positive = core.spec.family.positive_support();
    let to_y = |t: f64| if positive { t.exp() } else { t };
    let mut f = |t: f64| core.neg2_log_lr(to_y(t)).unwrap_or(f64::INFINITY);
    let s = &core.pooled.stats;
    let (seed, step) = if positive {
        (s.mean.ln(), 0.1)
    } else {
        (
            s.mean,
            0.1 * (s.ss / s.n).sqrt().max(1e-8 * s.mean.abs().max(1.0)),
        )
    };
    let mut trace = Trace::default();
    let br = bracket_minimum(&mut f, seed, step, 60, &mut trace).ok_or(Error::UnboundedSide {
        side: "mode",
        expansions: 60,
    })?;
    let scale = if positive {
        1.0
    } else {
        s.mean.abs().max((s.ss / s.n).sqrt()).max(1.0)
    };
    let (t0, _, _) = brent_minimize(&mut f, br, 1e-10 * scale, 200, &mut trace);
    let multimodal = trace.has_interior_peak(1e-8);
    Ok(Mode {
        y0: to_y(t0),
        multimodal,
        evaluations: trace.points.len(),
    })
}

/// Simple linear regression version: `(n+1) ln(1 + T^2/(n-2))` with `T` the
/// studentized prediction residual at `x_new`.
pub fn regression_neg2_log_lr(
    covariates: &[f64],
    responses: &[f64],
    x_new: f64,
    y: f64,
) -> Result<f64> {
    let n = covariates.len();
    if n != responses.len() {
        return Err(Error::Invalid(format!(
            "{} covariates but {} responses",
            n,
            responses.len()
        )));
    }
    if n < 3 {
        return Err(Error::InsufficientData { min: 3, got: n });
    }
    if covariates
        .iter()
        .chain(responses)
        .chain([&x_new, &y])
        .any(|v| !v.is_finite())
    {
        return Err(Error::Invalid("non-finite regression input".into()));
    }
    let nf = n as f64;
    let xbar = covariates.iter().sum::<f64>() / nf;
    let ybar = responses.iter().sum::<f64>() / nf;
    let sxx: f64 = covariates.iter().map(|x| (x - xbar).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Design("all covariates equal".into()));
    }
    let sxy: f64 = covariates
        .iter()
        .zip(responses)
        .map(|(x, r)| (x - xbar) * (r - ybar))
        .sum();
    let b1 = sxy / sxx;
    let b0 = ybar - b1 * xbar;
    let rss: f64 = covariates
        .iter()
        .zip(responses)
        .map(|(x, r)| (r - b0 - b1 * x).powi(2))
        .sum();
    if !(rss > 0.0) {
        return Err(Error::DegenerateData(
            "responses lie exactly on a line".into(),
        ));
    }
    let s2 = rss / (nf - 2.0);
    let resid = y - b0 - b1 * x_new;
    let t2 = resid * resid / (s2 * (1.0 + 1.0 / nf + (x_new - xbar).powi(2) / sxx));
    Ok((nf + 1.0) * (t2 / (nf - 2.0)).ln_1p())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::sample;
    use proptest::prelude::*;

    fn ctx(f: Family, xs: &[f64]) -> LrContext {
        prepare(
            &FamilySpec::new(f).unwrap(),
            &Dataset::new(xs.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn spec_examples() {
        let n = ctx(Family::Normal, &[-1.0, 0.0, 1.0]);
        assert_eq!(n.y0, 0.0);
        // t = 1 at y = -sqrt(4/3); corrected closed form gives 4 ln 1.5.
        let v = neg2_log_lr(&n, -(4.0f64 / 3.0).sqrt()).unwrap();
        assert!((v - 1.621_860_432_432_657_3).abs() < 1e-12, "{v}");
        let (p, vy) = joint_full_ml(&n, 5.0).unwrap();
        assert_eq!(p.values()[0], 0.0);
        assert!((p.values()[1] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(vy, 5.0);

        let e = ctx(Family::Exponential, &[1.0, 3.0]);
        assert_eq!(e.y0, 2.0);
        // -2 ln 0.84375 and -2 ln 0.864
        assert!((neg2_log_lr(&e, 4.0).unwrap() - 0.339_798_073_590_794_95).abs() < 1e-12);
        assert!((signed_lr(&e, 4.0).unwrap() - 0.339_798_073_590_794_95).abs() < 1e-12);
        assert!((signed_lr(&e, 1.0).unwrap() + 0.292_365_020_356_162_9).abs() < 1e-12);
        assert_eq!(signed_lr(&e, 2.0).unwrap(), 0.0);
        let (p, vy) = joint_full_ml(&e, 7.0).unwrap();
        assert_eq!((p.values()[0], vy), (2.0, 7.0));

        let u = ctx(Family::UniformZeroTheta, &[0.5, 2.0, 1.0]);
        assert_eq!(u.y0, 2.0);
        assert_eq!(neg2_log_lr(&u, 2.0).unwrap(), 0.0);
        assert!((neg2_log_lr(&u, 4.0).unwrap() - 4.158_883_083_359_672).abs() < 1e-12);

        let t = ctx(Family::TwoParamExponential, &[1.0, 2.0, 3.0]);
        assert_eq!(t.y0, 1.0);
    }

    #[test]
    fn regression_examples() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [0.1, 0.8, 2.1];
        // fitted line and studentized residual computed independently
        let (b0, b1) = (0.0f64, 1.0f64);
        let rss: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - b0 - b1 * x).powi(2))
            .sum();
        let xnew = 1.5;
        let se = (rss * (1.0 + 1.0 / 3.0 + 0.25 / 2.0)).sqrt();
        let y = b0 + b1 * xnew + se;
        let v = regression_neg2_log_lr(&xs, &ys, xnew, y).unwrap();
        assert!((v - 4.0 * 2f64.ln()).abs() < 1e-12, "{v}");
        assert_eq!(
            regression_neg2_log_lr(&xs, &ys, xnew, b0 + b1 * xnew).unwrap(),
            0.0
        );
        let shifted: Vec<f64> = ys.iter().map(|v| v + 7.5).collect();
        let w = regression_neg2_log_lr(&xs, &shifted, xnew, y + 7.5).unwrap();
        assert!((w - v).abs() < 1e-10);
        assert!(matches!(
            regression_neg2_log_lr(&[1.0, 1.0, 1.0], &ys, 0.0, 0.0),
            Err(Error::Design(_))
        ));
    }

    #[test]
    fn gamma_mode_matches_grid() {
        let spec = FamilySpec::new(Family::Gamma).unwrap();
        let xs = sample(
            &spec,
            &ParamVector::new(Family::Gamma, &[2.0, 1.0]).unwrap(),
            50,
            5,
        )
        .unwrap();
        let c = prepare(&spec, &Dataset::new(xs).unwrap()).unwrap();
        let mut best = (f64::INFINITY, 0.0);
        let (mut lo, mut hi) = (0.1, 10.0);
        for _ in 0..6 {
            for i in 0..=400 {
                let y = lo + (hi - lo) * i as f64 / 400.0;
                let v = neg2_log_lr(&c, y).unwrap();
                if v < best.0 {
                    best = (v, y);
                }
            }
            let w = (hi - lo) / 100.0;
            lo = (best.1 - w).max(1e-6);
            hi = best.1 + w;
        }
        assert!(
            ((c.y0 - best.1) / best.1).abs() < 1e-6,
            "{} vs {}",
            c.y0,
            best.1
        );
        assert!(!c.multimodal);
    }

    #[test]
    fn gengamma_boundary_full_fit_flags_multimodal() {
        // full supremum on the lambda -> inf edge; past y ~ 1.24 the reduced
        // supremum follows it and -2 log LR falls again
        let spec = FamilySpec::new(Family::GeneralizedGamma).unwrap();
        let truth = ParamVector::new(Family::GeneralizedGamma, &[0.1, 0.5, 0.7]).unwrap();
        let xs = sample(&spec, &truth, 19, 42714).unwrap();
        let c = prepare(&spec, &Dataset::new(xs).unwrap()).unwrap();
        assert!(c.multimodal);
        let a = neg2_log_lr(&c, 1.2).unwrap();
        let b = neg2_log_lr(&c, 1.3).unwrap();
        assert!(b < a, "{a} {b}");
    }

    fn random_case(f: Family, seed: u64, n: usize) -> (FamilySpec, Dataset) {
        let spec = if f == Family::NormalKnownSigma {
            FamilySpec::normal_known_sigma(1.7).unwrap()
        } else {
            FamilySpec::new(f).unwrap()
        };
        let truth = match f {
            Family::NormalKnownSigma => vec![0.4],
            Family::Normal | Family::TwoParamExponential => vec![0.4, 1.3],
            Family::Gamma | Family::Weibull => vec![2.5, 1.3],
            Family::GeneralizedGamma => vec![0.1, 0.5, 0.7],
            _ => vec![1.3],
        };
        let xs = sample(&spec, &ParamVector::new(f, &truth).unwrap(), n, seed).unwrap();
        (spec, Dataset::new(xs).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn nonnegative_and_signed_monotone(seed in 0u64..100_000, n in 3usize..25, fi in 0usize..8) {
            let f = Family::ALL[fi];
            // Tiny generalized gamma samples have genuinely multimodal
            // likelihoods; the property is checked from n = 10 there, and
            // only on curves not flagged multimodal.
            let n = if f == Family::GeneralizedGamma { n + 10 } else { n };
            let (spec, data) = random_case(f, seed, n);
            let Ok(c) = prepare(&spec, &data) else { return Ok(()); };
            if c.multimodal {
                return Ok(());
            }
            let (lo, hi) = if f.positive_support() { (c.y0 * 0.02, c.y0 * 8.0) } else { (c.y0 - 10.0, c.y0 + 10.0) };
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=200 {
                let y = lo + (hi - lo) * i as f64 / 200.0;
                let Ok(z) = signed_lr(&c, y) else { continue };
                prop_assert!(z.abs() >= -1e-10);
                prop_assert!(z >= prev - 1e-9, "{:?} y {} z {} prev {}", f, y, z, prev);
                prev = z;
            }
        }

        #[test]
        fn pivotal_invariance(seed in 0u64..100_000, n in 3usize..20, c in prop::sample::select(vec![0.1, 3.0, 100.0]), a in -5.0f64..5.0) {
            for f in [Family::Exponential, Family::UniformZeroTheta] {
                let (spec, data) = random_case(f, seed, n);
                let base = prepare(&spec, &data).unwrap();
                let scaled = Dataset::new(data.values().iter().map(|x| c * x).collect()).unwrap();
                let other = prepare(&spec, &scaled).unwrap();
                for y in [0.3, 1.0, 2.7] {
                    let l = neg2_log_lr(&base, y).unwrap();
                    let r = neg2_log_lr(&other, c * y).unwrap();
                    prop_assert!((l - r).abs() < 1e-10 * l.max(1.0));
                }
            }
            for f in [Family::Normal, Family::TwoParamExponential] {
                let (spec, data) = random_case(f, seed, n);
                let base = prepare(&spec, &data).unwrap();
                let moved = Dataset::new(data.values().iter().map(|x| a + c * x).collect()).unwrap();
                let other = prepare(&spec, &moved).unwrap();
                for y in [-1.0, 0.3, 2.7] {
                    let l = neg2_log_lr(&base, y).unwrap();
                    let r = neg2_log_lr(&other, a + c * y).unwrap();
                    prop_assert!((l - r).abs() < 1e-10 * l.max(1.0));
                }
            }
        }
    }
}
