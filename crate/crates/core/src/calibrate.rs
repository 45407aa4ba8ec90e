//! Thresholds for the LR curve: parametric bootstrap, Wilks chi-square, and
//! Monte Carlo over the single-observation limit law.

use rand_distr::{Distribution, Gamma as GammaDist};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::families::sup::ln_single_obs_sup_common;
use crate::families::{Dataset, Dist, Family, FamilySpec, FittedModel};
use crate::lr::{LrContext, LrCore, PrepareOptions};
use crate::rng::{self, domain};
use crate::special::chisq_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CalibrationMethod {
    Bootstrap,
    ChiSquare { dof: u32 },
    LimitPlugin,
}

/// Which gamma limit variable to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaLimitForm {
    /// `2(Z - a) - 2a ln(Z/a)`, nonnegative with minimum 0 at `Z = a`.
    #[default]
    Derived,
    /// `2(Z - a) - 2a ln Z`, kept for comparison.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub method: CalibrationMethod,
    /// Miscoverage `alpha`; thresholds sit at the `1 - alpha` (and `alpha`)
    /// quantiles.
    pub alpha: f64,
    pub b: usize,
    pub seed: u64,
    pub max_retries: usize,
}

impl CalibrationSpec {
    pub fn bootstrap(alpha: f64, b: usize, seed: u64) -> Self {
        Self {
            method: CalibrationMethod::Bootstrap,
            alpha,
            b,
            seed,
            max_retries: 20,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Invalid(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        match self.method {
            CalibrationMethod::Bootstrap if self.b < 100 => Err(Error::Invalid(format!(
                "bootstrap needs B >= 100, got {}",
                self.b
            ))),
            CalibrationMethod::ChiSquare { dof } if !(1..=2).contains(&dof) => Err(Error::Invalid(
                format!("chi-square dof must be 1 or 2, got {dof}"),
            )),
            CalibrationMethod::LimitPlugin if self.b == 0 => {
                Err(Error::Invalid("limit calibration needs draws".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    /// `1 - alpha` quantile of `-2 log Λ`: the two-sided threshold.
    pub lambda_hi: f64,
    /// `alpha` quantile of the signed statistic: the lower-bound threshold.
    pub zeta_lo: f64,
    /// `1 - alpha` quantile of the signed statistic: the upper-bound threshold.
    pub zeta_hi: f64,
    pub replicates_used: usize,
    pub replicate_failures: usize,
    pub method: CalibrationMethod,
    pub alpha: f64,
    pub seed: Option<u64>,
}

/// The `ceil(B p)`-th smallest value (1-based).
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Invalid("quantile of an empty sample".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Invalid(format!(
            "quantile level must lie in (0, 1), got {p}"
        )));
    }
    let b = values.len();
    // Guard against B * p landing a hair above an integer.
    let k = ((b as f64 * p) * (1.0 - 1e-12)).ceil().clamp(1.0, b as f64) as usize;
    let mut v = values.to_vec();
    let (_, kth, _) = v.select_nth_unstable_by(k - 1, f64::total_cmp);
    Ok(*kth)
}

/// Standard error of [`empirical_quantile`] from `batches` consecutive
/// batches of the replicate sequence.
pub fn batch_quantile_se(values: &[f64], p: f64, batches: usize) -> Result<f64> {
    if batches < 2 || values.len() < batches {
        return Err(Error::Invalid("need at least two non-empty batches".into()));
    }
    let size = values.len() / batches;
    let qs = (0..batches)
        .map(|i| empirical_quantile(&values[i * size..(i + 1) * size], p))
        .collect::<Result<Vec<_>>>()?;
    let m = qs.iter().sum::<f64>() / batches as f64;
    let var = qs.iter().map(|q| (q - m).powi(2)).sum::<f64>() / (batches - 1) as f64;
    // Each batch quantile has sqrt(batches) times the full-sample spread.
    Ok((var / batches as f64).sqrt())
}

/// One bootstrap replicate: `(-2 log Λ*, ζ*)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Replicate {
    pub lambda: f64,
    pub zeta: f64,
}

fn replicate_once(ctx: &LrContext, dist: &Dist, rng: &mut rng::StreamRng) -> Result<Replicate> {
    let n = ctx.data().len();
    let xs: Vec<f64> = (0..n).map(|_| dist.sample(rng)).collect();
    let y = dist.sample(rng);
    let data = Dataset::for_family(ctx.spec(), xs)?;
    let opts = PrepareOptions {
        path: ctx.path(),
        warm_start: Some(ctx.data_fit().params.values().to_vec()),
    };
    let core = LrCore::new(ctx.spec(), &data, &opts)?;
    let lambda = core.neg2_log_lr(y)?;
    let left = core.left_of_mode(y, lambda)?;
    Ok(Replicate {
        lambda,
        zeta: if left { -lambda } else { lambda },
    })
}

/// Draw the replicate statistics; failures are retried on fresh streams.
/// Returns the replicates in index order and the number of failed attempts.
pub fn bootstrap_replicates(
    ctx: &LrContext,
    spec: &CalibrationSpec,
) -> Result<(Vec<Replicate>, usize)> {
    let dist = ctx.data_fit().dist();
    let results: Vec<(Option<Replicate>, usize)> = (0..spec.b as u64)
        .into_par_iter()
        .map(|b| {
            let mut failures = 0;
            for attempt in 0..=spec.max_retries as u64 {
                let mut r = if attempt == 0 {
                    rng::stream(spec.seed, domain::BOOTSTRAP, b)
                } else {
                    rng::stream(spec.seed, domain::BOOTSTRAP_RETRY, (b << 16) | attempt)
                };
                match replicate_once(ctx, &dist, &mut r) {
                    Ok(rep) => return (Some(rep), failures),
                    Err(_) => failures += 1,
                }
            }
            (None, failures)
        })
        .collect();
    let failures = results.iter().map(|r| r.1).sum();
    let reps = results.into_iter().filter_map(|r| r.0).collect();
    Ok((reps, failures))
}

pub fn bootstrap_calibrate(ctx: &LrContext, spec: &CalibrationSpec) -> Result<CalibrationResult> {
    spec.validate()?;
    if spec.method != CalibrationMethod::Bootstrap {
        return Err(Error::Invalid(
            "bootstrap_calibrate called with a non-bootstrap method".into(),
        ));
    }
    let (reps, failures) = bootstrap_replicates(ctx, spec)?;
    if failures as f64 > 0.02 * spec.b as f64 {
        return Err(Error::Calibration(format!(
            "{failures} failed replicates out of B = {}",
            spec.b
        )));
    }
    from_replicates(&reps, spec.alpha, failures, Some(spec.seed))
}

/// Bootstrap thresholds at `alpha` from an existing replicate set.
pub fn from_replicates(
    reps: &[Replicate],
    alpha: f64,
    failures: usize,
    seed: Option<u64>,
) -> Result<CalibrationResult> {
    if reps.is_empty() {
        return Err(Error::Calibration("no usable replicates".into()));
    }
    let lambdas: Vec<f64> = reps.iter().map(|r| r.lambda).collect();
    let zetas: Vec<f64> = reps.iter().map(|r| r.zeta).collect();
    Ok(CalibrationResult {
        lambda_hi: empirical_quantile(&lambdas, 1.0 - alpha)?,
        zeta_lo: empirical_quantile(&zetas, alpha)?,
        zeta_hi: empirical_quantile(&zetas, 1.0 - alpha)?,
        replicates_used: reps.len(),
        replicate_failures: failures,
        method: CalibrationMethod::Bootstrap,
        alpha,
        seed,
    })
}

/// Wilks calibration. The two-sided threshold is the `chi2_dof` quantile;
/// the signed thresholds treat `sign * sqrt(-2 log Λ)` as standard normal.
pub fn chisq_calibrate(dof: u32, alpha: f64) -> Result<CalibrationResult> {
    let spec = CalibrationSpec {
        method: CalibrationMethod::ChiSquare { dof },
        alpha,
        b: 0,
        seed: 0,
        max_retries: 0,
    };
    spec.validate()?;
    let signed_sq = |p: f64| {
        let z = crate::special::norm_quantile(p);
        z.signum() * z * z
    };
    Ok(CalibrationResult {
        lambda_hi: chisq_quantile(dof, 1.0 - alpha),
        zeta_lo: signed_sq(alpha),
        zeta_hi: signed_sq(1.0 - alpha),
        replicates_used: 0,
        replicate_failures: 0,
        method: spec.method,
        alpha,
        seed: None,
    })
}

const LIMIT_CHUNK: usize = 4096;

/// Plug-in calibration from the single-observation limit law: quantiles of
/// `V = 2 [ln sup_{theta_y} f(Y; theta_y, common) - ln f(Y; theta)]` with
/// `Y ~ f(.; theta-hat)`, signed by `Y` against the point where `V = 0`.
pub fn limit_calibrate(
    spec: &FamilySpec,
    fitted: &FittedModel,
    alpha: f64,
    draws: usize,
    seed: u64,
    form: GammaLimitForm,
) -> Result<CalibrationResult> {
    let cal = CalibrationSpec {
        method: CalibrationMethod::LimitPlugin,
        alpha,
        b: draws,
        seed,
        max_retries: 0,
    };
    cal.validate()?;
    let v = fitted.params.values();
    let result = |lambda_hi, zeta_lo, zeta_hi, used| CalibrationResult {
        lambda_hi,
        zeta_lo,
        zeta_hi,
        replicates_used: used,
        replicate_failures: 0,
        method: CalibrationMethod::LimitPlugin,
        alpha,
        seed: Some(seed),
    };
    match spec.family {
        Family::UniformZeroTheta => {
            // V = 2 ln(theta / Y) ~ chi2_2 and Y < theta always.
            return Ok(result(
                chisq_quantile(2, 1.0 - alpha),
                -chisq_quantile(2, 1.0 - alpha),
                -chisq_quantile(2, alpha),
                0,
            ));
        }
        Family::Gamma
        | Family::Exponential
        | Family::Normal
        | Family::TwoParamExponential
        | Family::Weibull => {}
        f => return Err(Error::Unsupported(format!("limit calibration for {f}"))),
    }
    let dist = fitted.dist();
    let center = match spec.family {
        Family::Gamma => v[0] * v[1],
        Family::Weibull => v[1],
        _ => v[0],
    };
    let common = ln_single_obs_sup_common(spec, v);
    let chunks = draws.div_ceil(LIMIT_CHUNK);
    let pairs: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng::stream(seed, domain::LIMIT, c as u64);
            let count = LIMIT_CHUNK.min(draws - c * LIMIT_CHUNK);
            let gamma = if spec.family == Family::Gamma {
                GammaDist::new(v[0], 1.0).ok()
            } else {
                None
            };
            (0..count)
                .map(|_| {
                    if let Some(g) = &gamma {
                        let z: f64 = g.sample(&mut r);
                        let a = v[0];
                        let val = match form {
                            GammaLimitForm::Derived => 2.0 * (z - a) - 2.0 * a * (z / a).ln(),
                            GammaLimitForm::Printed => 2.0 * (z - a) - 2.0 * a * z.ln(),
                        };
                        (val, if z <= a { -val } else { val })
                    } else {
                        let y = dist.sample(&mut r);
                        let val = 2.0
                            * (common + crate::families::sup::ln_sup_y_term(spec.family, y)
                                - dist.ln_pdf(y));
                        (val, if y <= center { -val } else { val })
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let signed: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    Ok(result(
        empirical_quantile(&vals, 1.0 - alpha)?,
        empirical_quantile(&signed, alpha)?,
        empirical_quantile(&signed, 1.0 - alpha)?,
        draws,
    ))
}
