//! Maximum-likelihood fitting for complete samples, the pooled (reduced)
//! model and the y-independent part of the full model.

use super::sup::ln_single_obs_sup_common;
use super::{gengamma, log_likelihood, Dataset, Family, FamilySpec, FittedModel, ParamVector};
use crate::error::{Error, Result};
use crate::optim::{bfgs, numeric_gradient, Minimum, Tolerance};
use crate::special::{digamma, ln_gamma, stirling_correction_deriv, trigamma, LN_SQRT_2PI};

/// Options for [`fit_ml_from`].
#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Start for the iterative fitters (generalized gamma only uses it to
    /// skip the multi-start sweep when the warm run converges).
    pub warm_start: Option<Vec<f64>>,
    pub tolerance: Option<Tolerance>,
}

/// Sufficient statistics shared by the closed-form and pooled fits.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SuffStats {
    pub n: f64,
    pub sum: f64,
    pub sum_log: f64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub ss: f64,
}

impl SuffStats {
    pub fn new(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let sum: f64 = xs.iter().sum();
        let mean = sum / n;
        let sum_log = if xs.iter().all(|&x| x > 0.0) {
            xs.iter().map(|x| x.ln()).sum()
        } else {
            f64::NAN
        };
        Self {
            n,
            sum,
            sum_log,
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            ss: xs.iter().map(|x| (x - mean).powi(2)).sum(),
        }
    }

    /// Statistics of the sample with `y` appended.
    pub fn with(&self, y: f64) -> Self {
        let n = self.n + 1.0;
        let d = y - self.mean;
        Self {
            n,
            sum: self.sum + y,
            sum_log: self.sum_log + if y > 0.0 { y.ln() } else { f64::NAN },
            min: self.min.min(y),
            max: self.max.max(y),
            mean: self.mean + d / n,
            ss: self.ss + d * d * self.n / n,
        }
    }
}

pub fn fit_ml(spec: &FamilySpec, data: &Dataset) -> Result<FittedModel> {
    fit_ml_from(spec, data, &FitOptions::default())
}

pub fn fit_ml_from(spec: &FamilySpec, data: &Dataset, opts: &FitOptions) -> Result<FittedModel> {
    let xs = data.values();
    for &x in xs {
        spec.check_support(x)?;
    }
    let min = spec.family.min_obs();
    if xs.len() < min {
        return Err(Error::InsufficientData { min, got: xs.len() });
    }
    let tol = opts.tolerance.unwrap_or_default();
    let stats = SuffStats::new(xs);
    let (values, converged, iterations) = match spec.family {
        Family::Weibull => {
            let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
            let w = weibull_profile_shape(&logs, None, xs.len() as f64)?;
            (vec![w.beta, w.ln_eta.exp()], true, w.iterations)
        }
        Family::GeneralizedGamma => {
            let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
            let m = gg_fit(&logs, stats.sum_log, false, opts.warm_start.as_deref(), tol)?;
            (
                vec![m.x[0], m.x[1].exp(), m.x[2]],
                m.converged,
                m.iterations,
            )
        }
        _ => {
            let (v, it) = closed_or_gamma(spec, &stats)?;
            (v, true, it)
        }
    };
    let params = ParamVector::new(spec.family, &values).map_err(|e| Error::FitFailed {
        iterations,
        detail: e.to_string(),
    })?;
    let log_likelihood = log_likelihood(spec, &params, xs);
    if !log_likelihood.is_finite() {
        return Err(Error::FitFailed {
            iterations,
            detail: "non-finite log-likelihood at the fit".into(),
        });
    }
    Ok(FittedModel {
        spec: spec.clone(),
        params,
        log_likelihood,
        converged,
        iterations,
    })
}

/// Fits for the families with sufficient statistics (everything except
/// Weibull and the generalized gamma).
fn closed_or_gamma(spec: &FamilySpec, s: &SuffStats) -> Result<(Vec<f64>, usize)> {
    Ok(match spec.family {
        Family::Normal => {
            if !(s.ss > 0.0) {
                return Err(Error::DegenerateData("all observations equal".into()));
            }
            (vec![s.mean, (s.ss / s.n).sqrt()], 0)
        }
        Family::NormalKnownSigma => (vec![s.mean], 0),
        Family::Exponential => (vec![s.mean], 0),
        Family::TwoParamExponential => {
            let beta = s.mean - s.min;
            if !(beta > 0.0) {
                return Err(Error::DegenerateData("all observations equal".into()));
            }
            (vec![s.min, beta], 0)
        }
        Family::UniformZeroTheta => (vec![s.max], 0),
        Family::Gamma => {
            let target = s.mean.ln() - s.sum_log / s.n;
            let (alpha, it) = gamma_shape(target)?;
            (vec![alpha, s.mean / alpha], it)
        }
        _ => unreachable!("iterative families handled by the caller"),
    })
}

/// Solve `ln a - digamma(a) = target` by safeguarded Newton.
pub(crate) fn gamma_shape(target: f64) -> Result<(f64, usize)> {
    if !(target > 1e-14) || !target.is_finite() {
        return Err(Error::DegenerateData("all observations equal".into()));
    }
    let s = target;
    let mut a = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    for it in 1..=200 {
        // ln a - digamma(a) without the cancellation at large a.
        let phi = 0.5 / a - stirling_correction_deriv(a) - s;
        let dphi = 1.0 / a - trigamma(a);
        let mut next = a - phi / dphi;
        if !(next > 0.0) || !next.is_finite() {
            next = 0.5 * a;
        }
        // Steps settle into a rounding cycle near 1e-14 relative.
        let done = (next - a).abs() <= 1e-13 * a;
        a = next;
        if done {
            return Ok((a, it));
        }
    }
    Err(Error::FitFailed {
        iterations: 200,
        detail: format!("gamma shape equation, target {target}"),
    })
}

/// Profiled Weibull shape.
pub(crate) struct WeibullShape {
    pub beta: f64,
    pub ln_eta: f64,
    pub iterations: usize,
}

/// Weibull profile likelihood in the shape.
///
/// `log_fail` holds log failure times; `censored` optionally carries
/// `(ln t_c, count)` for units surviving past `t_c`. Solves
/// `a / beta + sum ln t - r * E_w[ln t] = 0`, where `r` is the failure
/// count and the weights are `t^beta`. `a = r` is the plain ML equation;
/// the full model adds one to it.
pub(crate) fn weibull_profile_shape(
    log_fail: &[f64],
    censored: Option<(f64, f64)>,
    a: f64,
) -> Result<WeibullShape> {
    let r = log_fail.len() as f64;
    if log_fail.is_empty() {
        return Err(Error::NoFailures);
    }
    let cens = censored.filter(|c| c.1 > 0.0);
    let mut top = log_fail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if let Some((lc, _)) = cens {
        top = top.max(lc);
    }
    let sum_fail: f64 = log_fail.iter().sum();
    let u: Vec<f64> = log_fail.iter().map(|l| l - top).collect();
    let uc = cens.map(|(lc, m)| (lc - top, m));

    // Weighted moments of u under weights e^{beta u}.
    let moments = |beta: f64| {
        let (mut w0, mut w1, mut w2) = (0.0, 0.0, 0.0);
        for &ui in &u {
            let e = (beta * ui).exp();
            w0 += e;
            w1 += e * ui;
            w2 += e * ui * ui;
        }
        if let Some((ui, m)) = uc {
            let e = m * (beta * ui).exp();
            w0 += e;
            w1 += e * ui;
            w2 += e * ui * ui;
        }
        (w0, w1 / w0, w2 / w0)
    };
    let g = |beta: f64| {
        let (_, m1, _) = moments(beta);
        a / beta + sum_fail - r * (top + m1)
    };
    if sum_fail - r * top >= -1e-12 * r.max(1.0) * top.abs().max(1.0) {
        return Err(Error::DegenerateData(
            "all failures at the largest time".into(),
        ));
    }
    let (mut lo, mut hi) = (1.0, 1.0);
    while g(lo) <= 0.0 {
        lo *= 0.5;
        if lo < 1e-300 {
            return Err(Error::FitFailed {
                iterations: 0,
                detail: "weibull shape bracket".into(),
            });
        }
    }
    while g(hi) >= 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::DegenerateData("weibull shape diverges".into()));
        }
    }
    let mut beta = if g(1.0) > 0.0 {
        0.5 * (1.0 + hi)
    } else {
        0.5 * (lo + 1.0)
    };
    let mut iterations = 0;
    for it in 1..=200 {
        iterations = it;
        let (_, m1, m2) = moments(beta);
        let gv = a / beta + sum_fail - r * (top + m1);
        if gv > 0.0 {
            lo = beta;
        } else {
            hi = beta;
        }
        let dg = -a / (beta * beta) - r * (m2 - m1 * m1);
        let mut next = beta - gv / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let done = (next - beta).abs() <= 1e-14 * beta || gv == 0.0;
        beta = next;
        if done || (hi - lo) <= 1e-15 * beta {
            break;
        }
    }
    let (w0, _, _) = moments(beta);
    let ln_eta = top + (w0 / r).ln() / beta;
    Ok(WeibullShape {
        beta,
        ln_eta,
        iterations,
    })
}

fn gg_objective(logs: &[f64], sum_log: f64, full: bool, th: &[f64], gr: &mut [f64]) -> f64 {
    let mut v = gengamma::loglik_grad(logs, sum_log, th, gr);
    if full {
        let (c, d) = gengamma::shape_terms(th[2]);
        v += -th[1] - LN_SQRT_2PI - c;
        gr[1] -= 1.0;
        gr[2] += d;
    }
    for g in gr.iter_mut() {
        *g = -*g;
    }
    if v.is_finite() {
        -v
    } else {
        f64::INFINITY
    }
}

/// Moment-matched starts for `(mu, ln sigma, lambda)`.
fn gg_starts(logs: &[f64]) -> Vec<[f64; 3]> {
    let n = logs.len() as f64;
    let m = logs.iter().sum::<f64>() / n;
    let var = logs.iter().map(|l| (l - m).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-12);
    let skew = logs.iter().map(|l| ((l - m) / sd).powi(3)).sum::<f64>() / n;
    let lam_mm = (-skew).clamp(-3.0, 3.0);
    [lam_mm, -1.0, 0.0, 1.0]
        .iter()
        .map(|&lam| {
            let (ew, vw) = if lam.abs() < 1e-3 {
                (-lam / 2.0, 1.0)
            } else {
                let kappa = 1.0 / (lam * lam);
                (
                    (digamma(kappa) - kappa.ln()) / lam,
                    trigamma(kappa) / (lam * lam),
                )
            };
            let sigma = sd / vw.sqrt();
            [m - sigma * ew, sigma.ln(), lam]
        })
        .collect()
}

/// Best objective over the `lambda -> +-inf` boundary of the generalized
/// gamma. There the law of `ln Y` tends to an exponential with an endpoint at
/// `mu` and scale `c = sigma |lambda|`, whose likelihood maximizes in closed
/// form. `extra` counts the full-model supremum term (`-ln c` in the limit).
pub(crate) fn gg_boundary_objective(logs: &[f64], sum_log: f64, extra: f64) -> f64 {
    let n = logs.len() as f64;
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let m = n + extra;
    [n * hi - sum_log, sum_log - n * lo]
        .iter()
        .filter(|&&d| d > 0.0)
        .map(|&d| -m * (d / m).ln() - m - sum_log)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Generalized gamma fit in `(mu, ln sigma, lambda)`. With `full`, the
/// full-model supremum term is included.
fn gg_fit(
    logs: &[f64],
    sum_log: f64,
    full: bool,
    warm: Option<&[f64]>,
    tol: Tolerance,
) -> Result<Minimum> {
    let n = logs.len();
    let spread = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - logs.iter().copied().fold(f64::INFINITY, f64::min);
    if !(spread > 0.0) {
        return Err(Error::DegenerateData("all observations equal".into()));
    }
    let run = |x0: &[f64]| bfgs(|th, gr| gg_objective(logs, sum_log, full, th, gr), x0, tol);
    let better = |a: &Minimum, b: &Option<Minimum>| b.as_ref().is_none_or(|b| a.f < b.f);
    if let Some(w) = warm {
        let x0 = [w[0], w[1].ln(), w[2]];
        let m = run(&x0);
        if m.converged && m.f.is_finite() {
            return Ok(m);
        }
    }
    let mut best: Option<Minimum> = None;
    let mut starts = gg_starts(logs);
    if let Some(w) = warm {
        starts.push([w[0], w[1].ln(), w[2]]);
    }
    let mut total_iter = 0;
    for s in &starts {
        let m = run(s);
        total_iter += m.iterations;
        if m.f.is_finite() && better(&m, &best) {
            best = Some(m);
        }
    }
    let best = best.ok_or(Error::FitFailed {
        iterations: total_iter,
        detail: format!("generalized gamma, n = {n}"),
    })?;
    // Final restart with a fresh Hessian from the best point.
    let last = run(&best.x);
    total_iter += last.iterations;
    let mut out = if last.f <= best.f { last } else { best };
    out.iterations = total_iter;
    Ok(out)
}

/// The y-independent part of the full-model fit: parameters maximizing
/// `sum ln f(x_i; theta) + c(common(theta))`.
#[derive(Debug, Clone)]
pub(crate) struct FullFit {
    pub params: Vec<f64>,
    /// Maximized objective without the `k(y)` term.
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The objective is the generalized gamma `lambda -> inf` limit. The
    /// reduced supremum can then switch onto that boundary as `y` moves,
    /// which bends the curve back down.
    pub on_boundary: bool,
}

/// Structured full-model fit: closed forms, the gamma shape equation, the
/// Weibull shape equation with one extra `1/beta`, or BFGS for the
/// generalized gamma.
pub(crate) fn full_fit_structured(
    spec: &FamilySpec,
    data: &Dataset,
    data_fit: &FittedModel,
) -> Result<FullFit> {
    let xs = data.values();
    let s = SuffStats::new(xs);
    let n = s.n;
    let (params, iterations, converged) = match spec.family {
        Family::Normal => (vec![s.mean, (s.ss / (n + 1.0)).sqrt()], 0, true),
        Family::NormalKnownSigma | Family::Exponential | Family::UniformZeroTheta => {
            (data_fit.params.values().to_vec(), 0, true)
        }
        Family::TwoParamExponential => (vec![s.min, (s.sum - n * s.min) / (n + 1.0)], 0, true),
        Family::Gamma => {
            let target = (s.mean.ln() - s.sum_log / n) * n / (n + 1.0);
            let (alpha, it) = gamma_shape(target)?;
            (vec![alpha, s.mean / alpha], it, true)
        }
        Family::Weibull => {
            let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
            let w = weibull_profile_shape(&logs, None, n + 1.0)?;
            (vec![w.beta, w.ln_eta.exp()], w.iterations, true)
        }
        Family::GeneralizedGamma => {
            let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
            let m = gg_fit(
                &logs,
                s.sum_log,
                true,
                Some(data_fit.params.values()),
                Tolerance::default(),
            )?;
            (
                vec![m.x[0], m.x[1].exp(), m.x[2]],
                m.iterations,
                m.converged,
            )
        }
    };
    let p = ParamVector::new(spec.family, &params).map_err(|e| Error::FitFailed {
        iterations,
        detail: format!("full model: {e}"),
    })?;
    let mut objective = log_likelihood(spec, &p, xs) + ln_single_obs_sup_common(spec, &params);
    let mut on_boundary = false;
    if spec.family == Family::GeneralizedGamma {
        let logs: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
        let edge = gg_boundary_objective(&logs, s.sum_log, 1.0);
        if edge > objective {
            objective = edge;
            on_boundary = true;
        }
    }
    if !objective.is_finite() {
        return Err(Error::FitFailed {
            iterations,
            detail: "full model objective not finite".into(),
        });
    }
    Ok(FullFit {
        params,
        objective,
        iterations,
        converged,
        on_boundary,
    })
}

/// Generic full-model fit: BFGS with a numeric gradient over every free
/// parameter (positive ones on the log scale). Boundary parameters that the
/// likelihood pushes onto an order statistic (uniform `theta`,
/// two-parameter exponential `mu`) are pinned there.
pub(crate) fn full_fit_numeric(
    spec: &FamilySpec,
    data: &Dataset,
    start: &[f64],
) -> Result<FullFit> {
    let xs = data.values();
    let fam = spec.family;
    let names = fam.param_names();
    let pinned: Vec<Option<f64>> = names
        .iter()
        .map(|n| match (fam, *n) {
            (Family::UniformZeroTheta, "theta") => Some(data.max()),
            (Family::TwoParamExponential, "mu") => Some(data.min()),
            _ => None,
        })
        .collect();
    let positive: Vec<bool> = names
        .iter()
        .map(|n| !matches!((fam, *n), (_, "mu") | (Family::GeneralizedGamma, "lambda")))
        .collect();
    let free: Vec<usize> = (0..names.len()).filter(|&i| pinned[i].is_none()).collect();
    let assemble = |z: &[f64]| {
        let mut v: Vec<f64> = pinned.iter().map(|p| p.unwrap_or(0.0)).collect();
        for (k, &i) in free.iter().enumerate() {
            v[i] = if positive[i] { z[k].exp() } else { z[k] };
        }
        v
    };
    let mut obj = |z: &[f64]| {
        let v = assemble(z);
        match ParamVector::new(fam, &v) {
            Ok(p) => {
                let val = log_likelihood(spec, &p, xs) + ln_single_obs_sup_common(spec, &v);
                if val.is_finite() {
                    -val
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    };
    let z0: Vec<f64> = free
        .iter()
        .map(|&i| if positive[i] { start[i].ln() } else { start[i] })
        .collect();
    let (z, converged, iterations) = if z0.is_empty() {
        (z0, true, 0)
    } else {
        let tol = Tolerance {
            rel_f: 1e-14,
            grad: 1e-7,
            max_iter: 500,
        };
        let mut fg = |z: &[f64], g: &mut [f64]| {
            let f = obj(z);
            numeric_gradient(&mut obj, z, g);
            f
        };
        let mut m = bfgs(&mut fg, &z0, tol);
        let mut iterations = m.iterations;
        // Restart with a fresh Hessian until the objective stops moving.
        for _ in 0..5 {
            let again = bfgs(&mut fg, &m.x, tol);
            iterations += again.iterations;
            let gain = m.f - again.f;
            if again.f < m.f {
                m = again;
            }
            if !(gain > 1e-12) {
                break;
            }
        }
        (m.x, m.converged, iterations)
    };
    let params = assemble(&z);
    let objective = -obj(&z);
    if !objective.is_finite() {
        return Err(Error::FitFailed {
            iterations,
            detail: "generic full model".into(),
        });
    }
    Ok(FullFit {
        params,
        objective,
        iterations,
        converged,
        on_boundary: false,
    })
}

/// Reduced-model fit on the pooled sample `x ∪ {y}`: parameters and the
/// maximized log-likelihood. `warm` seeds the generalized gamma optimizer.
pub(crate) fn pooled_fit(
    spec: &FamilySpec,
    stats: &PooledInput,
    y: f64,
    warm: &[f64],
) -> Result<(Vec<f64>, f64)> {
    let s = stats.stats.with(y);
    let n = s.n;
    let closed_ll = |v: &[f64]| -> f64 {
        match spec.family {
            Family::Normal => -0.5 * n * ((2.0 * std::f64::consts::PI * v[1] * v[1]).ln() + 1.0),
            Family::NormalKnownSigma => {
                let sigma = spec.known_sigma().unwrap_or(1.0);
                -n * (sigma.ln() + LN_SQRT_2PI) - s.ss / (2.0 * sigma * sigma)
            }
            Family::Exponential => -n * v[0].ln() - n,
            Family::TwoParamExponential => -n * v[1].ln() - n,
            Family::UniformZeroTheta => -n * v[0].ln(),
            Family::Gamma => {
                (v[0] - 1.0) * s.sum_log - s.sum / v[1] - n * v[0] * v[1].ln() - n * ln_gamma(v[0])
            }
            _ => f64::NAN,
        }
    };
    match spec.family {
        Family::Weibull => {
            let mut logs = stats.logs.clone();
            logs.push(y.ln());
            let w = weibull_profile_shape(&logs, None, n)?;
            let ll = n * w.beta.ln() - n * w.beta * w.ln_eta + (w.beta - 1.0) * s.sum_log - n;
            Ok((vec![w.beta, w.ln_eta.exp()], ll))
        }
        Family::GeneralizedGamma => {
            let mut logs = stats.logs.clone();
            logs.push(y.ln());
            let m = gg_fit(&logs, s.sum_log, false, Some(warm), Tolerance::default())?;
            let ll = (-m.f).max(gg_boundary_objective(&logs, s.sum_log, 0.0));
            Ok((vec![m.x[0], m.x[1].exp(), m.x[2]], ll))
        }
        _ => {
            let (v, _) = closed_or_gamma(spec, &s)?;
            let ll = closed_ll(&v);
            if !ll.is_finite() {
                return Err(Error::FitFailed {
                    iterations: 0,
                    detail: "pooled log-likelihood not finite".into(),
                });
            }
            Ok((v, ll))
        }
    }
}

/// Precomputed pieces of the data sample reused by every pooled fit.
#[derive(Debug, Clone)]
pub(crate) struct PooledInput {
    pub(crate) stats: SuffStats,
    pub(crate) logs: Vec<f64>,
}

impl PooledInput {
    pub fn new(spec: &FamilySpec, data: &Dataset) -> Self {
        let logs = if matches!(spec.family, Family::Weibull | Family::GeneralizedGamma) {
            data.values().iter().map(|x| x.ln()).collect()
        } else {
            Vec::new()
        };
        Self {
            stats: SuffStats::new(data.values()),
            logs,
        }
    }
}
