//! Monte Carlo coverage experiments for the LR procedures and the plug-in
//! baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{predict, PredictionMethod, PredictionResult, Side};
use crate::calibrate::{
    bootstrap_replicates, chisq_calibrate, from_replicates, limit_calibrate, CalibrationSpec,
    GammaLimitForm,
};
use crate::discrete::{binomial_coverage, poisson_coverage};
use crate::error::{Error, Result};
use crate::families::{fit_ml, fit_ml_type1_censored, Dataset, Dist, FamilySpec, ParamVector};
use crate::io::fmt17;
use crate::lr::prepare;
use crate::rng::{self, domain};
use crate::special::{ln_choose, xlogy};
use crate::within_sample::{set_from_curve, CensoredSample, Variant, WithinSampleContext};

/// What is being predicted, with the factor grid that is swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    /// A continuous family at fixed true parameters; sweeps the sample size.
    Continuous {
        family: FamilySpec,
        params: Vec<f64>,
        n: Vec<usize>,
    },
    /// Binomial counts; sweeps `p`. Coverage is exact (enumeration).
    Binomial { n: u64, m: u64, p: Vec<f64> },
    /// Poisson counts; sweeps the rate. Coverage is exact up to `1e-12` mass.
    Poisson { n: f64, m: f64, lambda: Vec<f64> },
    /// Weibull life test censored at `F^{-1}(p_f1)`, predicting failures
    /// up to `F^{-1}(p_f1 + d)`; sweeps the expected failure count.
    WithinSample {
        beta: f64,
        #[serde(default = "one")]
        eta: f64,
        p_f1: f64,
        d: f64,
        expected_failures: Vec<f64>,
        #[serde(default = "default_variants")]
        variants: Vec<Variant>,
    },
}

fn one() -> f64 {
    1.0
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::SurvivalAdjusted]
}

fn default_levels() -> Vec<f64> {
    vec![0.95]
}

fn default_sides() -> Vec<Side> {
    vec![Side::TwoSided]
}

fn default_n_datasets() -> usize {
    1000
}

fn default_b() -> usize {
    1000
}

fn default_limit_draws() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageConfig {
    pub experiment: Experiment,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    pub methods: Vec<PredictionMethod>,
    #[serde(default = "default_sides")]
    pub sides: Vec<Side>,
    /// Monte Carlo datasets per factor point.
    #[serde(default = "default_n_datasets")]
    pub n_datasets: usize,
    /// Bootstrap replicates per dataset.
    #[serde(default = "default_b")]
    pub b: usize,
    pub seed: u64,
    /// Half-count correction for binomial and Poisson statistics.
    #[serde(default)]
    pub corrected: bool,
    #[serde(default = "default_limit_draws")]
    pub limit_draws: usize,
    #[serde(default)]
    pub gamma_limit_form: GammaLimitForm,
}

impl CoverageConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if self.n_datasets < 100 && !self.is_exact() {
            return bad(format!(
                "need at least 100 Monte Carlo datasets, got {}",
                self.n_datasets
            ));
        }
        if self.methods.is_empty() || self.levels.is_empty() || self.sides.is_empty() {
            return bad("methods, levels and sides must be nonempty".into());
        }
        for &l in &self.levels {
            if !(l > 0.0 && l < 1.0) {
                return bad(format!("level {l} outside (0, 1)"));
            }
            if l <= 0.5 && self.sides.iter().any(|s| *s != Side::TwoSided) {
                return bad(format!("one-sided level {l} must exceed 0.5"));
            }
        }
        match &self.experiment {
            Experiment::Continuous { family, params, n } => {
                FamilySpec::from_parts(
                    family.family,
                    family.fixed_hyperparams.clone(),
                    Some(family.varied_param.clone()),
                )?;
                ParamVector::new(family.family, params)?;
                if n.is_empty() {
                    return bad("sample-size grid is empty".into());
                }
                if let Some(&k) = n.iter().find(|&&k| k < family.family.min_obs()) {
                    return bad(format!(
                        "sample size {k} below the minimum for {}",
                        family.family
                    ));
                }
                if self.methods.contains(&PredictionMethod::LrBootstrap) && self.b < 100 {
                    return bad(format!("bootstrap needs B >= 100, got {}", self.b));
                }
            }
            Experiment::Binomial { n, m, p } => {
                if *n == 0 || *m == 0 || p.iter().any(|p| !(0.0..=1.0).contains(p)) {
                    return bad("binomial design needs n, m >= 1 and p in [0, 1]".into());
                }
            }
            Experiment::Poisson { n, m, lambda } => {
                if !(*n > 0.0 && *m > 0.0) || lambda.iter().any(|l| !(*l > 0.0)) {
                    return bad("Poisson design needs positive exposures and rates".into());
                }
            }
            Experiment::WithinSample {
                beta,
                eta,
                p_f1,
                d,
                expected_failures,
                variants,
            } => {
                if !(*beta > 0.0 && *eta > 0.0) {
                    return bad("Weibull parameters must be positive".into());
                }
                if !(*p_f1 > 0.0 && *d > 0.0 && p_f1 + d < 1.0) {
                    return bad("need 0 < p_f1, 0 < d and p_f1 + d < 1".into());
                }
                if expected_failures.iter().any(|e| !(*e > 0.0)) || variants.is_empty() {
                    return bad(
                        "expected failure counts must be positive and variants nonempty".into(),
                    );
                }
            }
        }
        let allowed: &[PredictionMethod] = match self.experiment {
            Experiment::Continuous { .. } => &[
                PredictionMethod::LrBootstrap,
                PredictionMethod::LrChisq,
                PredictionMethod::LrLimit,
                PredictionMethod::PlugIn,
            ],
            Experiment::Binomial { .. } | Experiment::Poisson { .. } => {
                &[PredictionMethod::LrChisq]
            }
            Experiment::WithinSample { .. } => {
                &[PredictionMethod::LrChisq, PredictionMethod::PlugIn]
            }
        };
        if let Some(m) = self.methods.iter().find(|m| !allowed.contains(m)) {
            return bad(format!(
                "method {} is not available for this experiment",
                m.name()
            ));
        }
        Ok(())
    }

    fn is_exact(&self) -> bool {
        matches!(
            self.experiment,
            Experiment::Binomial { .. } | Experiment::Poisson { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub method: PredictionMethod,
    pub side: Side,
    pub level: f64,
    pub factor: String,
    pub factor_value: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub variant: Option<Variant>,
    pub coverage: f64,
    /// `sqrt(c (1 - c) / n_effective)`; zero for exact rows.
    pub se: f64,
    pub n_effective: usize,
    pub discards: usize,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub config: CoverageConfig,
    pub rows: Vec<CoverageRow>,
    /// Within-sample datasets redrawn because no unit failed before `t_c`.
    pub redraws: usize,
}

impl CoverageReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,side,level,factor,factor_value,variant,coverage,se,n_effective,discards,exact\n");
        for r in &self.rows {
            let variant = match r.variant {
                Some(Variant::SurvivalAdjusted) => "survival-adjusted",
                Some(Variant::Literal) => "literal",
                None => "",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                r.method.name(),
                r.side,
                fmt17(r.level),
                r.factor,
                fmt17(r.factor_value),
                variant,
                fmt17(r.coverage),
                fmt17(r.se),
                r.n_effective,
                r.discards,
                r.exact
            ));
        }
        out
    }

    pub fn row(
        &self,
        method: PredictionMethod,
        side: Side,
        factor_value: f64,
    ) -> Option<&CoverageRow> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.side == side && r.factor_value == factor_value)
    }
}

fn se(c: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (c * (1.0 - c) / n as f64).sqrt()
    }
}

/// `[F^{-1}(alpha/2), F^{-1}(1 - alpha/2)]`, or the matching one-sided
/// quantile, at the ML fit.
pub fn plug_in_interval(
    spec: &FamilySpec,
    data: &Dataset,
    level: f64,
    side: Side,
) -> Result<PredictionResult> {
    let fit = fit_ml(spec, data)?;
    Ok(plug_in_from_dist(&fit.dist(), spec, level, side))
}

fn plug_in_from_dist(d: &Dist, spec: &FamilySpec, level: f64, side: Side) -> PredictionResult {
    let alpha = 1.0 - level;
    let (lo_sup, hi_sup) = if spec.family.positive_support() {
        (0.0, f64::INFINITY)
    } else {
        (f64::NEG_INFINITY, f64::INFINITY)
    };
    let (lower, upper) = match side {
        Side::TwoSided => (d.quantile(alpha / 2.0), d.quantile(1.0 - alpha / 2.0)),
        Side::Upper => (lo_sup, d.quantile(level)),
        Side::Lower => (d.quantile(alpha), hi_sup),
    };
    PredictionResult {
        lower,
        upper,
        level,
        side,
        method: Some(PredictionMethod::PlugIn),
        diagnostics: Default::default(),
    }
}

/// Tally for one (method, level, side) cell.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    hits: f64,
    used: usize,
    discards: usize,
}

pub fn run_coverage(config: &CoverageConfig) -> Result<CoverageReport> {
    config.validate()?;
    match &config.experiment {
        Experiment::Continuous { family, params, n } => continuous(config, family, params, n),
        Experiment::Binomial { n, m, p } => {
            let mut rows = Vec::new();
            for &pv in p {
                for &level in &config.levels {
                    for &side in &config.sides {
                        let c = binomial_coverage(*n, *m, pv, level, side, config.corrected)?;
                        rows.push(exact_row(side, level, "p", pv, c));
                    }
                }
            }
            Ok(CoverageReport {
                config: config.clone(),
                rows,
                redraws: 0,
            })
        }
        Experiment::Poisson { n, m, lambda } => {
            let mut rows = Vec::new();
            for &lv in lambda {
                for &level in &config.levels {
                    for &side in &config.sides {
                        let c = poisson_coverage(*n, *m, lv, level, side, config.corrected)?;
                        rows.push(exact_row(side, level, "lambda", lv, c));
                    }
                }
            }
            Ok(CoverageReport {
                config: config.clone(),
                rows,
                redraws: 0,
            })
        }
        Experiment::WithinSample {
            beta,
            eta,
            p_f1,
            d,
            expected_failures,
            variants,
        } => within_sample(config, *beta, *eta, *p_f1, *d, expected_failures, variants),
    }
}

fn exact_row(side: Side, level: f64, factor: &str, value: f64, c: f64) -> CoverageRow {
    CoverageRow {
        method: PredictionMethod::LrChisq,
        side,
        level,
        factor: factor.into(),
        factor_value: value,
        variant: None,
        coverage: c,
        se: 0.0,
        n_effective: 0,
        discards: 0,
        exact: true,
    }
}

fn cells(config: &CoverageConfig) -> Vec<(PredictionMethod, f64, Side)> {
    let mut out = Vec::new();
    for &m in &config.methods {
        for &l in &config.levels {
            for &s in &config.sides {
                out.push((m, l, s));
            }
        }
    }
    out
}

fn finish_rows(
    config: &CoverageConfig,
    cells: &[(PredictionMethod, f64, Side)],
    tallies: &[Tally],
    factor: &str,
    value: f64,
    variant: Option<Variant>,
) -> Result<Vec<CoverageRow>> {
    let cap = 0.02 * config.n_datasets as f64;
    cells
        .iter()
        .zip(tallies)
        .map(|(&(method, level, side), t)| {
            if t.discards as f64 > cap {
                return Err(Error::Experiment(format!(
                    "{} of {} datasets failed for {} ({side}, level {level}) at {factor} = {value}",
                    t.discards,
                    config.n_datasets,
                    method.name()
                )));
            }
            let coverage = if t.used == 0 {
                0.0
            } else {
                t.hits / t.used as f64
            };
            Ok(CoverageRow {
                method,
                side,
                level,
                factor: factor.into(),
                factor_value: value,
                variant,
                coverage,
                se: se(coverage, t.used),
                n_effective: t.used,
                discards: t.discards,
                exact: false,
            })
        })
        .collect()
}

fn merge(mut a: Vec<Tally>, b: Vec<Tally>) -> Vec<Tally> {
    for (x, y) in a.iter_mut().zip(b) {
        x.hits += y.hits;
        x.used += y.used;
        x.discards += y.discards;
    }
    a
}

fn continuous(
    config: &CoverageConfig,
    family: &FamilySpec,
    params: &[f64],
    grid: &[usize],
) -> Result<CoverageReport> {
    let truth = ParamVector::new(family.family, params)?;
    let dist = Dist::from_params(family, &truth);
    let cells = cells(config);
    let mut rows = Vec::new();
    for (gi, &n) in grid.iter().enumerate() {
        let base = rng::derive_seed(config.seed, domain::NESTED, gi as u64);
        let tallies = (0..config.n_datasets as u64)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(base, domain::DATASET, i);
                let xs: Vec<f64> = (0..n).map(|_| dist.sample(&mut r)).collect();
                let y = dist.sample(&mut rng::stream(base, domain::PREDICTAND, i));
                let outcomes = continuous_dataset(
                    config,
                    family,
                    xs,
                    y,
                    rng::derive_seed(base, domain::BOOTSTRAP, i),
                    &cells,
                );
                outcomes
                    .into_iter()
                    .map(|o| match o {
                        Some(hit) => Tally {
                            hits: f64::from(u8::from(hit)),
                            used: 1,
                            discards: 0,
                        },
                        None => Tally {
                            hits: 0.0,
                            used: 0,
                            discards: 1,
                        },
                    })
                    .collect::<Vec<_>>()
            })
            .reduce(|| vec![Tally::default(); cells.len()], merge);
        rows.extend(finish_rows(config, &cells, &tallies, "n", n as f64, None)?);
    }
    Ok(CoverageReport {
        config: config.clone(),
        rows,
        redraws: 0,
    })
}

/// Hit/miss for every cell on one dataset; `None` marks a failed cell.
fn continuous_dataset(
    config: &CoverageConfig,
    family: &FamilySpec,
    xs: Vec<f64>,
    y: f64,
    seed: u64,
    cells: &[(PredictionMethod, f64, Side)],
) -> Vec<Option<bool>> {
    let Ok(data) = Dataset::for_family(family, xs) else {
        return vec![None; cells.len()];
    };
    let needs_lr = cells.iter().any(|c| c.0 != PredictionMethod::PlugIn);
    let ctx = if needs_lr {
        prepare(family, &data).ok()
    } else {
        None
    };
    let fit = fit_ml(family, &data).ok();
    let boot = if cells.iter().any(|c| c.0 == PredictionMethod::LrBootstrap) {
        ctx.as_ref().and_then(|ctx| {
            let spec = CalibrationSpec::bootstrap(0.05, config.b, seed);
            let (reps, failures) = bootstrap_replicates(ctx, &spec).ok()?;
            (failures as f64 <= 0.02 * config.b as f64).then_some((reps, failures))
        })
    } else {
        None
    };
    cells
        .iter()
        .map(|&(method, level, side)| {
            let alpha = 1.0 - level;
            let result = match method {
                PredictionMethod::PlugIn => fit
                    .as_ref()
                    .map(|f| plug_in_from_dist(&f.dist(), family, level, side)),
                PredictionMethod::LrBootstrap => {
                    let (ctx, (reps, failures)) = (ctx.as_ref()?, boot.as_ref()?);
                    let cal = from_replicates(reps, alpha, *failures, Some(seed)).ok()?;
                    predict(ctx, &cal, side).ok()
                }
                PredictionMethod::LrChisq => {
                    let ctx = ctx.as_ref()?;
                    predict(ctx, &chisq_calibrate(1, alpha).ok()?, side).ok()
                }
                PredictionMethod::LrLimit => {
                    let ctx = ctx.as_ref()?;
                    let cal = limit_calibrate(
                        family,
                        ctx.data_fit(),
                        alpha,
                        config.limit_draws,
                        seed,
                        config.gamma_limit_form,
                    )
                    .ok()?;
                    predict(ctx, &cal, side).ok()
                }
            };
            result.map(|r| r.contains(y))
        })
        .collect()
}

fn binom_mass(k: u64, size: u64, p: f64) -> f64 {
    (ln_choose(size, k) + xlogy(k as f64, p) + xlogy((size - k) as f64, 1.0 - p)).exp()
}

fn binom_quantile(size: u64, p: f64, q: f64) -> u64 {
    let mut acc = 0.0;
    for k in 0..=size {
        acc += binom_mass(k, size, p);
        if acc >= q * (1.0 - 1e-12) {
            return k;
        }
    }
    size
}

fn within_sample(
    config: &CoverageConfig,
    beta: f64,
    eta: f64,
    p_f1: f64,
    d: f64,
    expected: &[f64],
    variants: &[Variant],
) -> Result<CoverageReport> {
    let weib = Dist::Weibull { beta, eta };
    let t_c = weib.quantile(p_f1);
    let t_w = weib.quantile(p_f1 + d);
    let p_true = d / (1.0 - p_f1);
    let mut rows = Vec::new();
    let mut redraws = 0;
    for (gi, &er) in expected.iter().enumerate() {
        let n = (er / p_f1).round().max(1.0) as usize;
        let base = rng::derive_seed(config.seed, domain::NESTED, gi as u64);
        // Redraw until at least one failure: the Weibull fit needs one.
        let samples: Vec<(CensoredSample, usize)> = (0..config.n_datasets as u64)
            .into_par_iter()
            .map(|i| {
                let mut tries = 0;
                loop {
                    let mut r = rng::stream(base, domain::DATASET, (i << 20) | tries);
                    let fails: Vec<f64> = (0..n)
                        .map(|_| weib.sample(&mut r))
                        .filter(|&t| t <= t_c)
                        .collect();
                    if !fails.is_empty() {
                        return (
                            CensoredSample::new(fails, n, t_c).expect("valid sample"),
                            tries as usize,
                        );
                    }
                    tries += 1;
                }
            })
            .collect();
        redraws += samples.iter().map(|s| s.1).sum::<usize>();
        let cells = cells(config);
        for &variant in variants {
            let tallies = samples
                .par_iter()
                .map(|(s, _)| within_dataset(s, t_w, p_true, variant, &cells))
                .reduce(|| vec![Tally::default(); cells.len()], merge);
            let has_lr = config.methods.contains(&PredictionMethod::LrChisq);
            let mut part = finish_rows(
                config,
                &cells,
                &tallies,
                "expected_failures",
                er,
                Some(variant),
            )?;
            // Plug-in rows do not depend on the variant; keep them once.
            if variant != variants[0] {
                part.retain(|r| r.method != PredictionMethod::PlugIn);
            }
            for r in &mut part {
                if r.method == PredictionMethod::PlugIn {
                    r.variant = None;
                }
            }
            if has_lr || variant == variants[0] {
                rows.extend(part);
            }
        }
    }
    Ok(CoverageReport {
        config: config.clone(),
        rows,
        redraws,
    })
}

/// Conditional coverage for every cell: the future count given the data is
/// `Bin(n - r, p_true)`.
fn within_dataset(
    s: &CensoredSample,
    t_w: f64,
    p_true: f64,
    variant: Variant,
    cells: &[(PredictionMethod, f64, Side)],
) -> Vec<Tally> {
    let k = s.at_risk() as u64;
    let mass = |lo: u64, hi: u64| -> f64 {
        (lo..=hi.min(k))
            .map(|y| binom_mass(y, k, p_true))
            .sum::<f64>()
            .min(1.0)
    };
    let curve = if cells.iter().any(|c| c.0 == PredictionMethod::LrChisq) {
        WithinSampleContext::new(s, t_w, variant)
            .and_then(|c| c.curve())
            .ok()
    } else {
        None
    };
    let p_hat = fit_ml_type1_censored(&s.failure_times, s.n, s.t_c)
        .ok()
        .map(|f| {
            let d = f.dist();
            let sc = 1.0 - d.cdf(s.t_c);
            if sc > 0.0 {
                ((d.cdf(t_w) - d.cdf(s.t_c)) / sc).clamp(0.0, 1.0)
            } else {
                1.0
            }
        });
    cells
        .iter()
        .map(|&(method, level, side)| {
            let cov = match method {
                PredictionMethod::LrChisq => curve
                    .as_ref()
                    .and_then(|v| set_from_curve(v, level, side).ok())
                    .map(|set| mass(set.lo, set.hi)),
                PredictionMethod::PlugIn => p_hat.map(|p| {
                    let a = 1.0 - level;
                    let (lo, hi) = match side {
                        Side::TwoSided => (
                            binom_quantile(k, p, a / 2.0),
                            binom_quantile(k, p, 1.0 - a / 2.0),
                        ),
                        Side::Upper => (0, binom_quantile(k, p, level)),
                        Side::Lower => (binom_quantile(k, p, a), k),
                    };
                    mass(lo, hi)
                }),
                _ => None,
            };
            match cov {
                Some(c) => Tally {
                    hits: c,
                    used: 1,
                    discards: 0,
                },
                None => Tally {
                    hits: 0.0,
                    used: 0,
                    discards: 1,
                },
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::Family;

    #[test]
    fn plug_in_examples() {
        let n = FamilySpec::new(Family::Normal).unwrap();
        let d = Dist::Normal {
            mu: 0.0,
            sigma: 1.0,
        };
        let r = plug_in_from_dist(&d, &n, 0.95, Side::TwoSided);
        assert!((r.lower + 1.959_964_0).abs() < 1e-7 && (r.upper - 1.959_964_0).abs() < 1e-7);
        let e = FamilySpec::new(Family::Exponential).unwrap();
        let r = plug_in_from_dist(&Dist::Exponential { theta: 2.0 }, &e, 0.90, Side::Upper);
        assert!((r.upper - 4.605_170_2).abs() < 1e-7);
        let u = FamilySpec::new(Family::UniformZeroTheta).unwrap();
        let r = plug_in_interval(
            &u,
            &Dataset::new(vec![0.5, 2.0, 1.0]).unwrap(),
            0.95,
            Side::Upper,
        )
        .unwrap();
        assert!((r.upper - 0.95 * 2.0).abs() < 1e-15);
    }

    fn small_config(methods: Vec<PredictionMethod>) -> CoverageConfig {
        CoverageConfig {
            experiment: Experiment::Continuous {
                family: FamilySpec::new(Family::Exponential).unwrap(),
                params: vec![1.5],
                n: vec![6],
            },
            levels: vec![0.9],
            methods,
            sides: vec![Side::TwoSided, Side::Upper],
            n_datasets: 200,
            b: 100,
            seed: 17,
            corrected: false,
            limit_draws: 2000,
            gamma_limit_form: GammaLimitForm::Derived,
        }
    }

    #[test]
    fn reports_are_reproducible_and_consistent() {
        let cfg = small_config(vec![
            PredictionMethod::LrChisq,
            PredictionMethod::PlugIn,
            PredictionMethod::LrLimit,
        ]);
        let a = run_coverage(&cfg).unwrap();
        let b = run_coverage(&cfg).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        assert_eq!(a.to_csv(), b.to_csv());
        for r in &a.rows {
            assert!((0.0..=1.0).contains(&r.coverage));
            assert!(r.n_effective <= cfg.n_datasets);
            assert_eq!(
                r.se,
                (r.coverage * (1.0 - r.coverage) / r.n_effective as f64).sqrt()
            );
        }
        assert_eq!(a.to_csv().lines().count(), 1 + a.rows.len());
    }

    #[test]
    fn config_validation() {
        let mut cfg = small_config(vec![PredictionMethod::LrBootstrap]);
        cfg.b = 50;
        assert!(cfg.validate().is_err());
        let mut cfg = small_config(vec![PredictionMethod::LrChisq]);
        cfg.n_datasets = 10;
        assert!(cfg.validate().is_err());
        let cfg = CoverageConfig {
            experiment: Experiment::Binomial {
                n: 10,
                m: 10,
                p: vec![0.3],
            },
            methods: vec![PredictionMethod::PlugIn],
            ..small_config(vec![])
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = small_config(vec![
            PredictionMethod::LrBootstrap,
            PredictionMethod::PlugIn,
        ]);
        let s = serde_json::to_string(&cfg).unwrap();
        let back: CoverageConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(cfg, back);
        let minimal: CoverageConfig = serde_json::from_str(
            r#"{"experiment":{"kind":"binomial","n":15,"m":15,"p":[0.05]},"methods":["lr-chisq"],"seed":1}"#,
        )
        .unwrap();
        assert_eq!(minimal.levels, vec![0.95]);
    }

    #[test]
    fn within_sample_small_run() {
        let cfg = CoverageConfig {
            experiment: Experiment::WithinSample {
                beta: 2.0,
                eta: 1.0,
                p_f1: 0.1,
                d: 0.1,
                expected_failures: vec![10.0],
                variants: vec![Variant::SurvivalAdjusted, Variant::Literal],
            },
            levels: vec![0.9],
            methods: vec![PredictionMethod::LrChisq, PredictionMethod::PlugIn],
            sides: vec![Side::TwoSided],
            n_datasets: 100,
            b: 100,
            seed: 3,
            corrected: false,
            limit_draws: 0,
            gamma_limit_form: GammaLimitForm::Derived,
        };
        let r = run_coverage(&cfg).unwrap();
        assert_eq!(r.rows.len(), 3);
        for row in &r.rows {
            assert!((0.0..=1.0).contains(&row.coverage), "{row:?}");
        }
    }
}
