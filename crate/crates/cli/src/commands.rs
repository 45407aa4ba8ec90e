use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use lrpi_core::bounds::{predict, PredictionMethod, PredictionResult, Side};
use lrpi_core::calibrate::{
    bootstrap_calibrate, chisq_calibrate, limit_calibrate, CalibrationResult, CalibrationSpec,
    GammaLimitForm,
};
use lrpi_core::discrete::{
    discrete_neg2_log_lr, discrete_predict, BinomialSetup, DiscreteKind, IntegerPrediction,
    PoissonSetup,
};
use lrpi_core::families::{fit_ml, log_density, Dataset, Family, FamilySpec, FittedModel};
use lrpi_core::io::{
    fmt17, parse_censored_envelope, parse_coverage_config, parse_dataset, parse_fitted_model,
    to_json, FittedModelJson,
};
use lrpi_core::lr::{prepare, LrContext};
use lrpi_core::simstudy::{plug_in_interval, run_coverage};
use lrpi_core::within_sample::{set_from_curve, Variant, WithinSampleContext};
use lrpi_core::Error;

#[derive(Debug, Parser)]
#[command(
    name = "lrpi",
    version,
    about = "Likelihood-ratio prediction intervals and bounds"
)]
pub struct Cli {
    /// Worker threads for calibration and coverage runs.
    #[arg(long, global = true, env = "LRPI_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Maximum-likelihood fit of a continuous family.
    Fit(FitArgs),
    /// Prediction interval or one-sided bound for a future observation.
    Predict(PredictArgs),
    /// Monte Carlo (or exact) coverage study from a JSON config.
    Coverage(CoverageArgs),
    /// Log densities under a fitted model written by `fit`.
    Density(DensityArgs),
}

#[derive(Debug, Args)]
struct FamilyArgs {
    /// Continuous family, or binomial, poisson, within-sample.
    #[arg(long)]
    family: String,
    /// Known sigma for normal_known_sigma.
    #[arg(long)]
    sigma: Option<f64>,
    /// Component allowed to differ for the predictand.
    #[arg(long)]
    varied: Option<String>,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LimitForm {
    Derived,
    Printed,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[command(flatten)]
    family: FamilyArgs,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value = "two-sided")]
    side: Side,
    /// bootstrap, chisq, limit or plugin.
    #[arg(long, default_value = "bootstrap")]
    method: PredictionMethod,
    #[arg(long = "B", default_value_t = 1000)]
    b: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Degrees of freedom for the chisq method.
    #[arg(long, default_value_t = 1)]
    dof: u32,
    /// Monte Carlo draws for the limit method.
    #[arg(long, default_value_t = 100_000)]
    limit_draws: usize,
    #[arg(long, value_enum, default_value = "derived")]
    gamma_limit_form: LimitForm,
    #[arg(long)]
    x: Option<u64>,
    #[arg(long)]
    n: Option<f64>,
    #[arg(long)]
    m: Option<f64>,
    /// Half-count correction at extreme counts.
    #[arg(long)]
    corrected: bool,
    #[arg(long)]
    tc: Option<f64>,
    #[arg(long)]
    tw: Option<f64>,
    #[arg(long, default_value = "survival-adjusted")]
    variant: Variant,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of the statistic along y: `y,neg2_log_lr,signed`.
    #[arg(long)]
    curve_out: Option<PathBuf>,
    #[arg(long, default_value_t = 401)]
    curve_points: usize,
}

#[derive(Debug, Args)]
struct CoverageArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Report JSON; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tidy CSV; defaults to the `--out` path with a `.csv` extension.
    #[arg(long)]
    csv_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DensityArgs {
    /// Model JSON written by `fit`.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, conflicts_with = "y")]
    data: Option<PathBuf>,
    #[arg(long, num_args = 1..)]
    y: Vec<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    /// Exit code and the JSON body for stderr.
    pub fn to_json(&self) -> (u8, String) {
        let (code, kind, message) = match self {
            CliError::Usage(m) => (2, "usage", m.clone()),
            CliError::Io(m) => (2, "io", m.clone()),
            CliError::Core(e) => {
                let kind = match e {
                    Error::ParamDomain(_) => "param_domain",
                    Error::Support { .. } => "support",
                    Error::InsufficientData { .. } => "insufficient_data",
                    Error::DegenerateData(_) => "degenerate_data",
                    Error::FitFailed { .. } => "fit_failed",
                    Error::LrEval { .. } => "lr_eval",
                    Error::NoFailures => "no_failures",
                    Error::Design(_) => "design",
                    Error::Calibration(_) => "calibration",
                    Error::UnboundedSide { .. } => "unbounded_side",
                    Error::Unsupported(_) => "unsupported",
                    Error::Invalid(_) => "invalid",
                    Error::Experiment(_) => "experiment",
                };
                let usage = matches!(
                    e,
                    Error::ParamDomain(_)
                        | Error::Support { .. }
                        | Error::InsufficientData { .. }
                        | Error::Unsupported(_)
                        | Error::Invalid(_)
                );
                (if usage { 2 } else { 1 }, kind, e.to_string())
            }
        };
        let body = json!({ "error": kind, "message": message });
        (code, body.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn run(cli: Cli) -> CliResult<()> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fit(a) => fit(a),
        Command::Predict(a) => predict_cmd(a),
        Command::Coverage(a) => coverage(a),
        Command::Density(a) => density(a),
    }
}

fn read(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn family_spec(a: &FamilyArgs) -> CliResult<FamilySpec> {
    let family: Family = a.family.parse()?;
    let mut fixed = BTreeMap::new();
    match (family, a.sigma) {
        (Family::NormalKnownSigma, Some(s)) => {
            fixed.insert("sigma".to_string(), s);
        }
        (Family::NormalKnownSigma, None) => {
            return Err(usage("normal_known_sigma needs --sigma"));
        }
        (_, Some(_)) => return Err(usage("--sigma only applies to normal_known_sigma")),
        _ => {}
    }
    Ok(FamilySpec::from_parts(family, fixed, a.varied.clone())?)
}

fn load_dataset(spec: &FamilySpec, path: &Path) -> CliResult<Dataset> {
    let values = parse_dataset(&read(path)?)?;
    Ok(Dataset::for_family(spec, values)?)
}

fn fit(a: FitArgs) -> CliResult<()> {
    let spec = family_spec(&a.family)?;
    let data = load_dataset(&spec, &a.data)?;
    let model = fit_ml(&spec, &data)?;
    emit(a.out.as_deref(), &to_json(&FittedModelJson::from(&model))?)
}

fn density(a: DensityArgs) -> CliResult<()> {
    let model: FittedModel = parse_fitted_model(&read(&a.model)?)?;
    let ys = match &a.data {
        Some(p) => parse_dataset(&read(p)?)?,
        None if !a.y.is_empty() => a.y.clone(),
        None => return Err(usage("density needs --data or --y")),
    };
    let rows = ys
        .iter()
        .map(|&y| {
            Ok(json!({ "y": y, "log_density": ext(log_density(&model.spec, &model.params, y)?) }))
        })
        .collect::<CliResult<Vec<Value>>>()?;
    emit(a.out.as_deref(), &to_json(&rows)?)
}

fn ext(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(fmt17(x))
    }
}

#[derive(Serialize)]
struct ContinuousOutput<'a> {
    #[serde(flatten)]
    prediction: &'a PredictionResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    calibration: Option<&'a CalibrationResult>,
}

#[derive(Serialize)]
struct IntegerOutput<'a> {
    kind: &'static str,
    side: Side,
    method: PredictionMethod,
    #[serde(flatten)]
    prediction: &'a IntegerPrediction,
}

fn predict_cmd(a: PredictArgs) -> CliResult<()> {
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(usage(format!(
            "--level must lie in (0, 1), got {}",
            a.level
        )));
    }
    match a.family.family.as_str() {
        "binomial" | "poisson" => predict_discrete(&a),
        "within-sample" | "within_sample" => predict_within(&a),
        _ => predict_continuous(&a),
    }
}

fn predict_continuous(a: &PredictArgs) -> CliResult<()> {
    for (set, name) in [
        (a.x.is_some(), "--x"),
        (a.n.is_some(), "--n"),
        (a.m.is_some(), "--m"),
        (a.tc.is_some(), "--tc"),
        (a.tw.is_some(), "--tw"),
    ] {
        if set {
            return Err(usage(format!(
                "{name} does not apply to continuous families"
            )));
        }
    }
    let spec = family_spec(&a.family)?;
    let path = a
        .data
        .as_deref()
        .ok_or_else(|| usage("predict needs --data"))?;
    let data = load_dataset(&spec, path)?;
    let alpha = 1.0 - a.level;
    let needs_seed = matches!(
        a.method,
        PredictionMethod::LrBootstrap | PredictionMethod::LrLimit
    );
    let seed = match (needs_seed, a.seed) {
        (true, None) => {
            return Err(usage(format!(
                "--seed is required for the {} method",
                a.method.name()
            )))
        }
        (_, s) => s.unwrap_or(0),
    };
    if a.method == PredictionMethod::PlugIn {
        let r = plug_in_interval(&spec, &data, a.level, a.side)?;
        if a.curve_out.is_some() {
            let ctx = prepare(&spec, &data)?;
            write_continuous_curve(a, &ctx, &r)?;
        }
        return emit(
            a.out.as_deref(),
            &to_json(&ContinuousOutput {
                prediction: &r,
                calibration: None,
            })?,
        );
    }
    let ctx = prepare(&spec, &data)?;
    let cal = match a.method {
        PredictionMethod::LrBootstrap => {
            bootstrap_calibrate(&ctx, &CalibrationSpec::bootstrap(alpha, a.b, seed))?
        }
        PredictionMethod::LrChisq => chisq_calibrate(a.dof, alpha)?,
        PredictionMethod::LrLimit => {
            let form = match a.gamma_limit_form {
                LimitForm::Derived => GammaLimitForm::Derived,
                LimitForm::Printed => GammaLimitForm::Printed,
            };
            limit_calibrate(&spec, ctx.data_fit(), alpha, a.limit_draws, seed, form)?
        }
        PredictionMethod::PlugIn => unreachable!("handled above"),
    };
    let r = predict(&ctx, &cal, a.side)?.with_method(a.method);
    if a.curve_out.is_some() {
        write_continuous_curve(a, &ctx, &r)?;
    }
    emit(
        a.out.as_deref(),
        &to_json(&ContinuousOutput {
            prediction: &r,
            calibration: Some(&cal),
        })?,
    )
}

/// Grid covering the interval with half its width on each side, or the
/// data range when an endpoint is unbounded. Log-spaced on positive support.
fn write_continuous_curve(a: &PredictArgs, ctx: &LrContext, r: &PredictionResult) -> CliResult<()> {
    let path = a.curve_out.as_deref().expect("curve path");
    let points = a.curve_points.max(2);
    let data = ctx.data();
    let positive = ctx.spec().family.positive_support();
    let (dlo, dhi) = (data.min(), data.max());
    let lo = if r.lower.is_finite() && (!positive || r.lower > 0.0) {
        r.lower
    } else {
        dlo
    };
    let hi = if r.upper.is_finite() { r.upper } else { dhi };
    let (lo, hi) = (lo.min(dlo), hi.max(dhi));
    let ys: Vec<f64> = if positive {
        let (a0, b0) = (lo.ln(), hi.ln());
        let w = (b0 - a0).max(1e-3);
        let (a0, b0) = (a0 - 0.5 * w, b0 + 0.5 * w);
        (0..points)
            .map(|i| (a0 + (b0 - a0) * i as f64 / (points - 1) as f64).exp())
            .collect()
    } else {
        let w = (hi - lo).max(1e-3);
        let (a0, b0) = (lo - 0.5 * w, hi + 0.5 * w);
        (0..points)
            .map(|i| a0 + (b0 - a0) * i as f64 / (points - 1) as f64)
            .collect()
    };
    let mut csv = String::from("y,neg2_log_lr,signed\n");
    for y in ys {
        // points outside the model support are skipped
        if let Ok(p) = ctx.curve(&[y]) {
            let p = &p[0];
            csv.push_str(&format!(
                "{},{},{}\n",
                fmt17(p.y),
                fmt17(p.neg2_log_lr),
                fmt17(p.signed)
            ));
        }
    }
    fs::write(path, csv).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn integer_method(a: &PredictArgs) -> CliResult<()> {
    if a.method != PredictionMethod::LrChisq && a.method != PredictionMethod::LrBootstrap {
        return Err(usage(
            "count predictions are chi-square calibrated; use --method chisq",
        ));
    }
    Ok(())
}

fn predict_discrete(a: &PredictArgs) -> CliResult<()> {
    integer_method(a)?;
    let x = a.x.ok_or_else(|| usage("--x is required"))?;
    let n = a.n.ok_or_else(|| usage("--n is required"))?;
    let m = a.m.ok_or_else(|| usage("--m is required"))?;
    let kind = if a.family.family == "binomial" {
        let whole = |v: f64, name: &str| {
            if v >= 1.0 && v.fract() == 0.0 && v <= u64::MAX as f64 {
                Ok(v as u64)
            } else {
                Err(usage(format!(
                    "--{name} must be a positive integer for binomial"
                )))
            }
        };
        DiscreteKind::Binomial(BinomialSetup::new(x, whole(n, "n")?, whole(m, "m")?)?)
    } else {
        DiscreteKind::Poisson(PoissonSetup::new(x, n, m)?)
    };
    let r = discrete_predict(&kind, a.level, a.side, a.corrected)?;
    if let Some(path) = &a.curve_out {
        let last = match kind {
            DiscreteKind::Binomial(s) => s.m,
            DiscreteKind::Poisson(_) => r.hi.saturating_mul(2).max(r.hi + 10),
        };
        let vals = (0..=last)
            .map(|y| discrete_neg2_log_lr(&kind, y, a.corrected))
            .collect::<lrpi_core::Result<Vec<f64>>>()?;
        write_integer_curve(path, &vals)?;
    }
    let out = IntegerOutput {
        kind: "integer",
        side: a.side,
        method: PredictionMethod::LrChisq,
        prediction: &r,
    };
    emit(a.out.as_deref(), &to_json(&out)?)
}

fn predict_within(a: &PredictArgs) -> CliResult<()> {
    integer_method(a)?;
    let path = a
        .data
        .as_deref()
        .ok_or_else(|| usage("within-sample prediction needs --data"))?;
    let tw =
        a.tw.ok_or_else(|| usage("within-sample prediction needs --tw"))?;
    let sample = parse_censored_envelope(&read(path)?, a.tc)?;
    let ctx = WithinSampleContext::new(&sample, tw, a.variant)?;
    let vals = ctx.curve()?;
    let r = set_from_curve(&vals, a.level, a.side)?;
    if let Some(path) = &a.curve_out {
        write_integer_curve(path, &vals)?;
    }
    let out = IntegerOutput {
        kind: "integer",
        side: a.side,
        method: PredictionMethod::LrChisq,
        prediction: &r,
    };
    emit(a.out.as_deref(), &to_json(&out)?)
}

/// `signed` is negative left of the minimizer.
fn write_integer_curve(path: &Path, vals: &[f64]) -> CliResult<()> {
    let argmin = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut csv = String::from("y,neg2_log_lr,signed\n");
    for (y, &v) in vals.iter().enumerate() {
        let s = if y < argmin { -v } else { v };
        csv.push_str(&format!("{y},{},{}\n", fmt17(v), fmt17(s)));
    }
    fs::write(path, csv).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn coverage(a: CoverageArgs) -> CliResult<()> {
    let text = read(&a.config)?;
    let mut v: Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("coverage config JSON: {e}")))?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| usage("coverage config must be a JSON object"))?;
    let seed = a
        .seed
        .ok_or_else(|| usage("--seed is required for coverage runs"))?;
    match obj.get("seed").map(|s| s.as_u64()) {
        Some(Some(s)) if s != seed => {
            return Err(usage(format!("config seed {s} differs from --seed {seed}")))
        }
        Some(None) => return Err(usage("config seed must be a nonnegative integer")),
        _ => {}
    }
    obj.insert("seed".into(), json!(seed));
    let config = parse_coverage_config(&v.to_string())?;
    let report = run_coverage(&config)?;
    let csv_path = a
        .csv_out
        .clone()
        .or_else(|| a.out.as_ref().map(|p| p.with_extension("csv")));
    emit(a.out.as_deref(), &to_json(&report)?)?;
    if let Some(p) = csv_path {
        fs::write(&p, report.to_csv())
            .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}
