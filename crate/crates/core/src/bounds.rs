//! Inverting a calibrated threshold into an interval or a one-sided bound.

use serde::{Deserialize, Serialize};

use crate::calibrate::CalibrationResult;
use crate::error::{Error, Result};
use crate::lr::LrContext;
use crate::optim::bisect_level;

const MAX_EXPANSIONS: usize = 60;
const SCAN_POINTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Lower,
    Upper,
    TwoSided,
}

impl std::str::FromStr for Side {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "lower" => Ok(Side::Lower),
            "upper" => Ok(Side::Upper),
            "two_sided" | "two" | "both" => Ok(Side::TwoSided),
            other => Err(Error::Invalid(format!("unknown side '{other}'"))),
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Lower => "lower",
            Side::Upper => "upper",
            Side::TwoSided => "two-sided",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictionMethod {
    #[serde(rename = "lr-bootstrap")]
    LrBootstrap,
    #[serde(rename = "lr-chisq")]
    LrChisq,
    #[serde(rename = "lr-limit")]
    LrLimit,
    #[serde(rename = "plug-in")]
    PlugIn,
}

impl PredictionMethod {
    pub fn name(self) -> &'static str {
        match self {
            PredictionMethod::LrBootstrap => "lr-bootstrap",
            PredictionMethod::LrChisq => "lr-chisq",
            PredictionMethod::LrLimit => "lr-limit",
            PredictionMethod::PlugIn => "plug-in",
        }
    }
}

impl std::str::FromStr for PredictionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr-bootstrap" | "bootstrap" => Ok(PredictionMethod::LrBootstrap),
            "lr-chisq" | "chisq" => Ok(PredictionMethod::LrChisq),
            "lr-limit" | "limit" => Ok(PredictionMethod::LrLimit),
            "plug-in" | "plugin" => Ok(PredictionMethod::PlugIn),
            other => Err(Error::Invalid(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(with = "crate::ext_real::option", default)]
    pub y0: Option<f64>,
    #[serde(with = "crate::ext_real::option", default)]
    pub lambda: Option<f64>,
    #[serde(with = "crate::ext_real::option", default)]
    pub zeta_lo: Option<f64>,
    #[serde(with = "crate::ext_real::option", default)]
    pub zeta_hi: Option<f64>,
    pub iterations: usize,
    pub expansions: usize,
    pub multimodal: bool,
    pub lower_at_support: bool,
    pub upper_at_support: bool,
    /// Passing components found by the dense scan (multimodal curves only).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    #[serde(with = "crate::ext_real")]
    pub lower: f64,
    #[serde(with = "crate::ext_real")]
    pub upper: f64,
    pub level: f64,
    pub side: Side,
    pub method: Option<PredictionMethod>,
    pub diagnostics: Diagnostics,
}

impl PredictionResult {
    pub fn with_method(mut self, m: PredictionMethod) -> Self {
        self.method = Some(m);
        self
    }

    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    /// The finite endpoint of a one-sided result, or the pair for two-sided.
    pub fn bound(&self) -> f64 {
        match self.side {
            Side::Lower => self.lower,
            _ => self.upper,
        }
    }
}

struct Crossing {
    y: f64,
    iterations: usize,
    expansions: usize,
    at_support: bool,
}

/// Coordinates used for expansion and bisection: `ln y` on positive
/// supports, `y` otherwise.
struct Coords<'a> {
    ctx: &'a LrContext,
    positive: bool,
}

impl Coords<'_> {
    fn to_y(&self, t: f64) -> f64 {
        if self.positive {
            t.exp()
        } else {
            t
        }
    }

    fn to_t(&self, y: f64) -> f64 {
        if self.positive {
            y.ln()
        } else {
            y
        }
    }

    fn step(&self) -> f64 {
        if self.positive {
            0.05
        } else {
            let s = &self.ctx.core.pooled.stats;
            let sd = (s.ss / s.n).sqrt();
            let floor = 1e-8 * self.ctx.y0.abs().max(1.0);
            if sd.is_finite() && sd > floor {
                0.5 * sd
            } else {
                self.ctx.core.spec.known_sigma().map_or(floor, |k| 0.5 * k)
            }
        }
    }

    fn curve(&self, y: f64) -> Result<f64> {
        self.ctx.core.neg2_log_lr(y)
    }
}

/// Walk away from the mode in direction `dir` until the curve exceeds
/// `target`, then bisect.
fn find_crossing(ctx: &LrContext, target: f64, dir: f64) -> Result<Crossing> {
    let c = Coords {
        ctx,
        positive: ctx.core.spec.family.positive_support(),
    };
    let y0 = ctx.y0;
    let v0 = c.curve(y0)?;
    if v0 >= target {
        return Ok(Crossing {
            y: y0,
            iterations: 0,
            expansions: 0,
            at_support: false,
        });
    }
    let t0 = c.to_t(y0);
    let step = c.step();
    let mut inside = t0;
    let mut outside = None;
    let mut expansions = 0;
    for k in 0..MAX_EXPANSIONS {
        expansions = k + 1;
        let t = t0 + dir * step * 2f64.powi(k as i32);
        let y = c.to_y(t);
        if c.positive && dir < 0.0 && y < 1e-300 {
            return Ok(Crossing {
                y: ctx.support_lo,
                iterations: 0,
                expansions,
                at_support: true,
            });
        }
        if !y.is_finite() {
            // The curve stays below the target over the whole float range.
            return Ok(Crossing {
                y: ctx.support_hi.copysign(dir),
                iterations: 0,
                expansions,
                at_support: true,
            });
        }
        let v = c.curve(y)?;
        if v > target {
            outside = Some(t);
            break;
        }
        inside = t;
    }
    let Some(outside) = outside else {
        return Err(Error::UnboundedSide {
            side: if dir < 0.0 { "lower" } else { "upper" },
            expansions,
        });
    };
    let mut g = |t: f64| c.curve(c.to_y(t)).ok();
    let root = bisect_level(
        &mut g,
        inside,
        outside,
        target,
        1e-10 * target.max(1.0),
        0.0,
        200,
    );
    Ok(Crossing {
        y: c.to_y(root.x),
        iterations: root.iterations,
        expansions,
        at_support: false,
    })
}

fn base_result(ctx: &LrContext, level: f64, side: Side) -> PredictionResult {
    PredictionResult {
        lower: ctx.support_lo,
        upper: ctx.support_hi,
        level,
        side,
        method: None,
        diagnostics: Diagnostics {
            y0: Some(ctx.y0),
            multimodal: ctx.multimodal,
            ..Diagnostics::default()
        },
    }
}

fn check_threshold(x: f64, name: &str) -> Result<()> {
    if x.is_nan() {
        return Err(Error::Invalid(format!("{name} threshold is NaN")));
    }
    Ok(())
}

/// `{y : -2 log Λ(x, y) <= threshold}`.
pub fn two_sided_interval(ctx: &LrContext, threshold: f64, level: f64) -> Result<PredictionResult> {
    check_threshold(threshold, "two-sided")?;
    if threshold < 0.0 {
        return Err(Error::Invalid(format!(
            "two-sided threshold must be >= 0, got {threshold}"
        )));
    }
    let mut r = base_result(ctx, level, Side::TwoSided);
    r.diagnostics.lambda = Some(threshold);
    let lo = find_crossing(ctx, threshold, -1.0)?;
    let hi = find_crossing(ctx, threshold, 1.0)?;
    r.lower = lo.y;
    r.upper = hi.y;
    r.diagnostics.iterations = lo.iterations + hi.iterations;
    r.diagnostics.expansions = lo.expansions + hi.expansions;
    r.diagnostics.lower_at_support = lo.at_support;
    r.diagnostics.upper_at_support = hi.at_support;
    if ctx.multimodal {
        scan_region(ctx, threshold, &mut r)?;
    }
    Ok(r)
}

/// Upper: `sup{y : zeta(y) <= threshold}`. Lower: `inf{y : zeta(y) >= threshold}`.
/// The other endpoint is the support boundary.
pub fn one_sided_bound(
    ctx: &LrContext,
    zeta_threshold: f64,
    side: Side,
    level: f64,
) -> Result<PredictionResult> {
    check_threshold(zeta_threshold, "signed")?;
    let mut r = base_result(ctx, level, side);
    let dir = if zeta_threshold < 0.0 { -1.0 } else { 1.0 };
    let target = zeta_threshold.abs();
    let cross = match side {
        Side::Upper => {
            r.diagnostics.zeta_hi = Some(zeta_threshold);
            find_crossing(ctx, target, dir)?
        }
        Side::Lower => {
            r.diagnostics.zeta_lo = Some(zeta_threshold);
            find_crossing(ctx, target, dir)?
        }
        Side::TwoSided => {
            return Err(Error::Invalid(
                "one_sided_bound needs side lower or upper".into(),
            ))
        }
    };
    r.diagnostics.iterations = cross.iterations;
    r.diagnostics.expansions = cross.expansions;
    if side == Side::Upper {
        r.upper = cross.y;
        r.diagnostics.upper_at_support = cross.at_support;
        r.diagnostics.lower_at_support = true;
    } else {
        r.lower = cross.y;
        r.diagnostics.lower_at_support = cross.at_support;
        r.diagnostics.upper_at_support = true;
    }
    Ok(r)
}

/// Lower bound at `zeta_lo` and upper bound at `zeta_hi` combined into one
/// interval (each calibrated at `1 - alpha/2` for an equal-tailed result).
pub fn equal_tail_interval(
    ctx: &LrContext,
    zeta_lo: f64,
    zeta_hi: f64,
    level: f64,
) -> Result<PredictionResult> {
    let lo = one_sided_bound(ctx, zeta_lo, Side::Lower, level)?;
    let hi = one_sided_bound(ctx, zeta_hi, Side::Upper, level)?;
    let mut r = base_result(ctx, level, Side::TwoSided);
    r.lower = lo.lower;
    r.upper = hi.upper;
    r.diagnostics.zeta_lo = Some(zeta_lo);
    r.diagnostics.zeta_hi = Some(zeta_hi);
    r.diagnostics.iterations = lo.diagnostics.iterations + hi.diagnostics.iterations;
    r.diagnostics.expansions = lo.diagnostics.expansions + hi.diagnostics.expansions;
    r.diagnostics.lower_at_support = lo.diagnostics.lower_at_support;
    r.diagnostics.upper_at_support = hi.diagnostics.upper_at_support;
    if r.lower > r.upper {
        return Err(Error::Calibration(format!(
            "lower bound {} exceeds upper bound {}",
            r.lower, r.upper
        )));
    }
    Ok(r)
}

/// Interval or bound from a calibration result: two-sided uses `lambda_hi`,
/// upper uses `zeta_hi`, lower uses `zeta_lo`.
pub fn predict(ctx: &LrContext, cal: &CalibrationResult, side: Side) -> Result<PredictionResult> {
    let level = 1.0 - cal.alpha;
    let mut r = match side {
        Side::TwoSided => two_sided_interval(ctx, cal.lambda_hi, level)?,
        Side::Upper => one_sided_bound(ctx, cal.zeta_hi, Side::Upper, level)?,
        Side::Lower => one_sided_bound(ctx, cal.zeta_lo, Side::Lower, level)?,
    };
    r.diagnostics.lambda = Some(cal.lambda_hi);
    r.diagnostics.zeta_lo = Some(cal.zeta_lo);
    r.diagnostics.zeta_hi = Some(cal.zeta_hi);
    Ok(r)
}

/// Dense scan of the passing set over twice the bisection bracket. The hull
/// replaces the endpoints; components go to the diagnostics.
fn scan_region(ctx: &LrContext, threshold: f64, r: &mut PredictionResult) -> Result<()> {
    let c = Coords {
        ctx,
        positive: ctx.core.spec.family.positive_support(),
    };
    let t0 = c.to_t(ctx.y0);
    let (tl, th) = (c.to_t(r.lower), c.to_t(r.upper));
    let lo = if tl.is_finite() {
        t0 - 2.0 * (t0 - tl)
    } else {
        tl
    };
    let hi = if th.is_finite() {
        t0 + 2.0 * (th - t0)
    } else {
        th
    };
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo {
        return Ok(());
    }
    let h = (hi - lo) / (SCAN_POINTS - 1) as f64;
    let pass: Vec<(f64, bool)> = (0..SCAN_POINTS)
        .map(|i| {
            let t = lo + i as f64 * h;
            (t, c.curve(c.to_y(t)).is_ok_and(|v| v <= threshold))
        })
        .collect();
    let mut comps: Vec<[f64; 2]> = Vec::new();
    let mut start: Option<usize> = None;
    for i in 0..=SCAN_POINTS {
        let p = i < SCAN_POINTS && pass[i].1;
        match (p, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                comps.push([c.to_y(pass[s].0), c.to_y(pass[i - 1].0)]);
                start = None;
            }
            _ => {}
        }
    }
    let (Some(first), Some(last)) = (comps.first().copied(), comps.last().copied()) else {
        return Ok(());
    };
    // Refine the hull ends between the last failing and first passing grid points.
    let mut g = |t: f64| c.curve(c.to_y(t)).ok();
    let ftol = 1e-10 * threshold.max(1.0);
    if first[0] < r.lower {
        let t_in = c.to_t(first[0]);
        r.lower = c.to_y(bisect_level(&mut g, t_in, t_in - h, threshold, ftol, 0.0, 200).x);
    }
    if last[1] > r.upper {
        let t_in = c.to_t(last[1]);
        r.upper = c.to_y(bisect_level(&mut g, t_in, t_in + h, threshold, ftol, 0.0, 200).x);
    }
    r.diagnostics.components = comps;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{sample, Dataset, Family, FamilySpec, ParamVector};
    use crate::lr::{neg2_log_lr, prepare, signed_lr};
    use crate::special::chisq_quantile;
    use proptest::prelude::*;

    fn ctx(spec: &FamilySpec, xs: &[f64]) -> LrContext {
        prepare(spec, &Dataset::new(xs.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn known_sigma_closed_form_interval() {
        let spec = FamilySpec::normal_known_sigma(1.0).unwrap();
        let c = ctx(&spec, &[-1.5, -0.5, 0.5, 1.5]);
        let r = two_sided_interval(&c, chisq_quantile(1, 0.95), 0.95).unwrap();
        assert!((r.lower + 2.191_307_3).abs() < 1e-6, "{}", r.lower);
        assert!((r.upper - 2.191_307_3).abs() < 1e-6);
    }

    #[test]
    fn zero_threshold_collapses_to_mode() {
        let spec = FamilySpec::new(Family::Gamma).unwrap();
        let c = ctx(&spec, &[0.4, 1.1, 2.3, 0.9, 1.7]);
        let r = two_sided_interval(&c, 0.0, 0.0).unwrap();
        assert_eq!((r.lower, r.upper), (c.y0, c.y0));
        let u = one_sided_bound(&c, 0.0, Side::Upper, 0.5).unwrap();
        assert_eq!(u.upper, c.y0);
    }

    #[test]
    fn normal_matches_t_interval() {
        let spec = FamilySpec::new(Family::Normal).unwrap();
        let c = ctx(&spec, &[-1.0, 0.0, 1.0]);
        // t_{2, 0.975}; statistic at studentized residual t is (n+1) ln(1 + t^2/(n-1))
        let t = 4.302_652_729_749_464_f64;
        let lambda = 4.0 * (1.0 + t * t / 2.0).ln();
        let r = two_sided_interval(&c, lambda, 0.95).unwrap();
        let half = t * 1.0 * (4.0f64 / 3.0).sqrt();
        assert!(
            (r.upper - half).abs() < 1e-6 && (r.lower + half).abs() < 1e-6,
            "{r:?}"
        );
    }

    #[test]
    fn exponential_signed_examples() {
        let spec = FamilySpec::new(Family::Exponential).unwrap();
        let c = ctx(&spec, &[1.0, 3.0]);
        let up = one_sided_bound(&c, -2.0 * 0.84375f64.ln(), Side::Upper, 0.9).unwrap();
        assert!((up.upper - 4.0).abs() < 1e-6, "{}", up.upper);
        assert_eq!(up.lower, 0.0);
        let lo = one_sided_bound(&c, 2.0 * 0.864f64.ln(), Side::Lower, 0.9).unwrap();
        assert!((lo.lower - 1.0).abs() < 1e-6, "{}", lo.lower);
        assert_eq!(lo.upper, f64::INFINITY);
    }

    #[test]
    fn uniform_lower_side_and_support() {
        let spec = FamilySpec::new(Family::UniformZeroTheta).unwrap();
        let c = ctx(&spec, &[0.2, 0.5, 1.0]);
        let r = two_sided_interval(&c, 2.0, 0.9).unwrap();
        assert!((r.lower - (-1.0f64).exp()).abs() < 1e-9);
        assert!((r.upper - (1.0f64 / 3.0).exp()).abs() < 1e-9);
    }

    #[test]
    fn gamma_lower_side_can_hit_support() {
        // With two nearly equal points the curve toward 0 stays bounded.
        let spec = FamilySpec::new(Family::Gamma).unwrap();
        let c = ctx(&spec, &[1.0, 1.3]);
        let v = neg2_log_lr(&c, 1e-250).unwrap();
        let r = two_sided_interval(&c, v + 5.0, 0.99).unwrap();
        assert!(r.diagnostics.lower_at_support);
        assert_eq!(r.lower, 0.0);
        if r.diagnostics.upper_at_support {
            assert_eq!(r.upper, f64::INFINITY);
        }
    }

    #[test]
    fn multimodal_scan_agrees_on_unimodal_curve() {
        let spec = FamilySpec::new(Family::Weibull).unwrap();
        let mut c = ctx(&spec, &[0.4, 1.1, 2.3, 0.9, 1.7, 0.6]);
        let plain = two_sided_interval(&c, 3.0, 0.9).unwrap();
        c.multimodal = true;
        let scanned = two_sided_interval(&c, 3.0, 0.9).unwrap();
        assert_eq!(scanned.diagnostics.components.len(), 1);
        assert!((scanned.lower - plain.lower).abs() < 1e-7 * plain.lower.max(1.0));
        assert!((scanned.upper - plain.upper).abs() < 1e-7 * plain.upper.max(1.0));
    }

    fn family_strategy() -> impl Strategy<Value = (Family, Vec<f64>)> {
        prop_oneof![
            Just((Family::Normal, vec![1.0, 2.0])),
            Just((Family::Exponential, vec![2.0])),
            Just((Family::UniformZeroTheta, vec![3.0])),
            Just((Family::TwoParamExponential, vec![1.0, 0.5])),
            Just((Family::Gamma, vec![2.5, 0.7])),
            Just((Family::Weibull, vec![1.7, 2.0])),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn round_trip_and_nesting((f, p) in family_strategy(), n in 4usize..25, seed in 0u64..1000, l1 in 0.05f64..8.0, dl in 0.01f64..4.0) {
            let spec = FamilySpec::new(f).unwrap();
            let xs = sample(&spec, &ParamVector::new(f, &p).unwrap(), n, seed).unwrap();
            let c = ctx(&spec, &xs);
            let a = two_sided_interval(&c, l1, 0.9).unwrap();
            let b = two_sided_interval(&c, l1 + dl, 0.9).unwrap();
            prop_assert!(b.lower <= a.lower && a.upper <= b.upper);
            prop_assert!(a.lower <= c.y0 && c.y0 <= a.upper);
            for (end, at) in [(a.lower, a.diagnostics.lower_at_support), (a.upper, a.diagnostics.upper_at_support)] {
                if !at {
                    let v = neg2_log_lr(&c, end).unwrap();
                    prop_assert!((v - l1).abs() < 1e-6 * l1.max(1.0), "{f:?} end {end} value {v} target {l1}");
                }
            }
        }

        #[test]
        fn signed_bounds_invert_and_compose((f, p) in family_strategy(), n in 4usize..25, seed in 0u64..1000, z in 0.05f64..6.0) {
            let spec = FamilySpec::new(f).unwrap();
            let xs = sample(&spec, &ParamVector::new(f, &p).unwrap(), n, seed).unwrap();
            let c = ctx(&spec, &xs);
            let up = one_sided_bound(&c, z, Side::Upper, 0.9).unwrap();
            let s = signed_lr(&c, up.upper).unwrap();
            prop_assert!((s - z).abs() < 1e-6 * z.max(1.0));
            let lo = one_sided_bound(&c, -z, Side::Lower, 0.9).unwrap();
            if !lo.diagnostics.lower_at_support {
                let s = signed_lr(&c, lo.lower).unwrap();
                prop_assert!((s + z).abs() < 1e-6 * z.max(1.0));
            }
            let et = equal_tail_interval(&c, -z, z, 0.9).unwrap();
            prop_assert!(et.lower <= et.upper);
        }
    }
}
