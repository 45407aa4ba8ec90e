//! Two-sample LR prediction for binomial and Poisson counts, with the
//! half-count correction at extreme outcomes and chi-square calibration.

use serde::{Deserialize, Serialize};

use crate::bounds::Side;
use crate::error::{Error, Result};
use crate::special::{chisq_quantile, ln_choose, ln_gamma, xlogy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinomialSetup {
    pub x: u64,
    pub n: u64,
    pub m: u64,
}

impl BinomialSetup {
    pub fn new(x: u64, n: u64, m: u64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Invalid(
                "binomial trials n and m must be >= 1".into(),
            ));
        }
        if x > n {
            return Err(Error::Invalid(format!(
                "observed count {x} exceeds n = {n}"
            )));
        }
        Ok(Self { x, n, m })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonSetup {
    pub x: u64,
    pub n: f64,
    pub m: f64,
}

impl PoissonSetup {
    pub fn new(x: u64, n: f64, m: f64) -> Result<Self> {
        if !(n > 0.0 && n.is_finite() && m > 0.0 && m.is_finite()) {
            return Err(Error::Invalid(
                "Poisson exposures n and m must be positive".into(),
            ));
        }
        Ok(Self { x, n, m })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiscreteKind {
    Binomial(BinomialSetup),
    Poisson(PoissonSetup),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegerInterval {
    pub lo: u64,
    pub hi: u64,
}

impl IntegerInterval {
    pub fn contains(&self, y: u64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegerPrediction {
    pub lo: u64,
    pub hi: u64,
    pub level: f64,
    pub threshold: f64,
    pub corrected: bool,
    /// No count passed the threshold; the set is the minimizer alone and
    /// its coverage is below nominal.
    pub argmin_fallback: bool,
}

impl IntegerPrediction {
    pub fn interval(&self) -> IntegerInterval {
        IntegerInterval {
            lo: self.lo,
            hi: self.hi,
        }
    }
}

fn half_shift(count: u64, top: Option<u64>) -> f64 {
    let c = count as f64;
    if count == 0 {
        c + 0.5
    } else if top == Some(count) {
        c - 0.5
    } else {
        c
    }
}

/// `-2 log Λ` for `X ~ Bin(n, p)`, `Y ~ Bin(m, p)` against separate
/// proportions, with `0 log 0 = 0`.
pub fn binomial_neg2_log_lr(s: &BinomialSetup, y: u64, corrected: bool) -> Result<f64> {
    if y > s.m {
        return Err(Error::Invalid(format!(
            "future count {y} exceeds m = {}",
            s.m
        )));
    }
    let (n, m) = (s.n as f64, s.m as f64);
    let (x, y) = if corrected {
        (half_shift(s.x, Some(s.n)), half_shift(y, Some(s.m)))
    } else {
        (s.x as f64, y as f64)
    };
    let ll = |k: f64, t: f64, p: f64| xlogy(k, p) + xlogy(t - k, 1.0 - p);
    let full = ll(x, n, x / n) + ll(y, m, y / m);
    let reduced = ll(x + y, n + m, (x + y) / (n + m));
    Ok((2.0 * (full - reduced)).max(0.0))
}

/// `-2 log Λ` for `X ~ Poi(n λ)`, `Y ~ Poi(m λ)` against separate rates.
pub fn poisson_neg2_log_lr(s: &PoissonSetup, y: u64, corrected: bool) -> Result<f64> {
    let (x, y) = if corrected {
        (half_shift(s.x, None), half_shift(y, None))
    } else {
        (s.x as f64, y as f64)
    };
    // The linear terms -n λ cancel between the models.
    let full = xlogy(x, x / s.n) + xlogy(y, y / s.m);
    let reduced = xlogy(x + y, (x + y) / (s.n + s.m));
    Ok((2.0 * (full - reduced)).max(0.0))
}

pub fn discrete_neg2_log_lr(kind: &DiscreteKind, y: u64, corrected: bool) -> Result<f64> {
    match kind {
        DiscreteKind::Binomial(s) => binomial_neg2_log_lr(s, y, corrected),
        DiscreteKind::Poisson(s) => poisson_neg2_log_lr(s, y, corrected),
    }
}

/// Values of the statistic over the scanned range of `y`.
fn scan(kind: &DiscreteKind, threshold: f64, corrected: bool) -> Result<Vec<f64>> {
    match kind {
        DiscreteKind::Binomial(s) => (0..=s.m)
            .map(|y| binomial_neg2_log_lr(s, y, corrected))
            .collect(),
        DiscreteKind::Poisson(s) => {
            // Past the fitted mean, stop after three consecutive failures.
            let center = (s.m * s.x as f64 / s.n).ceil() as u64;
            let mut vals = Vec::new();
            let mut fails = 0;
            let mut y = 0u64;
            loop {
                let v = poisson_neg2_log_lr(s, y, corrected)?;
                vals.push(v);
                if y > center {
                    fails = if v > threshold { fails + 1 } else { 0 };
                    if fails >= 3 {
                        break;
                    }
                }
                y += 1;
                if y > 1 << 40 {
                    return Err(Error::Invalid("Poisson scan did not terminate".into()));
                }
            }
            Ok(vals)
        }
    }
}

/// Contiguous run of `vals <= threshold` around the minimizer.
pub(crate) fn passing_run(vals: &[f64], threshold: f64) -> (u64, u64, bool) {
    let arg = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    if vals[arg] > threshold {
        return (arg as u64, arg as u64, true);
    }
    let mut lo = arg;
    while lo > 0 && vals[lo - 1] <= threshold {
        lo -= 1;
    }
    let mut hi = arg;
    while hi + 1 < vals.len() && vals[hi + 1] <= threshold {
        hi += 1;
    }
    (lo as u64, hi as u64, false)
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Invalid(format!(
            "level must lie in (0, 1), got {level}"
        )));
    }
    Ok(())
}

/// `{y : -2 log Λ(x, y) <= chi2_{1, level}}`.
pub fn discrete_prediction_set(
    kind: &DiscreteKind,
    level: f64,
    corrected: bool,
) -> Result<IntegerPrediction> {
    check_level(level)?;
    set_at_threshold(kind, chisq_quantile(1, level), level, corrected)
}

fn set_at_threshold(
    kind: &DiscreteKind,
    threshold: f64,
    level: f64,
    corrected: bool,
) -> Result<IntegerPrediction> {
    let vals = scan(kind, threshold, corrected)?;
    let (lo, hi, argmin_fallback) = passing_run(&vals, threshold);
    Ok(IntegerPrediction {
        lo,
        hi,
        level,
        threshold,
        corrected,
        argmin_fallback,
    })
}

/// One-sided bound at `level`: the matching endpoint of the set calibrated
/// at `chi2_{1, 2 level - 1}`, so each tail carries `1 - level`.
pub fn discrete_one_sided(
    kind: &DiscreteKind,
    level: f64,
    side: Side,
    corrected: bool,
) -> Result<IntegerPrediction> {
    check_level(level)?;
    if level <= 0.5 {
        return Err(Error::Invalid(format!(
            "one-sided level must exceed 0.5, got {level}"
        )));
    }
    let mut p = set_at_threshold(kind, chisq_quantile(1, 2.0 * level - 1.0), level, corrected)?;
    match side {
        Side::Upper => p.lo = 0,
        Side::Lower => {
            p.hi = match kind {
                DiscreteKind::Binomial(s) => s.m,
                DiscreteKind::Poisson(_) => u64::MAX,
            }
        }
        Side::TwoSided => {
            return Err(Error::Invalid(
                "one-sided bound needs side lower or upper".into(),
            ))
        }
    }
    Ok(p)
}

/// Prediction region for a side: two-sided uses the full set.
pub fn discrete_predict(
    kind: &DiscreteKind,
    level: f64,
    side: Side,
    corrected: bool,
) -> Result<IntegerPrediction> {
    match side {
        Side::TwoSided => discrete_prediction_set(kind, level, corrected),
        s => discrete_one_sided(kind, level, s, corrected),
    }
}

fn binom_ln_pmf(k: u64, n: u64, p: f64) -> f64 {
    ln_choose(n, k) + xlogy(k as f64, p) + xlogy((n - k) as f64, 1.0 - p)
}

fn poisson_ln_pmf(k: u64, mu: f64) -> f64 {
    xlogy(k as f64, mu) - mu - ln_gamma(k as f64 + 1.0)
}

/// Exact coverage of the binomial procedure at success probability `p`:
/// full enumeration over `X`.
pub fn binomial_coverage(
    n: u64,
    m: u64,
    p: f64,
    level: f64,
    side: Side,
    corrected: bool,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("p must lie in [0, 1], got {p}")));
    }
    let mut total = 0.0;
    for x in 0..=n {
        let w = binom_ln_pmf(x, n, p).exp();
        if w == 0.0 {
            continue;
        }
        let set = discrete_predict(
            &DiscreteKind::Binomial(BinomialSetup::new(x, n, m)?),
            level,
            side,
            corrected,
        )?;
        let inside: f64 = (set.lo..=set.hi.min(m))
            .map(|y| binom_ln_pmf(y, m, p).exp())
            .sum();
        total += w * inside;
    }
    Ok(total.min(1.0))
}

/// Coverage of the Poisson procedure at rate `lambda`; `X` is enumerated
/// until the remaining mass drops below `1e-12`.
pub fn poisson_coverage(
    n: f64,
    m: f64,
    lambda: f64,
    level: f64,
    side: Side,
    corrected: bool,
) -> Result<f64> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Invalid(format!(
            "rate must be positive, got {lambda}"
        )));
    }
    let (mx, my) = (n * lambda, m * lambda);
    let mut total = 0.0;
    let mut mass = 0.0;
    let mut x = 0u64;
    while 1.0 - mass > 1e-12 && !(x as f64 > mx && poisson_ln_pmf(x, mx) < -40.0) {
        let w = poisson_ln_pmf(x, mx).exp();
        mass += w;
        let set = discrete_predict(
            &DiscreteKind::Poisson(PoissonSetup::new(x, n, m)?),
            level,
            side,
            corrected,
        )?;
        let inside = if set.hi == u64::MAX {
            let below: f64 = (0..set.lo).map(|y| poisson_ln_pmf(y, my).exp()).sum();
            (1.0 - below).max(0.0)
        } else {
            (set.lo..=set.hi).map(|y| poisson_ln_pmf(y, my).exp()).sum()
        };
        total += w * inside;
        x += 1;
    }
    Ok(total.min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand_distr::{Binomial, Distribution};
    use statrs::distribution::{Binomial as SBinomial, Discrete, Poisson as SPoisson};

    #[test]
    fn binomial_examples() {
        let s = BinomialSetup::new(5, 10, 10).unwrap();
        assert_eq!(binomial_neg2_log_lr(&s, 5, false).unwrap(), 0.0);
        let s = BinomialSetup::new(1, 2, 2).unwrap();
        let v = binomial_neg2_log_lr(&s, 0, false).unwrap();
        assert!((v - 1.726_092_4).abs() < 1e-7, "{v}");
        assert!((v + 2.0 * 0.421875f64.ln()).abs() < 1e-14);
        let s = BinomialSetup::new(0, 15, 15).unwrap();
        assert_eq!(binomial_neg2_log_lr(&s, 0, true).unwrap(), 0.0);
        assert!(binomial_neg2_log_lr(&s, 16, true).is_err());
    }

    #[test]
    fn poisson_examples() {
        let s = PoissonSetup::new(2, 1.0, 1.0).unwrap();
        assert_eq!(poisson_neg2_log_lr(&s, 2, false).unwrap(), 0.0);
        let s = PoissonSetup::new(4, 2.0, 1.0).unwrap();
        let v = poisson_neg2_log_lr(&s, 0, false).unwrap();
        assert!((v + 2.0 * (16.0f64 / 81.0).ln()).abs() < 1e-14, "{v}");
        let s = PoissonSetup::new(0, 1.0, 1.0).unwrap();
        assert_eq!(poisson_neg2_log_lr(&s, 0, true).unwrap(), 0.0);
    }

    #[test]
    fn prediction_set_examples() {
        let k = DiscreteKind::Binomial(BinomialSetup::new(5, 10, 10).unwrap());
        assert!(discrete_prediction_set(&k, 0.95, false)
            .unwrap()
            .interval()
            .contains(5));
        let k = DiscreteKind::Binomial(BinomialSetup::new(1, 2, 2).unwrap());
        let s = discrete_prediction_set(&k, 0.95, false).unwrap();
        assert_eq!((s.lo, s.hi), (0, 2));
        let k = DiscreteKind::Poisson(PoissonSetup::new(0, 1.0, 1.0).unwrap());
        assert!(discrete_prediction_set(&k, 0.95, true)
            .unwrap()
            .interval()
            .contains(0));
    }

    #[test]
    fn argmin_fallback_when_nothing_passes() {
        let vals = [3.0, 1.0, 2.0];
        assert_eq!(passing_run(&vals, 0.5), (1, 1, true));
        assert_eq!(passing_run(&vals, 2.0), (1, 2, false));
    }

    #[test]
    fn zero_power_conventions() {
        // 0^0 = 1: every extreme count gives a finite, nonnegative statistic.
        for (x, n, y, m) in [(0, 3, 0, 4), (3, 3, 4, 4), (0, 3, 4, 4), (3, 3, 0, 4)] {
            let s = BinomialSetup::new(x, n, m).unwrap();
            for c in [false, true] {
                let v = binomial_neg2_log_lr(&s, y, c).unwrap();
                assert!(v.is_finite() && v >= 0.0);
            }
        }
        assert_eq!(
            binomial_neg2_log_lr(&BinomialSetup::new(0, 3, 4).unwrap(), 0, false).unwrap(),
            0.0
        );
        assert_eq!(
            poisson_neg2_log_lr(&PoissonSetup::new(0, 2.0, 3.0).unwrap(), 0, false).unwrap(),
            0.0
        );
    }

    #[test]
    fn pooled_oracle_full_grid() {
        // Explicit log-likelihoods (coefficients included) at the ML estimates.
        let bll = |k: u64, t: u64, p: f64| SBinomial::new(p, t).unwrap().ln_pmf(k);
        let pll = |k: u64, mu: f64| {
            if mu == 0.0 {
                if k == 0 {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            } else {
                SPoisson::new(mu).unwrap().ln_pmf(k)
            }
        };
        for n in 1..=6u64 {
            for m in 1..=6u64 {
                for x in 0..=n {
                    for y in 0..=m {
                        let s = BinomialSetup::new(x, n, m).unwrap();
                        let pool = (x + y) as f64 / (n + m) as f64;
                        let full = bll(x, n, x as f64 / n as f64) + bll(y, m, y as f64 / m as f64);
                        let red = bll(x, n, pool) + bll(y, m, pool);
                        let v = binomial_neg2_log_lr(&s, y, false).unwrap();
                        assert!((v - 2.0 * (full - red)).abs() < 1e-12, "{x} {n} {y} {m}");

                        let (nf, mf) = (n as f64, m as f64);
                        let rate = (x + y) as f64 / (nf + mf);
                        let full = pll(x, x as f64) + pll(y, y as f64);
                        let red = pll(x, nf * rate) + pll(y, mf * rate);
                        let v =
                            poisson_neg2_log_lr(&PoissonSetup::new(x, nf, mf).unwrap(), y, false)
                                .unwrap();
                        assert!(
                            (v - 2.0 * (full - red)).abs() < 1e-12,
                            "poisson {x} {n} {y} {m}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn monotone_tails_by_enumeration() {
        for n in (1..=50u64).step_by(7) {
            for m in (1..=50u64).step_by(5) {
                for x in 0..=n {
                    for c in [false, true] {
                        let s = BinomialSetup::new(x, n, m).unwrap();
                        let v: Vec<f64> = (0..=m)
                            .map(|y| binomial_neg2_log_lr(&s, y, c).unwrap())
                            .collect();
                        let arg = v
                            .iter()
                            .enumerate()
                            .min_by(|a, b| a.1.total_cmp(b.1))
                            .unwrap()
                            .0;
                        assert!(
                            v[..=arg].windows(2).all(|w| w[1] <= w[0] + 1e-12),
                            "{x} {n} {m} {c}"
                        );
                        assert!(
                            v[arg..].windows(2).all(|w| w[1] >= w[0] - 1e-12),
                            "{x} {n} {m} {c}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn large_sample_binomial_matches_chi2_one() {
        let mut r = crate::rng::stream(2024, crate::rng::domain::SAMPLE, 0);
        let b = Binomial::new(400, 0.3).unwrap();
        let mut v: Vec<f64> = (0..100_000)
            .map(|_| {
                let x = b.sample(&mut r);
                let y = b.sample(&mut r);
                binomial_neg2_log_lr(&BinomialSetup::new(x, 400, 400).unwrap(), y, false).unwrap()
            })
            .collect();
        v.sort_by(f64::total_cmp);
        let q = v[95_000];
        assert!((q - 3.8415).abs() < 0.15, "{q}");
    }

    #[test]
    fn coverage_enumeration_is_a_probability() {
        let c = binomial_coverage(20, 20, 0.3, 0.95, Side::TwoSided, false).unwrap();
        assert!(c > 0.85 && c <= 1.0);
        let c = poisson_coverage(4.0, 4.0, 4.0, 0.95, Side::TwoSided, true).unwrap();
        assert!(c > 0.85 && c <= 1.0);
        let u = binomial_coverage(20, 20, 0.3, 0.95, Side::Upper, false).unwrap();
        assert!(u > 0.85 && u <= 1.0);
    }

    proptest! {
        #[test]
        fn binomial_symmetry(n in 1u64..60, m in 1u64..60, fx in 0.0f64..1.0, fy in 0.0f64..1.0, c in any::<bool>()) {
            let x = (fx * n as f64).round() as u64;
            let y = (fy * m as f64).round() as u64;
            let a = binomial_neg2_log_lr(&BinomialSetup::new(x, n, m).unwrap(), y, c).unwrap();
            let b = binomial_neg2_log_lr(&BinomialSetup::new(n - x, n, m).unwrap(), m - y, c).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn sets_nest_and_hold_minimizer(n in 1u64..40, m in 1u64..40, fx in 0.0f64..1.0, c in any::<bool>()) {
            let x = (fx * n as f64).round() as u64;
            let k = DiscreteKind::Binomial(BinomialSetup::new(x, n, m).unwrap());
            let a = discrete_prediction_set(&k, 0.8, c).unwrap();
            let b = discrete_prediction_set(&k, 0.95, c).unwrap();
            prop_assert!(b.lo <= a.lo && a.hi <= b.hi);
            let up = discrete_one_sided(&k, 0.95, Side::Upper, c).unwrap();
            let lo = discrete_one_sided(&k, 0.95, Side::Lower, c).unwrap();
            prop_assert!(lo.lo <= up.hi);
        }
    }
}
