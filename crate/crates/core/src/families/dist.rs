use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma as GammaDist, StandardNormal};

use super::gengamma;
use super::{FamilySpec, ParamVector};
use crate::special::{gamma_p, inv_gamma_p, ln_gamma, norm_cdf, norm_quantile, LN_SQRT_2PI};

/// A fully specified member of one of the families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Dist {
    Normal { mu: f64, sigma: f64 },
    Exponential { theta: f64 },
    TwoParamExponential { mu: f64, beta: f64 },
    Uniform { theta: f64 },
    Gamma { alpha: f64, beta: f64 },
    Weibull { beta: f64, eta: f64 },
    GenGamma { mu: f64, sigma: f64, lambda: f64 },
}

impl Dist {
    pub fn from_params(spec: &FamilySpec, p: &ParamVector) -> Self {
        use super::Family::*;
        let v = p.values();
        match spec.family {
            Normal => Dist::Normal {
                mu: v[0],
                sigma: v[1],
            },
            NormalKnownSigma => Dist::Normal {
                mu: v[0],
                sigma: spec.known_sigma().unwrap_or(1.0),
            },
            Exponential => Dist::Exponential { theta: v[0] },
            TwoParamExponential => Dist::TwoParamExponential {
                mu: v[0],
                beta: v[1],
            },
            UniformZeroTheta => Dist::Uniform { theta: v[0] },
            Gamma => Dist::Gamma {
                alpha: v[0],
                beta: v[1],
            },
            Weibull => Dist::Weibull {
                beta: v[0],
                eta: v[1],
            },
            GeneralizedGamma => Dist::GenGamma {
                mu: v[0],
                sigma: v[1],
                lambda: v[2],
            },
        }
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            Dist::Normal { mu, sigma } => {
                let z = (x - mu) / sigma;
                -0.5 * z * z - sigma.ln() - LN_SQRT_2PI
            }
            Dist::Exponential { theta } if x > 0.0 => -x / theta - theta.ln(),
            Dist::TwoParamExponential { mu, beta } if x >= mu => -(x - mu) / beta - beta.ln(),
            Dist::Uniform { theta } if x > 0.0 && x <= theta => -theta.ln(),
            Dist::Gamma { alpha, beta } if x > 0.0 => {
                (alpha - 1.0) * x.ln() - x / beta - alpha * beta.ln() - ln_gamma(alpha)
            }
            Dist::Weibull { beta, eta } if x > 0.0 => {
                let z = x / eta;
                beta.ln() - eta.ln() + (beta - 1.0) * z.ln() - z.powf(beta)
            }
            Dist::GenGamma { mu, sigma, lambda } => gengamma::ln_pdf(x, mu, sigma, lambda),
            _ => f64::NEG_INFINITY,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match *self {
            Dist::Normal { mu, sigma } => norm_cdf((x - mu) / sigma),
            Dist::Exponential { theta } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-x / theta).exp_m1()
                }
            }
            Dist::TwoParamExponential { mu, beta } => {
                if x <= mu {
                    0.0
                } else {
                    -(-(x - mu) / beta).exp_m1()
                }
            }
            Dist::Uniform { theta } => (x / theta).clamp(0.0, 1.0),
            Dist::Gamma { alpha, beta } => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_p(alpha, x / beta)
                }
            }
            Dist::Weibull { beta, eta } => {
                if x <= 0.0 {
                    0.0
                } else {
                    -(-(x / eta).powf(beta)).exp_m1()
                }
            }
            Dist::GenGamma { mu, sigma, lambda } => gengamma::cdf(x, mu, sigma, lambda),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            Dist::Normal { mu, sigma } => mu + sigma * norm_quantile(p),
            Dist::Exponential { theta } => -theta * (-p).ln_1p(),
            Dist::TwoParamExponential { mu, beta } => mu - beta * (-p).ln_1p(),
            Dist::Uniform { theta } => theta * p.clamp(0.0, 1.0),
            Dist::Gamma { alpha, beta } => beta * inv_gamma_p(alpha, p),
            Dist::Weibull { beta, eta } => eta * (-(-p).ln_1p()).powf(1.0 / beta),
            Dist::GenGamma { mu, sigma, lambda } => gengamma::quantile(p, mu, sigma, lambda),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Dist::Normal { mu, sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                mu + sigma * z
            }
            Dist::Exponential { theta } => {
                let e: f64 = Exp1.sample(rng);
                theta * e
            }
            Dist::TwoParamExponential { mu, beta } => {
                let e: f64 = Exp1.sample(rng);
                mu + beta * e
            }
            Dist::Uniform { theta } => {
                // (0, 1]: keep zero out of the support
                let u: f64 = 1.0 - rng.random::<f64>();
                theta * u
            }
            Dist::Gamma { alpha, beta } => positive(
                GammaDist::new(alpha, beta)
                    .expect("valid gamma")
                    .sample(rng),
            ),
            Dist::Weibull { beta, eta } => {
                let e: f64 = Exp1.sample(rng);
                positive(eta * e.powf(1.0 / beta))
            }
            Dist::GenGamma { mu, sigma, lambda } => {
                let w = if lambda.abs() < 1e-6 {
                    StandardNormal.sample(rng)
                } else {
                    let kappa = 1.0 / (lambda * lambda);
                    // small shapes: ln G = ln G' + ln(U) / k with G' ~ Gamma(k + 1),
                    // which does not underflow to G = 0
                    let ln_g = if kappa < 1.0 {
                        let g: f64 = GammaDist::new(kappa + 1.0, 1.0)
                            .expect("valid gamma")
                            .sample(rng);
                        let u: f64 = 1.0 - rng.random::<f64>();
                        g.ln() + u.ln() / kappa
                    } else {
                        let g: f64 = GammaDist::new(kappa, 1.0).expect("valid gamma").sample(rng);
                        g.ln()
                    };
                    (ln_g - kappa.ln()) / lambda
                };
                positive((mu + sigma * w).exp())
            }
        }
    }

    /// Mean of the distribution, where finite.
    pub fn mean(&self) -> f64 {
        match *self {
            Dist::Normal { mu, .. } => mu,
            Dist::Exponential { theta } => theta,
            Dist::TwoParamExponential { mu, beta } => mu + beta,
            Dist::Uniform { theta } => theta / 2.0,
            Dist::Gamma { alpha, beta } => alpha * beta,
            Dist::Weibull { beta, eta } => eta * ln_gamma(1.0 + 1.0 / beta).exp(),
            Dist::GenGamma { mu, sigma, lambda } => {
                if lambda.abs() < 1e-6 {
                    (mu + 0.5 * sigma * sigma).exp()
                } else {
                    let kappa = 1.0 / (lambda * lambda);
                    let a = sigma / lambda;
                    if kappa + a <= 0.0 {
                        return f64::INFINITY;
                    }
                    (mu - a * kappa.ln() + ln_gamma(kappa + a) - ln_gamma(kappa)).exp()
                }
            }
        }
    }
}

/// Samplers can underflow to zero for extreme shapes; keep draws in the support.
fn positive(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        f64::MIN_POSITIVE
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::Family;
    use crate::rng;

    fn spec(f: Family) -> FamilySpec {
        if f == Family::NormalKnownSigma {
            FamilySpec::normal_known_sigma(1.5).unwrap()
        } else {
            FamilySpec::new(f).unwrap()
        }
    }

    fn reference_points() -> Vec<(Family, Vec<f64>)> {
        vec![
            (Family::Normal, vec![1.0, 2.0]),
            (Family::NormalKnownSigma, vec![-0.5]),
            (Family::Exponential, vec![2.0]),
            (Family::TwoParamExponential, vec![1.0, 0.5]),
            (Family::UniformZeroTheta, vec![3.0]),
            (Family::Gamma, vec![2.5, 0.7]),
            (Family::Weibull, vec![1.7, 2.0]),
            (Family::GeneralizedGamma, vec![0.3, 0.6, -0.8]),
            (Family::GeneralizedGamma, vec![0.3, 0.6, 1.2]),
            (Family::GeneralizedGamma, vec![0.3, 0.6, 0.0]),
        ]
    }

    #[test]
    fn densities_integrate_to_one() {
        for (f, p) in reference_points() {
            let s = spec(f);
            let d = Dist::from_params(&s, &ParamVector::new(f, &p).unwrap());
            let (lo, hi) = (d.quantile(1e-12), d.quantile(1.0 - 1e-12));
            // Positive families are integrated in log coordinates to cope with
            // heavy right tails.
            let logs = f.positive_support();
            let (a, b) = if logs { (lo.ln(), hi.ln()) } else { (lo, hi) };
            let m = 200_000;
            let h = (b - a) / m as f64;
            let mut acc = 0.0;
            for i in 0..=m {
                let t = a + i as f64 * h;
                let w = if i == 0 || i == m {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                acc += w * if logs {
                    (d.ln_pdf(t.exp()) + t).exp()
                } else {
                    d.ln_pdf(t).exp()
                };
            }
            let total = acc * h / 3.0;
            let tol = if matches!(f, Family::UniformZeroTheta | Family::TwoParamExponential) {
                1e-4
            } else {
                1e-6
            };
            assert!((total - 1.0).abs() < tol, "{f:?} {p:?}: {total}");
        }
    }

    #[test]
    fn quantile_inverts_cdf_for_all_families() {
        for (f, p) in reference_points() {
            let d = Dist::from_params(&spec(f), &ParamVector::new(f, &p).unwrap());
            for &u in &[0.001, 0.2, 0.5, 0.77, 0.999] {
                assert!((d.cdf(d.quantile(u)) - u).abs() < 1e-9, "{f:?}");
            }
        }
    }

    #[test]
    fn samplers_match_cdf() {
        for (i, (f, p)) in reference_points().into_iter().enumerate() {
            let d = Dist::from_params(&spec(f), &ParamVector::new(f, &p).unwrap());
            let mut r = rng::stream(99, rng::domain::SAMPLE, i as u64);
            let mut xs: Vec<f64> = (0..100_000).map(|_| d.sample(&mut r)).collect();
            xs.sort_by(f64::total_cmp);
            let m = xs.len() as f64;
            let ks = xs
                .iter()
                .enumerate()
                .map(|(j, &x)| {
                    let c = d.cdf(x);
                    (c - j as f64 / m).abs().max(((j + 1) as f64 / m - c).abs())
                })
                .fold(0.0, f64::max);
            assert!(ks < 0.01, "{f:?} ks = {ks}");
        }
    }
}
