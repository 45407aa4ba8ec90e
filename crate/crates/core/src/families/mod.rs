//! Parametric families: densities, samplers, ML fitting and the
//! single-observation supremum over the varied parameter.

mod censored;
mod dist;
mod fit;
pub(crate) mod gengamma;
pub(crate) mod sup;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use censored::{fit_ml_type1_censored, weibull_censored_loglik};
pub use dist::Dist;
pub use fit::{fit_ml, fit_ml_from, FitOptions};
pub(crate) use fit::{
    full_fit_numeric, full_fit_structured, gg_boundary_objective, pooled_fit, FullFit, PooledInput,
};
pub use sup::{ln_single_obs_sup, ln_single_obs_sup_common, single_obs_sup};

/// Supported parametric families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Normal,
    NormalKnownSigma,
    Exponential,
    TwoParamExponential,
    UniformZeroTheta,
    Gamma,
    Weibull,
    GeneralizedGamma,
}

impl Family {
    pub const ALL: [Family; 8] = [
        Family::Normal,
        Family::NormalKnownSigma,
        Family::Exponential,
        Family::TwoParamExponential,
        Family::UniformZeroTheta,
        Family::Gamma,
        Family::Weibull,
        Family::GeneralizedGamma,
    ];

    /// Parameter names in storage order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Normal => &["mu", "sigma"],
            Family::NormalKnownSigma => &["mu"],
            Family::Exponential => &["theta"],
            Family::TwoParamExponential => &["mu", "beta"],
            Family::UniformZeroTheta => &["theta"],
            Family::Gamma => &["alpha", "beta"],
            Family::Weibull => &["beta", "eta"],
            Family::GeneralizedGamma => &["mu", "sigma", "lambda"],
        }
    }

    /// The component freed for the predictand in the full model.
    pub fn default_varied(self) -> &'static str {
        match self {
            Family::Normal | Family::NormalKnownSigma => "mu",
            Family::Exponential => "theta",
            Family::TwoParamExponential => "mu",
            Family::UniformZeroTheta => "theta",
            Family::Gamma => "beta",
            Family::Weibull => "eta",
            Family::GeneralizedGamma => "mu",
        }
    }

    /// Smallest sample for which the ML fit is defined.
    pub fn min_obs(self) -> usize {
        match self {
            Family::NormalKnownSigma | Family::Exponential | Family::UniformZeroTheta => 1,
            Family::GeneralizedGamma => 3,
            _ => 2,
        }
    }

    /// True when the support is `(0, inf)` (or `(0, theta]` for the uniform).
    pub fn positive_support(self) -> bool {
        !matches!(
            self,
            Family::Normal | Family::NormalKnownSigma | Family::TwoParamExponential
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Normal => "normal",
            Family::NormalKnownSigma => "normal_known_sigma",
            Family::Exponential => "exponential",
            Family::TwoParamExponential => "two_param_exponential",
            Family::UniformZeroTheta => "uniform_zero_theta",
            Family::Gamma => "gamma",
            Family::Weibull => "weibull",
            Family::GeneralizedGamma => "generalized_gamma",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Ok(match key.as_str() {
            "normal" | "norm" => Family::Normal,
            "normal_known_sigma" | "normal_known" => Family::NormalKnownSigma,
            "exponential" | "exp" => Family::Exponential,
            "two_param_exponential" | "exp2" | "two_parameter_exponential" => {
                Family::TwoParamExponential
            }
            "uniform_zero_theta" | "uniform" => Family::UniformZeroTheta,
            "gamma" => Family::Gamma,
            "weibull" => Family::Weibull,
            "generalized_gamma" | "gengamma" => Family::GeneralizedGamma,
            _ => return Err(Error::Invalid(format!("unknown family '{s}'"))),
        })
    }
}

/// A family together with its fixed hyperparameters and the varied component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family: Family,
    #[serde(default)]
    pub fixed_hyperparams: BTreeMap<String, f64>,
    pub varied_param: String,
}

impl FamilySpec {
    /// Spec with the default varied component. `NormalKnownSigma` needs
    /// [`FamilySpec::normal_known_sigma`] instead.
    pub fn new(family: Family) -> Result<Self> {
        if family == Family::NormalKnownSigma {
            return Err(Error::ParamDomain(
                "normal_known_sigma requires a known sigma".into(),
            ));
        }
        Ok(Self {
            family,
            fixed_hyperparams: BTreeMap::new(),
            varied_param: family.default_varied().into(),
        })
    }

    pub fn normal_known_sigma(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::ParamDomain(format!(
                "known sigma must be positive, got {sigma}"
            )));
        }
        let mut fixed = BTreeMap::new();
        fixed.insert("sigma".to_string(), sigma);
        Ok(Self {
            family: Family::NormalKnownSigma,
            fixed_hyperparams: fixed,
            varied_param: "mu".into(),
        })
    }

    /// Rebuild from parts, checking hyperparameters and the varied name.
    pub fn from_parts(
        family: Family,
        fixed: BTreeMap<String, f64>,
        varied: Option<String>,
    ) -> Result<Self> {
        let mut spec = if family == Family::NormalKnownSigma {
            let sigma = *fixed.get("sigma").ok_or_else(|| {
                Error::ParamDomain("normal_known_sigma requires a known sigma".into())
            })?;
            Self::normal_known_sigma(sigma)?
        } else {
            Self::new(family)?
        };
        if let Some(v) = varied {
            spec = spec.with_varied(&v)?;
        }
        Ok(spec)
    }

    pub fn with_varied(mut self, name: &str) -> Result<Self> {
        if !self.family.param_names().contains(&name) {
            return Err(Error::ParamDomain(format!(
                "'{name}' is not a parameter of {}",
                self.family
            )));
        }
        self.varied_param = name.to_string();
        Ok(self)
    }

    pub fn known_sigma(&self) -> Option<f64> {
        self.fixed_hyperparams.get("sigma").copied()
    }

    pub(crate) fn uses_default_varied(&self) -> bool {
        self.varied_param == self.family.default_varied()
    }

    /// Checks the value lies in the family support.
    pub fn check_support(&self, x: f64) -> Result<()> {
        let ok = x.is_finite() && (!self.family.positive_support() || x > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Support {
                family: self.family.name().into(),
                value: x,
            })
        }
    }
}

/// Parameter values for one family, validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    family: Family,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(family: Family, values: &[f64]) -> Result<Self> {
        let names = family.param_names();
        if values.len() != names.len() {
            return Err(Error::ParamDomain(format!(
                "{family} takes {} parameters, got {}",
                names.len(),
                values.len()
            )));
        }
        for (name, &v) in names.iter().zip(values) {
            if !v.is_finite() {
                return Err(Error::ParamDomain(format!(
                    "{name} must be finite, got {v}"
                )));
            }
            let positive = matches!(
                (family, *name),
                (Family::Normal, "sigma")
                    | (Family::Exponential, "theta")
                    | (Family::TwoParamExponential, "beta")
                    | (Family::UniformZeroTheta, "theta")
                    | (Family::Gamma, _)
                    | (Family::Weibull, _)
                    | (Family::GeneralizedGamma, "sigma")
            );
            if positive && v <= 0.0 {
                return Err(Error::ParamDomain(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(Self {
            family,
            values: values.to_vec(),
        })
    }

    pub fn from_map(family: Family, map: &BTreeMap<String, f64>) -> Result<Self> {
        let values = family
            .param_names()
            .iter()
            .map(|n| {
                map.get(*n)
                    .copied()
                    .ok_or_else(|| Error::ParamDomain(format!("missing parameter '{n}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        if map.len() != values.len() {
            return Err(Error::ParamDomain(format!(
                "unexpected parameters for {family}"
            )));
        }
        Self::new(family, &values)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.family
            .param_names()
            .iter()
            .position(|n| *n == name)
            .map(|i| self.values[i])
    }

    pub fn to_map(&self) -> BTreeMap<String, f64> {
        self.family
            .param_names()
            .iter()
            .map(|n| n.to_string())
            .zip(self.values.iter().copied())
            .collect()
    }
}

/// Observed sample; finite values, at least one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Dataset {
    values: Vec<f64>,
}

impl Dataset {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData { min: 1, got: 0 });
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite observation {v}")));
        }
        Ok(Self { values })
    }

    /// Like [`Dataset::new`] but also checks every value against the support.
    pub fn for_family(spec: &FamilySpec, values: Vec<f64>) -> Result<Self> {
        let data = Self::new(values)?;
        for &v in &data.values {
            spec.check_support(v)?;
        }
        Ok(data)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Sum of squared deviations from the mean.
    pub fn centered_ss(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|x| (x - m).powi(2)).sum()
    }
}

impl TryFrom<Vec<f64>> for Dataset {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<Dataset> for Vec<f64> {
    fn from(d: Dataset) -> Self {
        d.values
    }
}

/// An ML fit and its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub spec: FamilySpec,
    pub params: ParamVector,
    pub log_likelihood: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FittedModel {
    pub fn dist(&self) -> Dist {
        Dist::from_params(&self.spec, &self.params)
    }
}

/// Sum of log densities of `data` under `params`.
pub fn log_likelihood(spec: &FamilySpec, params: &ParamVector, data: &[f64]) -> f64 {
    let d = Dist::from_params(spec, params);
    data.iter().map(|&x| d.ln_pdf(x)).sum()
}

/// `log f(x; params)`; `-inf` outside the support.
pub fn log_density(spec: &FamilySpec, params: &ParamVector, x: f64) -> Result<f64> {
    check_params(spec, params)?;
    Ok(Dist::from_params(spec, params).ln_pdf(x))
}

/// `count` iid draws, reproducible from `seed`.
pub fn sample(
    spec: &FamilySpec,
    params: &ParamVector,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_params(spec, params)?;
    let d = Dist::from_params(spec, params);
    let mut rng = crate::rng::stream(seed, crate::rng::domain::SAMPLE, 0);
    Ok((0..count).map(|_| d.sample(&mut rng)).collect())
}

fn check_params(spec: &FamilySpec, params: &ParamVector) -> Result<()> {
    if params.family() != spec.family {
        return Err(Error::ParamDomain(format!(
            "parameters for {} used with {}",
            params.family(),
            spec.family
        )));
    }
    Ok(())
}
