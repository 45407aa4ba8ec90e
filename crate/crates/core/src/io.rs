//! Input parsing and the JSON writer used for every report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::families::{Family, FamilySpec, FittedModel, ParamVector};
use crate::simstudy::CoverageConfig;
use crate::within_sample::CensoredSample;

fn invalid(msg: impl Into<String>) -> Error {
    Error::Invalid(msg.into())
}

/// Numbers from a JSON array (or `{"data": [...]}`) or a single-column CSV
/// with an optional header line.
pub fn parse_dataset(text: &str) -> Result<Vec<f64>> {
    let trimmed = text.trim_start_matches('\u{feff}').trim();
    if trimmed.starts_with('[') || trimmed.starts_with('{') {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Shape {
            Bare(Vec<f64>),
            Wrapped { data: Vec<f64> },
        }
        let shape: Shape =
            serde_json::from_str(trimmed).map_err(|e| invalid(format!("data JSON: {e}")))?;
        let values = match shape {
            Shape::Bare(v) | Shape::Wrapped { data: v } => v,
        };
        return finite(values);
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(trimmed.as_bytes());
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| invalid(format!("data CSV: {e}")))?;
        if record.len() != 1 {
            return Err(invalid(format!(
                "data CSV line {}: expected one column, got {}",
                i + 1,
                record.len()
            )));
        }
        let field = &record[0];
        if field.is_empty() {
            continue;
        }
        match field.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if i == 0 => {}
            Err(_) => {
                return Err(invalid(format!(
                    "data CSV line {}: '{field}' is not a number",
                    i + 1
                )))
            }
        }
    }
    finite(values)
}

fn finite(values: Vec<f64>) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(invalid("no observations"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("non-finite observation {v}")));
    }
    Ok(values)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    #[serde(alias = "times", alias = "failures")]
    failure_times: Vec<f64>,
    n: usize,
    #[serde(default)]
    t_c: Option<f64>,
}

/// `{"failure_times": [...], "n": units on test, "t_c": censoring time}`.
/// `t_c` may instead come from `t_c_override`; if both are given they must
/// agree.
pub fn parse_censored_envelope(text: &str, t_c_override: Option<f64>) -> Result<CensoredSample> {
    let e: Envelope =
        serde_json::from_str(text).map_err(|e| invalid(format!("censored data JSON: {e}")))?;
    let t_c = match (e.t_c, t_c_override) {
        (Some(a), Some(b)) if a != b => {
            return Err(invalid(format!(
                "t_c = {a} in the data but {b} on the command line"
            )))
        }
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(invalid("censoring time t_c missing")),
    };
    CensoredSample::new(e.failure_times, e.n, t_c)
}

/// On-disk form of a [`FittedModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModelJson {
    pub family: Family,
    #[serde(default)]
    pub fixed_hyperparams: BTreeMap<String, f64>,
    #[serde(default)]
    pub varied_param: Option<String>,
    pub params: BTreeMap<String, f64>,
    #[serde(default, with = "crate::ext_real::option")]
    pub log_likelihood: Option<f64>,
    #[serde(default)]
    pub converged: Option<bool>,
    #[serde(default)]
    pub iterations: Option<usize>,
}

impl From<&FittedModel> for FittedModelJson {
    fn from(m: &FittedModel) -> Self {
        Self {
            family: m.spec.family,
            fixed_hyperparams: m.spec.fixed_hyperparams.clone(),
            varied_param: Some(m.spec.varied_param.clone()),
            params: m.params.to_map(),
            log_likelihood: Some(m.log_likelihood),
            converged: Some(m.converged),
            iterations: Some(m.iterations),
        }
    }
}

impl FittedModelJson {
    pub fn into_model(self) -> Result<FittedModel> {
        let spec = FamilySpec::from_parts(self.family, self.fixed_hyperparams, self.varied_param)?;
        let params = ParamVector::from_map(self.family, &self.params)?;
        Ok(FittedModel {
            spec,
            params,
            log_likelihood: self.log_likelihood.unwrap_or(f64::NAN),
            converged: self.converged.unwrap_or(true),
            iterations: self.iterations.unwrap_or(0),
        })
    }
}

pub fn parse_fitted_model(text: &str) -> Result<FittedModel> {
    let j: FittedModelJson =
        serde_json::from_str(text).map_err(|e| invalid(format!("model JSON: {e}")))?;
    j.into_model()
}

pub fn parse_coverage_config(text: &str) -> Result<CoverageConfig> {
    let c: CoverageConfig =
        serde_json::from_str(text).map_err(|e| invalid(format!("coverage config JSON: {e}")))?;
    c.validate()?;
    Ok(c)
}

/// 17 significant digits, `%.17g` style; non-finite values as
/// `inf`, `-inf`, `nan`.
pub fn fmt17(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() {
            "nan".into()
        } else if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    if x == 0.0 {
        return if x.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let m = mant.trim_end_matches('0').trim_end_matches('.');
        format!("{m}e{exp}")
    }
}

/// Pretty JSON with every float at 17 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| invalid(format!("serialize: {e}")))?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| {
        for _ in 0..d {
            out.push_str("  ");
        }
    };
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&fmt17(n.as_f64().expect("f64")));
            } else {
                let _ = write!(out, "{n}");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string")),
        Value::Array(a) if a.is_empty() => out.push_str("[]"),
        Value::Array(a) => {
            // short numeric rows stay on one line
            if a.len() <= 8 && a.iter().all(|x| x.is_number()) {
                out.push('[');
                for (i, x) in a.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    write_value(out, x, depth);
                }
                out.push(']');
                return;
            }
            out.push_str("[\n");
            for (i, x) in a.iter().enumerate() {
                pad(out, depth + 1);
                write_value(out, x, depth + 1);
                out.push_str(if i + 1 < a.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push(']');
        }
        Value::Object(m) if m.is_empty() => out.push_str("{}"),
        Value::Object(m) => {
            out.push_str("{\n");
            for (i, (k, x)) in m.iter().enumerate() {
                pad(out, depth + 1);
                out.push_str(&serde_json::to_string(k).expect("key"));
                out.push_str(": ");
                write_value(out, x, depth + 1);
                out.push_str(if i + 1 < m.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push('}');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    #[allow(clippy::excessive_precision)]
    fn fmt17_examples() {
        assert_eq!(fmt17(0.1), "0.10000000000000001");
        assert_eq!(fmt17(1.0), "1");
        assert_eq!(fmt17(-2.5), "-2.5");
        assert_eq!(fmt17(1e-7), "9.9999999999999995e-8");
        assert_eq!(fmt17(123456789.0), "123456789");
        assert_eq!(fmt17(1e17), "1e17");
        assert_eq!(fmt17(f64::NEG_INFINITY), "-inf");
        for x in [
            0.1,
            1.0 / 3.0,
            6.02e23,
            -1e-300,
            5.991464547107979,
            99999.999999999985,
        ] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn datasets() {
        assert_eq!(parse_dataset("[-1, 0, 1]").unwrap(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(parse_dataset("{\"data\": [2.5]}").unwrap(), vec![2.5]);
        assert_eq!(
            parse_dataset("x\n1.5\n2\n\n3e0\n").unwrap(),
            vec![1.5, 2.0, 3.0]
        );
        assert_eq!(parse_dataset("1\r\n2\r\n").unwrap(), vec![1.0, 2.0]);
        assert!(parse_dataset("1\nabc\n").is_err());
        assert!(parse_dataset("1,2\n").is_err());
        assert!(parse_dataset("header\n").is_err());
        assert!(parse_dataset("[1, \"inf\"]").is_err());
        assert!(parse_dataset("1\nNaN\n").is_err());
    }

    #[test]
    fn envelope() {
        let parse = parse_censored_envelope;
        let s = parse(
            r#"{"failure_times": [0.3, 0.1], "n": 10, "t_c": 0.5}"#,
            None,
        )
        .unwrap();
        assert_eq!(s.failure_times, vec![0.1, 0.3]);
        assert!(parse(r#"{"failure_times": [0.7], "n": 10, "t_c": 0.5}"#, None).is_err());
        assert!(parse(r#"{"failure_times": [0.1], "n": 10}"#, None).is_err());
        assert!(parse(r#"{"failure_times": [0.1], "n": 10}"#, Some(0.5)).is_ok());
        assert!(parse(
            r#"{"failure_times": [0.1], "n": 10, "t_c": 0.4}"#,
            Some(0.5)
        )
        .is_err());
        assert!(parse(
            r#"{"failure_times": [0.1], "n": 10, "t_c": 0.5, "x": 1}"#,
            None
        )
        .is_err());
    }

    #[test]
    fn fitted_model_round_trip() {
        let spec = FamilySpec::new(Family::Gamma).unwrap();
        let data = crate::families::Dataset::new(vec![0.5, 1.2, 2.0, 0.7]).unwrap();
        let fit = crate::families::fit_ml(&spec, &data).unwrap();
        let text = to_json(&FittedModelJson::from(&fit)).unwrap();
        let back = parse_fitted_model(&text).unwrap();
        assert_eq!(back, fit);
        assert!(
            parse_fitted_model(r#"{"family": "gamma", "params": {"alpha": -1, "beta": 1}}"#)
                .is_err()
        );
    }

    #[test]
    fn writer_output_parses_back() {
        let v = serde_json::json!({"a": [0.1, 2, -3.5], "b": {"c": "x\"y", "d": null, "e": []}, "f": 1e-7});
        let text = to_json(&v).unwrap();
        let back: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
        assert!(text.contains("0.10000000000000001"));
    }

    proptest::proptest! {
        #[test]
        fn fmt17_round_trips(x in proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL) {
            proptest::prop_assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }

        #[test]
        fn dataset_text_round_trips(xs in proptest::collection::vec(-1e300f64..1e300, 1..20)) {
            let json = to_json(&xs).unwrap();
            proptest::prop_assert_eq!(parse_dataset(&json).unwrap(), xs.clone());
            let csv: String = xs.iter().map(|x| fmt17(*x) + "\n").collect();
            proptest::prop_assert_eq!(parse_dataset(&csv).unwrap(), xs);
        }
    }
}
