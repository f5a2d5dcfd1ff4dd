//! Flat `key = value` configuration with typed, range-checked keys.
//!
//! Values from a config file are overridden by command-line flags. Every
//! accepted value is normalized (numbers re-printed in round-trip form) so
//! that the echoed file reproduces a run exactly.

use std::collections::BTreeMap;

use ale_core::io::format_f64;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("missing required key '{0}'")]
    Missing(String),
    #[error("invalid value '{value}' for key '{key}': {reason}")]
    Invalid { key: String, value: String, reason: String },
    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    /// Integer `>= min`.
    Int(u64),
    /// Real in `[min, max]`, or `(min, max]` when the flag is set.
    Float { min: f64, max: f64, open_min: bool },
    Bool,
    Choice(&'static [&'static str]),
    FloatList,
    IntList(u64),
    Text,
}

struct KeyDef {
    name: &'static str,
    kind: Kind,
    default: Option<&'static str>,
}

const NONNEG: Kind = Kind::Float { min: 0.0, max: f64::INFINITY, open_min: false };
const POSITIVE: Kind = Kind::Float { min: 0.0, max: f64::INFINITY, open_min: true };

pub const ESTIMATORS: &[&str] = &["ols", "ridge", "lasso", "en", "adaptive", "onestep", "exact-linear", "smooth-lasso"];

const KEYS: &[KeyDef] = &[
    KeyDef { name: "seed", kind: Kind::Int(0), default: Some("1") },
    KeyDef { name: "n", kind: Kind::Int(2), default: Some("200") },
    KeyDef { name: "p", kind: Kind::Int(1), default: None },
    KeyDef { name: "theta0", kind: Kind::FloatList, default: None },
    KeyDef { name: "sigma", kind: NONNEG, default: Some("1") },
    KeyDef { name: "rho", kind: Kind::Float { min: -0.99, max: 0.99, open_min: false }, default: Some("0") },
    KeyDef { name: "intercept", kind: Kind::Bool, default: Some("false") },
    KeyDef { name: "data", kind: Kind::Text, default: None },
    KeyDef { name: "estimator", kind: Kind::Choice(ESTIMATORS), default: None },
    KeyDef { name: "lambda", kind: NONNEG, default: None },
    KeyDef { name: "lambda_c", kind: POSITIVE, default: Some("1") },
    KeyDef { name: "lambda2", kind: NONNEG, default: Some("0") },
    KeyDef { name: "m", kind: Kind::Int(1), default: Some("64") },
    KeyDef { name: "m_rule", kind: Kind::Choice(&["fixed", "sqrt-n"]), default: Some("fixed") },
    KeyDef { name: "reps", kind: Kind::Int(1), default: Some("100") },
    KeyDef { name: "n_grid", kind: Kind::IntList(2), default: Some("100,200,400,800") },
    KeyDef { name: "psi_reference", kind: Kind::Choice(&["true-theta", "fitted"]), default: Some("true-theta") },
    KeyDef { name: "onestep_penalty", kind: Kind::Choice(&["smooth-l1", "ridge"]), default: Some("smooth-l1") },
    KeyDef { name: "tol", kind: POSITIVE, default: Some("1e-8") },
    KeyDef { name: "max_sweeps", kind: Kind::Int(1), default: Some("100000") },
    KeyDef { name: "newton_tol", kind: POSITIVE, default: Some("1e-10") },
    KeyDef { name: "newton_max_iter", kind: Kind::Int(1), default: Some("500") },
    KeyDef { name: "m_grid", kind: Kind::IntList(1), default: Some("4,8,16,32,64,128,256") },
    KeyDef { name: "grid_bound", kind: POSITIVE, default: Some("1") },
    KeyDef { name: "grid_step", kind: POSITIVE, default: None },
    KeyDef { name: "exclude_radius", kind: NONNEG, default: Some("0.01") },
    KeyDef { name: "threads", kind: Kind::Int(1), default: None },
    KeyDef { name: "out", kind: Kind::Text, default: None },
];

fn def(key: &str) -> Result<&'static KeyDef, ConfigError> {
    KEYS.iter().find(|k| k.name == key).ok_or_else(|| ConfigError::UnknownKey(key.to_string()))
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), value: value.into(), reason: reason.into() }
}

fn normalize_int(key: &str, raw: &str, min: u64) -> Result<String, ConfigError> {
    let v: u64 = raw.parse().map_err(|_| invalid(key, raw, "expected a non-negative integer"))?;
    if v < min {
        return Err(invalid(key, raw, format!("must be >= {min}")));
    }
    Ok(v.to_string())
}

fn normalize_float(key: &str, raw: &str, min: f64, max: f64, open_min: bool) -> Result<String, ConfigError> {
    let v: f64 = raw.parse().map_err(|_| invalid(key, raw, "expected a number"))?;
    if !v.is_finite() {
        return Err(invalid(key, raw, "must be finite"));
    }
    if (open_min && v <= min) || v < min || v > max {
        let lo = if open_min { "(" } else { "[" };
        return Err(invalid(key, raw, format!("must lie in {lo}{min}, {max}]")));
    }
    Ok(format_f64(v))
}

/// Validates `raw` for `key` and returns its normalized text.
fn normalize(key: &str, raw: &str) -> Result<String, ConfigError> {
    let d = def(key)?;
    let raw = raw.trim();
    match d.kind {
        Kind::Int(min) => normalize_int(key, raw, min),
        Kind::Float { min, max, open_min } => normalize_float(key, raw, min, max, open_min),
        Kind::Bool => match raw {
            "true" | "1" | "yes" => Ok("true".into()),
            "false" | "0" | "no" => Ok("false".into()),
            _ => Err(invalid(key, raw, "expected true or false")),
        },
        Kind::Choice(options) => {
            if options.contains(&raw) {
                Ok(raw.to_string())
            } else {
                Err(invalid(key, raw, format!("expected one of {}", options.join(", "))))
            }
        }
        Kind::FloatList => {
            let items = split_list(raw);
            if items.is_empty() {
                return Err(invalid(key, raw, "empty list"));
            }
            let parts = items
                .iter()
                .map(|s| normalize_float(key, s, f64::NEG_INFINITY, f64::INFINITY, false))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(parts.join(","))
        }
        Kind::IntList(min) => {
            let items = split_list(raw);
            if items.is_empty() {
                return Err(invalid(key, raw, "empty list"));
            }
            let parts = items.iter().map(|s| normalize_int(key, s, min)).collect::<Result<Vec<_>, _>>()?;
            Ok(parts.join(","))
        }
        Kind::Text => {
            if raw.is_empty() {
                Err(invalid(key, raw, "empty value"))
            } else {
                Ok(raw.to_string())
            }
        }
    }
}

fn split_list(raw: &str) -> Vec<&str> {
    raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect()
}

/// Parses config file text into raw key/value pairs.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line: i + 1, message: format!("expected 'key = value', got '{line}'") })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1, message: "empty key".into() });
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// Effective settings: defaults, then file values, then flag overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn build<I>(layers: I) -> Result<Self, ConfigError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut values = BTreeMap::new();
        for d in KEYS {
            if let Some(v) = d.default {
                values.insert(d.name.to_string(), normalize(d.name, v)?);
            }
        }
        for (k, v) in layers {
            let norm = normalize(&k, &v)?;
            values.insert(k, norm);
        }
        Ok(Self { values })
    }

    /// Sets `key` only when it has no value yet.
    pub fn set_default(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !self.values.contains_key(key) {
            let norm = normalize(key, value)?;
            self.values.insert(key.to_string(), norm);
        }
        Ok(())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, ConfigError> {
        self.raw(key).ok_or_else(|| ConfigError::Missing(key.to_string()))
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| invalid(key, raw, "integer out of range"))
    }

    pub fn opt_usize(&self, key: &str) -> Result<Option<usize>, ConfigError> {
        self.raw(key).map(|_| self.usize(key)).transpose()
    }

    pub fn u64(&self, key: &str) -> Result<u64, ConfigError> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| invalid(key, raw, "integer out of range"))
    }

    pub fn u32(&self, key: &str) -> Result<u32, ConfigError> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| invalid(key, raw, "integer out of range"))
    }

    pub fn f64(&self, key: &str) -> Result<f64, ConfigError> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| invalid(key, raw, "expected a number"))
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        self.raw(key).map(|_| self.f64(key)).transpose()
    }

    pub fn bool(&self, key: &str) -> Result<bool, ConfigError> {
        Ok(self.require(key)? == "true")
    }

    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        let raw = self.require(key)?;
        split_list(raw).iter().map(|s| s.parse().map_err(|_| invalid(key, raw, "expected numbers"))).collect()
    }

    pub fn usize_list(&self, key: &str) -> Result<Vec<usize>, ConfigError> {
        let raw = self.require(key)?;
        split_list(raw).iter().map(|s| s.parse().map_err(|_| invalid(key, raw, "integer out of range"))).collect()
    }

    pub fn u32_list(&self, key: &str) -> Result<Vec<u32>, ConfigError> {
        let raw = self.require(key)?;
        split_list(raw).iter().map(|s| s.parse().map_err(|_| invalid(key, raw, "integer out of range"))).collect()
    }

    /// Sorted `key = value` lines, excluding the output directory.
    pub fn echo(&self) -> String {
        self.values
            .iter()
            .filter(|(k, _)| k.as_str() != "out")
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Effective values as a JSON object, excluding the output directory.
    pub fn to_json(&self) -> serde_json::Value {
        let map = self
            .values
            .iter()
            .filter(|(k, _)| k.as_str() != "out")
            .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
            .collect();
        serde_json::Value::Object(map)
    }
}
