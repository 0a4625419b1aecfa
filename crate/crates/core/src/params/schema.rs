use std::fmt;
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{ParamError, Result};

/// A parameter value as it appears in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Scalar {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Scalar::Int(i) => Some(*i as f64),
            Scalar::Float(f) => Some(*f),
            Scalar::Str(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Scalar::Int(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Scalar::Str(s) => Some(s),
            _ => None,
        }
    }

    /// Parses a command-line value: integer, then float, then string.
    pub fn parse_cli(text: &str) -> Scalar {
        if let Ok(i) = text.parse::<i64>() {
            Scalar::Int(i)
        } else if let Ok(f) = text.parse::<f64>() {
            Scalar::Float(f)
        } else {
            Scalar::Str(text.to_string())
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(i) => write!(f, "{i}"),
            Scalar::Float(x) => write!(f, "{x:?}"),
            Scalar::Str(s) => write!(f, "\"{s}\""),
        }
    }
}

impl From<&str> for Scalar {
    fn from(s: &str) -> Self {
        Scalar::Str(s.to_string())
    }
}

impl From<i64> for Scalar {
    fn from(i: i64) -> Self {
        Scalar::Int(i)
    }
}

impl From<f64> for Scalar {
    fn from(f: f64) -> Self {
        Scalar::Float(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossRule {
    LessThan,
    GreaterThan,
}

/// Machine-checkable counterpart of a parameter's prose `valid_values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Constraint {
    Enum {
        values: Vec<String>,
    },
    IntRange {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_exclusive: Option<i64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_exclusive: Option<i64>,
        #[serde(default)]
        odd: bool,
    },
    FloatRange {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        min_exclusive: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_exclusive: Option<f64>,
    },
    /// A float whose validity depends on another parameter's value.
    CrossField {
        rule: CrossRule,
        other: String,
    },
}

impl Constraint {
    /// Short rendering of the rule for error messages.
    pub fn summary(&self) -> String {
        let bounds = |lo: Option<String>, hi: Option<String>| match (lo, hi) {
            (Some(lo), Some(hi)) => format!(" in ({lo}, {hi})"),
            (Some(lo), None) => format!(" > {lo}"),
            (None, Some(hi)) => format!(" < {hi}"),
            (None, None) => String::new(),
        };
        match self {
            Constraint::Enum { values } => format!("one of {values:?}"),
            Constraint::IntRange { min_exclusive, max_exclusive, odd } => format!(
                "{}integer{}",
                if *odd { "odd " } else { "" },
                bounds(min_exclusive.map(|v| v.to_string()), max_exclusive.map(|v| v.to_string()))
            ),
            Constraint::FloatRange { min_exclusive, max_exclusive } => {
                format!("float{}", bounds(min_exclusive.map(|v| v.to_string()), max_exclusive.map(|v| v.to_string())))
            }
            Constraint::CrossField { rule: CrossRule::LessThan, other } => format!("float < {other}"),
            Constraint::CrossField { rule: CrossRule::GreaterThan, other } => format!("float > {other}"),
        }
    }

    /// Checks the constraint's own well-formedness.
    fn check_shape(&self) -> std::result::Result<(), String> {
        match self {
            Constraint::Enum { values } if values.is_empty() => Err("enum constraint lists no values".into()),
            Constraint::IntRange { min_exclusive: Some(lo), max_exclusive: Some(hi), .. } if hi - lo < 2 => {
                Err(format!("integer range ({lo}, {hi}) is empty"))
            }
            Constraint::FloatRange { min_exclusive: Some(lo), max_exclusive: Some(hi) } if lo >= hi => {
                Err(format!("float range ({lo}, {hi}) is empty"))
            }
            Constraint::CrossField { other, .. } if other.is_empty() => {
                Err("cross-field rule names no parameter".into())
            }
            _ => Ok(()),
        }
    }

    /// Validates a single value, returning it in canonical form (integers
    /// are widened for float-valued parameters).
    ///
    /// Cross-field rules only check the type here; the relation itself is
    /// checked once every value is known.
    pub fn check(&self, value: &Scalar) -> Option<Scalar> {
        match self {
            Constraint::Enum { values } => {
                let s = value.as_str()?;
                values.iter().any(|v| v == s).then(|| value.clone())
            }
            Constraint::IntRange { min_exclusive, max_exclusive, odd } => {
                let i = value.as_i64()?;
                let ok = min_exclusive.is_none_or(|lo| i > lo)
                    && max_exclusive.is_none_or(|hi| i < hi)
                    && (!odd || i.rem_euclid(2) == 1);
                ok.then_some(Scalar::Int(i))
            }
            Constraint::FloatRange { min_exclusive, max_exclusive } => {
                let f = value.as_f64().filter(|f| f.is_finite())?;
                let ok = min_exclusive.is_none_or(|lo| f > lo) && max_exclusive.is_none_or(|hi| f < hi);
                ok.then_some(Scalar::Float(f))
            }
            Constraint::CrossField { .. } => value.as_f64().filter(|f| f.is_finite()).map(Scalar::Float),
        }
    }
}

/// Declaration of one parameter: default, prose for humans, and the rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterSpec {
    pub default: Scalar,
    pub description: String,
    pub valid_values: String,
    pub constraint: Constraint,
}

impl ParameterSpec {
    /// Validates `value` against this parameter's constraint.
    pub fn validate(&self, name: &str, value: &Scalar) -> Result<Scalar> {
        self.constraint.check(value).ok_or_else(|| ParamError::ConstraintViolation {
            name: name.to_string(),
            value: value.clone(),
            rule: self.constraint.summary(),
            valid_values: self.valid_values.clone(),
        })
    }
}

pub type ParameterTable = IndexMap<String, ParameterSpec>;

/// Checks every declaration in a table and, for cross-field rules whose
/// partner is in `scope`, that the defaults agree with each other.
pub(crate) fn validate_table(
    table: &ParameterTable,
    scope: &dyn Fn(&str) -> Option<Scalar>,
) -> std::result::Result<(), String> {
    for (name, spec) in table {
        spec.constraint.check_shape().map_err(|e| format!("parameter {name}: {e}"))?;
        let default = spec.validate(name, &spec.default).map_err(|e| format!("default of {name} is invalid: {e}"))?;
        if let Constraint::CrossField { rule, other } = &spec.constraint {
            let partner =
                scope(other).ok_or_else(|| format!("parameter {name} refers to unknown parameter {other}"))?;
            if !cross_holds(*rule, &default, &partner) {
                return Err(format!("defaults of {name} and {other} violate {}", spec.constraint.summary()));
            }
        }
    }
    Ok(())
}

pub(crate) fn cross_holds(rule: CrossRule, value: &Scalar, other: &Scalar) -> bool {
    match (value.as_f64(), other.as_f64()) {
        (Some(a), Some(b)) => match rule {
            CrossRule::LessThan => a < b,
            CrossRule::GreaterThan => a > b,
        },
        _ => false,
    }
}

/// Names of the eight framework-wide parameters.
pub const GLOBAL_PARAMETERS: [&str; 8] = [
    "do_smoothing",
    "smooth_size",
    "smooth_std",
    "smooth_prop",
    "scale_output",
    "scale_min",
    "scale_max",
    "color_space",
];

/// The rule each global parameter must carry; the pipeline relies on these.
fn canonical_constraint(name: &str) -> Constraint {
    let strings = |v: &[&str]| Constraint::Enum { values: v.iter().map(|s| s.to_string()).collect() };
    match name {
        "do_smoothing" => strings(&["default", "none", "custom", "proportional"]),
        "smooth_size" => Constraint::IntRange { min_exclusive: Some(0), max_exclusive: None, odd: true },
        "smooth_std" | "smooth_prop" => Constraint::FloatRange { min_exclusive: Some(0.0), max_exclusive: None },
        "scale_output" => strings(&["min-max", "none", "normalized"]),
        "scale_min" => Constraint::CrossField { rule: CrossRule::LessThan, other: "scale_max".into() },
        "scale_max" => Constraint::CrossField { rule: CrossRule::GreaterThan, other: "scale_min".into() },
        "color_space" => strings(&["default", "RGB", "gray", "YCbCr", "LAB", "HSV"]),
        _ => unreachable!("not a global parameter: {name}"),
    }
}

const BUILTIN_CONFIG: &str = include_str!("../../config.json");

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    parameters: ParameterTable,
}

/// Schema of the framework-wide parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalConfig {
    parameters: ParameterTable,
}

impl GlobalConfig {
    /// The configuration shipped with the crate.
    pub fn builtin() -> Self {
        GlobalConfig::from_json_str(BUILTIN_CONFIG).expect("shipped config.json is valid")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        // a syntax pass first so malformed JSON is a Parse error; the typed pass keeps key order
        let _syntax: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| ParamError::Parse { source_name: "global config".into(), message: e.to_string() })?;
        let file: ConfigFile =
            serde_json::from_str(text).map_err(|e| ParamError::Schema(format!("global config: {e}")))?;
        for name in file.parameters.keys() {
            if !GLOBAL_PARAMETERS.contains(&name.as_str()) {
                return Err(ParamError::Schema(format!("global config declares unknown parameter {name}")));
            }
        }
        for name in GLOBAL_PARAMETERS {
            let spec = file
                .parameters
                .get(name)
                .ok_or_else(|| ParamError::Schema(format!("global config is missing parameter {name}")))?;
            if spec.constraint != canonical_constraint(name) {
                return Err(ParamError::Schema(format!(
                    "global parameter {name} must use the constraint {}",
                    canonical_constraint(name).summary()
                )));
            }
        }
        validate_table(&file.parameters, &|other| file.parameters.get(other).map(|s| s.default.clone()))
            .map_err(ParamError::Schema)?;
        Ok(GlobalConfig { parameters: file.parameters })
    }

    pub fn parameters(&self) -> &ParameterTable {
        &self.parameters
    }

    pub fn get(&self, name: &str) -> Option<&ParameterSpec> {
        self.parameters.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.parameters.contains_key(name)
    }
}

/// Loads and validates a global configuration file.
pub fn load_global_config(path: &Path) -> Result<GlobalConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| ParamError::Io { path: path.to_path_buf(), source: e })?;
    GlobalConfig::from_json_str(&text).map_err(|e| e.in_file(path))
}
