//! Parameter schemas, model manifests and the precedence resolver.
//!
//! Every parameter value is taken from the first layer that provides it:
//!
//! 1. the run (a `parameters` block on one run, or `--param` on the command line)
//! 2. the experiment (`experiment.parameters`)
//! 3. the model manifest's default (model-specific parameters only)
//! 4. the global default from `config.json`
//!
//! The aliases `color_space: default` and `do_smoothing: default` are
//! resolved afterwards by [`resolve_aliases`], which also consults the
//! manifest's `preferred_*` fields.

mod describe;
mod manifest;
mod schema;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use describe::describe;
pub use manifest::{load_manifest, AssetSpec, BorderTrim, LaunchSpec, ModelManifest, ModelType, SmoothingPreference};
pub use schema::{
    load_global_config, Constraint, CrossRule, GlobalConfig, ParameterSpec, ParameterTable, Scalar, GLOBAL_PARAMETERS,
};

use crate::mapops::{ScaleMode, Smoothing};
use crate::raster::ColorSpace;
use schema::cross_holds;

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("failed to parse {source_name}: {message}")]
    Parse { source_name: String, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("model {model} declares parameter {name}, which is a global parameter")]
    NameCollision { model: String, name: String },
    #[error("unknown parameter {name} in the {layer} layer")]
    UnknownParameter { name: String, layer: Provenance },
    #[error("parameter {name}: value {value} violates {rule} (valid values: {valid_values})")]
    ConstraintViolation { name: String, value: Scalar, rule: String, valid_values: String },
    #[error("parameter {name}: value {value} must be {relation} {other} ({other_value})")]
    CrossFieldViolation { name: String, value: Scalar, relation: &'static str, other: String, other_value: Scalar },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ParamError {
    fn in_file(self, path: &Path) -> Self {
        match self {
            ParamError::Parse { message, .. } => ParamError::Parse { source_name: path.display().to_string(), message },
            ParamError::Schema(msg) => ParamError::Schema(format!("{}: {msg}", path.display())),
            other => other,
        }
    }
}

pub type Result<T, E = ParamError> = std::result::Result<T, E>;

/// A partial name → value mapping for one precedence layer.
pub type ParamMap = BTreeMap<String, Scalar>;

/// Which layer supplied a resolved value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Run,
    Experiment,
    ModelDefault,
    GlobalDefault,
}

impl Provenance {
    /// Highest precedence first.
    pub const LADDER: [Provenance; 4] =
        [Provenance::Run, Provenance::Experiment, Provenance::ModelDefault, Provenance::GlobalDefault];

    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Run => "run",
            Provenance::Experiment => "experiment",
            Provenance::ModelDefault => "model_default",
            Provenance::GlobalDefault => "global_default",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Picks the highest-precedence layer that has a value.
pub fn select<T>(
    run: Option<T>,
    experiment: Option<T>,
    model_default: Option<T>,
    global_default: Option<T>,
) -> Option<(T, Provenance)> {
    [run, experiment, model_default, global_default]
        .into_iter()
        .zip(Provenance::LADDER)
        .find_map(|(value, layer)| value.map(|v| (v, layer)))
}

/// Fully resolved parameters for one model invocation.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResolvedParams {
    values: BTreeMap<String, Scalar>,
    provenance: BTreeMap<String, Provenance>,
}

impl ResolvedParams {
    pub fn values(&self) -> &BTreeMap<String, Scalar> {
        &self.values
    }

    pub fn provenance(&self) -> &BTreeMap<String, Provenance> {
        &self.provenance
    }

    pub fn get(&self, name: &str) -> Option<&Scalar> {
        self.values.get(name)
    }

    pub fn provenance_of(&self, name: &str) -> Option<Provenance> {
        self.provenance.get(name).copied()
    }

    pub fn f64_or(&self, name: &str, fallback: f64) -> f64 {
        self.get(name).and_then(Scalar::as_f64).unwrap_or(fallback)
    }

    pub fn i64_or(&self, name: &str, fallback: i64) -> i64 {
        self.get(name).and_then(Scalar::as_i64).unwrap_or(fallback)
    }

    pub fn str_or<'a>(&'a self, name: &str, fallback: &'a str) -> &'a str {
        self.get(name).and_then(Scalar::as_str).unwrap_or(fallback)
    }

    fn insert(&mut self, name: &str, value: Scalar, layer: Provenance) {
        self.values.insert(name.to_string(), value);
        self.provenance.insert(name.to_string(), layer);
    }
}

/// Resolves every global and model-specific parameter through the ladder.
pub fn resolve(
    manifest: &ModelManifest,
    global: &GlobalConfig,
    experiment_params: &ParamMap,
    run_params: &ParamMap,
) -> Result<ResolvedParams> {
    for (layer, map) in [(Provenance::Run, run_params), (Provenance::Experiment, experiment_params)] {
        if let Some(name) = map.keys().find(|k| !global.contains(k) && !manifest.parameters.contains_key(*k)) {
            return Err(ParamError::UnknownParameter { name: name.clone(), layer });
        }
    }

    let mut resolved = ResolvedParams::default();
    let declared = global
        .parameters()
        .iter()
        .map(|(name, spec)| (name, spec, None))
        .chain(manifest.parameters.iter().map(|(name, spec)| (name, spec, Some(&spec.default))));
    for (name, spec, model_default) in declared {
        let global_default = model_default.is_none().then_some(&spec.default);
        let (value, layer) = select(run_params.get(name), experiment_params.get(name), model_default, global_default)
            .expect("every declared parameter has a default");
        let value = spec.validate(name, value)?;
        resolved.insert(name, value, layer);
    }

    let specs = global.parameters().iter().chain(manifest.parameters.iter());
    for (name, spec) in specs {
        if let Constraint::CrossField { rule, other } = &spec.constraint {
            let value = &resolved.values[name];
            let other_value = resolved
                .values
                .get(other)
                .ok_or_else(|| ParamError::Schema(format!("parameter {name} refers to unknown parameter {other}")))?;
            if !cross_holds(*rule, value, other_value) {
                return Err(ParamError::CrossFieldViolation {
                    name: name.clone(),
                    value: value.clone(),
                    relation: match rule {
                        CrossRule::LessThan => "less than",
                        CrossRule::GreaterThan => "greater than",
                    },
                    other: other.clone(),
                    other_value: other_value.clone(),
                });
            }
        }
    }
    Ok(resolved)
}

/// Post-processing and pre-processing settings with every alias resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectivePipelineSettings {
    pub color_space: ColorSpace,
    pub smoothing: Smoothing,
    pub scale_mode: ScaleMode,
    pub scale_min: f64,
    pub scale_max: f64,
}

/// Turns `default` aliases into concrete settings for an image of `image_dims`.
///
/// Values missing from `rp` fall back to the built-in global defaults, which
/// only matters for hand-built parameter sets; [`resolve`] always fills them.
pub fn resolve_aliases(
    rp: &ResolvedParams,
    manifest: &ModelManifest,
    image_dims: (usize, usize),
) -> EffectivePipelineSettings {
    let color_space = match rp.str_or("color_space", "default").parse::<ColorSpace>() {
        Ok(ColorSpace::Default) | Err(_) => manifest.preferred_color_space.unwrap_or(ColorSpace::Rgb),
        Ok(space) => space,
    };

    let custom =
        Smoothing::Gaussian { size: rp.i64_or("smooth_size", 9).max(1) as usize, std: rp.f64_or("smooth_std", 3.0) };
    let smoothing = match rp.str_or("do_smoothing", "default") {
        "none" => Smoothing::None,
        "custom" => custom,
        "proportional" => Smoothing::proportional(rp.f64_or("smooth_prop", 0.05), image_dims),
        _ => manifest.preferred_smoothing.map(|p| Smoothing::Gaussian { size: p.size, std: p.std }).unwrap_or(custom),
    };

    let scale_mode = rp.str_or("scale_output", "min-max").parse().unwrap_or(ScaleMode::MinMax);
    EffectivePipelineSettings {
        color_space,
        smoothing,
        scale_mode,
        scale_min: rp.f64_or("scale_min", 0.0),
        scale_max: rp.f64_or("scale_max", 1.0),
    }
}
