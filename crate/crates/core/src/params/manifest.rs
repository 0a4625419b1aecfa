use std::collections::BTreeMap;
use std::path::{Component, Path};

use serde::{Deserialize, Serialize};

use super::schema::{validate_table, ParameterTable, GLOBAL_PARAMETERS};
use super::{GlobalConfig, ParamError, Result};
use crate::raster::ColorSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelType {
    Native,
    External,
}

impl ModelType {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelType::Native => "native",
            ModelType::External => "external",
        }
    }
}

/// A file a model needs at run time, fetched into the asset cache.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSpec {
    pub relative_path: String,
    pub url: String,
    pub sha256: String,
}

impl AssetSpec {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.sha256.len() != 64 || !self.sha256.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(format!("asset {}: sha256 must be 64 lowercase hex characters", self.relative_path));
        }
        if !is_safe_relative(&self.relative_path) {
            return Err(format!(
                "asset path {:?} must be relative and stay inside the model cache",
                self.relative_path
            ));
        }
        if self.relative_path == ".lock" {
            return Err("asset path .lock is reserved".into());
        }
        Ok(())
    }
}

/// True for non-empty relative paths without `..` components.
pub(crate) fn is_safe_relative(path: &str) -> bool {
    !path.is_empty() && Path::new(path).components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir))
}

/// Smoothing a model's authors recommend when the user asks for "default".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingPreference {
    pub size: usize,
    pub std: f64,
}

/// Pixels a model trims from each side of its output (valid-region models).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BorderTrim {
    pub top: usize,
    pub bottom: usize,
    pub left: usize,
    pub right: usize,
}

/// How to start an external model's process.
///
/// `command` entries may use the placeholders `{model_dir}` and `{assets_dir}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaunchSpec {
    pub command: Vec<String>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_secs: Option<u64>,
}

/// Per-model descriptor, read from `models/<NAME>/manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub name: String,
    pub long_name: String,
    pub citation: String,
    pub model_type: ModelType,
    #[serde(default)]
    pub model_files: Vec<AssetSpec>,
    #[serde(default)]
    pub parameters: ParameterTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preferred_color_space: Option<ColorSpace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preferred_smoothing: Option<SmoothingPreference>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub border_trim: Option<BorderTrim>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub launch: Option<LaunchSpec>,
}

impl ModelManifest {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let _syntax: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| ParamError::Parse { source_name: "manifest".into(), message: e.to_string() })?;
        let manifest: ModelManifest =
            serde_json::from_str(text).map_err(|e| ParamError::Schema(format!("manifest: {e}")))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        let schema = |msg: String| ParamError::Schema(format!("model {}: {msg}", self.name));
        if self.name.is_empty() || !is_safe_relative(&self.name) || self.name.contains('/') {
            return Err(ParamError::Schema(format!("invalid model name {:?}", self.name)));
        }
        if let Some(name) = self.parameters.keys().find(|k| GLOBAL_PARAMETERS.contains(&k.as_str())) {
            return Err(ParamError::NameCollision { model: self.name.clone(), name: name.clone() });
        }
        let globals = GlobalConfig::builtin();
        validate_table(&self.parameters, &|other| {
            self.parameters.get(other).or_else(|| globals.get(other)).map(|s| s.default.clone())
        })
        .map_err(schema)?;
        if self.preferred_color_space == Some(ColorSpace::Default) {
            return Err(schema("preferred_color_space cannot be \"default\"".into()));
        }
        if let Some(pref) = self.preferred_smoothing {
            if pref.size % 2 == 0 || !(pref.std > 0.0 && pref.std.is_finite()) {
                return Err(schema("preferred_smoothing needs an odd size and a positive std".into()));
            }
        }
        for asset in &self.model_files {
            asset.validate().map_err(schema)?;
        }
        match (self.model_type, &self.launch) {
            (ModelType::External, None) => return Err(schema("external models need a launch section".into())),
            (ModelType::Native, Some(_)) => return Err(schema("native models cannot declare a launch section".into())),
            (ModelType::External, Some(launch)) => self.validate_launch(launch).map_err(schema)?,
            (ModelType::Native, None) => {}
        }
        Ok(())
    }

    /// Launch commands may only reference the model directory, declared
    /// assets, or programs found on `PATH`.
    fn validate_launch(&self, launch: &LaunchSpec) -> std::result::Result<(), String> {
        if launch.command.is_empty() {
            return Err("launch.command is empty".into());
        }
        if launch.timeout_secs == Some(0) {
            return Err("launch.timeout_secs must be positive".into());
        }
        for arg in &launch.command {
            if let Some(rest) = arg.strip_prefix("{assets_dir}/") {
                if !self.model_files.iter().any(|a| Path::new(&a.relative_path) == Path::new(rest)) {
                    return Err(format!("launch argument {arg:?} names an undeclared asset"));
                }
            } else if let Some(rest) = arg.strip_prefix("{model_dir}/") {
                if !is_safe_relative(rest) {
                    return Err(format!("launch argument {arg:?} escapes the model directory"));
                }
            } else if arg.starts_with('/') || Path::new(arg).components().any(|c| c == Component::ParentDir) {
                return Err(format!("launch argument {arg:?} references a file outside the model directory"));
            }
        }
        Ok(())
    }
}

/// Loads and validates a model manifest file.
pub fn load_manifest(path: &Path) -> Result<ModelManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| ParamError::Io { path: path.to_path_buf(), source: e })?;
    ModelManifest::from_json_str(&text).map_err(|e| e.in_file(path))
}
