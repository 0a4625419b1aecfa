//! Model plugin interface, the built-in models, and the model registry.
//!
//! Built-in models (`cG`, `IMSIG`, `uniform`) are compiled in. External
//! models are discovered from `<models_dir>/<NAME>/manifest.json`.

mod native;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

pub use native::{cg_compute, imsig_compute, uniform_compute, working_dims, SIGN_ZERO_TOLERANCE};

use crate::external::ExternalModelHandle;
use crate::params::{load_manifest, ModelManifest, ModelType, ParamError, ResolvedParams};
use crate::raster::{Image, SaliencyMap};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("invalid manifest {path}: {source}")]
    Manifest { path: PathBuf, source: ParamError },
    #[error("manifest {path} names model {name:?} but lives in directory {dir:?}")]
    NameMismatch { path: PathBuf, name: String, dir: String },
    #[error("model {0:?} is registered twice")]
    Duplicate(String),
    #[error("{path}: only external models can be installed from a models directory")]
    NotExternal { path: PathBuf },
    #[error("cannot read models directory {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

/// Signature every in-process model implements.
pub type ComputeFn = fn(&Image, &ResolvedParams) -> SaliencyMap;

/// An in-process model: its manifest and a deterministic compute function.
#[derive(Debug, Clone)]
pub struct NativeModel {
    pub manifest: ModelManifest,
    pub compute: ComputeFn,
}

impl NativeModel {
    /// Runs the model and tags the raw map with its provenance.
    pub fn run(&self, img: &Image, params: &ResolvedParams) -> SaliencyMap {
        (self.compute)(img, params).with_provenance(&self.manifest.name, params.clone())
    }
}

#[derive(Debug, Clone)]
pub enum ModelHandle {
    Native(Arc<NativeModel>),
    External(Arc<ExternalModelHandle>),
}

impl ModelHandle {
    pub fn manifest(&self) -> &ModelManifest {
        match self {
            ModelHandle::Native(m) => &m.manifest,
            ModelHandle::External(h) => &h.manifest,
        }
    }

    pub fn name(&self) -> &str {
        &self.manifest().name
    }

    pub fn is_native(&self) -> bool {
        matches!(self, ModelHandle::Native(_))
    }
}

fn builtin(manifest_json: &str, compute: ComputeFn) -> NativeModel {
    let manifest = ModelManifest::from_json_str(manifest_json).expect("built-in manifest is valid");
    NativeModel { manifest, compute }
}

/// The models compiled into this crate.
pub fn builtin_models() -> Vec<NativeModel> {
    vec![
        builtin(include_str!("../../models/cG/manifest.json"), cg_compute),
        builtin(include_str!("../../models/IMSIG/manifest.json"), imsig_compute),
        builtin(include_str!("../../models/uniform/manifest.json"), uniform_compute),
    ]
}

/// Read-only catalogue of every available model, keyed by name.
#[derive(Debug, Clone)]
pub struct Registry {
    models: BTreeMap<String, ModelHandle>,
    cache_dir: PathBuf,
}

impl Registry {
    /// Built-in models only.
    pub fn builtin(cache_dir: impl Into<PathBuf>) -> Self {
        let models =
            builtin_models().into_iter().map(|m| (m.manifest.name.clone(), ModelHandle::Native(Arc::new(m)))).collect();
        Registry { models, cache_dir: cache_dir.into() }
    }

    /// Built-in models plus every external model under `models_dir`.
    ///
    /// Subdirectories without a `manifest.json` are ignored.
    pub fn load(models_dir: Option<&Path>, cache_dir: impl Into<PathBuf>) -> Result<Self, RegistryError> {
        let mut registry = Registry::builtin(cache_dir);
        let Some(dir) = models_dir else {
            return Ok(registry);
        };
        let io_err = |source| RegistryError::Io { path: dir.to_path_buf(), source };
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io_err)?;
        entries.sort();
        for model_dir in entries.into_iter().filter(|p| p.is_dir()) {
            let path = model_dir.join("manifest.json");
            if !path.is_file() {
                continue;
            }
            let manifest =
                load_manifest(&path).map_err(|source| RegistryError::Manifest { path: path.clone(), source })?;
            let dir_name = model_dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
            if manifest.name != dir_name {
                return Err(RegistryError::NameMismatch { path, name: manifest.name, dir: dir_name });
            }
            if manifest.model_type != ModelType::External {
                return Err(RegistryError::NotExternal { path });
            }
            if registry.models.contains_key(&manifest.name) {
                return Err(RegistryError::Duplicate(manifest.name));
            }
            let assets_dir = registry.cache_dir.join(&manifest.name);
            let handle = ExternalModelHandle::new(manifest, model_dir, assets_dir);
            registry.models.insert(handle.manifest.name.clone(), ModelHandle::External(Arc::new(handle)));
        }
        Ok(registry)
    }

    /// Manifests of every model, sorted by name.
    pub fn list(&self) -> Vec<&ModelManifest> {
        self.models.values().map(ModelHandle::manifest).collect()
    }

    pub fn get(&self, name: &str) -> Result<&ModelHandle, RegistryError> {
        self.models.get(name).ok_or_else(|| RegistryError::UnknownModel(name.to_string()))
    }

    pub fn handles(&self) -> impl Iterator<Item = &ModelHandle> {
        self.models.values()
    }

    pub fn cache_dir(&self) -> &Path {
        &self.cache_dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_set() {
        let reg = Registry::builtin("/nonexistent");
        let names: Vec<&str> = reg.list().iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["IMSIG", "cG", "uniform"]);
        assert!(reg.get("cG").unwrap().is_native());
        assert!(matches!(reg.get("AWS"), Err(RegistryError::UnknownModel(_))));
    }

    #[test]
    fn imsig_prefers_lab() {
        let reg = Registry::builtin("/nonexistent");
        let m = reg.get("IMSIG").unwrap().manifest();
        assert_eq!(m.preferred_color_space, Some(crate::raster::ColorSpace::Lab));
    }

    #[test]
    fn directory_name_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let model_dir = dir.path().join("Other");
        fs::create_dir(&model_dir).unwrap();
        fs::write(
            model_dir.join("manifest.json"),
            r#"{"name":"Ext","long_name":"e","citation":"c","model_type":"external","launch":{"command":["true"]}}"#,
        )
        .unwrap();
        let err = Registry::load(Some(dir.path()), dir.path().join("cache")).unwrap_err();
        assert!(matches!(err, RegistryError::NameMismatch { .. }));
    }

    #[test]
    fn external_models_are_listed_in_order() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["DGII", "AIM"] {
            let model_dir = dir.path().join(name);
            fs::create_dir(&model_dir).unwrap();
            fs::write(
                model_dir.join("manifest.json"),
                format!(r#"{{"name":"{name}","long_name":"x","citation":"c","model_type":"external","launch":{{"command":["true"]}}}}"#),
            )
            .unwrap();
        }
        fs::create_dir(dir.path().join("empty")).unwrap();
        let reg = Registry::load(Some(dir.path()), dir.path().join("cache")).unwrap();
        let names: Vec<&str> = reg.list().iter().map(|m| m.name.as_str()).collect();
        assert_eq!(names, ["AIM", "DGII", "IMSIG", "cG", "uniform"]);
        assert!(!reg.get("AIM").unwrap().is_native());
    }
}
