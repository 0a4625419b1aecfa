//! Downloadable model assets.
//!
//! Assets live at `<cache_dir>/<model>/<relative_path>`. Mutations of one
//! model's subtree are serialised by an exclusive lock on
//! `<cache_dir>/<model>/.lock`.

use std::fs::{self, File, OpenOptions};
use std::io;
use std::path::{Path, PathBuf};

use log::{info, warn};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::params::{AssetSpec, ModelManifest};

#[derive(Debug, Error)]
pub enum AssetError {
    #[error("{model}/{path}: checksum mismatch (expected {expected}, got {actual}); file removed")]
    ChecksumMismatch { model: String, path: String, expected: String, actual: String },
    #[error("{model}/{path}: download failed: {message}")]
    Network { model: String, path: String, message: String },
    #[error("{model}/{path}: {message}")]
    Io { model: String, path: String, message: String },
}

/// Retrieves the bytes behind an asset URL.
pub trait Fetch {
    fn fetch(&self, url: &str) -> Result<Vec<u8>, String>;
}

/// `file://` URLs are read from disk, `http(s)://` URLs are downloaded.
#[derive(Debug, Default, Clone, Copy)]
pub struct DefaultFetcher;

impl Fetch for DefaultFetcher {
    fn fetch(&self, url: &str) -> Result<Vec<u8>, String> {
        if let Some(path) = url.strip_prefix("file://") {
            return fs::read(path).map_err(|e| format!("{path}: {e}"));
        }
        if url.starts_with("http://") || url.starts_with("https://") {
            let mut response = ureq::get(url).call().map_err(|e| e.to_string())?;
            return response.body_mut().with_config().limit(u64::MAX).read_to_vec().map_err(|e| e.to_string());
        }
        Err(format!("unsupported URL scheme in {url:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssetOutcome {
    /// Already present with the right hash; nothing was fetched.
    Skipped,
    Fetched,
    ChecksumMismatch {
        expected: String,
        actual: String,
    },
    NetworkError(String),
    IoError(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DownloadReport {
    pub model: String,
    pub entries: Vec<(String, AssetOutcome)>,
}

impl DownloadReport {
    pub fn is_ok(&self) -> bool {
        self.entries.iter().all(|(_, o)| matches!(o, AssetOutcome::Skipped | AssetOutcome::Fetched))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The first failure as an error, if any.
    pub fn into_result(self) -> Result<DownloadReport, AssetError> {
        let failure = self.entries.iter().find_map(|(path, outcome)| {
            let (model, path) = (self.model.clone(), path.clone());
            match outcome {
                AssetOutcome::ChecksumMismatch { expected, actual } => Some(AssetError::ChecksumMismatch {
                    model,
                    path,
                    expected: expected.clone(),
                    actual: actual.clone(),
                }),
                AssetOutcome::NetworkError(message) => {
                    Some(AssetError::Network { model, path, message: message.clone() })
                }
                AssetOutcome::IoError(message) => Some(AssetError::Io { model, path, message: message.clone() }),
                AssetOutcome::Skipped | AssetOutcome::Fetched => None,
            }
        });
        match failure {
            Some(err) => Err(err),
            None => Ok(self),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssetStatus {
    Complete,
    Missing(Vec<String>),
}

impl AssetStatus {
    pub fn is_complete(&self) -> bool {
        *self == AssetStatus::Complete
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_matches(path: &Path, sha256: &str) -> bool {
    fs::read(path).map(|bytes| sha256_hex(&bytes) == sha256).unwrap_or(false)
}

fn model_dir(cache_dir: &Path, model: &str) -> PathBuf {
    cache_dir.join(model)
}

fn lock_model(cache_dir: &Path, model: &str) -> io::Result<File> {
    let dir = model_dir(cache_dir, model);
    fs::create_dir_all(&dir)?;
    let file = OpenOptions::new().create(true).truncate(false).write(true).open(dir.join(".lock"))?;
    file.lock()?;
    Ok(file)
}

/// Fetches every missing or corrupt asset and verifies its hash.
///
/// Assets already present with the right hash are skipped without touching
/// the fetcher. A file that fails verification is never left in the cache.
pub fn download_assets(manifest: &ModelManifest, cache_dir: &Path, fetcher: &dyn Fetch) -> DownloadReport {
    let mut report = DownloadReport { model: manifest.name.clone(), entries: Vec::new() };
    if manifest.model_files.is_empty() {
        return report;
    }
    let _lock = match lock_model(cache_dir, &manifest.name) {
        Ok(lock) => lock,
        Err(e) => {
            report.entries = manifest
                .model_files
                .iter()
                .map(|a| (a.relative_path.clone(), AssetOutcome::IoError(e.to_string())))
                .collect();
            return report;
        }
    };
    for asset in &manifest.model_files {
        let outcome = fetch_one(asset, &model_dir(cache_dir, &manifest.name), fetcher);
        match &outcome {
            AssetOutcome::Fetched => info!("{}: fetched {}", manifest.name, asset.relative_path),
            AssetOutcome::Skipped => info!("{}: {} already present", manifest.name, asset.relative_path),
            other => warn!("{}: {} failed: {other:?}", manifest.name, asset.relative_path),
        }
        report.entries.push((asset.relative_path.clone(), outcome));
    }
    report
}

fn fetch_one(asset: &AssetSpec, dir: &Path, fetcher: &dyn Fetch) -> AssetOutcome {
    let target = dir.join(&asset.relative_path);
    if target.is_file() {
        if file_matches(&target, &asset.sha256) {
            return AssetOutcome::Skipped;
        }
        if let Err(e) = fs::remove_file(&target) {
            return AssetOutcome::IoError(e.to_string());
        }
    }
    let bytes = match fetcher.fetch(&asset.url) {
        Ok(bytes) => bytes,
        Err(message) => return AssetOutcome::NetworkError(message),
    };
    let actual = sha256_hex(&bytes);
    if actual != asset.sha256 {
        return AssetOutcome::ChecksumMismatch { expected: asset.sha256.clone(), actual };
    }
    let write = || -> io::Result<()> {
        let parent = target.parent().unwrap_or(dir);
        fs::create_dir_all(parent)?;
        let tmp = tempfile::NamedTempFile::new_in(parent)?;
        fs::write(tmp.path(), &bytes)?;
        tmp.persist(&target).map_err(|e| e.error)?;
        Ok(())
    };
    match write() {
        Ok(()) => AssetOutcome::Fetched,
        Err(e) => AssetOutcome::IoError(e.to_string()),
    }
}

/// Lists the assets that are absent or fail hash verification.
pub fn verify_assets(manifest: &ModelManifest, cache_dir: &Path) -> AssetStatus {
    let dir = model_dir(cache_dir, &manifest.name);
    let missing: Vec<String> = manifest
        .model_files
        .iter()
        .filter(|a| !file_matches(&dir.join(&a.relative_path), &a.sha256))
        .map(|a| a.relative_path.clone())
        .collect();
    if missing.is_empty() {
        AssetStatus::Complete
    } else {
        AssetStatus::Missing(missing)
    }
}

pub enum CleanTarget<'a> {
    Model(&'a ModelManifest),
    All,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleanReport {
    pub removed: Vec<PathBuf>,
}

/// Deletes one model's cache subtree, or everything in the cache.
pub fn clean_assets(target: CleanTarget<'_>, cache_dir: &Path) -> io::Result<CleanReport> {
    let mut report = CleanReport::default();
    if !cache_dir.exists() {
        return Ok(report);
    }
    let dirs: Vec<PathBuf> = match target {
        CleanTarget::Model(manifest) => vec![model_dir(cache_dir, &manifest.name)],
        CleanTarget::All => {
            let mut entries = fs::read_dir(cache_dir)?.map(|e| e.map(|e| e.path())).collect::<io::Result<Vec<_>>>()?;
            entries.sort();
            entries
        }
    };
    for path in dirs {
        if path.is_dir() {
            let model = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let _lock = lock_model(cache_dir, &model)?;
            fs::remove_dir_all(&path)?;
            report.removed.push(path);
        } else if path.exists() {
            fs::remove_file(&path)?;
            report.removed.push(path);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn unsupported_scheme() {
        assert!(DefaultFetcher.fetch("ftp://example.org/x").is_err());
    }
}
