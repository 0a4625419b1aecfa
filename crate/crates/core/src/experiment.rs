//! Declarative experiments: parsing, planning, and execution.
//!
//! ```yaml
//! experiment:
//!   name: demo
//!   input_path: images
//!   base_output_path: out
//!   parameters:
//!     do_smoothing: none
//! runs:
//!   - algorithm: IMSIG
//!     parameters:
//!       do_smoothing: default
//!   - algorithm: cG
//!     output_path: out/centre
//! ```
//!
//! Relative paths are taken relative to the directory holding the file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::external::assets::{verify_assets, AssetStatus};
use crate::external::InvokeOptions;
use crate::models::{ModelHandle, Registry};
use crate::params::{resolve, GlobalConfig, ParamError, ParamMap, Provenance, ResolvedParams, Scalar};
use crate::pipeline::process_file;
use crate::raster::{write_map, MapFormat};
use crate::{PROTOCOL_VERSION, VERSION};

/// File name of the per-run record written next to the maps.
pub const RUN_RECORD: &str = "_run_record";

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
    #[error("run {run} ({algorithm}): unknown model")]
    UnknownModel { run: usize, algorithm: String },
    #[error("run {run} ({algorithm}): {source}")]
    Param { run: usize, algorithm: String, source: ParamError },
    #[error("experiment parameters: {0}")]
    ExperimentParam(ParamError),
    #[error("no PNG or JPEG images in {0}")]
    EmptyInputDir(PathBuf),
    #[error("{first} and {second} would both write {stem}.png")]
    StemCollision { first: PathBuf, second: PathBuf, stem: String },
    #[error("runs {first} and {second} would both write to {dir}")]
    OutputCollision { first: usize, second: usize, dir: PathBuf },
    #[error("cannot create output directory {path}: {source}")]
    Setup { path: PathBuf, source: io::Error },
}

/// One entry of `runs:`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub algorithm: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    #[serde(default, deserialize_with = "null_as_empty")]
    pub parameters: ParamMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentSection {
    #[serde(default)]
    name: String,
    #[serde(default)]
    description: String,
    input_path: PathBuf,
    base_output_path: PathBuf,
    #[serde(default, deserialize_with = "null_as_empty")]
    parameters: ParamMap,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExperimentFile {
    experiment: ExperimentSection,
    runs: Option<Vec<RunSpec>>,
}

fn null_as_empty<'de, D: serde::Deserializer<'de>>(d: D) -> Result<ParamMap, D::Error> {
    Ok(Option::<ParamMap>::deserialize(d)?.unwrap_or_default())
}

/// A parsed experiment; parameters are not validated until [`plan`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub description: String,
    pub input_path: PathBuf,
    pub base_output_path: PathBuf,
    pub parameters: ParamMap,
    pub runs: Vec<RunSpec>,
}

impl ExperimentSpec {
    /// Parses experiment YAML; relative paths are joined onto `base_dir`.
    /// `source` names the text in error messages.
    pub fn from_yaml_str(text: &str, base_dir: &Path, source: &Path) -> Result<Self, ExperimentError> {
        let schema = |message: String| ExperimentError::Schema { path: source.to_path_buf(), message };
        let value: serde_yaml::Value = serde_yaml::from_str(text)
            .map_err(|e| ExperimentError::Parse { path: source.to_path_buf(), message: e.to_string() })?;
        let file: ExperimentFile = serde_yaml::from_value(value).map_err(|e| schema(e.to_string()))?;
        let section = file.experiment;
        let runs = file.runs.unwrap_or_default();
        if runs.is_empty() {
            return Err(schema("experiment has no runs".into()));
        }
        if section.input_path.as_os_str().is_empty() {
            return Err(schema("experiment.input_path is empty".into()));
        }
        if section.base_output_path.as_os_str().is_empty() {
            return Err(schema("experiment.base_output_path is empty".into()));
        }
        let join = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base_dir.join(p) };
        let mut seen: BTreeMap<PathBuf, usize> = BTreeMap::new();
        let mut resolved_runs = Vec::with_capacity(runs.len());
        for (i, mut run) in runs.into_iter().enumerate() {
            if run.algorithm.trim().is_empty() {
                return Err(schema(format!("run {} has an empty algorithm", i + 1)));
            }
            if let Some(out) = &run.output_path {
                if out.as_os_str().is_empty() {
                    return Err(schema(format!("run {} has an empty output_path", i + 1)));
                }
                let out = join(out);
                if let Some(first) = seen.insert(normalise(&out), i + 1) {
                    return Err(schema(format!("runs {first} and {} share output_path {}", i + 1, out.display())));
                }
                run.output_path = Some(out);
            }
            resolved_runs.push(run);
        }
        Ok(ExperimentSpec {
            name: section.name,
            description: section.description,
            input_path: join(&section.input_path),
            base_output_path: join(&section.base_output_path),
            parameters: section.parameters,
            runs: resolved_runs,
        })
    }

    /// A one-run experiment writing straight into `output`.
    pub fn single_run(algorithm: &str, input: &Path, output: &Path, run_params: ParamMap) -> Self {
        ExperimentSpec {
            name: format!("{algorithm} ad hoc"),
            description: String::new(),
            input_path: input.to_path_buf(),
            base_output_path: output.to_path_buf(),
            parameters: ParamMap::new(),
            runs: vec![RunSpec {
                algorithm: algorithm.to_string(),
                output_path: Some(output.to_path_buf()),
                parameters: run_params,
            }],
        }
    }

    /// Where a run's maps go: its `output_path`, else `<base_output_path>/<algorithm>`.
    pub fn output_dir(&self, run: &RunSpec) -> PathBuf {
        run.output_path.clone().unwrap_or_else(|| self.base_output_path.join(&run.algorithm))
    }
}

// lexical normalisation so that `a/./b` and `a/b` collide
fn normalise(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for part in path.components() {
        match part {
            std::path::Component::CurDir => {}
            std::path::Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other),
        }
    }
    out
}

pub fn parse_experiment(path: &Path) -> Result<ExperimentSpec, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io { path: path.to_path_buf(), source })?;
    let base = path.parent().unwrap_or(Path::new(""));
    ExperimentSpec::from_yaml_str(&text, base, path)
}

/// PNG and JPEG files directly inside `dir`, sorted by name.
pub fn list_inputs(dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    let io_err = |source| ExperimentError::Io { path: dir.to_path_buf(), source };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()));
        if is_image && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    if files.is_empty() {
        return Err(ExperimentError::EmptyInputDir(dir.to_path_buf()));
    }
    let mut stems: BTreeMap<String, &PathBuf> = BTreeMap::new();
    for f in &files {
        let stem = stem_of(f);
        if let Some(first) = stems.insert(stem.clone(), f) {
            return Err(ExperimentError::StemCollision { first: first.clone(), second: f.clone(), stem });
        }
    }
    Ok(files)
}

fn stem_of(path: &Path) -> String {
    path.file_stem().unwrap_or_default().to_string_lossy().into_owned()
}

/// An executable run.
#[derive(Debug, Clone)]
pub struct RunPlan {
    /// 1-based position in the experiment.
    pub index: usize,
    pub model: ModelHandle,
    pub resolved: ResolvedParams,
    pub input_files: Vec<PathBuf>,
    pub output_dir: PathBuf,
}

/// A run whose model cannot execute, e.g. because assets are missing.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRun {
    pub index: usize,
    pub algorithm: String,
    pub output_dir: PathBuf,
    pub input_files: Vec<PathBuf>,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub enum PlannedRun {
    Ready(RunPlan),
    Skipped(SkippedRun),
}

impl PlannedRun {
    pub fn output_dir(&self) -> &Path {
        match self {
            PlannedRun::Ready(p) => &p.output_dir,
            PlannedRun::Skipped(s) => &s.output_dir,
        }
    }
}

/// Resolves every run against the registry and the global configuration.
pub fn plan(
    spec: &ExperimentSpec,
    registry: &Registry,
    global: &GlobalConfig,
) -> Result<Vec<PlannedRun>, ExperimentError> {
    let mut handles = Vec::with_capacity(spec.runs.len());
    for (i, run) in spec.runs.iter().enumerate() {
        let handle = registry
            .get(&run.algorithm)
            .map_err(|_| ExperimentError::UnknownModel { run: i + 1, algorithm: run.algorithm.clone() })?;
        handles.push(handle.clone());
    }

    // an experiment-level key must mean something to at least one run
    for name in spec.parameters.keys() {
        let known = global.contains(name) || handles.iter().any(|h| h.manifest().parameters.contains_key(name));
        if !known {
            return Err(ExperimentError::ExperimentParam(ParamError::UnknownParameter {
                name: name.clone(),
                layer: Provenance::Experiment,
            }));
        }
    }

    let mut dirs: BTreeMap<PathBuf, usize> = BTreeMap::new();
    for (i, run) in spec.runs.iter().enumerate() {
        let out = spec.output_dir(run);
        if let Some(first) = dirs.insert(normalise(&out), i + 1) {
            return Err(ExperimentError::OutputCollision { first, second: i + 1, dir: out });
        }
    }

    let input_files = list_inputs(&spec.input_path)?;
    let mut plans = Vec::with_capacity(spec.runs.len());
    for (i, (run, handle)) in spec.runs.iter().zip(handles).enumerate() {
        let manifest = handle.manifest();
        let mut experiment_layer = ParamMap::new();
        for (name, value) in &spec.parameters {
            if global.contains(name) || manifest.parameters.contains_key(name) {
                experiment_layer.insert(name.clone(), value.clone());
            } else {
                warn!(
                    "run {} ({}): ignoring experiment parameter {name}, which the model does not declare",
                    i + 1,
                    run.algorithm
                );
            }
        }
        let resolved = resolve(manifest, global, &experiment_layer, &run.parameters)
            .map_err(|source| ExperimentError::Param { run: i + 1, algorithm: run.algorithm.clone(), source })?;
        let output_dir = spec.output_dir(run);
        match verify_assets(manifest, registry.cache_dir()) {
            AssetStatus::Complete => plans.push(PlannedRun::Ready(RunPlan {
                index: i + 1,
                model: handle,
                resolved,
                input_files: input_files.clone(),
                output_dir,
            })),
            AssetStatus::Missing(missing) => {
                let reason = format!("missing assets: {}; run `download {}` first", missing.join(", "), run.algorithm);
                warn!("run {} ({}) skipped: {reason}", i + 1, run.algorithm);
                plans.push(PlannedRun::Skipped(SkippedRun {
                    index: i + 1,
                    algorithm: run.algorithm.clone(),
                    output_dir,
                    input_files: input_files.clone(),
                    reason,
                }));
            }
        }
    }
    Ok(plans)
}

#[derive(Debug, Clone)]
pub struct ExecuteOptions {
    /// Leave images whose outputs already exist untouched.
    pub skip_existing: bool,
    /// Images processed concurrently within a run; external models always use 1.
    pub workers: usize,
    /// Also write `<stem>.f32raw` next to each PNG.
    pub write_f32raw: bool,
    /// Keep external models' working directories.
    pub keep_artifacts: bool,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        ExecuteOptions { skip_existing: false, workers: 1, write_f32raw: false, keep_artifacts: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageFailure {
    pub input: PathBuf,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub index: usize,
    pub algorithm: String,
    pub output_dir: PathBuf,
    pub ok: usize,
    pub failed: usize,
    pub skipped: usize,
    pub failures: Vec<ImageFailure>,
    /// Set when the whole run was skipped.
    pub skip_reason: Option<String>,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub runs: Vec<RunReport>,
    pub wall_time: Duration,
}

impl ExperimentReport {
    /// Total (ok, failed, skipped) image counts.
    pub fn totals(&self) -> (usize, usize, usize) {
        self.runs.iter().fold((0, 0, 0), |(o, f, s), r| (o + r.ok, f + r.failed, s + r.skipped))
    }

    pub fn is_success(&self) -> bool {
        self.totals().1 == 0
    }
}

#[derive(Serialize)]
struct ParamRecord<'a> {
    value: &'a Scalar,
    provenance: Provenance,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    framework_version: &'a str,
    protocol_version: u32,
    algorithm: &'a str,
    model_type: &'a str,
    output_dir: &'a Path,
    parameters: BTreeMap<&'a str, ParamRecord<'a>>,
    input_files: &'a [PathBuf],
}

/// The `_run_record` contents for a plan; contains no timestamps, so reruns
/// produce identical bytes.
pub fn run_record(plan: &RunPlan) -> String {
    let manifest = plan.model.manifest();
    let parameters = plan
        .resolved
        .values()
        .iter()
        .map(|(name, value)| {
            let provenance = plan.resolved.provenance_of(name).expect("every resolved value has a provenance");
            (name.as_str(), ParamRecord { value, provenance })
        })
        .collect();
    let record = RunRecord {
        framework_version: VERSION,
        protocol_version: PROTOCOL_VERSION,
        algorithm: &manifest.name,
        model_type: manifest.model_type.as_str(),
        output_dir: &plan.output_dir,
        parameters,
        input_files: &plan.input_files,
    };
    let mut text = serde_json::to_string_pretty(&record).expect("run records serialise");
    text.push('\n');
    text
}

enum ImageOutcome {
    Ok,
    Skipped,
    Failed(String),
}

fn process_image(plan: &RunPlan, input: &Path, opts: &ExecuteOptions, invoke: &InvokeOptions) -> ImageOutcome {
    let stem = stem_of(input);
    let png = plan.output_dir.join(format!("{stem}.png"));
    let raw = plan.output_dir.join(format!("{stem}.f32raw"));
    if opts.skip_existing && png.is_file() && (!opts.write_f32raw || raw.is_file()) {
        return ImageOutcome::Skipped;
    }
    let result = process_file(&plan.model, input, &plan.resolved, invoke).map_err(|e| e.to_string()).and_then(|map| {
        write_map(&map, &png, MapFormat::Png8).map_err(|e| e.to_string())?;
        if opts.write_f32raw {
            write_map(&map, &raw, MapFormat::F32Raw).map_err(|e| e.to_string())?;
        }
        Ok(())
    });
    match result {
        Ok(()) => ImageOutcome::Ok,
        Err(message) => ImageOutcome::Failed(message),
    }
}

fn execute_run(plan: &RunPlan, opts: &ExecuteOptions) -> Result<RunReport, ExperimentError> {
    let start = Instant::now();
    let setup = |source| ExperimentError::Setup { path: plan.output_dir.clone(), source };
    fs::create_dir_all(&plan.output_dir).map_err(setup)?;
    fs::write(plan.output_dir.join(RUN_RECORD), run_record(plan)).map_err(setup)?;

    let invoke = InvokeOptions { workdir_root: None, keep_artifacts: opts.keep_artifacts };
    let workers = if plan.model.is_native() { opts.workers.max(1) } else { 1 };
    let outcomes: Vec<ImageOutcome> = if workers == 1 {
        plan.input_files.iter().map(|f| process_image(plan, f, opts, &invoke)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| setup(io::Error::other(e.to_string())))?;
        pool.install(|| plan.input_files.par_iter().map(|f| process_image(plan, f, opts, &invoke)).collect())
    };

    let mut report = RunReport {
        index: plan.index,
        algorithm: plan.model.name().to_string(),
        output_dir: plan.output_dir.clone(),
        ok: 0,
        failed: 0,
        skipped: 0,
        failures: Vec::new(),
        skip_reason: None,
        wall_time: Duration::ZERO,
    };
    for (input, outcome) in plan.input_files.iter().zip(outcomes) {
        match outcome {
            ImageOutcome::Ok => report.ok += 1,
            ImageOutcome::Skipped => report.skipped += 1,
            ImageOutcome::Failed(message) => {
                warn!("run {} ({}): {}: {message}", plan.index, report.algorithm, input.display());
                report.failed += 1;
                report.failures.push(ImageFailure { input: input.clone(), message });
            }
        }
    }
    report.wall_time = start.elapsed();
    Ok(report)
}

/// Runs every plan in order. Per-image failures are recorded in the report;
/// only an output directory that cannot be created aborts.
pub fn execute(plans: &[PlannedRun], opts: &ExecuteOptions) -> Result<ExperimentReport, ExperimentError> {
    let start = Instant::now();
    let mut runs = Vec::with_capacity(plans.len());
    for planned in plans {
        match planned {
            PlannedRun::Ready(plan) => runs.push(execute_run(plan, opts)?),
            PlannedRun::Skipped(s) => runs.push(RunReport {
                index: s.index,
                algorithm: s.algorithm.clone(),
                output_dir: s.output_dir.clone(),
                ok: 0,
                failed: 0,
                skipped: s.input_files.len(),
                failures: Vec::new(),
                skip_reason: Some(s.reason.clone()),
                wall_time: Duration::ZERO,
            }),
        }
    }
    Ok(ExperimentReport { runs, wall_time: start.elapsed() })
}

/// Distinct output directories of a set of plans, in run order.
pub fn output_dirs(plans: &[PlannedRun]) -> Vec<PathBuf> {
    let mut seen = BTreeSet::new();
    plans.iter().map(|p| p.output_dir().to_path_buf()).filter(|d| seen.insert(d.clone())).collect()
}
