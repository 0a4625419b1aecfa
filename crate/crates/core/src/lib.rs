//! Standardized execution of pixel-wise saliency models.
//!
//! The crate is organised as a pipeline:
//!
//! * [`raster`] decodes images, converts colour spaces and writes maps.
//! * [`params`] holds parameter schemas, manifests and the precedence resolver.
//! * [`mapops`] is the post-processing applied to every raw model output.
//! * [`models`] contains the in-process models and the model registry.
//! * [`external`] runs out-of-process models over a line-delimited protocol
//!   and manages their downloadable assets.
//! * [`experiment`] parses experiment files into run plans and executes them.
//! * [`cli`] is the command-line front end.

#![allow(clippy::result_large_err)]

pub mod cli;
pub mod dct;
pub mod experiment;
pub mod external;
pub mod mapops;
pub mod models;
pub mod params;
pub mod pipeline;
pub mod raster;

pub use experiment::{execute, parse_experiment, plan, ExecuteOptions, ExperimentReport, ExperimentSpec};
pub use external::ExternalModelHandle;
pub use mapops::{FitPolicy, Kernel2D};
pub use models::{ModelHandle, NativeModel, Registry};
pub use params::{
    resolve, resolve_aliases, EffectivePipelineSettings, GlobalConfig, ModelManifest, ParamMap, ParameterSpec,
    Provenance, ResolvedParams, Scalar,
};
pub use raster::{ColorSpace, Image, SaliencyMap};

/// Semantic version of the framework.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version of the external-model wire protocol spoken by this build.
pub const PROTOCOL_VERSION: u32 = 1;
