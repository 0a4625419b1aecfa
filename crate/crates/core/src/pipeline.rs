//! One image through one model: colour conversion, compute, post-processing.

use std::path::Path;

use thiserror::Error;

use crate::external::{ExternalError, InvokeOptions};
use crate::mapops::{postprocess, FitPolicy, MapError};
use crate::models::ModelHandle;
use crate::params::{resolve_aliases, ModelManifest, ResolvedParams};
use crate::raster::{convert_color, load_image, Image, RasterError, SaliencyMap};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    External(#[from] ExternalError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error("model {0} produced non-finite values")]
    NonFinite(String),
}

/// How a model's raw output is brought back to the input's dimensions.
///
/// Models that declare a border trim have their valid region padded back out
/// by edge replication; every other model is resampled.
pub fn fit_policy(manifest: &ModelManifest) -> FitPolicy {
    match manifest.border_trim {
        Some(t) => FitPolicy::PadReplicate { top: t.top, bottom: t.bottom, left: t.left, right: t.right },
        None => FitPolicy::RescaleBilinear,
    }
}

/// Runs `model` on an RGB image and returns the post-processed map at the
/// image's dimensions.
pub fn compute_saliency(
    model: &ModelHandle,
    img: &Image,
    params: &ResolvedParams,
    opts: &InvokeOptions,
) -> Result<SaliencyMap, PipelineError> {
    let manifest = model.manifest();
    let dims = img.dims();
    let settings = resolve_aliases(params, manifest, dims);
    let raw = match model {
        ModelHandle::Native(m) => m.run(&convert_color(img, settings.color_space)?, params),
        ModelHandle::External(h) => h.invoke(img, params, opts)?,
    };
    if !raw.is_finite() {
        return Err(PipelineError::NonFinite(manifest.name.clone()));
    }
    Ok(postprocess(
        &raw,
        dims,
        fit_policy(manifest),
        &settings.smoothing,
        settings.scale_mode,
        settings.scale_min,
        settings.scale_max,
    )?)
}

/// [`compute_saliency`] on an image file.
pub fn process_file(
    model: &ModelHandle,
    path: &Path,
    params: &ResolvedParams,
    opts: &InvokeOptions,
) -> Result<SaliencyMap, PipelineError> {
    compute_saliency(model, &load_image(path)?, params, opts)
}
