//! Post-processing applied to every raw model output.
//!
//! The order is fixed: [`fit_to_dims`] to the input image's size, then
//! [`smooth`], then [`rescale_values`]. See [`postprocess`].

use std::str::FromStr;

use thiserror::Error;

use crate::raster::SaliencyMap;

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("cannot pad {from:?} by {pads:?} to reach {to:?}")]
    DimensionMismatch { from: (usize, usize), to: (usize, usize), pads: [usize; 4] },
}

pub type Result<T> = std::result::Result<T, MapError>;

/// A square, unit-sum convolution kernel stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    pub size: usize,
    pub weights: Vec<f64>,
}

impl Kernel2D {
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.size + col]
    }
}

fn check_kernel_args(size: usize, std: f64) -> Result<()> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(MapError::InvalidInput(format!("kernel size must be odd and positive, got {size}")));
    }
    if !(std > 0.0 && std.is_finite()) {
        return Err(MapError::InvalidInput(format!("kernel std must be positive, got {std}")));
    }
    Ok(())
}

/// Sampled 2-D Gaussian normalised to unit sum.
pub fn gaussian_kernel(size: usize, std: f64) -> Result<Kernel2D> {
    check_kernel_args(size, std)?;
    let half = (size / 2) as f64;
    let mut weights = Vec::with_capacity(size * size);
    for row in 0..size {
        for col in 0..size {
            let (dy, dx) = (row as f64 - half, col as f64 - half);
            weights.push((-(dx * dx + dy * dy) / (2.0 * std * std)).exp());
        }
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(Kernel2D { size, weights })
}

/// 1-D factor of [`gaussian_kernel`]; its outer product with itself is the 2-D kernel.
pub fn gaussian_kernel_1d(size: usize, std: f64) -> Result<Vec<f64>> {
    check_kernel_args(size, std)?;
    let half = (size / 2) as f64;
    let mut taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-(d * d) / (2.0 * std * std)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    Ok(taps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    None,
    Gaussian { size: usize, std: f64 },
}

impl Smoothing {
    /// Gaussian with `std = prop * max(height, width)` and support `2 * ceil(3 * std) + 1`.
    pub fn proportional(prop: f64, (height, width): (usize, usize)) -> Smoothing {
        let std = prop * height.max(width) as f64;
        // guard against 3 * std landing a hair above an integer
        let radius = (3.0 * std - 1e-9).ceil().max(0.0) as usize;
        Smoothing::Gaussian { size: 2 * radius + 1, std }
    }
}

/// Convolves with the Gaussian using edge-clamped borders.
///
/// The kernel is separable, so this runs two 1-D passes; the result equals
/// direct 2-D convolution with [`gaussian_kernel`].
pub fn smooth(map: &SaliencyMap, smoothing: &Smoothing) -> Result<SaliencyMap> {
    let (size, std) = match *smoothing {
        Smoothing::None => return Ok(map.clone()),
        Smoothing::Gaussian { size, std } => (size, std),
    };
    let taps = gaussian_kernel_1d(size, std)?;
    let (h, w) = map.dims();
    let half = (size / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut horizontal = vec![0.0; h * w];
    for y in 0..h {
        let row = &map.data[y * w..(y + 1) * w];
        for x in 0..w {
            horizontal[y * w + x] =
                taps.iter().enumerate().map(|(k, t)| t * row[clamp(x as isize + k as isize - half, w)]).sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = taps
                .iter()
                .enumerate()
                .map(|(k, t)| t * horizontal[clamp(y as isize + k as isize - half, h) * w + x])
                .sum();
        }
    }
    Ok(map.with_data(h, w, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScaleMode {
    MinMax,
    None,
    Normalized,
}

impl FromStr for ScaleMode {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min-max" => Ok(ScaleMode::MinMax),
            "none" => Ok(ScaleMode::None),
            "normalized" => Ok(ScaleMode::Normalized),
            other => Err(MapError::InvalidInput(format!("unknown scale mode {other:?}"))),
        }
    }
}

/// Rescales map values.
///
/// * `MinMax`: affine map of `[min, max]` onto `[scale_min, scale_max]`; a
///   constant map becomes all `scale_min`.
/// * `Normalized`: shift to a zero minimum and divide by the sum; a constant
///   map becomes uniform.
/// * `None`: identity.
pub fn rescale_values(map: &SaliencyMap, mode: ScaleMode, scale_min: f64, scale_max: f64) -> Result<SaliencyMap> {
    let lo = map.data.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = map.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let data = match mode {
        ScaleMode::None => return Ok(map.clone()),
        ScaleMode::MinMax => {
            // also rejects NaN bounds
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(scale_min < scale_max) {
                return Err(MapError::InvalidInput(format!(
                    "scale_min {scale_min} must be below scale_max {scale_max}"
                )));
            }
            if hi == lo {
                vec![scale_min; map.data.len()]
            } else {
                let gain = (scale_max - scale_min) / (hi - lo);
                map.data.iter().map(|v| scale_min + (v - lo) * gain).collect()
            }
        }
        ScaleMode::Normalized => {
            let total: f64 = map.data.iter().map(|v| v - lo).sum();
            if total == 0.0 {
                vec![1.0 / map.data.len() as f64; map.data.len()]
            } else {
                map.data.iter().map(|v| (v - lo) / total).collect()
            }
        }
    };
    Ok(map.with_data(map.height, map.width, data))
}

/// How a model's output is brought to the input image's dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitPolicy {
    RescaleBilinear,
    PadReplicate { top: usize, bottom: usize, left: usize, right: usize },
}

/// Corner-aligned bilinear resampling of a row-major plane.
pub fn resize_bilinear(data: &[f64], (h, w): (usize, usize), (th, tw): (usize, usize)) -> Vec<f64> {
    assert_eq!(data.len(), h * w);
    if (h, w) == (th, tw) {
        return data.to_vec();
    }
    // source coordinate of target index i along an axis of n -> m samples
    let coord = |i: usize, n: usize, m: usize| -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let s = if m == 1 { (n - 1) as f64 / 2.0 } else { i as f64 * (n - 1) as f64 / (m - 1) as f64 };
        let i0 = (s.floor() as usize).min(n - 1);
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, s - i0 as f64)
    };
    let cols: Vec<_> = (0..tw).map(|x| coord(x, w, tw)).collect();
    let mut out = Vec::with_capacity(th * tw);
    for y in 0..th {
        let (y0, y1, fy) = coord(y, h, th);
        for &(x0, x1, fx) in &cols {
            let top = data[y0 * w + x0] * (1.0 - fx) + data[y0 * w + x1] * fx;
            let bottom = data[y1 * w + x0] * (1.0 - fx) + data[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

pub fn fit_to_dims(map: &SaliencyMap, target: (usize, usize), policy: FitPolicy) -> Result<SaliencyMap> {
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(MapError::InvalidInput(format!("target dimensions must be positive, got {th}x{tw}")));
    }
    match policy {
        FitPolicy::RescaleBilinear => Ok(map.with_data(th, tw, resize_bilinear(&map.data, map.dims(), target))),
        FitPolicy::PadReplicate { top, bottom, left, right } => {
            let (h, w) = map.dims();
            if h + top + bottom != th || w + left + right != tw {
                return Err(MapError::DimensionMismatch { from: (h, w), to: target, pads: [top, bottom, left, right] });
            }
            let mut out = Vec::with_capacity(th * tw);
            for y in 0..th {
                let sy = y.saturating_sub(top).min(h - 1);
                for x in 0..tw {
                    let sx = x.saturating_sub(left).min(w - 1);
                    out.push(map.data[sy * w + sx]);
                }
            }
            Ok(map.with_data(th, tw, out))
        }
    }
}

/// fit, then smooth, then rescale.
pub fn postprocess(
    raw: &SaliencyMap,
    target: (usize, usize),
    fit: FitPolicy,
    smoothing: &Smoothing,
    scale_mode: ScaleMode,
    scale_min: f64,
    scale_max: f64,
) -> Result<SaliencyMap> {
    let fitted = fit_to_dims(raw, target, fit)?;
    let smoothed = smooth(&fitted, smoothing)?;
    rescale_values(&smoothed, scale_mode, scale_min, scale_max)
}
