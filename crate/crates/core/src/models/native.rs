use crate::dct::{dct2, idct2};
use crate::mapops::resize_bilinear;
use crate::params::ResolvedParams;
use crate::raster::{Image, SaliencyMap};

/// Centred Gaussian prior, independent of pixel content.
pub fn cg_compute(img: &Image, params: &ResolvedParams) -> SaliencyMap {
    let (h, w) = img.dims();
    let rho = params.f64_or("prior_prop", 0.25);
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let (sy, sx) = (rho * h as f64, rho * w as f64);
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        let ey = (y as f64 - cy).powi(2) / (2.0 * sy * sy);
        for x in 0..w {
            let ex = (x as f64 - cx).powi(2) / (2.0 * sx * sx);
            data.push((-(ex + ey)).exp());
        }
    }
    SaliencyMap::new(h, w, data)
}

/// Dimensions the signature is computed at: longest side capped at
/// `max_side`, aspect preserved, never upsampled.
pub fn working_dims((h, w): (usize, usize), max_side: usize) -> (usize, usize) {
    let longest = h.max(w);
    if longest <= max_side {
        return (h, w);
    }
    let scale = max_side as f64 / longest as f64;
    let fit = |n: usize| ((n as f64 * scale).round() as usize).clamp(1, max_side);
    (fit(h), fit(w))
}

/// Coefficients this small relative to the largest one are rounding noise
/// and count as exact zeros.
pub const SIGN_ZERO_TOLERANCE: f64 = 1e-12;

/// `sign` with `sign(0) = 0`, where "zero" means within the relative tolerance.
fn signs(coeffs: &[f64]) -> Vec<f64> {
    let peak = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let zero = peak * SIGN_ZERO_TOLERANCE;
    coeffs
        .iter()
        .map(|&c| {
            if c > zero {
                1.0
            } else if c < -zero {
                -1.0
            } else {
                0.0
            }
        })
        .collect()
}

/// Image signature: per channel `idct2(sign(dct2(I)))^2`, summed over channels.
///
/// The result is at working resolution; the pipeline resizes it back.
pub fn imsig_compute(img: &Image, params: &ResolvedParams) -> SaliencyMap {
    let max_side = params.i64_or("working_size", 64).max(1) as usize;
    let (h, w) = working_dims(img.dims(), max_side);
    let mut total = vec![0.0; h * w];
    for c in 0..img.channels() {
        let plane = resize_bilinear(&img.channel(c), img.dims(), (h, w));
        let signs = signs(&dct2(&plane, h, w));
        for (acc, v) in total.iter_mut().zip(idct2(&signs, h, w)) {
            *acc += v * v;
        }
    }
    SaliencyMap::new(h, w, total)
}

/// Constant 0.5 at the input's dimensions.
pub fn uniform_compute(img: &Image, _params: &ResolvedParams) -> SaliencyMap {
    let (h, w) = img.dims();
    SaliencyMap::filled(h, w, 0.5)
}
