//! Orthonormal 2-D DCT-II and its inverse (DCT-III).
//!
//! Both transforms apply a precomputed 1-D basis along rows and then along
//! columns, `O(H*W*(H+W))`. That is plenty for the working resolutions the
//! image-signature model uses.

/// Row `k` holds basis vector `k`: `alpha(k) * cos(pi * (2n + 1) * k / 2N)`.
fn basis(n: usize) -> Vec<f64> {
    let scale0 = (1.0 / n as f64).sqrt();
    let scale = (2.0 / n as f64).sqrt();
    let mut m = Vec::with_capacity(n * n);
    for k in 0..n {
        let alpha = if k == 0 { scale0 } else { scale };
        for i in 0..n {
            let angle = std::f64::consts::PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64;
            m.push(alpha * angle.cos());
        }
    }
    m
}

/// Applies `basis` (or its transpose) along every row of a `rows x cols` plane.
fn along_rows(data: &[f64], rows: usize, cols: usize, basis: &[f64], inverse: bool) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let src = &data[r * cols..(r + 1) * cols];
        let dst = &mut out[r * cols..(r + 1) * cols];
        for (k, d) in dst.iter_mut().enumerate() {
            *d = if inverse {
                src.iter().enumerate().map(|(j, v)| basis[j * cols + k] * v).sum()
            } else {
                basis[k * cols..(k + 1) * cols].iter().zip(src).map(|(b, v)| b * v).sum()
            };
        }
    }
    out
}

fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

fn separable(data: &[f64], height: usize, width: usize, inverse: bool) -> Vec<f64> {
    assert!(height > 0 && width > 0, "DCT needs a non-empty plane");
    assert_eq!(data.len(), height * width, "plane does not match {height}x{width}");
    let rows = along_rows(data, height, width, &basis(width), inverse);
    let cols = along_rows(&transpose(&rows, height, width), width, height, &basis(height), inverse);
    transpose(&cols, width, height)
}

/// Orthonormal type-II DCT of a row-major `height x width` plane.
pub fn dct2(data: &[f64], height: usize, width: usize) -> Vec<f64> {
    separable(data, height, width, false)
}

/// Inverse of [`dct2`].
pub fn idct2(coeffs: &[f64], height: usize, width: usize) -> Vec<f64> {
    separable(coeffs, height, width, true)
}
