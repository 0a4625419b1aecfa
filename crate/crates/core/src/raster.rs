//! Float rasters, colour-space conversion and saliency-map I/O.
//!
//! Images are stored row-major and interleaved (`data[(y * width + x) * channels + c]`).
//! Saliency maps are single-channel rasters carrying the name of the model
//! that produced them and the parameters it was run with.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::ResolvedParams;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported image format for {path}: only PNG and JPEG are accepted")]
    UnsupportedFormat { path: PathBuf },
    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("map value {value} at index {index} is outside [0, 1]; rescale before writing png8")]
    Range { index: usize, value: f64 },
    #[error("malformed f32raw data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = RasterError> = std::result::Result<T, E>;

/// Colour spaces understood by the pre-processing stage.
///
/// `Default` only exists at parameter-resolution time; no [`Image`] carries it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ColorSpace {
    #[serde(rename = "RGB")]
    Rgb,
    #[serde(rename = "gray")]
    Gray,
    #[serde(rename = "YCbCr")]
    YCbCr,
    #[serde(rename = "LAB")]
    Lab,
    #[serde(rename = "HSV")]
    Hsv,
    #[serde(rename = "default")]
    Default,
}

impl ColorSpace {
    pub const fn as_str(self) -> &'static str {
        match self {
            ColorSpace::Rgb => "RGB",
            ColorSpace::Gray => "gray",
            ColorSpace::YCbCr => "YCbCr",
            ColorSpace::Lab => "LAB",
            ColorSpace::Hsv => "HSV",
            ColorSpace::Default => "default",
        }
    }

    /// Number of channels an image in this space has.
    pub const fn channels(self) -> usize {
        match self {
            ColorSpace::Gray => 1,
            _ => 3,
        }
    }
}

impl fmt::Display for ColorSpace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColorSpace {
    type Err = RasterError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "RGB" => ColorSpace::Rgb,
            "gray" => ColorSpace::Gray,
            "YCbCr" => ColorSpace::YCbCr,
            "LAB" => ColorSpace::Lab,
            "HSV" => ColorSpace::Hsv,
            "default" => ColorSpace::Default,
            other => return Err(RasterError::InvalidInput(format!("unknown color space {other:?}"))),
        })
    }
}

/// A decoded raster in a concrete colour space.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    space: ColorSpace,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image, checking the layout invariants.
    pub fn new(height: usize, width: usize, space: ColorSpace, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(RasterError::InvalidInput(format!("image dimensions must be positive, got {height}x{width}")));
        }
        if space == ColorSpace::Default {
            return Err(RasterError::InvalidInput("an image cannot carry the `default` color space".into()));
        }
        let channels = space.channels();
        if data.len() != height * width * channels {
            return Err(RasterError::InvalidInput(format!(
                "data length {} does not match {height}x{width}x{channels}",
                data.len()
            )));
        }
        if space == ColorSpace::Rgb {
            if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(RasterError::InvalidInput(format!("RGB value {v} outside [0, 1]")));
            }
        }
        Ok(Image { height, width, channels, space, data })
    }

    /// Single-channel image with the given value everywhere.
    pub fn filled(height: usize, width: usize, space: ColorSpace, value: f64) -> Result<Self> {
        Image::new(height, width, space, vec![value; height * width * space.channels()])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn space(&self) -> ColorSpace {
        self.space
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, y: usize, x: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Copies channel `c` out as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        assert!(c < self.channels, "channel {c} out of range");
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    fn map_pixels(&self, space: ColorSpace, f: impl Fn(&[f64]) -> Vec<f64>) -> Image {
        let data = self.data.chunks_exact(self.channels).flat_map(f).collect();
        Image { height: self.height, width: self.width, channels: space.channels(), space, data }
    }
}

/// A single-channel saliency raster with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    pub model_name: String,
    pub resolved_params: ResolvedParams,
}

impl SaliencyMap {
    /// A map without provenance; panics if `data` does not match the dimensions.
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width, "map data does not match {height}x{width}");
        SaliencyMap { height, width, data, model_name: String::new(), resolved_params: ResolvedParams::default() }
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Self {
        SaliencyMap::new(height, width, vec![value; height * width])
    }

    pub fn with_provenance(mut self, model_name: impl Into<String>, params: ResolvedParams) -> Self {
        self.model_name = model_name.into();
        self.resolved_params = params;
        self
    }

    /// Same provenance, new raster.
    pub fn with_data(&self, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), height * width);
        SaliencyMap {
            height,
            width,
            data,
            model_name: self.model_name.clone(),
            resolved_params: self.resolved_params.clone(),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Loads a PNG or JPEG file as an RGB image with values in `[0, 1]`.
///
/// Grayscale files are expanded to three channels and alpha is dropped.
pub fn load_image(path: &Path) -> Result<Image> {
    if !path.is_file() {
        return Err(RasterError::FileNotFound(path.to_path_buf()));
    }
    let reader = ImageReader::open(path)?.with_guessed_format()?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        _ => return Err(RasterError::UnsupportedFormat { path: path.to_path_buf() }),
    }
    let decoded =
        reader.decode().map_err(|e| RasterError::Decode { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(image_from_dynamic(&decoded))
}

fn image_from_dynamic(decoded: &DynamicImage) -> Image {
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f64> = match decoded {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => {
            decoded.to_rgb16().into_raw().into_iter().map(|v| f64::from(v) / 65535.0).collect()
        }
        _ => decoded.to_rgb8().into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect(),
    };
    Image { height, width, channels: 3, space: ColorSpace::Rgb, data }
}

/// Encodes an RGB image as an 8-bit PNG.
pub fn save_rgb_png(img: &Image, path: &Path) -> Result<()> {
    if img.space != ColorSpace::Rgb {
        return Err(RasterError::InvalidInput(format!("cannot save a {} image as PNG", img.space)));
    }
    let bytes: Vec<u8> = img.data.iter().map(|v| (v * 255.0).round() as u8).collect();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, bytes)
        .expect("buffer length checked by Image invariants");
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| RasterError::Io(io::Error::other(e)))
}

// Rec. 601 luma weights.
const LUMA_R: f64 = 0.299;
const LUMA_G: f64 = 0.587;
const LUMA_B: f64 = 0.114;

// sRGB primaries to XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

/// Reference white: XYZ of RGB (1, 1, 1) so that white maps to L*=100, a*=b*=0.
fn white_point() -> [f64; 3] {
    RGB_TO_XYZ.map(|row| row.iter().sum())
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            // cofactor of (j, i)
            let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
            let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
            *cell = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
        }
    }
    inv
}

fn mul3(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    m.map(|row| row[0] * v[0] + row[1] * v[1] + row[2] * v[2])
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_to_srgb(c: f64) -> f64 {
    if c <= 0.003_130_8 {
        c * 12.92
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

const LAB_DELTA: f64 = 6.0 / 29.0;

fn lab_f(t: f64) -> f64 {
    if t > LAB_DELTA.powi(3) {
        t.cbrt()
    } else {
        t / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > LAB_DELTA {
        t.powi(3)
    } else {
        3.0 * LAB_DELTA * LAB_DELTA * (t - 4.0 / 29.0)
    }
}

pub fn luma(rgb: [f64; 3]) -> f64 {
    LUMA_R * rgb[0] + LUMA_G * rgb[1] + LUMA_B * rgb[2]
}

/// CIELAB (D65) from gamma-encoded sRGB.
pub fn rgb_to_lab(rgb: [f64; 3]) -> [f64; 3] {
    let xyz = mul3(&RGB_TO_XYZ, rgb.map(srgb_to_linear));
    let white = white_point();
    let f = [lab_f(xyz[0] / white[0]), lab_f(xyz[1] / white[1]), lab_f(xyz[2] / white[2])];
    [116.0 * f[1] - 16.0, 500.0 * (f[0] - f[1]), 200.0 * (f[1] - f[2])]
}

pub fn lab_to_rgb(lab: [f64; 3]) -> [f64; 3] {
    let fy = (lab[0] + 16.0) / 116.0;
    let fx = fy + lab[1] / 500.0;
    let fz = fy - lab[2] / 200.0;
    let white = white_point();
    let xyz = [lab_f_inv(fx) * white[0], lab_f_inv(fy) * white[1], lab_f_inv(fz) * white[2]];
    mul3(&invert3(&RGB_TO_XYZ), xyz).map(linear_to_srgb)
}

/// Full-range Rec. 601 YCbCr with chroma centred on 0.5.
pub fn rgb_to_ycbcr(rgb: [f64; 3]) -> [f64; 3] {
    let y = luma(rgb);
    let cb = 0.5 + 0.5 * (rgb[2] - y) / (1.0 - LUMA_B);
    let cr = 0.5 + 0.5 * (rgb[0] - y) / (1.0 - LUMA_R);
    [y, cb, cr]
}

pub fn ycbcr_to_rgb(ycc: [f64; 3]) -> [f64; 3] {
    let y = ycc[0];
    let b = y + (ycc[1] - 0.5) * 2.0 * (1.0 - LUMA_B);
    let r = y + (ycc[2] - 0.5) * 2.0 * (1.0 - LUMA_R);
    let g = (y - LUMA_R * r - LUMA_B * b) / LUMA_G;
    [r, g, b]
}

/// HSV with hue in degrees `[0, 360)` and S, V in `[0, 1]`.
pub fn rgb_to_hsv(rgb: [f64; 3]) -> [f64; 3] {
    let [r, g, b] = rgb;
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let hue = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    let mut hue = hue.rem_euclid(360.0);
    if hue >= 360.0 {
        hue = 0.0;
    }
    let sat = if max == 0.0 { 0.0 } else { delta / max };
    [hue, sat, max]
}

pub fn hsv_to_rgb(hsv: [f64; 3]) -> [f64; 3] {
    let [h, s, v] = hsv;
    let c = v * s;
    let sector = (h / 60.0).rem_euclid(6.0);
    let x = c * (1.0 - (sector % 2.0 - 1.0).abs());
    let m = v - c;
    let (r, g, b) = match sector as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    [r + m, g + m, b + m]
}

fn triple(p: &[f64]) -> [f64; 3] {
    [p[0], p[1], p[2]]
}

/// Converts an RGB image into `target`. Converting to RGB is the identity.
pub fn convert_color(img: &Image, target: ColorSpace) -> Result<Image> {
    if img.space != ColorSpace::Rgb {
        return Err(RasterError::InvalidInput(format!("convert_color expects an RGB image, got {}", img.space)));
    }
    let converted = match target {
        ColorSpace::Default => {
            return Err(RasterError::InvalidInput(
                "the `default` color space must be resolved before conversion".into(),
            ))
        }
        ColorSpace::Rgb => img.clone(),
        ColorSpace::Gray => img.map_pixels(target, |p| vec![luma(triple(p))]),
        ColorSpace::YCbCr => img.map_pixels(target, |p| rgb_to_ycbcr(triple(p)).to_vec()),
        ColorSpace::Lab => img.map_pixels(target, |p| rgb_to_lab(triple(p)).to_vec()),
        ColorSpace::Hsv => img.map_pixels(target, |p| rgb_to_hsv(triple(p)).to_vec()),
    };
    Ok(converted)
}

/// Inverse of [`convert_color`]; gray is expanded to three equal channels.
///
/// Results are not clamped, so out-of-gamut inputs come back out of range.
pub fn to_rgb_values(img: &Image) -> Vec<f64> {
    let back: fn(&[f64]) -> Vec<f64> = match img.space {
        ColorSpace::Rgb | ColorSpace::Default => |p| p.to_vec(),
        ColorSpace::Gray => |p| vec![p[0]; 3],
        ColorSpace::YCbCr => |p| ycbcr_to_rgb(triple(p)).to_vec(),
        ColorSpace::Lab => |p| lab_to_rgb(triple(p)).to_vec(),
        ColorSpace::Hsv => |p| hsv_to_rgb(triple(p)).to_vec(),
    };
    img.data.chunks_exact(img.channels).flat_map(back).collect()
}

/// Output encodings for saliency maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    /// 8-bit single-channel PNG, `v -> round(v * 255)`.
    Png8,
    /// Lossless little-endian float32 raster with a 16-byte header.
    F32Raw,
}

pub const F32RAW_MAGIC: &[u8; 4] = b"SALF";
pub const F32RAW_HEADER_LEN: usize = 16;

pub fn write_map(map: &SaliencyMap, path: &Path, format: MapFormat) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    match format {
        MapFormat::Png8 => {
            if let Some((index, &value)) = map.data.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
                return Err(RasterError::Range { index, value });
            }
            let bytes: Vec<u8> = map.data.iter().map(|v| (v * 255.0).round() as u8).collect();
            let buf = GrayImage::from_raw(map.width as u32, map.height as u32, bytes)
                .expect("map length matches its dimensions");
            buf.save_with_format(path, ImageFormat::Png).map_err(|e| RasterError::Io(io::Error::other(e)))
        }
        MapFormat::F32Raw => Ok(fs::write(path, encode_f32raw(map))?),
    }
}

pub fn encode_f32raw(map: &SaliencyMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(F32RAW_HEADER_LEN + 4 * map.data.len());
    out.extend_from_slice(F32RAW_MAGIC);
    out.extend_from_slice(&(map.height as u32).to_le_bytes());
    out.extend_from_slice(&(map.width as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in &map.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_f32raw(bytes: &[u8]) -> Result<SaliencyMap> {
    if bytes.len() < F32RAW_HEADER_LEN {
        return Err(RasterError::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != F32RAW_MAGIC {
        return Err(RasterError::Format("bad magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (height, width) = (word(4), word(8));
    if height == 0 || width == 0 {
        return Err(RasterError::Format(format!("empty raster {height}x{width}")));
    }
    let expected = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| RasterError::Format("dimensions overflow".into()))?;
    let payload = &bytes[F32RAW_HEADER_LEN..];
    if payload.len() != expected {
        return Err(RasterError::Format(format!(
            "payload is {} bytes, expected {expected} for {height}x{width}",
            payload.len()
        )));
    }
    let data: Vec<f64> =
        payload.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(RasterError::Format("non-finite value in payload".into()));
    }
    Ok(SaliencyMap::new(height, width, data))
}

pub fn read_f32raw(path: &Path) -> Result<SaliencyMap> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => RasterError::FileNotFound(path.to_path_buf()),
        _ => RasterError::Io(e),
    })?;
    decode_f32raw(&bytes)
}
