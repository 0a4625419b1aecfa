mod common;

use std::fs;
use std::path::Path;

use image::{ImageBuffer, Luma, Rgb, Rgba};
use proptest::prelude::*;

use salience::raster::{
    decode_f32raw, load_image, read_f32raw, write_map, ColorSpace, MapFormat, RasterError, SaliencyMap,
    F32RAW_HEADER_LEN,
};

use common::{pattern, write_png};

#[test]
fn white_and_red_pixels() {
    let dir = tempfile::tempdir().unwrap();
    let white = dir.path().join("white.png");
    write_png(&white, 2, 2, |_, _| [255, 255, 255]);
    let img = load_image(&white).unwrap();
    assert_eq!((img.height(), img.width(), img.channels(), img.space()), (2, 2, 3, ColorSpace::Rgb));
    assert!(img.data().iter().all(|v| *v == 1.0));

    let red = dir.path().join("red.png");
    write_png(&red, 1, 1, |_, _| [255, 0, 0]);
    assert_eq!(load_image(&red).unwrap().data(), &[1.0, 0.0, 0.0]);
}

#[test]
fn grayscale_sources_expand_to_three_channels() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("gray.png");
    ImageBuffer::<Luma<u8>, _>::from_fn(3, 2, |x, y| Luma([(x * 50 + y * 20) as u8])).save(&path).unwrap();
    let img = load_image(&path).unwrap();
    assert_eq!(img.channels(), 3);
    let p = img.pixel(1, 2);
    assert_eq!(p, &[120.0 / 255.0; 3]);
}

#[test]
fn alpha_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rgba.png");
    ImageBuffer::<Rgba<u8>, _>::from_fn(2, 1, |x, _| Rgba([10, 20, 30, if x == 0 { 0 } else { 255 }]))
        .save(&path)
        .unwrap();
    let img = load_image(&path).unwrap();
    assert_eq!(img.pixel(0, 0), img.pixel(0, 1));
    assert_eq!(img.pixel(0, 0), &[10.0 / 255.0, 20.0 / 255.0, 30.0 / 255.0]);
}

#[test]
fn sixteen_bit_samples_keep_precision() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("deep.png");
    ImageBuffer::<Rgb<u16>, _>::from_fn(1, 1, |_, _| Rgb([65535, 32768, 1])).save(&path).unwrap();
    let img = load_image(&path).unwrap();
    assert_eq!(img.data(), &[1.0, 32768.0 / 65535.0, 1.0 / 65535.0]);
}

#[test]
fn jpeg_loads() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.jpg");
    ImageBuffer::<Rgb<u8>, _>::from_fn(16, 8, |_, _| Rgb([128, 128, 128])).save(&path).unwrap();
    let img = load_image(&path).unwrap();
    assert_eq!(img.dims(), (8, 16));
    assert!(img.data().iter().all(|v| (v - 128.0 / 255.0).abs() <= 2.0 / 255.0));
}

#[test]
fn format_is_sniffed_not_taken_from_the_extension() {
    let dir = tempfile::tempdir().unwrap();
    let png = dir.path().join("real.png");
    write_png(&png, 2, 2, pattern(3));
    let renamed = dir.path().join("misnamed.jpg");
    fs::copy(&png, &renamed).unwrap();
    assert_eq!(load_image(&renamed).unwrap(), load_image(&png).unwrap());
}

#[test]
fn load_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_image(&dir.path().join("missing.png")), Err(RasterError::FileNotFound(_))));

    let gif = dir.path().join("anim.gif");
    fs::write(&gif, b"GIF89a\x01\x00\x01\x00\x00\x00\x00;").unwrap();
    assert!(matches!(load_image(&gif), Err(RasterError::UnsupportedFormat { .. })));

    let text = dir.path().join("notes.txt");
    fs::write(&text, "hello").unwrap();
    assert!(matches!(load_image(&text), Err(RasterError::UnsupportedFormat { .. })));

    let truncated = dir.path().join("broken.png");
    write_png(&truncated, 8, 8, pattern(1));
    let bytes = fs::read(&truncated).unwrap();
    fs::write(&truncated, &bytes[..bytes.len() / 2]).unwrap();
    assert!(matches!(load_image(&truncated), Err(RasterError::Decode { .. })));
}

// Minimal PNG writer producing Adam7-interlaced files with stored (uncompressed) deflate blocks.
mod interlaced {
    fn crc32(bytes: &[u8]) -> u32 {
        let mut crc = 0xffff_ffffu32;
        for &b in bytes {
            crc ^= u32::from(b);
            for _ in 0..8 {
                crc = if crc & 1 == 1 { (crc >> 1) ^ 0xedb8_8320 } else { crc >> 1 };
            }
        }
        !crc
    }

    fn adler32(bytes: &[u8]) -> u32 {
        let (mut a, mut b) = (1u32, 0u32);
        for &x in bytes {
            a = (a + u32::from(x)) % 65521;
            b = (b + a) % 65521;
        }
        (b << 16) | a
    }

    fn chunk(out: &mut Vec<u8>, kind: &[u8; 4], data: &[u8]) {
        out.extend_from_slice(&(data.len() as u32).to_be_bytes());
        let mut body = kind.to_vec();
        body.extend_from_slice(data);
        out.extend_from_slice(&body);
        out.extend_from_slice(&crc32(&body).to_be_bytes());
    }

    fn zlib_stored(raw: &[u8]) -> Vec<u8> {
        let mut out = vec![0x78, 0x01];
        let blocks: Vec<&[u8]> = if raw.is_empty() { vec![&[][..]] } else { raw.chunks(65535).collect() };
        for (i, block) in blocks.iter().enumerate() {
            out.push(u8::from(i + 1 == blocks.len()));
            let len = block.len() as u16;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(&(!len).to_le_bytes());
            out.extend_from_slice(block);
        }
        out.extend_from_slice(&adler32(raw).to_be_bytes());
        out
    }

    /// `rgb` is row-major, 3 bytes per pixel.
    pub fn encode(width: u32, height: u32, rgb: &[u8]) -> Vec<u8> {
        const PASSES: [(u32, u32, u32, u32); 7] =
            [(0, 0, 8, 8), (4, 0, 8, 8), (0, 4, 4, 8), (2, 0, 4, 4), (0, 2, 2, 4), (1, 0, 2, 2), (0, 1, 1, 2)];
        let mut raw = Vec::new();
        for (x0, y0, dx, dy) in PASSES {
            let xs: Vec<u32> = (x0..width).step_by(dx as usize).collect();
            if xs.is_empty() {
                continue;
            }
            for y in (y0..height).step_by(dy as usize) {
                raw.push(0);
                for &x in &xs {
                    let i = ((y * width + x) * 3) as usize;
                    raw.extend_from_slice(&rgb[i..i + 3]);
                }
            }
        }
        let mut out = b"\x89PNG\r\n\x1a\n".to_vec();
        let mut ihdr = Vec::new();
        ihdr.extend_from_slice(&width.to_be_bytes());
        ihdr.extend_from_slice(&height.to_be_bytes());
        ihdr.extend_from_slice(&[8, 2, 0, 0, 1]);
        chunk(&mut out, b"IHDR", &ihdr);
        chunk(&mut out, b"IDAT", &zlib_stored(&raw));
        chunk(&mut out, b"IEND", &[]);
        out
    }
}

#[test]
fn interlacing_does_not_change_pixels() {
    let dir = tempfile::tempdir().unwrap();
    for (w, h) in [(1, 1), (5, 7), (13, 9)] {
        let f = pattern(w + h);
        let plain = dir.path().join(format!("plain_{w}x{h}.png"));
        write_png(&plain, w, h, &f);
        let rgb: Vec<u8> = (0..h).flat_map(|y| (0..w).map(move |x| (x, y))).flat_map(|(x, y)| f(x, y)).collect();
        let adam7 = dir.path().join(format!("adam7_{w}x{h}.png"));
        fs::write(&adam7, interlaced::encode(w, h, &rgb)).unwrap();
        assert_ne!(fs::read(&plain).unwrap(), fs::read(&adam7).unwrap());
        assert_eq!(load_image(&plain).unwrap(), load_image(&adam7).unwrap(), "{w}x{h}");
    }
}

#[test]
fn png8_extremes() {
    let dir = tempfile::tempdir().unwrap();
    for (value, byte) in [(1.0, 255u8), (0.0, 0u8)] {
        let path = dir.path().join(format!("{byte}.png"));
        write_map(&SaliencyMap::filled(3, 2, value), &path, MapFormat::Png8).unwrap();
        let back = image::open(&path).unwrap();
        assert_eq!(back.color(), image::ColorType::L8);
        assert!(back.to_luma8().pixels().all(|p| p.0[0] == byte));
    }
}

#[test]
fn png8_rejects_out_of_range_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.png");
    let map = SaliencyMap::new(1, 3, vec![0.0, 1.5, 0.2]);
    assert!(matches!(write_map(&map, &path, MapFormat::Png8), Err(RasterError::Range { index: 1, .. })));
    assert!(!path.exists());
}

#[test]
fn f32raw_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/dir/map.f32raw");
    let map = SaliencyMap::new(2, 3, vec![0.0, 0.5, 1.0, -2.0, 3.25, 7.0]);
    write_map(&map, &path, MapFormat::F32Raw).unwrap();
    let bytes = fs::read(&path).unwrap();
    assert_eq!(bytes.len(), F32RAW_HEADER_LEN + 24);
    assert_eq!(&bytes[..4], b"SALF");
    assert_eq!(&bytes[4..16], &[2, 0, 0, 0, 3, 0, 0, 0, 0, 0, 0, 0]);
    assert_eq!(&bytes[16 + 12..16 + 16], &(-2.0f32).to_le_bytes());
    assert_eq!(read_f32raw(&path).unwrap().data, map.data);
}

#[test]
fn f32raw_rejects_malformed_input() {
    assert!(decode_f32raw(b"SAL").is_err());
    assert!(decode_f32raw(b"XXXX\x01\0\0\0\x01\0\0\0\0\0\0\0\0\0\0\0").is_err());
    assert!(decode_f32raw(b"SALF\x01\0\0\0\x02\0\0\0\0\0\0\0\0\0\0\0").is_err());
    assert!(decode_f32raw(b"SALF\0\0\0\0\x01\0\0\0\0\0\0\0").is_err());
    let mut nan = b"SALF\x01\0\0\0\x01\0\0\0\0\0\0\0".to_vec();
    nan.extend_from_slice(&f32::NAN.to_le_bytes());
    assert!(decode_f32raw(&nan).is_err());
}

fn png8_round_trip(dir: &Path, h: usize, w: usize, data: Vec<f64>) {
    let path = dir.join("rt.png");
    let map = SaliencyMap::new(h, w, data);
    write_map(&map, &path, MapFormat::Png8).unwrap();
    let back = image::open(&path).unwrap().to_luma8();
    for (v, p) in map.data.iter().zip(back.pixels()) {
        assert!((f64::from(p.0[0]) / 255.0 - v).abs() <= 1.0 / 255.0 + 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn png8_round_trip_within_one_level((h, w, data) in (1usize..12, 1usize..12)
        .prop_flat_map(|(h, w)| (Just(h), Just(w), proptest::collection::vec(0.0..=1.0f64, h * w))))
    {
        let dir = tempfile::tempdir().unwrap();
        png8_round_trip(dir.path(), h, w, data);
    }

    #[test]
    fn f32raw_round_trip_is_exact_for_f32_values((h, w, data) in (1usize..10, 1usize..10)
        .prop_flat_map(|(h, w)| (Just(h), Just(w), proptest::collection::vec(-1e6f32..1e6, h * w))))
    {
        let map = SaliencyMap::new(h, w, data.iter().map(|v| f64::from(*v)).collect());
        let back = decode_f32raw(&salience::raster::encode_f32raw(&map)).unwrap();
        prop_assert_eq!(back.dims(), (h, w));
        prop_assert_eq!(back.data, map.data);
    }
}
