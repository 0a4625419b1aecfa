#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Rgb};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;

pub const STUB: &str = env!("CARGO_BIN_EXE_salience-stub-model");

/// Writes an RGB PNG whose pixel (x, y) is `f(x, y)`.
pub fn write_png(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).unwrap();
    }
    let img: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::from_fn(w, h, |x, y| Rgb(f(x, y)));
    img.save_with_format(path, image::ImageFormat::Png).unwrap();
}

/// A small deterministic test pattern.
pub fn pattern(seed: u32) -> impl Fn(u32, u32) -> [u8; 3] {
    move |x, y| {
        let v = x.wrapping_mul(37).wrapping_add(y.wrapping_mul(91)).wrapping_add(seed.wrapping_mul(53));
        [(v % 251) as u8, (v.wrapping_mul(7) % 241) as u8, (v.wrapping_mul(13) % 239) as u8]
    }
}

/// Installs an external model backed by the stub binary under
/// `<models_dir>/<name>`. `extra` is spliced into the manifest object.
pub fn install_stub(models_dir: &Path, name: &str, env: &[(&str, &str)], extra: &str) -> PathBuf {
    let dir = models_dir.join(name);
    fs::create_dir_all(&dir).unwrap();
    let link = dir.join("stub");
    if !link.exists() {
        std::os::unix::fs::symlink(STUB, &link).unwrap();
    }
    let env_json = serde_json::to_string(
        &env.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect::<std::collections::BTreeMap<_, _>>(),
    )
    .unwrap();
    let manifest = format!(
        r#"{{
  "name": "{name}",
  "long_name": "{name} (stub)",
  "citation": "test fixture",
  "model_type": "external",
  "parameters": {{
    "contrast_window": {{
      "default": 3,
      "description": "Side of the averaging window.",
      "valid_values": "Odd integer greater than 0.",
      "constraint": {{ "kind": "int_range", "min_exclusive": 0, "odd": true }}
    }}
  }},
  "launch": {{ "command": ["{{model_dir}}/stub"], "env": {env_json}, "timeout_secs": 30 }}{extra}
}}"#
    );
    fs::write(dir.join("manifest.json"), manifest).unwrap();
    dir
}

/// Reads every regular file under `root` as (relative path, bytes), sorted.
pub fn snapshot(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    if root.exists() {
        walk(root, root, &mut out);
    }
    out.sort();
    out
}

/// Draws one value from a strategy with a deterministic runner.
pub fn draw<S: Strategy>(runner: &mut TestRunner, strategy: S) -> S::Value {
    strategy.new_tree(runner).unwrap().current()
}

/// Whether a process is gone or a zombie awaiting its (foreign) parent.
pub fn process_is_dead(pid: u32) -> bool {
    match fs::read_to_string(format!("/proc/{pid}/stat")) {
        Err(_) => true,
        Ok(stat) => {
            let state = stat.rsplit(')').next().unwrap_or("").split_whitespace().next().unwrap_or("");
            state == "Z" || state == "X"
        }
    }
}

/// Naive orthonormal 2-D DCT-II by direct summation.
pub fn naive_dct2(x: &[f64], h: usize, w: usize) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let a = |k: usize, n: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    let mut out = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            let mut s = 0.0;
            for y in 0..h {
                for xx in 0..w {
                    s += x[y * w + xx]
                        * ((pi * (2 * y + 1) as f64 * u as f64) / (2 * h) as f64).cos()
                        * ((pi * (2 * xx + 1) as f64 * v as f64) / (2 * w) as f64).cos();
                }
            }
            out[u * w + v] = a(u, h) * a(v, w) * s;
        }
    }
    out
}

/// Naive orthonormal 2-D DCT-III (inverse of [`naive_dct2`]).
pub fn naive_idct2(c: &[f64], h: usize, w: usize) -> Vec<f64> {
    let pi = std::f64::consts::PI;
    let a = |k: usize, n: usize| if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for xx in 0..w {
            let mut s = 0.0;
            for u in 0..h {
                for v in 0..w {
                    s += a(u, h)
                        * a(v, w)
                        * c[u * w + v]
                        * ((pi * (2 * y + 1) as f64 * u as f64) / (2 * h) as f64).cos()
                        * ((pi * (2 * xx + 1) as f64 * v as f64) / (2 * w) as f64).cos();
                }
            }
            out[y * w + xx] = s;
        }
    }
    out
}

/// Image signature by the textbook formula on one channel.
pub fn naive_signature(x: &[f64], h: usize, w: usize) -> Vec<f64> {
    let coeffs = naive_dct2(x, h, w);
    let signs: Vec<f64> = coeffs
        .iter()
        .map(|c| {
            if *c > 0.0 {
                1.0
            } else if *c < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    naive_idct2(&signs, h, w).into_iter().map(|v| v * v).collect()
}
