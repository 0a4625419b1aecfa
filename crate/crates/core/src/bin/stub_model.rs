//! Minimal protocol-v1 model used by the test suites.
//!
//! Computes local luminance contrast, |luma - mean of the window around it|,
//! with replicated borders. Behaviour can be bent for tests through the
//! environment:
//!
//! - `STUB_MODE`: `contrast` (default), `garbage`, `sleep`, `error`, `crash`
//! - `STUB_SLEEP_SECS`: how long `sleep` sleeps (default 60)
//! - `STUB_EXPECT_ENV`: `NAME=VALUE` that must be set, else an error response
//! - `STUB_FORBID_ENV`: a variable that must not be set
//! - `STUB_RECORD_REQUEST`: file to copy the request line into
//! - `STUB_GRANDCHILD_PID_FILE`: in `sleep` mode, spawn a long-lived
//!   grandchild and write its pid here

use std::io::{self, BufRead, Write};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Duration;

use salience::external::protocol::{encode_line, InvocationRequest, InvocationResponse};
use salience::raster::{load_image, luma, write_map, MapFormat};
use salience::{SaliencyMap, PROTOCOL_VERSION};

fn respond(resp: &InvocationResponse) {
    let mut out = io::stdout().lock();
    let _ = out.write_all(encode_line(resp).as_bytes());
    let _ = out.flush();
}

fn fail(message: impl Into<String>) -> ExitCode {
    respond(&InvocationResponse::error(message));
    ExitCode::from(1)
}

fn contrast(path: &Path, window: usize) -> Result<SaliencyMap, String> {
    let img = load_image(path).map_err(|e| e.to_string())?;
    let (h, w) = img.dims();
    let lum: Vec<f64> = (0..h * w)
        .map(|i| {
            let p = img.pixel(i / w, i % w);
            luma([p[0], p[1], p[2]])
        })
        .collect();
    let r = (window / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let mut data = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let mut sum = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    sum += lum[clamp(y as isize + dy, h) * w + clamp(x as isize + dx, w)];
                }
            }
            let mean = sum / (window * window) as f64;
            data.push((lum[y * w + x] - mean).abs());
        }
    }
    Ok(SaliencyMap::new(h, w, data))
}

fn main() -> ExitCode {
    let mut line = String::new();
    if io::stdin().lock().read_line(&mut line).is_err() || line.trim().is_empty() {
        return fail("no request on standard input");
    }
    let mode = std::env::var("STUB_MODE").unwrap_or_else(|_| "contrast".into());
    match mode.as_str() {
        "garbage" => {
            println!("this is not a response");
            return ExitCode::SUCCESS;
        }
        "error" => return fail("stub asked to fail"),
        "crash" => std::process::abort(),
        "sleep" => {
            if let Ok(pid_file) = std::env::var("STUB_GRANDCHILD_PID_FILE") {
                match Command::new("sleep").arg("600").spawn() {
                    Ok(child) => {
                        let _ = std::fs::write(pid_file, child.id().to_string());
                    }
                    Err(e) => return fail(format!("cannot spawn grandchild: {e}")),
                }
            }
            let secs = std::env::var("STUB_SLEEP_SECS").ok().and_then(|s| s.parse().ok()).unwrap_or(60.0);
            std::thread::sleep(Duration::from_secs_f64(secs));
        }
        _ => {}
    }

    if let Ok(expect) = std::env::var("STUB_EXPECT_ENV") {
        if let Some((name, value)) = expect.split_once('=') {
            if std::env::var(name).ok().as_deref() != Some(value) {
                return fail(format!("expected {name}={value} in the environment"));
            }
        }
    }

    if let Ok(name) = std::env::var("STUB_FORBID_ENV") {
        if std::env::var_os(&name).is_some() {
            return fail(format!("{name} leaked into the environment"));
        }
    }
    if let Ok(path) = std::env::var("STUB_RECORD_REQUEST") {
        let _ = std::fs::write(path, &line);
    }

    let request: InvocationRequest = match serde_json::from_str(line.trim()) {
        Ok(r) => r,
        Err(e) => return fail(format!("malformed request: {e}")),
    };
    if request.protocol_version != PROTOCOL_VERSION {
        return fail(format!(
            "unsupported protocol_version {} (this model speaks {PROTOCOL_VERSION})",
            request.protocol_version
        ));
    }
    let window = match request.params.get("contrast_window").map(|v| v.as_i64()) {
        None => 9,
        Some(Some(n)) if n >= 1 && n % 2 == 1 => n as usize,
        Some(_) => return fail("contrast_window must be an odd integer >= 1"),
    };
    let map = match contrast(&request.image_path, window) {
        Ok(map) => map,
        Err(e) => return fail(e),
    };
    if let Err(e) = write_map(&map, &request.output_path, MapFormat::F32Raw) {
        return fail(e.to_string());
    }
    let mut resp = InvocationResponse::ok(&request.output_path);
    resp.model_version = Some(env!("CARGO_PKG_VERSION").to_string());
    respond(&resp);
    ExitCode::SUCCESS
}
