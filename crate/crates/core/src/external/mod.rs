//! Out-of-process models.
//!
//! Each invocation spawns the model's launch command in a fresh working
//! directory with a cleared environment (only `PATH` plus the manifest's
//! `env` mapping), in its own process group. The framework speaks
//! [`protocol`] v1 with it and kills the whole group once the call is over.

pub mod assets;
pub mod protocol;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{self, Read, Write};
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use log::{debug, info};
use thiserror::Error;

use crate::params::{resolve_aliases, ModelManifest, ResolvedParams, Scalar};
use crate::raster::{read_f32raw, save_rgb_png, Image, RasterError, SaliencyMap};
use crate::PROTOCOL_VERSION;
use protocol::{decode_first_line, encode_line, InvocationRequest, InvocationResponse, ResponseStatus};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Debug, Error)]
pub enum ExternalError {
    #[error("model {model}: cannot launch {program}: {message}")]
    Launch { model: String, program: String, message: String },
    #[error("model {model}: protocol error: {message}")]
    Protocol { model: String, message: String },
    #[error("model {model} reported an error: {message}")]
    Model { model: String, message: String },
    #[error("model {model} timed out after {seconds:.1}s")]
    Timeout { model: String, seconds: f64 },
    #[error("model {model}: unreadable map: {message}")]
    MapFormat { model: String, message: String },
    #[error("model {model}: {source}")]
    Io { model: String, source: io::Error },
}

#[derive(Debug, Clone, Default)]
pub struct InvokeOptions {
    /// Parent directory for per-invocation working directories; the system
    /// temp directory when `None`.
    pub workdir_root: Option<PathBuf>,
    /// Keep the working directory (input PNG and output map) after the call.
    pub keep_artifacts: bool,
}

/// A model that runs as a child process.
#[derive(Debug)]
pub struct ExternalModelHandle {
    pub manifest: ModelManifest,
    pub model_dir: PathBuf,
    pub assets_dir: PathBuf,
    pub timeout: Duration,
    // the child serves one request, so calls on a handle are serialised
    in_flight: Mutex<()>,
}

impl ExternalModelHandle {
    pub fn new(manifest: ModelManifest, model_dir: impl Into<PathBuf>, assets_dir: impl Into<PathBuf>) -> Self {
        let absolute = |p: PathBuf| std::path::absolute(&p).unwrap_or(p);
        let timeout =
            manifest.launch.as_ref().and_then(|l| l.timeout_secs).map(Duration::from_secs).unwrap_or(DEFAULT_TIMEOUT);
        ExternalModelHandle {
            manifest,
            model_dir: absolute(model_dir.into()),
            assets_dir: absolute(assets_dir.into()),
            timeout,
            in_flight: Mutex::new(()),
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn name(&self) -> &str {
        &self.manifest.name
    }

    /// The launch command with placeholders substituted.
    pub fn command_line(&self) -> Vec<String> {
        let launch = self.manifest.launch.as_ref().expect("external manifests carry a launch section");
        let model_dir = self.model_dir.to_string_lossy();
        let assets_dir = self.assets_dir.to_string_lossy();
        launch
            .command
            .iter()
            .map(|arg| arg.replace("{model_dir}", &model_dir).replace("{assets_dir}", &assets_dir))
            .collect()
    }

    /// The child's complete environment.
    pub fn environment(&self) -> BTreeMap<String, OsString> {
        let mut env = BTreeMap::new();
        if let Some(path) = std::env::var_os("PATH") {
            env.insert("PATH".to_string(), path);
        }
        if let Some(launch) = &self.manifest.launch {
            env.extend(launch.env.iter().map(|(k, v)| (k.clone(), OsString::from(v))));
        }
        env.insert("SALIENCE_MODEL_DIR".into(), self.model_dir.clone().into_os_string());
        env.insert("SALIENCE_ASSETS_DIR".into(), self.assets_dir.clone().into_os_string());
        env
    }

    /// An interactive shell with the model's environment, rooted at its directory.
    pub fn shell_command(&self) -> Command {
        let shell = std::env::var_os("SHELL").unwrap_or_else(|| "/bin/sh".into());
        let mut cmd = Command::new(shell);
        cmd.current_dir(&self.model_dir).env_clear().envs(self.environment());
        if let Some(term) = std::env::var_os("TERM") {
            cmd.env("TERM", term);
        }
        cmd
    }

    fn err_io(&self, source: io::Error) -> ExternalError {
        ExternalError::Io { model: self.name().to_string(), source }
    }

    /// Runs the model on one image and returns its raw map.
    ///
    /// The image is sent as RGB; `color_space` in the request carries the
    /// effective space so the model can convert if it wants to.
    pub fn invoke(
        &self,
        img: &Image,
        params: &ResolvedParams,
        opts: &InvokeOptions,
    ) -> Result<SaliencyMap, ExternalError> {
        let _guard = self.in_flight.lock().unwrap_or_else(|p| p.into_inner());
        let mut builder = tempfile::Builder::new();
        builder.prefix("salience-");
        let workdir = match &opts.workdir_root {
            Some(root) => builder.tempdir_in(root),
            None => builder.tempdir(),
        }
        .map_err(|e| self.err_io(e))?;

        let image_path = workdir.path().join("input.png");
        let output_path = workdir.path().join("output.f32raw");
        save_rgb_png(img, &image_path).map_err(|e| match e {
            RasterError::Io(io) => self.err_io(io),
            other => self.err_io(io::Error::other(other.to_string())),
        })?;

        let mut wire_params = params.values().clone();
        let effective = resolve_aliases(params, &self.manifest, img.dims());
        wire_params.insert("color_space".into(), Scalar::Str(effective.color_space.to_string()));
        let request =
            InvocationRequest { protocol_version: PROTOCOL_VERSION, image_path, params: wire_params, output_path };

        let result = self.exchange(&encode_line(&request), workdir.path());
        if opts.keep_artifacts {
            let kept = workdir.keep();
            info!("kept working directory {} for model {}", kept.display(), self.name());
        }
        let response = result?;
        let map_path = response.map_path.ok_or_else(|| ExternalError::Protocol {
            model: self.name().to_string(),
            message: "ok response without map_path".into(),
        })?;
        let map = read_f32raw(&map_path)
            .map_err(|e| ExternalError::MapFormat { model: self.name().to_string(), message: e.to_string() })?;
        if let Some(version) = &response.model_version {
            debug!("model {} reported version {version}", self.name());
        }
        Ok(map.with_provenance(self.name(), params.clone()))
    }

    /// Spawns the child, sends `request`, and waits for an `ok` response.
    fn exchange(&self, request: &str, workdir: &Path) -> Result<InvocationResponse, ExternalError> {
        let model = self.name().to_string();
        let argv = self.command_line();
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .current_dir(workdir)
            .env_clear()
            .envs(self.environment())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .process_group(0)
            .spawn()
            .map_err(|e| ExternalError::Launch {
                model: model.clone(),
                program: argv[0].clone(),
                message: e.to_string(),
            })?;
        let group = child.id() as libc::pid_t;

        let drain = |pipe: Option<Box<dyn Read + Send>>| {
            thread::spawn(move || {
                let mut buf = Vec::new();
                if let Some(mut pipe) = pipe {
                    let _ = pipe.read_to_end(&mut buf);
                }
                buf
            })
        };
        let stdout = drain(child.stdout.take().map(|p| Box::new(p) as Box<dyn Read + Send>));
        let stderr = drain(child.stderr.take().map(|p| Box::new(p) as Box<dyn Read + Send>));
        if let Some(mut stdin) = child.stdin.take() {
            // a child that exits without reading closes the pipe; its exit status tells the story
            let _ = stdin.write_all(request.as_bytes());
        }

        let deadline = Instant::now() + self.timeout;
        let status: Option<ExitStatus> = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if Instant::now() >= deadline => break None,
                Ok(None) => thread::sleep(Duration::from_millis(5)),
                Err(e) => {
                    kill_group(group);
                    let _ = child.wait();
                    return Err(self.err_io(e));
                }
            }
        };
        // take down anything the child left behind, then reap
        kill_group(group);
        let status = match status {
            Some(status) => status,
            None => {
                let _ = child.wait();
                let _ = stdout.join();
                let _ = stderr.join();
                return Err(ExternalError::Timeout { model, seconds: self.timeout.as_secs_f64() });
            }
        };
        let stdout = String::from_utf8_lossy(&stdout.join().unwrap_or_default()).into_owned();
        let stderr = String::from_utf8_lossy(&stderr.join().unwrap_or_default()).into_owned();
        if !stderr.trim().is_empty() {
            debug!("model {model} stderr: {}", stderr.trim());
        }

        let parsed = decode_first_line::<InvocationResponse>(&stdout);
        match (status.success(), parsed) {
            (true, Ok(resp)) if resp.status == ResponseStatus::Ok => Ok(resp),
            (_, Ok(resp)) if resp.status == ResponseStatus::Error => {
                Err(ExternalError::Model { model, message: resp.error_message.unwrap_or_else(|| "no message".into()) })
            }
            (true, Ok(_)) => unreachable!("status is ok or error"),
            (true, Err(message)) => Err(ExternalError::Protocol { model, message }),
            (false, _) => {
                let tail = stderr.trim().lines().last().unwrap_or("").to_string();
                Err(ExternalError::Model { model, message: format!("process exited with {status}; {tail}") })
            }
        }
    }
}

fn kill_group(group: libc::pid_t) {
    // SAFETY: kill(2) with a negative pid signals a process group; no memory is touched.
    unsafe {
        libc::kill(-group, libc::SIGKILL);
    }
}

/// Runs an external model on one image; see [`ExternalModelHandle::invoke`].
pub fn invoke_external(
    handle: &ExternalModelHandle,
    img: &Image,
    params: &ResolvedParams,
    opts: &InvokeOptions,
) -> Result<SaliencyMap, ExternalError> {
    handle.invoke(img, params, opts)
}
