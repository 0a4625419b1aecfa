//! Command-line front end.
//!
//! Exit statuses: 0 success, 1 image or download failures, 2 usage or
//! configuration errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::warn;

use crate::experiment::{execute, parse_experiment, plan, ExecuteOptions, ExperimentReport, ExperimentSpec};
use crate::external::assets::{
    clean_assets, download_assets, verify_assets, AssetOutcome, AssetStatus, CleanTarget, DefaultFetcher,
};
use crate::models::{ModelHandle, Registry};
use crate::params::{describe, load_global_config, GlobalConfig, ParamMap, Scalar};
use crate::{PROTOCOL_VERSION, VERSION};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURES: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "salience", version = VERSION, about = "Run saliency models over image collections")]
pub struct Cli {
    /// Directory holding external model definitions (<DIR>/<NAME>/manifest.json).
    #[arg(long, global = true, env = "SALIENCE_MODELS_DIR", value_name = "DIR")]
    pub models_dir: Option<PathBuf>,
    /// Asset cache directory [default: ~/.cache/salience].
    #[arg(long, global = true, env = "SALIENCE_CACHE_DIR", value_name = "DIR")]
    pub cache_dir: Option<PathBuf>,
    /// Global parameter configuration replacing the built-in one.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// List models, or describe one model or the global parameters.
    Info {
        /// A model name or "global".
        target: Option<String>,
    },
    /// Run an experiment file, or one model over a directory.
    Run(RunArgs),
    /// Fetch and verify a model's asset files.
    Download(TargetArgs),
    /// Delete cached asset files.
    Clean(TargetArgs),
    /// Open a shell with an external model's environment.
    Shell { model: String },
    /// Print version information.
    Version,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment specification (YAML).
    #[arg(conflicts_with_all = ["model", "input", "output", "param"])]
    pub experiment: Option<PathBuf>,
    /// Model to run (ad hoc form, instead of an experiment file).
    #[arg(long, requires_all = ["input", "output"])]
    pub model: Option<String>,
    /// Input image directory (ad hoc form).
    #[arg(long, requires = "model", value_name = "DIR")]
    pub input: Option<PathBuf>,
    /// Output directory (ad hoc form).
    #[arg(long, requires = "model", value_name = "DIR")]
    pub output: Option<PathBuf>,
    /// Run-level parameter override, e.g. --param smooth_size=7 (repeatable).
    #[arg(long, requires = "model", value_name = "NAME=VALUE", value_parser = parse_param)]
    pub param: Vec<(String, Scalar)>,
    /// Images processed in parallel per run (external models always use 1).
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    pub workers: u16,
    /// Leave images whose output already exists untouched.
    #[arg(long)]
    pub skip_existing: bool,
    /// Also write lossless <stem>.f32raw maps.
    #[arg(long)]
    pub f32raw: bool,
    /// Keep external models' working directories for inspection.
    #[arg(long)]
    pub keep_artifacts: bool,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Model name.
    #[arg(required_unless_present = "all", conflicts_with = "all")]
    pub model: Option<String>,
    /// Every model.
    #[arg(long)]
    pub all: bool,
}

fn parse_param(text: &str) -> Result<(String, Scalar), String> {
    let (name, value) = text.split_once('=').ok_or_else(|| format!("expected NAME=VALUE, got {text:?}"))?;
    if name.is_empty() {
        return Err(format!("empty parameter name in {text:?}"));
    }
    Ok((name.to_string(), Scalar::parse_cli(value)))
}

fn default_cache_dir() -> PathBuf {
    std::env::var_os("XDG_CACHE_HOME")
        .map(PathBuf::from)
        .or_else(|| std::env::var_os("HOME").map(|h| Path::new(&h).join(".cache")))
        .unwrap_or_else(std::env::temp_dir)
        .join("salience")
}

struct Context {
    registry: Registry,
    global: GlobalConfig,
}

/// A failure with its exit status; the message goes to standard error.
struct Failure(u8, String);

fn usage(message: impl ToString) -> Failure {
    Failure(EXIT_USAGE, message.to_string())
}

impl Context {
    fn load(cli: &Cli) -> Result<Self, Failure> {
        let cache_dir = cli.cache_dir.clone().unwrap_or_else(default_cache_dir);
        let registry = Registry::load(cli.models_dir.as_deref(), cache_dir).map_err(usage)?;
        let global = match &cli.config {
            Some(path) => load_global_config(path).map_err(usage)?,
            None => GlobalConfig::builtin(),
        };
        Ok(Context { registry, global })
    }

    fn model(&self, name: &str) -> Result<&ModelHandle, Failure> {
        self.registry.get(name).map_err(usage)
    }
}

/// Parses `args` and runs the command.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).parse_env("SALIENCE_LOG").format_timestamp(None).try_init();

    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, message)) => {
            eprintln!("error: {message}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<u8, Failure> {
    if let Command::Version = cli.command {
        println!("salience {VERSION} (protocol {PROTOCOL_VERSION})");
        return Ok(EXIT_OK);
    }
    let ctx = Context::load(cli)?;
    match &cli.command {
        Command::Info { target } => cmd_info(&ctx, target.as_deref()),
        Command::Run(args) => cmd_run(&ctx, args),
        Command::Download(args) => cmd_download(&ctx, args),
        Command::Clean(args) => cmd_clean(&ctx, args),
        Command::Shell { model } => cmd_shell(&ctx, model),
        Command::Version => unreachable!("handled above"),
    }
}

fn cmd_info(ctx: &Context, target: Option<&str>) -> Result<u8, Failure> {
    if let Some(target) = target {
        print!("{}", describe(target, &ctx.global, &ctx.registry).map_err(usage)?);
        return Ok(EXIT_OK);
    }
    let rows: Vec<[String; 4]> = ctx
        .registry
        .list()
        .into_iter()
        .map(|m| {
            let assets = if m.model_files.is_empty() {
                "-".to_string()
            } else {
                match verify_assets(m, ctx.registry.cache_dir()) {
                    AssetStatus::Complete => "ready".to_string(),
                    AssetStatus::Missing(list) => format!("missing {}/{}", list.len(), m.model_files.len()),
                }
            };
            [m.name.clone(), m.long_name.clone(), m.model_type.as_str().to_string(), assets]
        })
        .collect();
    let header = ["Name", "Long name", "Type", "Assets"];
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut out = std::io::stdout().lock();
    let mut line = |cells: [&str; 4]| {
        let _ = writeln!(
            out,
            "{:<w0$}  {:<w1$}  {:<w2$}  {}",
            cells[0],
            cells[1],
            cells[2],
            cells[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2]
        );
    };
    line(header);
    for row in &rows {
        line([&row[0], &row[1], &row[2], &row[3]]);
    }
    Ok(EXIT_OK)
}

fn cmd_run(ctx: &Context, args: &RunArgs) -> Result<u8, Failure> {
    let spec = match (&args.experiment, &args.model) {
        (Some(path), _) => parse_experiment(path).map_err(usage)?,
        (None, Some(model)) => {
            let (input, output) = (args.input.as_deref().unwrap(), args.output.as_deref().unwrap());
            let params: ParamMap = args.param.iter().cloned().collect();
            ExperimentSpec::single_run(model, input, output, params)
        }
        (None, None) => return Err(usage("run needs an experiment file or --model, --input and --output")),
    };
    let plans = plan(&spec, &ctx.registry, &ctx.global).map_err(usage)?;
    let opts = ExecuteOptions {
        skip_existing: args.skip_existing,
        workers: usize::from(args.workers),
        write_f32raw: args.f32raw,
        keep_artifacts: args.keep_artifacts,
    };
    let report = execute(&plans, &opts).map_err(usage)?;
    print_report(&report);
    Ok(if report.is_success() { EXIT_OK } else { EXIT_FAILURES })
}

fn print_report(report: &ExperimentReport) {
    for run in &report.runs {
        match &run.skip_reason {
            Some(reason) => println!("run {} {}: skipped ({reason})", run.index, run.algorithm),
            None => println!(
                "run {} {}: ok {}, failed {}, skipped {} -> {} ({:.2}s)",
                run.index,
                run.algorithm,
                run.ok,
                run.failed,
                run.skipped,
                run.output_dir.display(),
                run.wall_time.as_secs_f64()
            ),
        }
        for failure in &run.failures {
            eprintln!("  {}: {}", failure.input.display(), failure.message);
        }
    }
    let (ok, failed, skipped) = report.totals();
    println!("total: ok {ok}, failed {failed}, skipped {skipped} ({:.2}s)", report.wall_time.as_secs_f64());
}

fn targets<'a>(ctx: &'a Context, args: &TargetArgs) -> Result<Vec<&'a ModelHandle>, Failure> {
    match &args.model {
        Some(name) => Ok(vec![ctx.model(name)?]),
        None => Ok(ctx.registry.handles().collect()),
    }
}

fn cmd_download(ctx: &Context, args: &TargetArgs) -> Result<u8, Failure> {
    let mut code = EXIT_OK;
    let mut fetched_any = false;
    for handle in targets(ctx, args)? {
        let manifest = handle.manifest();
        if manifest.model_files.is_empty() {
            continue;
        }
        fetched_any = true;
        let report = download_assets(manifest, ctx.registry.cache_dir(), &DefaultFetcher);
        for (path, outcome) in &report.entries {
            match outcome {
                AssetOutcome::Skipped => println!("{}/{path}: skipped (already present)", manifest.name),
                AssetOutcome::Fetched => println!("{}/{path}: downloaded", manifest.name),
                AssetOutcome::ChecksumMismatch { expected, actual } => eprintln!(
                    "{}/{path}: checksum mismatch (expected {expected}, got {actual}); file removed",
                    manifest.name
                ),
                AssetOutcome::NetworkError(e) => eprintln!("{}/{path}: download failed: {e}", manifest.name),
                AssetOutcome::IoError(e) => eprintln!("{}/{path}: {e}", manifest.name),
            }
        }
        if !report.is_ok() {
            code = EXIT_FAILURES;
        }
    }
    if !fetched_any {
        match &args.model {
            Some(name) => println!("nothing to download for {name}"),
            None => println!("nothing to download"),
        }
    }
    Ok(code)
}

fn cmd_clean(ctx: &Context, args: &TargetArgs) -> Result<u8, Failure> {
    let cache = ctx.registry.cache_dir();
    let target = match &args.model {
        Some(name) => CleanTarget::Model(ctx.model(name)?.manifest()),
        None => CleanTarget::All,
    };
    let report =
        clean_assets(target, cache).map_err(|e| Failure(EXIT_FAILURES, format!("{}: {e}", cache.display())))?;
    if report.removed.is_empty() {
        println!("nothing to clean");
    }
    for path in &report.removed {
        println!("removed {}", path.display());
    }
    Ok(EXIT_OK)
}

fn cmd_shell(ctx: &Context, name: &str) -> Result<u8, Failure> {
    let handle = match ctx.model(name)? {
        ModelHandle::Native(_) => {
            return Err(usage(format!(
                "{name} is a native model; it runs inside this process and has no environment to enter"
            )))
        }
        ModelHandle::External(h) => h,
    };
    if let AssetStatus::Missing(missing) = verify_assets(&handle.manifest, ctx.registry.cache_dir()) {
        warn!("{name}: missing assets: {}", missing.join(", "));
    }
    let status =
        handle.shell_command().status().map_err(|e| Failure(EXIT_FAILURES, format!("cannot start shell: {e}")))?;
    Ok(status.code().map(|c| c.clamp(0, 255) as u8).unwrap_or(EXIT_FAILURES))
}
