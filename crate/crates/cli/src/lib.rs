//! `oculobench`: one entrypoint for every pipeline stage.
//!
//! Outputs go under the run directory (`--out`, default `run/`) in
//! `manifests/`, `dialogues/`, `predictions/`, `metrics/` and `study/`, and
//! each invocation appends a line to `run_log.jsonl`. Exit codes: 0 on
//! success, 1 when outputs fail validation, 2 on configuration or usage errors.

mod commands;
pub mod config;
pub mod output;
mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::Parser;
use oculobench_core::cohort::{load_manifest, CohortManifest};
use oculobench_core::provenance::Provenance;
use serde::de::DeserializeOwned;

pub use commands::Command;
pub use config::RunConfig;
use output::{RunDir, MANIFESTS};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input error: {0}")]
    Input(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Input(_) => 2,
            CliError::Validation(_) | CliError::Runtime(_) => 1,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Parser)]
#[command(name = "oculobench", version, about = "Evaluation pipeline for multimodal chat models on AMD fundus grading")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for the invoked stage, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

/// Shared state for one invocation.
pub(crate) struct Ctx {
    pub cfg: RunConfig,
    pub digest: String,
    pub seed_flag: Option<u64>,
    pub run: RunDir,
}

impl Ctx {
    pub fn seed(&self, stage: &str) -> Result<u64, CliError> {
        self.cfg.seed_for(stage, self.seed_flag)
    }

    pub fn prov(&self) -> Provenance {
        Provenance::new(self.digest.clone())
    }

    /// `flag`, else the run-directory file `manifests/<convention>` if it
    /// exists, else the configured source manifest.
    pub fn manifest_path(&self, flag: Option<PathBuf>, convention: Option<&str>) -> Result<PathBuf, CliError> {
        if let Some(p) = flag {
            return Ok(p);
        }
        if let Some(name) = convention {
            let p = self.run.path(MANIFESTS, name);
            if p.exists() {
                return Ok(p);
            }
        }
        self.cfg
            .manifest
            .clone()
            .ok_or_else(|| CliError::Config("no manifest: pass --manifest or set `manifest` in the config".into()))
    }

    pub fn load_manifest(&self, path: &Path) -> Result<CohortManifest, CliError> {
        load_manifest(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
    }

    /// Where relative image paths resolve: `flag`, `image_root`, the source
    /// manifest's directory, then the directory of `manifest`.
    pub fn image_root(&self, flag: Option<PathBuf>, manifest: &Path) -> PathBuf {
        flag.or_else(|| self.cfg.image_root.clone())
            .or_else(|| self.cfg.manifest.as_deref().and_then(Path::parent).map(Path::to_path_buf))
            .or_else(|| manifest.parent().map(Path::to_path_buf))
            .unwrap_or_default()
    }

    pub fn runtime(&self) -> Result<tokio::runtime::Runtime, CliError> {
        tokio::runtime::Runtime::new().map_err(|e| CliError::Runtime(format!("starting async runtime: {e}")))
    }
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::Input(format!("{} line {}: {e}", path.display(), i + 1))))
        .collect()
}

fn init_tracing(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new(default));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Parses `argv`, runs the subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_tracing(cli.verbose);
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let out = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("run"));
    let mut ctx = Ctx { digest: cfg.digest(), cfg, seed_flag: cli.seed, run: RunDir::new(out) };
    let name = cli.command.name();
    let result = cli.command.execute(&mut ctx);
    let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    match result {
        Ok(()) => {
            ctx.run.log(name, &args, 0, None);
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            let code = e.exit_code();
            ctx.run.log(name, &args, code, Some(&e.to_string()));
            code
        }
    }
}
