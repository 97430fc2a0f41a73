//! Run-directory layout, provenance-stamped writers and the run log.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use oculobench_core::provenance::Provenance;
use serde::Serialize;

use crate::CliError;

pub const MANIFESTS: &str = "manifests";
pub const DIALOGUES: &str = "dialogues";
pub const PREDICTIONS: &str = "predictions";
pub const METRICS: &str = "metrics";
pub const STUDY: &str = "study";
pub const RUN_LOG: &str = "run_log.jsonl";

/// Suffix of the provenance file written beside every JSONL output.
pub const SIDECAR_SUFFIX: &str = ".provenance.json";

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        RunDir { root: root.into(), written: Vec::new() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, stage: &str, file: &str) -> PathBuf {
        self.root.join(stage).join(file)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn create(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        self.written.push(path.to_path_buf());
        Ok(())
    }

    /// Pretty JSON with a top-level `provenance` field next to the value's own fields.
    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T, prov: &Provenance) -> Result<(), CliError> {
        let mut v = serde_json::to_value(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        let p = serde_json::to_value(prov).expect("provenance serializes");
        match &mut v {
            serde_json::Value::Object(map) => {
                map.insert("provenance".into(), p);
            }
            other => {
                let data = other.take();
                v = serde_json::json!({ "provenance": p, "data": data });
            }
        }
        let mut bytes = serde_json::to_vec_pretty(&v).expect("json value serializes");
        bytes.push(b'\n');
        self.create(path, &bytes)
    }

    /// One JSON document per line, with the provenance in a sidecar file.
    pub fn write_jsonl<T: Serialize>(&mut self, path: &Path, rows: &[T], prov: &Provenance) -> Result<(), CliError> {
        let mut bytes = Vec::new();
        for r in rows {
            serde_json::to_writer(&mut bytes, r).map_err(|e| CliError::Runtime(e.to_string()))?;
            bytes.push(b'\n');
        }
        self.write_jsonl_text(path, &bytes, prov)
    }

    /// Pre-rendered JSONL, with the provenance in a sidecar file.
    pub fn write_jsonl_text(&mut self, path: &Path, bytes: &[u8], prov: &Provenance) -> Result<(), CliError> {
        self.create(path, bytes)?;
        let mut side = serde_json::to_vec_pretty(prov).expect("provenance serializes");
        side.push(b'\n');
        self.create(&sidecar(path), &side)
    }

    /// Raw bytes whose writer already embedded the provenance (CSV comment lines, markdown).
    pub fn write_bytes(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        self.create(path, bytes)
    }

    /// Appends one line to the run log. Failures here are reported but never fatal.
    pub fn log(&self, command: &str, argv: &[String], exit_code: i32, error: Option<&str>) {
        #[derive(Serialize)]
        struct Entry<'a> {
            timestamp: String,
            command: &'a str,
            argv: &'a [String],
            exit_code: i32,
            outputs: Vec<String>,
            #[serde(skip_serializing_if = "Option::is_none")]
            error: Option<&'a str>,
        }
        let entry = Entry {
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            command,
            argv,
            exit_code,
            outputs: self.written.iter().map(|p| p.display().to_string()).collect(),
            error,
        };
        let path = self.root.join(RUN_LOG);
        let res = std::fs::create_dir_all(&self.root).and_then(|_| {
            let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
            let mut line = serde_json::to_vec(&entry).expect("run log entry serializes");
            line.push(b'\n');
            f.write_all(&line)
        });
        if let Err(e) = res {
            tracing::warn!(path = %path.display(), error = %e, "cannot append to run log");
        }
    }
}

pub fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(SIDECAR_SUFFIX);
    PathBuf::from(s)
}

/// File-name-safe form of a model id.
pub fn slug(id: &str) -> String {
    id.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' }).collect()
}
