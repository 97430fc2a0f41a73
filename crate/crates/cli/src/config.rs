//! Run configuration loaded from TOML, plus endpoint construction.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use oculobench_core::cohort::CohortManifest;
use oculobench_core::endpoint::{ChatEndpoint, EndpointRegistry, EndpointSpec};
use oculobench_core::provenance::json_digest;
use oculobench_core::stub::StubEndpoint;
use oculobench_core::study::StudyDesign;
use oculobench_server::ServerConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Prefix of a `base_url` that selects the offline stub, e.g. `stub://0.9`.
pub const STUB_SCHEME: &str = "stub://";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Source cohort manifest.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    /// Directory that manifest image paths are relative to. Defaults to the manifest's directory.
    #[serde(default)]
    pub image_root: Option<PathBuf>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Fallback for stages without an entry in `seeds`.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Largest tolerated fraction of invalid dialogues before `gen`/`validate` fail.
    #[serde(default)]
    pub max_invalid_fraction: f64,
    #[serde(default)]
    pub endpoints: BTreeMap<String, EndpointSpec>,
    #[serde(default)]
    pub study: StudyDesign,
    #[serde(default)]
    pub server: ServerConfig,
}

fn default_resamples() -> usize {
    2000
}

fn default_alpha() -> f64 {
    0.05
}

fn default_concurrency() -> usize {
    8
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: None,
            image_root: None,
            out: None,
            seed: None,
            seeds: BTreeMap::new(),
            bootstrap_resamples: default_resamples(),
            alpha: default_alpha(),
            concurrency: default_concurrency(),
            max_invalid_fraction: 0.0,
            endpoints: BTreeMap::new(),
            study: StudyDesign::default(),
            server: ServerConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // Relative paths in the file are relative to the file.
        if let Some(dir) = path.parent() {
            for p in [&mut cfg.manifest, &mut cfg.image_root, &mut cfg.out].into_iter().flatten() {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.bootstrap_resamples < 1 {
            return Err(CliError::Config("bootstrap_resamples must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Config(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if self.concurrency == 0 {
            return Err(CliError::Config("concurrency must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.max_invalid_fraction) {
            return Err(CliError::Config("max_invalid_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Digest embedded in every output. Bearer tokens are digested along
    /// with everything else and never written out.
    pub fn digest(&self) -> String {
        json_digest(self)
    }

    /// Seed for `stage`: the `--seed` flag, then `seeds.<stage>`, then `seed`.
    pub fn seed_for(&self, stage: &str, flag: Option<u64>) -> Result<u64, CliError> {
        flag.or_else(|| self.seeds.get(stage).copied()).or(self.seed).ok_or_else(|| {
            CliError::Config(format!("stage `{stage}` needs a seed: pass --seed or set seeds.{stage} in the config"))
        })
    }

    pub fn registry(&self) -> EndpointRegistry {
        EndpointRegistry { endpoints: self.endpoints.clone() }
    }

    /// Client for `model_id`. Stub endpoints answer from the manifest's labels.
    pub fn endpoint(
        &self,
        model_id: &str,
        manifest: &CohortManifest,
        image_root: &Path,
        seed: u64,
    ) -> Result<Arc<dyn ChatEndpoint>, CliError> {
        let registry = self.registry();
        let spec = registry.get(model_id).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(acc) = spec.base_url.strip_prefix(STUB_SCHEME) {
            let accuracy: f64 = acc
                .parse()
                .map_err(|_| CliError::Config(format!("stub endpoint `{}`: expected stub://<accuracy>", spec.base_url)))?;
            let stub = StubEndpoint::from_manifest(manifest, image_root, accuracy, seed)
                .map_err(|e| CliError::Input(format!("reading images under {}: {e}", image_root.display())))?
                .introducing(model_id);
            return Ok(Arc::new(stub));
        }
        let client = registry.http_endpoint(model_id).map_err(|e| CliError::Config(e.to_string()))?;
        Ok(Arc::new(client))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_resolve_flag_then_stage_then_default() {
        let mut cfg = RunConfig::default();
        assert!(cfg.seed_for("split", None).is_err());
        cfg.seed = Some(1);
        cfg.seeds.insert("split".into(), 2);
        assert_eq!(cfg.seed_for("split", None).unwrap(), 2);
        assert_eq!(cfg.seed_for("plan", None).unwrap(), 1);
        assert_eq!(cfg.seed_for("split", Some(3)).unwrap(), 3);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(toml::from_str::<RunConfig>("bootstrap = 5").is_err());
        let cfg: RunConfig = toml::from_str("bootstrap_resamples = 0").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn full_config_parses() {
        let cfg: RunConfig = toml::from_str(
            r#"
            manifest = "m.jsonl"
            seed = 7
            alpha = 0.05
            [seeds]
            bootstrap = 11
            [endpoints.base]
            base_url = "stub://0.8"
            model = "base"
            [study]
            raters = 3
            common_n = 30
            unique_n = 30
            [server]
            bind = "127.0.0.1:0"
            [server.tokens]
            R1 = "a"
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.seeds["bootstrap"], 11);
        assert_eq!(cfg.server.tokens["R1"], "a");
    }
}
