//! Stage manifests: which configuration, seed and files produced a stage's
//! outputs. Later stages refuse to read outputs whose manifest does not
//! match the current configuration or whose files changed since.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::hash_bytes;

pub const MANIFEST_FORMAT: &str = "jointcqa.manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub stage: String,
    pub tool: String,
    pub core: String,
    /// Hash of the configuration this stage and its upstream stages read.
    pub config_hash: String,
    pub seed: u64,
    /// External files, as written in the configuration.
    pub inputs: Vec<FileHash>,
    /// Manifests of the stages whose outputs were read, relative to the
    /// output directory.
    pub upstream: Vec<FileHash>,
    /// Files written, relative to the output directory.
    pub outputs: Vec<FileHash>,
}

pub fn manifest_path(out: &Path, stage: &str) -> PathBuf {
    out.join(stage).join("manifest.json")
}

pub fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hash_bytes(&bytes))
}

impl Manifest {
    pub fn new(stage: &str, config_hash: String, seed: u64) -> Self {
        Self {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            stage: stage.into(),
            tool: format!("jointcqa-cli {}", env!("CARGO_PKG_VERSION")),
            core: format!("jointcqa {}", jointcqa_version()),
            config_hash,
            seed,
            inputs: Vec::new(),
            upstream: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        let path = manifest_path(out, &self.stage);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(out: &Path, stage: &str) -> Result<Option<Self>> {
        let path = manifest_path(out, stage);
        if !path.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let m: Manifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            bail!("{} is not a v{MANIFEST_VERSION} manifest", path.display());
        }
        Ok(Some(m))
    }

    /// Errors unless the manifest was produced under `config_hash` and every
    /// recorded file still has its recorded content.
    pub fn verify(&self, config_hash: &str, out: &Path, resolve: impl Fn(&str) -> PathBuf) -> Result<()> {
        let rerun = format!("rerun `jointcqa {}`", self.stage);
        if self.config_hash != config_hash {
            bail!(
                "outputs of stage {} were produced under a different configuration; {rerun}",
                self.stage
            );
        }
        for f in &self.inputs {
            let path = resolve(&f.path);
            let now = hash_file(&path).with_context(|| format!("input of stage {}", self.stage))?;
            if now != f.sha256 {
                bail!(
                    "input {} changed after stage {} ran; {rerun}",
                    path.display(),
                    self.stage
                );
            }
        }
        for f in &self.upstream {
            let now = hash_file(&out.join(&f.path)).with_context(|| format!("upstream of stage {}", self.stage))?;
            if now != f.sha256 {
                bail!("{} changed after stage {} ran; {rerun}", f.path, self.stage);
            }
        }
        for f in &self.outputs {
            let path = out.join(&f.path);
            let now = hash_file(&path).with_context(|| format!("output of stage {}", self.stage))?;
            if now != f.sha256 {
                bail!(
                    "{} was modified after stage {} wrote it; {rerun}",
                    path.display(),
                    self.stage
                );
            }
        }
        Ok(())
    }
}

fn jointcqa_version() -> &'static str {
    jointcqa::VERSION
}
