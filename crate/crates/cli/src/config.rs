//! The pipeline configuration: one TOML document, optionally edited by
//! `--set key=value` overrides before it is parsed.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use jointcqa::data::{DatasetFormat, LabelMap, SynthConfig};
use jointcqa::experiment::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    /// Read `paths.dataset` (and `paths.test_dataset` when given).
    #[default]
    File,
    /// Generate the dataset from the `[synth]` section.
    Synth,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Mode {
    pub source: Source,
    /// Per-query lines in the metric file.
    pub verbose: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TablePath {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub dataset: Option<PathBuf>,
    /// Held-out groups; without it the dataset is split by `test_fraction`.
    pub test_dataset: Option<PathBuf>,
    /// Overrides detection by file extension.
    pub dataset_format: Option<DatasetFormat>,
    pub embeddings: Vec<TablePath>,
    pub output_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            dataset: None,
            test_dataset: None,
            dataset_format: None,
            embeddings: Vec::new(),
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Every seed of the run derives from this one.
    pub seed: u64,
    pub test_fraction: f64,
    pub mode: Mode,
    pub paths: Paths,
    pub labels: LabelMap,
    pub synth: SynthConfig,
    pub experiment: ExperimentConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            test_fraction: 0.4,
            mode: Mode::default(),
            paths: Paths::default(),
            labels: LabelMap::default(),
            synth: SynthConfig::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

/// A parsed configuration plus the directory its relative paths resolve
/// against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: PipelineConfig,
    pub base: PathBuf,
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.output_dir)
    }

    /// The experiment section with every seed derived from `seed`.
    pub fn experiment(&self) -> ExperimentConfig {
        let mut e = self.config.experiment.clone();
        e.reseed(self.config.seed);
        e
    }

    pub fn synth(&self) -> SynthConfig {
        SynthConfig {
            seed: self.config.seed,
            ..self.config.synth
        }
    }
}

fn parse_scalar(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    match wrapped.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies `a.b.c=value`; the value is read as a TOML literal when it parses
/// as one and as a bare string otherwise.
pub fn apply_override(doc: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .with_context(|| format!("override `{assignment}` is not of the form key=value"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` has an empty component");
    }
    let mut table = doc;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = match entry {
            toml::Value::Table(t) => t,
            _ => bail!("override key `{key}`: `{p}` is not a table"),
        };
    }
    table.insert(parts[parts.len() - 1].to_string(), parse_scalar(raw.trim()));
    Ok(())
}

/// Recursively overlays `top` on `base`; tables merge, other values replace.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses `text` over the default document, so a partial table such as
/// `[experiment.dnn.a]` keeps the defaults of the keys it leaves out.
pub fn parse(text: &str, overrides: &[String], origin: &str) -> Result<PipelineConfig> {
    let user: toml::Table = text.parse().with_context(|| format!("parsing {origin}"))?;
    let mut doc = toml::Table::try_from(PipelineConfig::default())?;
    merge(&mut doc, user);
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    let config: PipelineConfig = toml::Value::Table(doc)
        .try_into()
        .with_context(|| format!("invalid configuration in {origin}"))?;
    validate(&config)?;
    Ok(config)
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Loaded> {
    let (text, origin, base) = match path {
        Some(p) => (
            std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?,
            p.display().to_string(),
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (String::new(), "<defaults>".to_string(), PathBuf::from(".")),
    };
    let base = if base.as_os_str().is_empty() {
        PathBuf::from(".")
    } else {
        base
    };
    Ok(Loaded {
        config: parse(&text, overrides, &origin)?,
        base,
    })
}

fn validate(c: &PipelineConfig) -> Result<()> {
    c.experiment.validate()?;
    c.synth.validate()?;
    if c.paths.test_dataset.is_none() && !(c.test_fraction > 0.0 && c.test_fraction < 1.0) {
        bail!("test_fraction must lie in (0, 1) when no test dataset is given");
    }
    if c.mode.source == Source::File && c.paths.dataset.is_none() {
        bail!("paths.dataset is required unless mode.source = \"synth\"");
    }
    Ok(())
}

/// Full default configuration as TOML.
pub fn default_toml() -> Result<String> {
    Ok(toml::to_string_pretty(&PipelineConfig::default())?)
}

/// SHA-256 of the canonical JSON encoding of `value`, hex encoded.
pub fn hash_value<T: Serialize>(value: &T) -> Result<String> {
    let canonical = serde_json::to_vec(&serde_json::to_value(value)?)?;
    Ok(hex::encode(Sha256::digest(canonical)))
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
