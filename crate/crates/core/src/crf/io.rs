use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CrfParameters;
use crate::error::{Error, Result};
use crate::factorgraph::FactorGraph;

pub const CRF_FORMAT: &str = "jointcqa.crf";
pub const CRF_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfFile {
    pub format: String,
    pub version: u32,
    pub topology: String,
    pub params: CrfParameters,
}

impl CrfFile {
    pub fn new(topology: impl Into<String>, params: CrfParameters) -> Self {
        Self {
            format: CRF_FORMAT.into(),
            version: CRF_FORMAT_VERSION,
            topology: topology.into(),
            params,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CrfFile = serde_json::from_str(text)?;
        if file.format != CRF_FORMAT || file.version != CRF_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "expected {CRF_FORMAT} v{CRF_FORMAT_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        let w = file.params.edge_feature_width;
        if file
            .params
            .edge_weights
            .iter()
            .any(|e| e.len() != super::EDGE_STATES * w)
            || !file.params.is_finite()
        {
            return Err(Error::Format("inconsistent crf parameters".into()));
        }
        Ok(file)
    }
}

pub fn save_params(path: &Path, topology: &str, params: &CrfParameters) -> Result<()> {
    let text = CrfFile::new(topology, params.clone()).to_json()?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<CrfFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CrfFile::from_json(&text)
}

/// One line per node: `group<TAB>node<TAB>score`.
pub fn format_scores(graph: &FactorGraph, scores: &[f64]) -> String {
    let mut out = String::new();
    for (n, s) in graph.nodes.iter().zip(scores) {
        out.push_str(&format!("{}\t{}\t{}\n", graph.id, n.node, s));
    }
    out
}
