//! Network files: JSON documents with a format tag and version. Floats are
//! written in shortest round-trip form, so save/load is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TaskNetwork, TrainConfig};
use crate::error::{Error, Result};

pub const NETWORK_FORMAT: &str = "jointcqa.network";
pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub format: String,
    pub version: u32,
    pub network: TaskNetwork,
    pub train_config: Option<TrainConfig>,
}

impl NetworkFile {
    pub fn new(network: TaskNetwork, train_config: Option<TrainConfig>) -> Self {
        Self {
            format: NETWORK_FORMAT.into(),
            version: NETWORK_FORMAT_VERSION,
            network,
            train_config,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        if file.format != NETWORK_FORMAT || file.version != NETWORK_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "expected {NETWORK_FORMAT} v{NETWORK_FORMAT_VERSION}, found {} v{}",
                file.format, file.version
            )));
        }
        file.network.spec.validate()?;
        if !file.network.is_finite() {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(file)
    }
}

pub fn save_network(path: &Path, network: &TaskNetwork, train_config: Option<&TrainConfig>) -> Result<()> {
    let text = NetworkFile::new(network.clone(), train_config.copied()).to_json()?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_network(path: &Path) -> Result<NetworkFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    NetworkFile::from_json(&text)
}
