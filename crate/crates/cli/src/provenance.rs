use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::Effective;
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: Effective,
    pub inputs: Vec<InputDigest>,
}

impl Provenance {
    pub fn new(command: &'static str, config: &Effective) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: config.clone(),
            inputs: Vec::new(),
        }
    }

    /// Hashes an input file and returns its bytes for parsing.
    pub fn read_input(&mut self, path: &Path) -> Result<Vec<u8>, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::Op(format!("{}: {e}", path.display())))?;
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
        Ok(bytes)
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("provenance is plain data")
    }

    /// Single-line JSON, for `#` comment headers.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("provenance is plain data")
    }
}
