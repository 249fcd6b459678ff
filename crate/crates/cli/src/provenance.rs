use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use serde::Serialize;

use crate::config::sha256_hex;
use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(CliError::io(path))?;
        Ok(FileDigest { path: path.to_path_buf(), sha256: sha256_hex(&bytes) })
    }
}

/// Everything needed to re-run a command and compare its outputs.
#[derive(Debug, Serialize)]
pub struct Provenance {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub endpoints: Vec<EndpointStamp>,
    pub asset_checksums: Vec<FileDigest>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: String,
}

#[derive(Debug, Serialize)]
pub struct EndpointStamp {
    pub name: String,
    pub model_name: String,
    pub fingerprint: String,
}

pub fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// Provenance file written next to `out`.
pub fn path_for(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.json");
    out.with_file_name(name)
}

pub struct Recorder {
    command: String,
    started_at: String,
    pub seed: Option<u64>,
    pub config_hash: String,
    pub endpoints: Vec<EndpointStamp>,
    inputs: Vec<FileDigest>,
}

impl Recorder {
    pub fn start(command: &str, config_hash: &str) -> Self {
        Recorder {
            command: command.to_string(),
            started_at: now(),
            seed: None,
            config_hash: config_hash.to_string(),
            endpoints: Vec::new(),
            inputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(FileDigest::of(path)?);
        Ok(())
    }

    pub fn endpoint(&mut self, name: &str, gateway: &ctxqa_core::gateway::Gateway) {
        self.endpoints.push(EndpointStamp {
            name: name.to_string(),
            model_name: gateway.config().model_name.clone(),
            fingerprint: gateway.fingerprint().to_string(),
        });
    }

    /// Writes `<primary>.provenance.json` covering every output path.
    pub fn finish(self, primary: &Path, outputs: &[&Path]) -> Result<(), CliError> {
        let provenance = Provenance {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            argv: std::env::args().collect(),
            seed: self.seed,
            config_hash: self.config_hash,
            endpoints: self.endpoints,
            asset_checksums: ctxqa_core::prompt::asset_checksums()
                .into_iter()
                .map(|(name, sha256)| FileDigest { path: PathBuf::from(name), sha256 })
                .collect(),
            inputs: self.inputs,
            outputs: outputs.iter().map(|p| FileDigest::of(p)).collect::<Result<_, _>>()?,
            started_at: self.started_at,
            finished_at: now(),
        };
        let path = path_for(primary);
        let json = serde_json::to_string_pretty(&provenance).expect("provenance serializes");
        std::fs::write(&path, json + "\n").map_err(CliError::io(&path))
    }
}
