//! Run manifests: a JSON record of what was executed, written next to every
//! command's outputs.

use std::path::Path;
use std::process::Command;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

use vrd_core::Result;

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: Option<u64>,
    pub config: Value,
    pub git_revision: String,
    pub out_dir: String,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn git_revision() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .map(|o| String::from_utf8_lossy(&o.stdout).trim().to_string())
        .unwrap_or_else(|| "unknown".to_string())
}

pub struct ManifestBuilder {
    command: String,
    started: u64,
}

impl ManifestBuilder {
    pub fn start(command: &str) -> Self {
        ManifestBuilder { command: command.to_string(), started: unix_now() }
    }

    pub fn write(self, out_dir: &Path, seed: Option<u64>, config: Value) -> Result<()> {
        let manifest = RunManifest {
            command: self.command,
            args: std::env::args().skip(1).collect(),
            seed,
            config,
            git_revision: git_revision(),
            out_dir: out_dir.display().to_string(),
            started_unix_s: self.started,
            finished_unix_s: unix_now(),
        };
        let text = serde_json::to_string_pretty(&manifest)?;
        std::fs::write(out_dir.join("manifest.json"), text)?;
        Ok(())
    }
}
