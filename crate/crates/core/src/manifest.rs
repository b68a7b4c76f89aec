//! Run manifests: a JSON record of each CLI invocation written beside its
//! primary output, with SHA-256 digests of every input and output file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};
use std::process::Command;

use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub git_describe: String,
    pub started_at: String,
    pub finished_at: String,
    /// Path → hex SHA-256.
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = r.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn now_timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// `git describe --always --dirty`, or `"unknown"` outside a repository.
pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

/// Accumulates an invocation's metadata until its outputs exist.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub command: String,
    pub args: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub started_at: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

impl Invocation {
    pub fn start(command: &str, args: Vec<String>, config: serde_json::Value, seed: Option<u64>) -> Self {
        Invocation {
            command: command.to_string(),
            args,
            config,
            seed,
            started_at: now_timestamp(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: impl Into<PathBuf>) -> &mut Self {
        self.inputs.push(path.into());
        self
    }

    pub fn output(&mut self, path: impl Into<PathBuf>) -> &mut Self {
        self.outputs.push(path.into());
        self
    }
}

fn digests(paths: &[PathBuf]) -> Result<BTreeMap<String, String>> {
    paths
        .iter()
        .filter(|p| p.is_file())
        .map(|p| Ok((p.display().to_string(), file_digest(p)?)))
        .collect()
}

/// `<first output>.manifest.json`.
pub fn manifest_path(primary_output: &Path) -> PathBuf {
    let mut s = primary_output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Digests inputs and outputs and writes the manifest beside the first output.
/// Returns the manifest path, or `None` when the invocation has no outputs.
pub fn write_manifest(inv: &Invocation) -> Result<Option<PathBuf>> {
    let Some(primary) = inv.outputs.first() else {
        return Ok(None);
    };
    let manifest = RunManifest {
        command: inv.command.clone(),
        args: inv.args.clone(),
        config: inv.config.clone(),
        seed: inv.seed,
        git_describe: git_describe(),
        started_at: inv.started_at.clone(),
        finished_at: now_timestamp(),
        inputs: digests(&inv.inputs)?,
        outputs: digests(&inv.outputs)?,
    };
    let path = manifest_path(primary);
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(Some(path))
}

pub fn load_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Files whose current digest differs from the recorded one (missing files included).
pub fn verify_manifest(m: &RunManifest) -> Vec<String> {
    m.inputs
        .iter()
        .chain(&m.outputs)
        .filter(|(p, d)| file_digest(Path::new(p)).ok().as_ref() != Some(*d))
        .map(|(p, _)| p.clone())
        .collect()
}
