//! Artifact staging: everything is written to a sibling temporary directory
//! and moved into place only after the command succeeds.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const MANIFEST_FORMAT: u32 = 1;

pub struct Staging {
    dir: PathBuf,
    target: PathBuf,
    files: Vec<(String, String)>,
    done: bool,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

impl Staging {
    pub fn new(target: &Path) -> Result<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).with_context(|| format!("creating {}", parent.display()))?;
        let name = target.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
        let dir = parent.join(format!(".{name}.staging-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir)?;
        }
        fs::create_dir(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Staging { dir, target: target.to_path_buf(), files: vec![], done: false })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes).with_context(|| format!("writing {name}"))?;
        self.files.push((name.to_string(), sha256_hex(bytes)));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Digests of the files written so far.
    pub fn digests(&self) -> BTreeMap<String, String> {
        self.files.iter().cloned().collect()
    }

    /// Moves the staged files into the target directory.
    pub fn commit(mut self) -> Result<PathBuf> {
        if !self.target.exists() {
            fs::rename(&self.dir, &self.target).with_context(|| format!("moving results to {}", self.target.display()))?;
        } else {
            for (name, _) in &self.files {
                fs::rename(self.dir.join(name), self.target.join(name)).with_context(|| format!("moving {name}"))?;
            }
            fs::remove_dir_all(&self.dir)?;
        }
        self.done = true;
        Ok(self.target.clone())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub format_version: u32,
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: String,
    pub schema_version: u32,
    pub config_sha256: String,
    pub master_seed: u64,
    pub derived_seeds: BTreeMap<String, u64>,
    pub artifacts: BTreeMap<String, String>,
    /// Resolved configuration as TOML; re-parses to the same config.
    pub config: String,
}
