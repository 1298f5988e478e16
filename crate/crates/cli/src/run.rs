//! Run directory layout and per-stage manifests.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::LoadedConfig;

pub const RUN_ROOT_VAR: &str = "OPU_RUN_ROOT";
pub const MANIFEST: &str = "manifest.json";

/// Written into every stage directory: which command produced which files
/// under which config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub config_hash: String,
    pub command: String,
    pub files: Vec<String>,
}

pub struct Run {
    pub dir: PathBuf,
    pub hash: String,
    pub force: bool,
}

impl Run {
    /// `out` wins; otherwise `$OPU_RUN_ROOT/<hash prefix>` (root defaults to `runs`).
    pub fn open(cfg: &LoadedConfig, out: Option<&Path>, force: bool) -> Self {
        let dir = match out {
            Some(d) => d.to_path_buf(),
            None => {
                let root = std::env::var_os(RUN_ROOT_VAR).map_or_else(|| PathBuf::from("runs"), PathBuf::from);
                root.join(&cfg.hash[..16])
            }
        };
        Self { dir, hash: cfg.hash.clone(), force }
    }

    pub fn stage(&self, name: &str) -> Result<PathBuf> {
        let d = self.dir.join(name);
        fs::create_dir_all(&d).with_context(|| format!("creating {}", d.display()))?;
        Ok(d)
    }

    /// The path of an upstream artifact, which must exist.
    pub fn input(&self, rel: &str) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        require(&p)?;
        Ok(p)
    }

    /// Checks that an upstream stage was produced under this config.
    pub fn check_stage(&self, name: &str) -> Result<()> {
        let p = self.dir.join(name).join(MANIFEST);
        require(&p)?;
        let m: StageManifest =
            serde_json::from_slice(&fs::read(&p)?).with_context(|| format!("reading {}", p.display()))?;
        if m.config_hash != self.hash {
            if self.force {
                eprintln!("warning: {} was written under config {}, using it anyway", p.display(), m.config_hash);
            } else {
                bail!(
                    "{} was written under config {} but the current config hashes to {}; rerun `{}` or pass --force",
                    p.display(),
                    m.config_hash,
                    self.hash,
                    m.command
                );
            }
        }
        Ok(())
    }

    pub fn finish_stage(&self, name: &str, command: &str, files: &[&str]) -> Result<()> {
        let m = StageManifest {
            config_hash: self.hash.clone(),
            command: command.into(),
            files: files.iter().map(|s| s.to_string()).collect(),
        };
        write_json(&self.dir.join(name).join(MANIFEST), &m)
    }
}

pub fn require(p: &Path) -> Result<()> {
    if !p.exists() {
        bail!("missing artifact: {}", p.display());
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    require(path)?;
    serde_json::from_slice(&fs::read(path)?).with_context(|| format!("reading {}", path.display()))
}
