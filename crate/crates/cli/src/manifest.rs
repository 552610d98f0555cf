use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub const FILE_NAME: &str = "manifest.txt";

/// Provenance record written next to every set of outputs.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub config: Option<String>,
    /// `(role, path, sha256)`.
    pub inputs: Vec<(String, PathBuf, String)>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn new(seed: Option<u64>) -> Self {
        let args: Vec<String> = std::env::args()
            .map(|a| {
                if a.is_empty() || a.contains(char::is_whitespace) {
                    format!("{a:?}")
                } else {
                    a
                }
            })
            .collect();
        Self {
            command: args.join(" "),
            version: env!("CDL_VERSION").to_string(),
            seed,
            ..Self::default()
        }
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        let digest = sha256_file(path)?;
        self.inputs.push((role.to_string(), path.to_path_buf(), digest));
        Ok(())
    }

    pub fn output(&mut self, name: impl Into<String>) {
        self.outputs.push(name.into());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "version\t{}", self.version);
        let _ = writeln!(out, "command\t{}", self.command);
        if let Some(seed) = self.seed {
            let _ = writeln!(out, "seed\t{seed}");
        }
        for (role, path, digest) in &self.inputs {
            let _ = writeln!(out, "input\t{role}\t{}\tsha256:{digest}", path.display());
        }
        for name in &self.outputs {
            let _ = writeln!(out, "output\t{name}");
        }
        if let Some(config) = &self.config {
            for line in config.lines() {
                let _ = writeln!(out, "config\t{line}");
            }
        }
        out
    }

    /// Writes `manifest.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(FILE_NAME);
        fs::write(&path, self.render()).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
