//! Run manifests written beside every output.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct InputDigest {
    path: String,
    sha256: String,
}

#[derive(Serialize)]
pub struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: String,
    /// Arguments after the binary name, enough to replay the run.
    argv: Vec<String>,
    seed: Option<u64>,
    inputs: Vec<InputDigest>,
    outputs: Vec<String>,
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Files that make up an input argument: a directory contributes its regular
/// files in name order.
fn input_files(path: &Path) -> anyhow::Result<Vec<PathBuf>> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.file_name().is_some_and(|n| n != "manifest.json"))
            .collect();
        files.sort();
        Ok(files)
    } else {
        Ok(vec![path.to_path_buf()])
    }
}

impl Manifest {
    pub fn new(command: &str, argv: &[String], seed: Option<u64>) -> Self {
        Manifest {
            tool: "genpas",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: argv.to_vec(),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> anyhow::Result<()> {
        for file in input_files(path)? {
            self.inputs.push(InputDigest { path: file.display().to_string(), sha256: sha256_file(&file)? });
        }
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    /// `<dir>/manifest.json` for directory outputs, `<file>.manifest.json`
    /// otherwise.
    pub fn location(out: &Path) -> PathBuf {
        if out.is_dir() {
            out.join("manifest.json")
        } else {
            let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
            name.push(".manifest.json");
            out.with_file_name(name)
        }
    }

    pub fn write(&self, out: &Path) -> anyhow::Result<PathBuf> {
        let path = Self::location(out);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
