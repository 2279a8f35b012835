//! Run manifests and atomic-ish output commits.
//!
//! Commands read inputs through an [`InputLog`], build every output in
//! memory, and only then hand them to [`commit`], so a failing command never
//! leaves files behind.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{input, CliResult};
use crate::io::to_json;

pub const MANIFEST_FILE: &str = "manifest.json";
/// Bumped whenever a file layout written by the tool changes.
pub const FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Records every input file read by a command.
#[derive(Debug, Default)]
pub struct InputLog {
    files: Vec<FileDigest>,
}

impl InputLog {
    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        self.files.push(FileDigest {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(bytes)
    }
}

/// Files produced by a command, keyed by path relative to the output
/// directory.
#[derive(Debug, Default)]
pub struct Outputs {
    files: BTreeMap<String, Vec<u8>>,
}

impl Outputs {
    pub fn add(&mut self, rel: impl Into<String>, bytes: Vec<u8>) {
        self.files.insert(rel.into(), bytes);
    }

    pub fn get(&self, rel: &str) -> Option<&[u8]> {
        self.files.get(rel).map(Vec::as_slice)
    }
}

#[derive(Debug, Serialize)]
struct Manifest<'a, C: Serialize> {
    tool: &'static str,
    version: &'static str,
    format_version: u32,
    command: &'a str,
    config: &'a C,
    inputs: &'a [FileDigest],
    outputs: Vec<FileDigest>,
}

/// Writes all outputs and the manifest under `out_dir`.
pub fn commit<C: Serialize>(
    out_dir: &Path,
    command: &str,
    config: &C,
    inputs: InputLog,
    outputs: Outputs,
) -> CliResult<()> {
    let manifest = Manifest {
        tool: "carotid",
        version: env!("CARGO_PKG_VERSION"),
        format_version: FORMAT_VERSION,
        command,
        config,
        inputs: &inputs.files,
        outputs: outputs
            .files
            .iter()
            .map(|(path, bytes)| FileDigest {
                path: path.clone(),
                sha256: sha256_hex(bytes),
            })
            .collect(),
    };
    let manifest = to_json(&manifest);
    let write = |rel: &str, bytes: &[u8]| -> CliResult<()> {
        let path = out_dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)
                .map_err(|e| input(format!("{}: {e}", parent.display())))?;
        }
        std::fs::write(&path, bytes).map_err(|e| input(format!("{}: {e}", path.display())))
    };
    for (rel, bytes) in &outputs.files {
        write(rel, bytes)?;
    }
    write(MANIFEST_FILE, &manifest)
}
