//! Helpers shared by the integration test targets.
#![allow(dead_code)]

pub mod oracle;

use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_carotid"))
}

/// Runs the binary with `args`; returns the raw process output.
pub fn carotid<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    bin().args(args).output().expect("spawn carotid")
}

/// Runs the binary and panics with its stderr unless it exits with 0.
pub fn carotid_ok<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = carotid(args);
    assert!(
        out.status.success(),
        "carotid failed ({:?}): {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

/// SHA-256 of every file under `dir`, keyed by relative path.
pub fn tree_digest(dir: &Path) -> BTreeMap<PathBuf, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let digest = Sha256::digest(std::fs::read(&path).unwrap());
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    hex::encode(digest),
                );
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Writes a phantom spec with a 10 mm, 1.5 mm deep lumen bump centred at
/// `z = 20 mm` (designed grade 0.5), or a plain tube.
pub fn write_phantom_spec(path: &Path, bump: bool) {
    let spec = if bump {
        serde_json::json!({ "bump": { "center_mm": 20.0, "length_mm": 10.0, "depth_mm": 1.5 } })
    } else {
        serde_json::json!({})
    };
    std::fs::write(path, serde_json::to_vec_pretty(&spec).unwrap()).unwrap();
}

/// Outcome of simulate, regularize, label reconstruct and measure.
pub struct PipelineRun {
    pub report: serde_json::Value,
    pub truth: serde_json::Value,
}

pub fn run_pipeline(work: &Path, spec: &Path, seed: u64, sigma_trans: f64) -> PipelineRun {
    let sim = work.join("sim");
    let reg = work.join("reg");
    let vol = work.join("vol");
    let meas = work.join("meas");
    let seed = seed.to_string();
    let sigma = sigma_trans.to_string();
    carotid_ok([
        "simulate",
        "--spec",
        p(spec),
        "--seed",
        &seed,
        "--sigma-trans",
        &sigma,
        "--out",
        p(&sim),
    ]);
    carotid_ok([
        "regularize",
        "--poses",
        p(&sim.join("poses.csv")),
        "--out",
        p(&reg),
    ]);
    carotid_ok([
        "reconstruct",
        "--frames",
        p(&sim.join("masks")),
        "--poses",
        p(&reg.join("poses_reg.csv")),
        "--mode",
        "label",
        "--out",
        p(&vol),
    ]);
    carotid_ok(["measure", "--labels", p(&vol), "--out", p(&meas)]);
    PipelineRun {
        report: read_json(&meas.join("report.json")),
        truth: read_json(&sim.join("truth.json")),
    }
}
