//! Config-driven experiment runs with deterministic CSV and SVG output and a
//! JSON manifest of content digests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub mod config;
pub mod emit;
mod experiments;

pub use config::{Experiment, ExperimentConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Derives an independent seed for a named sub-run from the root seed:
/// splitmix64 of the root xor an FNV-1a hash of the stream name.
pub fn split_seed(root: u64, stream: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in stream.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = (root ^ h).wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub metadata: BTreeMap<String, String>,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileDigest>,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Reads a config file, applies `overrides` and runs it.
pub fn run(config_path: &Path, overrides: &Overrides) -> Result<RunManifest> {
    let text = std::fs::read_to_string(config_path).map_err(|e| Error::io(config_path, e))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(dir) = &overrides.output_dir {
        cfg.output_dir = Some(dir.clone());
    }
    if let Some(seed) = overrides.seed {
        cfg.seed = seed;
    }
    run_config(&cfg)
}

/// Runs one experiment, writes its files into `cfg.output_dir` and writes
/// the manifest last.
pub fn run_config(cfg: &ExperimentConfig) -> Result<RunManifest> {
    let dir = cfg
        .output_dir
        .clone()
        .ok_or_else(|| Error::Config("no output_dir in the config or on the command line".into()))?;
    let start = Instant::now();
    let outputs = experiments::execute(&cfg.experiment, cfg.seed)?;
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut files = Vec::with_capacity(outputs.files.len());
    for (name, bytes) in &outputs.files {
        emit::write_file(&dir.join(name), bytes)?;
        files.push(FileDigest {
            path: name.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        });
    }
    let mut metadata = outputs.metadata;
    metadata.insert("experiment".into(), cfg.experiment.name().into());
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        metadata,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        files,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    json.push(b'\n');
    emit::write_file(&path, &json)?;
    Ok(manifest)
}

/// Process exit code for an error: 2 for configuration problems, 4 for I/O,
/// 3 for numeric failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::InvalidParameter { .. } => 2,
        Error::Io { .. } => 4,
        _ => 3,
    }
}

/// One-line JSON error record.
pub fn error_record(e: &Error) -> String {
    let kind = match exit_code(e) {
        2 => "config",
        4 => "io",
        _ => "numeric",
    };
    serde_json::json!({ "error": kind, "exit_code": exit_code(e), "message": e.to_string() }).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_split_by_stream() {
        assert_eq!(split_seed(1, "task"), split_seed(1, "task"));
        assert_ne!(split_seed(1, "task"), split_seed(1, "dataset"));
        assert_ne!(split_seed(1, "task"), split_seed(2, "task"));
    }

    #[test]
    fn digest_matches_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::io("p", std::io::Error::other("x"))), 4);
        assert_eq!(exit_code(&Error::NonFiniteLoss { step: 0, prompt: 0 }), 3);
        let rec: serde_json::Value = serde_json::from_str(&error_record(&Error::Config("bad".into()))).unwrap();
        assert_eq!(rec["exit_code"], 2);
        assert!(!error_record(&Error::Config("a\nb".into())).contains('\n'));
    }
}
