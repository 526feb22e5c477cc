//! Run manifests: every command that writes a run directory finishes by
//! recording the command name, the seed, the effective configuration
//! (after command-line overrides), and a SHA-256 digest of every artifact
//! it produced. Re-running the same configuration must reproduce the same
//! digests, so the manifest doubles as a regression fingerprint.

use std::collections::BTreeMap;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    /// Snapshot of the configuration the run actually used.
    pub config: RunConfig,
    /// Digest of each artifact, keyed by path relative to the run
    /// directory (the manifest itself excluded).
    pub artifacts: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn walk(dir: &Path, root: &Path, out: &mut BTreeMap<String, String>) -> io::Result<()> {
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            walk(&path, root, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("walk stays under root")
                .to_string_lossy()
                .into_owned();
            if rel == MANIFEST_FILE {
                continue;
            }
            out.insert(rel, sha256_hex(&std::fs::read(&path)?));
        }
    }
    Ok(())
}

/// Hash everything under `out_dir` and write `manifest.json` there.
pub fn write_manifest(out_dir: &Path, command: &str, config: &RunConfig) -> io::Result<Manifest> {
    let mut artifacts = BTreeMap::new();
    walk(out_dir, out_dir, &mut artifacts)?;
    let manifest = Manifest {
        command: command.to_string(),
        seed: config.seed,
        config: config.clone(),
        artifacts,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(out_dir.join(MANIFEST_FILE), json)?;
    Ok(manifest)
}

pub fn read_manifest(path: &Path) -> io::Result<Manifest> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
