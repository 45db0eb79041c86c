use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> io::Result<String> {
    let mut f = fs::File::open(path)?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

/// What a stage consumed and produced.
///
/// Paths inside the work directory are stored relative to it; external
/// inputs keep the path they were given.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    /// Stage-relevant configuration.
    pub params: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub(crate) fn display_path(work_dir: &Path, p: &Path) -> String {
    p.strip_prefix(work_dir).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

pub(crate) fn hash_all(work_dir: &Path, paths: &[PathBuf]) -> io::Result<BTreeMap<String, String>> {
    paths.iter().map(|p| Ok((display_path(work_dir, p), sha256_file(p)?))).collect()
}

impl StageManifest {
    pub fn read(dir: &Path) -> Option<StageManifest> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")
    }

    /// True when every recorded output still exists with its recorded hash.
    pub fn outputs_intact(&self, work_dir: &Path) -> bool {
        self.outputs.iter().all(|(p, h)| sha256_file(&work_dir.join(p)).is_ok_and(|got| got == *h))
    }
}
