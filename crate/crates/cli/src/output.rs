//! Run directories: CSV/JSON outputs plus a manifest with content hashes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

pub const MANIFEST: &str = "manifest.json";

/// Shortest decimal that reads back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub wall_time_secs: f64,
    pub files: Vec<FileEntry>,
}

pub struct RunDir {
    root: PathBuf,
    files: Vec<FileEntry>,
    started: Instant,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(root)
            .map_err(|e| Failure::Other(anyhow::anyhow!("cannot create {}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.root
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<(), Failure> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).map_err(|e| Failure::Other(anyhow::anyhow!("cannot write {}: {e}", path.display())))?;
        self.files.retain(|f| f.name != name);
        self.files.push(FileEntry {
            name: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn write_csv<I>(&mut self, name: &str, header: &[&str], rows: I) -> Result<(), Failure>
    where
        I: IntoIterator<Item = Vec<String>>,
    {
        let mut w = csv::Writer::from_writer(Vec::new());
        let wrap = |e: csv::Error| Failure::Other(e.into());
        w.write_record(header).map_err(wrap)?;
        for row in rows {
            w.write_record(&row).map_err(wrap)?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::Other(anyhow::anyhow!("{e}")))?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Other(e.into()))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }

    pub fn finish<C: Serialize>(mut self, command: &str, config: &C, seeds: Vec<u64>) -> Result<PathBuf, Failure> {
        let mut files = std::mem::take(&mut self.files);
        files.sort_by(|a, b| a.name.cmp(&b.name));
        let manifest = Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config).map_err(|e| Failure::Other(e.into()))?,
            seeds,
            wall_time_secs: self.started.elapsed().as_secs_f64(),
            files,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Other(e.into()))?;
        let path = self.root.join(MANIFEST);
        std::fs::write(&path, text + "\n").map_err(|e| Failure::Other(e.into()))?;
        Ok(self.root)
    }
}

/// Checks every file listed in `dir/manifest.json` against its hash.
pub fn verify_manifest(dir: &Path) -> Result<Manifest, Failure> {
    let text = std::fs::read_to_string(dir.join(MANIFEST)).map_err(|e| Failure::Other(e.into()))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Failure::Other(e.into()))?;
    for f in &manifest.files {
        let bytes = std::fs::read(dir.join(&f.name)).map_err(|e| Failure::Other(e.into()))?;
        if sha256_hex(&bytes) != f.sha256 || bytes.len() as u64 != f.bytes {
            return Err(Failure::Other(anyhow::anyhow!("{} does not match its manifest hash", f.name)));
        }
    }
    Ok(manifest)
}
