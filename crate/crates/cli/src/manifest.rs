use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// What a command wrote, with digests of every file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: Option<String>,
    pub seeds: Vec<u64>,
    pub out_dir: String,
    pub files: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects files as they are written into one output directory.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    files: Vec<ManifestEntry>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)
            .with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, relative: &str, contents: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)
                .with_context(|| format!("cannot create {}", parent.display()))?;
        }
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(ManifestEntry {
            path: relative.to_string(),
            bytes: contents.len() as u64,
            sha256: sha256_hex(contents),
        });
        Ok(path)
    }

    /// Writes `manifest.json` listing everything written so far.
    pub fn finish(
        self,
        subcommand: &str,
        config: Option<&Path>,
        seeds: &[u64],
    ) -> Result<RunManifest> {
        let manifest = RunManifest {
            subcommand: subcommand.to_string(),
            config: config.map(|p| p.display().to_string()),
            seeds: seeds.to_vec(),
            out_dir: self.root.display().to_string(),
            files: self.files,
        };
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        let path = self.root.join(MANIFEST_NAME);
        fs::write(&path, json).with_context(|| format!("cannot write {}", path.display()))?;
        Ok(manifest)
    }
}

/// Re-hashes every listed file and reports the first mismatch.
pub fn verify(root: &Path, manifest: &RunManifest) -> Result<()> {
    for entry in &manifest.files {
        let path = root.join(&entry.path);
        let bytes = fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
        anyhow::ensure!(
            sha256_hex(&bytes) == entry.sha256 && bytes.len() as u64 == entry.bytes,
            "{} does not match its manifest entry",
            entry.path
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_lists_and_verifies_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write("a.csv", b"x\n").unwrap();
        out.write("runs/b.csv", b"y\n").unwrap();
        let m = out.finish("scenario", None, &[1, 2]).unwrap();
        assert_eq!(m.files.len(), 2);
        verify(dir.path(), &m).unwrap();
        fs::write(dir.path().join("a.csv"), b"z\n").unwrap();
        assert!(verify(dir.path(), &m).is_err());
        let back: RunManifest =
            serde_json::from_slice(&fs::read(dir.path().join(MANIFEST_NAME)).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
