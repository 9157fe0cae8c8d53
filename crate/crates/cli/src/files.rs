//! Output staging, hashing and numbered frame files.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use tempfile::TempDir;

use crate::error::{CliError, CliResult};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read(path: &Path) -> CliResult<Vec<u8>> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

/// Output directory built in a temporary sibling and moved into place
/// only on [`Staged::commit`]. Dropping it discards everything.
pub struct Staged {
    dir: TempDir,
    target: PathBuf,
    digests: BTreeMap<String, String>,
}

impl Staged {
    pub fn new(target: &Path) -> CliResult<Self> {
        if target.exists() {
            let mut entries = std::fs::read_dir(target).map_err(|e| CliError::io(target, e))?;
            if entries.next().is_some() {
                return Err(CliError::Config(format!(
                    "output directory {} is not empty",
                    target.display()
                )));
            }
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        std::fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        let dir = tempfile::Builder::new()
            .prefix(".genrender-stage-")
            .tempdir_in(&parent)
            .map_err(|e| CliError::io(&parent, e))?;
        Ok(Self {
            dir,
            target: target.to_path_buf(),
            digests: BTreeMap::new(),
        })
    }

    /// Writes `name` (a relative path) and records its SHA-256.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.path().join(name);
        if let Some(p) = path.parent() {
            std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.digests.insert(name.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Writes a file that is not listed among the hashed outputs.
    pub fn write_unhashed(&self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.dir.path().join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
    }

    pub fn digests(&self) -> &BTreeMap<String, String> {
        &self.digests
    }

    pub fn commit(self) -> CliResult<PathBuf> {
        if self.target.exists() {
            std::fs::remove_dir(&self.target).map_err(|e| CliError::io(&self.target, e))?;
        }
        let staged = self.dir.keep();
        std::fs::rename(&staged, &self.target).map_err(|e| CliError::io(&self.target, e))?;
        Ok(self.target)
    }
}

pub fn frame_name(prefix: &str, index: usize, ext: &str) -> String {
    format!("{prefix}_{index:04}.{ext}")
}

/// Files named `<prefix>_NNNN.<ext>` in `dir`, ordered by index. The
/// indices must run from 0 without gaps.
pub fn numbered_files(dir: &Path, prefix: &str, ext: &str) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut found = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::io(dir, e))?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let index = name
            .strip_prefix(prefix)
            .and_then(|s| s.strip_prefix('_'))
            .and_then(|s| s.strip_suffix(ext))
            .and_then(|s| s.strip_suffix('.'))
            .and_then(|s| s.parse::<usize>().ok());
        if let Some(i) = index {
            found.insert(i, entry.path());
        }
    }
    for (expected, &i) in found.keys().enumerate() {
        if i != expected {
            return Err(CliError::Io(format!(
                "missing frame index {expected} in {} (next present is {i})",
                dir.display()
            )));
        }
    }
    Ok(found.into_values().collect())
}
