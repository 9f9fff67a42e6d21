//! Deterministic run directories: every file is recorded with its hash in a
//! manifest written once at the end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::Checkpoint;
use crate::seed::sha256_hex;

pub struct RunDir {
    root: PathBuf,
    files: BTreeMap<String, String>,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(RunDir {
            root: root.to_path_buf(),
            files: BTreeMap::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn target(&self, rel: &str) -> Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(path)
    }

    pub fn write(&mut self, rel: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.target(rel)?;
        let bytes = contents.as_ref();
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.files.insert(rel.to_string(), sha256_hex(bytes));
        Ok(())
    }

    /// Save a checkpoint manifest and its parameter blob.
    pub fn save_checkpoint(&mut self, rel: &str, checkpoint: &Checkpoint) -> Result<()> {
        let path = self.target(rel)?;
        checkpoint.save(&path)?;
        for p in [path.clone(), Checkpoint::blob_path(&path)] {
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let name = p
                .strip_prefix(&self.root)
                .expect("checkpoint lies inside the run directory")
                .to_string_lossy()
                .replace('\\', "/");
            self.files.insert(name, sha256_hex(&bytes));
        }
        Ok(())
    }

    /// Write `manifest.json` listing every file and its SHA-256.
    pub fn finish(self) -> Result<PathBuf> {
        let text = serde_json::to_string_pretty(&self.files)? + "\n";
        let path = self.root.join("manifest.json");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(self.root)
    }
}
