//! Output directory that records every emitted file in `manifest.json`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subcommand: String,
    pub files: Vec<ManifestEntry>,
}

pub(crate) struct OutputDir {
    root: PathBuf,
    manifest: Manifest,
}

impl OutputDir {
    pub(crate) fn create(root: &Path, subcommand: &str) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            manifest: Manifest {
                subcommand: subcommand.to_string(),
                files: Vec::new(),
            },
        })
    }

    /// Create `rel` and hand a buffered writer to `write`.
    pub(crate) fn write_with<F>(&mut self, rel: &str, description: &str, write: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = BufWriter::new(File::create(&path)?);
        write(&mut w)?;
        w.flush()?;
        self.manifest.files.retain(|e| e.path != rel);
        self.manifest.files.push(ManifestEntry {
            path: rel.to_string(),
            description: description.to_string(),
        });
        Ok(())
    }

    pub(crate) fn write_json<T: Serialize + ?Sized>(&mut self, rel: &str, description: &str, value: &T) -> Result<()> {
        self.write_with(rel, description, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    /// Write `manifest.json`.
    pub(crate) fn finish(self) -> Result<Manifest> {
        let text = serde_json::to_string_pretty(&self.manifest)?;
        fs::write(self.root.join("manifest.json"), format!("{text}\n"))?;
        Ok(self.manifest)
    }
}
