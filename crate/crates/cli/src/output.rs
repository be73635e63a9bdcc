use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::manifest::RunManifest;
use crate::{CmdResult, Failure};

/// The output directory of one run.
pub struct OutDir {
    dir: PathBuf,
}

impl OutDir {
    pub fn create(dir: &Path) -> CmdResult<Self> {
        fs::create_dir_all(dir).map_err(|e| Failure::other(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutDir { dir: dir.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> CmdResult {
        let p = self.path(name);
        fs::write(&p, bytes).map_err(|e| Failure::other(format!("cannot write {}: {e}", p.display())))
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CmdResult {
        let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
        s.push('\n');
        self.write(name, s)
    }

    /// Writes the manifest; every command calls this last.
    pub fn finish(&self, manifest: &RunManifest) -> CmdResult {
        self.write_json("manifest.json", manifest)
    }
}
