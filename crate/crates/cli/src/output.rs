use std::fs;
use std::path::{Path, PathBuf};

use chrononet::Error;

use crate::error::CliResult;

/// Files a command produces. Unless [`Outputs::commit`] is called, every
/// tracked file is removed when the set is dropped, so a failing command
/// leaves nothing half-written behind.
#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a path some other writer is about to create.
    pub fn track(&mut self, path: impl Into<PathBuf>) {
        self.files.push(path.into());
    }

    /// Writes through a temporary sibling and renames it into place.
    pub fn write(&mut self, path: &Path, bytes: &[u8]) -> CliResult<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(format!(".partial-{}", std::process::id()));
        let tmp = PathBuf::from(tmp);
        self.track(path);
        let res = fs::write(&tmp, bytes).and_then(|_| fs::rename(&tmp, path));
        if let Err(e) = res {
            let _ = fs::remove_file(&tmp);
            return Err(Error::Io {
                path: path.to_path_buf(),
                source: e,
            }
            .into());
        }
        Ok(())
    }

    pub fn commit(mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for f in &self.files {
                let _ = fs::remove_file(f);
            }
        }
    }
}
