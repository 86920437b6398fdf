use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

/// The output directory of one command invocation.
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Use `out` if given (it must be absent or empty), otherwise a fresh
    /// `root/<command>-<timestamp>` directory.
    pub fn create(out: Option<&Path>, root: &Path, command: &str) -> Result<Self> {
        let path = match out {
            Some(out) => {
                if out.exists() && fs::read_dir(out)?.next().is_some() {
                    bail!("output directory {} is not empty", out.display());
                }
                out.to_path_buf()
            }
            None => {
                let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S");
                let base = root.join(format!("{command}-{stamp}"));
                let mut path = base.clone();
                let mut n = 1;
                while path.exists() {
                    n += 1;
                    path = PathBuf::from(format!("{}-{n}", base.display()));
                }
                path
            }
        };
        fs::create_dir_all(&path).with_context(|| format!("creating {}", path.display()))?;
        Ok(RunDir { path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn into_path(self) -> PathBuf {
        self.path
    }
}
