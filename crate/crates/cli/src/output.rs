//! Output directories that refuse to clobber existing results.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

#[derive(Debug)]
pub struct OutDir {
    root: PathBuf,
}

fn io_error(context: String, source: std::io::Error) -> CliError {
    CliError::new("cli", ccim_core::Error::Io { context, source })
}

impl OutDir {
    /// Creates `root` if needed. A non-empty existing directory is only
    /// accepted with `force`.
    pub fn prepare(root: &Path, force: bool) -> CliResult<Self> {
        if root.exists() {
            if !root.is_dir() {
                return Err(CliError::argument(
                    "cli",
                    format!("output path {} exists and is not a directory", root.display()),
                ));
            }
            let non_empty = std::fs::read_dir(root)
                .map_err(|e| io_error(format!("listing {}", root.display()), e))?
                .next()
                .is_some();
            if non_empty && !force {
                return Err(CliError::argument(
                    "cli",
                    format!("output directory {} is not empty; pass --force to overwrite", root.display()),
                ));
            }
        }
        std::fs::create_dir_all(root).map_err(|e| io_error(format!("creating {}", root.display()), e))?;
        Ok(OutDir { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn subdir(&self, name: &str) -> CliResult<OutDir> {
        let root = self.root.join(name);
        std::fs::create_dir_all(&root).map_err(|e| io_error(format!("creating {}", root.display()), e))?;
        Ok(OutDir { root })
    }

    pub fn write(&self, name: &str, bytes: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, bytes).map_err(|e| io_error(format!("writing {}", path.display()), e))?;
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("output serializes");
        text.push('\n');
        self.write(name, text)
    }

    /// Writes `header` and `rows` as RFC 4180 CSV.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> CliResult<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let to_err = |e: csv::Error| CliError::new("cli", ccim_core::Error::Format(format!("csv {name}: {e}")));
        w.write_record(header).map_err(to_err)?;
        for r in rows {
            w.write_record(r).map_err(to_err)?;
        }
        let bytes = w.into_inner().map_err(|e| to_err(e.into_error().into()))?;
        self.write(name, bytes)
    }
}
