//! Output directory with CSV/JSON writers and the result manifest.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Compact label for file names, e.g. `0.2`, `10`.
pub fn label(x: f64) -> String {
    format!("{x}")
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultManifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub config: &'a RunConfig,
    pub threads: usize,
    pub wall_clock_seconds: f64,
    pub files: Vec<FileEntry>,
}

pub struct OutputDir {
    root: PathBuf,
    files: Vec<String>,
    started: Instant,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl OutputDir {
    pub fn create(root: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
            started: Instant::now(),
        })
    }

    fn register(&mut self, name: &str) -> PathBuf {
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        self.root.join(name)
    }

    pub fn csv<I, R>(&mut self, name: &str, header: &[&str], rows: I) -> CliResult<()>
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = String>,
    {
        let path = self.register(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.into_iter().collect::<Vec<_>>())?;
        }
        w.flush().map_err(|e| io_err(&path, e))?;
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let path = self.register(name);
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))
    }

    /// Writes `manifest.json` with checksums of every file written so far.
    pub fn finish(self, command: &str, config: &RunConfig, threads: usize) -> CliResult<PathBuf> {
        let mut files = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let path = self.root.join(name);
            let data = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
            files.push(FileEntry {
                path: name.clone(),
                bytes: data.len() as u64,
                sha256: hex::encode(Sha256::digest(&data)),
            });
        }
        let manifest = ResultManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config,
            threads,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            files,
        };
        let path = self.root.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(0.0), "0.0000000000000000e0");
        assert_eq!(num(-1.5), "-1.5000000000000000e0");
        for x in [0.1, 1.0 / 3.0, 2.5e-300, -7.0e12] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(label(0.2), "0.2");
        assert_eq!(label(10.0), "10");
    }

    #[test]
    fn manifest_lists_checksums() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.csv("a.csv", &["x"], [vec![num(1.0)]]).unwrap();
        let p = out.finish("simulate", &RunConfig::default(), 1).unwrap();
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
        let f = &m["files"][0];
        assert_eq!(f["path"], "a.csv");
        let body = std::fs::read(dir.path().join("a.csv")).unwrap();
        assert_eq!(f["sha256"], hex::encode(Sha256::digest(&body)));
        assert_eq!(m["config"]["seed"], 0);
    }
}
