use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct TaskRecord {
    pub index: usize,
    pub seed: u64,
    pub status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub experiment: String,
    pub status: &'static str,
    pub config: ExperimentConfig,
    pub tasks: Vec<TaskRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub wall_seconds: f64,
    pub files: Vec<FileEntry>,
}

/// Output directory plus the list of files written so far.
pub struct Bundle {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Bundle {
    pub fn create(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.record(name, bytes);
        Ok(())
    }

    /// Adds a file written by someone else (for example the environment cache).
    pub fn track(&mut self, name: &str) -> std::io::Result<()> {
        let bytes = std::fs::read(self.dir.join(name))?;
        self.record(name, &bytes);
        Ok(())
    }

    fn record(&mut self, name: &str, bytes: &[u8]) {
        let sha256 = hex::encode(Sha256::digest(bytes));
        self.files.retain(|f| f.path != name);
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256,
        });
    }

    pub fn finish(
        mut self,
        config: &ExperimentConfig,
        tasks: Vec<TaskRecord>,
        error: Option<String>,
        wall_seconds: f64,
    ) -> std::io::Result<Manifest> {
        self.files.sort_by(|a, b| a.path.cmp(&b.path));
        let failed = error.is_some() || tasks.iter().any(|t| t.status != "ok");
        let manifest = Manifest {
            tool: "fin",
            version: env!("CARGO_PKG_VERSION"),
            experiment: config.experiment.to_string(),
            status: if failed { "failed" } else { "ok" },
            config: config.clone(),
            tasks,
            error,
            wall_seconds,
            files: self.files,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        std::fs::write(self.dir.join(MANIFEST), text + "\n")?;
        Ok(manifest)
    }
}

/// Renders rows as CSV with a header line.
pub fn csv_bytes<S: AsRef<str>>(header: &[&str], rows: &[Vec<S>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv write");
    for row in rows {
        w.write_record(row.iter().map(|s| s.as_ref())).expect("in-memory csv write");
    }
    w.into_inner().expect("in-memory csv flush")
}

/// Shortest round-trip text for a float.
pub fn num(x: f64) -> String {
    format!("{x:e}")
}
