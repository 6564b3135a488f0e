//! Run directory: artifacts, input hashes, timings and the manifest.

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Serialize)]
pub struct Failure {
    /// `config` (exit 1) or `numerical` (exit 2).
    pub kind: &'static str,
    pub exit_code: i32,
    pub reason: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    core_version: &'static str,
    command: &'a str,
    status: &'a str,
    config_file: Option<String>,
    config_sha256: &'a str,
    seed: u64,
    threads: usize,
    inputs: &'a [FileRecord],
    artifacts: &'a [FileRecord],
    /// Wall-clock seconds per stage; the only non-deterministic entries.
    timings_s: &'a BTreeMap<String, f64>,
    failure: Option<&'a Failure>,
}

pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok((hex::encode(Sha256::digest(&bytes)), bytes.len() as u64))
}

pub struct RunDir {
    root: PathBuf,
    command: String,
    config_file: Option<PathBuf>,
    config_sha256: String,
    seed: u64,
    threads: usize,
    inputs: Vec<FileRecord>,
    artifacts: Vec<String>,
    timings: BTreeMap<String, f64>,
}

impl RunDir {
    pub fn create(
        root: &Path,
        command: &str,
        config_file: Option<&Path>,
        config_json: &str,
        seed: u64,
        threads: usize,
    ) -> Result<RunDir> {
        std::fs::create_dir_all(root).with_context(|| format!("creating run directory {}", root.display()))?;
        let mut run = RunDir {
            root: root.to_path_buf(),
            command: command.to_string(),
            config_file: config_file.map(Path::to_path_buf),
            config_sha256: hex::encode(Sha256::digest(config_json.as_bytes())),
            seed,
            threads,
            inputs: Vec::new(),
            artifacts: Vec::new(),
            timings: BTreeMap::new(),
        };
        run.write("config.json", config_json.as_bytes())?;
        Ok(run)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.register(name);
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Writes a CSV table; floats use the shortest round-trip exponent form.
    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().context("flushing csv")?;
        self.write(name, &bytes)
    }

    /// Records a file written by other code into the run directory.
    pub fn register(&mut self, name: &str) {
        if !self.artifacts.iter().any(|a| a == name) {
            self.artifacts.push(name.to_string());
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let (sha256, bytes) = sha256_file(path)?;
        self.inputs.push(FileRecord {
            path: path.display().to_string(),
            sha256,
            bytes,
        });
        Ok(())
    }

    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        *self.timings.entry(stage.to_string()).or_default() += t.elapsed().as_secs_f64();
        out
    }

    pub fn finish(mut self, failure: Option<&Failure>) -> Result<()> {
        if let Some(f) = failure {
            self.write_json("failure.json", f)?;
        }
        let mut records = Vec::with_capacity(self.artifacts.len());
        for a in &self.artifacts {
            let (sha256, bytes) = sha256_file(&self.root.join(a))?;
            records.push(FileRecord {
                path: a.clone(),
                sha256,
                bytes,
            });
        }
        let manifest = Manifest {
            tool: "vorwave",
            version: env!("CARGO_PKG_VERSION"),
            core_version: vorwave_core::VERSION,
            command: &self.command,
            status: if failure.is_some() { "failed" } else { "ok" },
            config_file: self.config_file.as_ref().map(|p| p.display().to_string()),
            config_sha256: &self.config_sha256,
            seed: self.seed,
            threads: self.threads,
            inputs: &self.inputs,
            artifacts: &records,
            timings_s: &self.timings,
            failure,
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        let path = self.root.join("manifest.json");
        std::fs::write(&path, s).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }
}

/// Shortest round-trip representation.
pub fn num(v: f64) -> String {
    format!("{v:e}")
}
