//! Deterministic output files: CSV tables with a single header row and JSON
//! sidecars carrying the artifact version, config hash, seed, and the full
//! resolved configuration.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ResolvedConfig;
use crate::CliError;

#[derive(Serialize)]
struct Meta<'a> {
    artifact_version: &'static str,
    config_hash: String,
    seed: u64,
    config: &'a ResolvedConfig,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    meta: Meta<'a>,
    report: T,
}

pub struct OutputDir {
    dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create output dir {dir:?}: {e}")))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_json<T: Serialize>(
        &self,
        name: &str,
        cfg: &ResolvedConfig,
        report: T,
    ) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let envelope = Envelope {
            meta: Meta {
                artifact_version: env!("CARGO_PKG_VERSION"),
                config_hash: cfg.hash(),
                seed: cfg.seed,
                config: cfg,
            },
            report,
        };
        let body = serde_json::to_string_pretty(&envelope)
            .map_err(|e| CliError::Io(format!("serialize {name}: {e}")))?;
        fs::write(&path, body + "\n")
            .map_err(|e| CliError::Io(format!("write {path:?}: {e}")))?;
        Ok(path)
    }

    /// CSV: one header row, '\n' line endings, '.' decimals (Rust default
    /// float formatting, shortest round-trip).
    pub fn write_csv(
        &self,
        name: &str,
        header: &[&str],
        rows: &[Vec<String>],
    ) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let mut buf = Vec::with_capacity(rows.len() * 32 + 64);
        writeln_row(&mut buf, header.iter().map(|s| s.to_string()));
        for row in rows {
            writeln_row(&mut buf, row.iter().cloned());
        }
        fs::write(&path, buf).map_err(|e| CliError::Io(format!("write {path:?}: {e}")))?;
        Ok(path)
    }

    pub fn write_raw(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("write {path:?}: {e}")))?;
        Ok(path)
    }
}

fn writeln_row(buf: &mut Vec<u8>, fields: impl Iterator<Item = String>) {
    let mut first = true;
    for field in fields {
        if !first {
            buf.push(b',');
        }
        buf.extend_from_slice(field.as_bytes());
        first = false;
    }
    buf.push(b'\n');
}

pub fn csv_row_line(buf: &mut Vec<u8>, fields: impl Iterator<Item = String>) {
    writeln_row(buf, fields)
}
