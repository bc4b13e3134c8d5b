//! Output files. Every table and summary carries the library version and
//! the hash of the effective configuration, and nothing time-dependent, so
//! a rerun of the same configuration reproduces the files byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{Format, RunConfig};
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
struct Header<'a> {
    generator: &'static str,
    version: &'static str,
    config_sha256: &'a str,
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    header: Header<'a>,
    data: &'a T,
}

pub struct Output {
    dir: PathBuf,
    format: Format,
    hash: String,
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl Output {
    /// Creates the output directory and writes `config.json` into it.
    pub fn create(cfg: &RunConfig) -> Result<Self, CliError> {
        fs::create_dir_all(&cfg.out).map_err(|e| io_error(&cfg.out, e))?;
        let out = Self {
            dir: cfg.out.clone(),
            format: cfg.format,
            hash: cfg.hash(),
        };
        out.write_bytes("config.json", cfg.canonical_json().as_bytes())?;
        Ok(out)
    }

    fn header(&self) -> Header<'_> {
        Header {
            generator: "heatengine",
            version: heatengine::VERSION,
            config_sha256: &self.hash,
        }
    }

    fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
        Ok(path)
    }

    /// Writes `value` wrapped with the provenance header as `<stem>.json`.
    pub fn json<T: Serialize>(&self, stem: &str, value: &T) -> Result<PathBuf, CliError> {
        let envelope = Envelope {
            header: self.header(),
            data: value,
        };
        let mut text = serde_json::to_string_pretty(&envelope).map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        self.write_bytes(&format!("{stem}.json"), text.as_bytes())
    }

    /// Writes flat rows as `<stem>.csv` (with `#` provenance lines) or as a
    /// JSON array, following the configured format.
    pub fn table<T: Serialize>(&self, stem: &str, rows: &[T]) -> Result<PathBuf, CliError> {
        if self.format == Format::Json {
            return self.json(stem, &rows);
        }
        let h = self.header();
        let mut buf = format!(
            "# generator: {}\n# version: {}\n# config_sha256: {}\n",
            h.generator, h.version, h.config_sha256
        )
        .into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            for row in rows {
                w.serialize(row).map_err(|e| CliError::Io(e.to_string()))?;
            }
            w.flush().map_err(|e| CliError::Io(e.to_string()))?;
        }
        self.write_bytes(&format!("{stem}.csv"), &buf)
    }
}
