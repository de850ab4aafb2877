//! Flat-file output: CSV bodies after a `#` provenance line, and a
//! `metadata.json` holding everything that varies between runs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::HarnessError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Output directory plus the header line shared by every file written.
#[derive(Clone, Debug)]
pub struct OutputSink {
    dir: PathBuf,
    header: String,
}

impl OutputSink {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, HarnessError> {
        fs::create_dir_all(&cfg.output.dir)?;
        Ok(Self {
            dir: cfg.output.dir.clone(),
            header: header_line(cfg),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Header text without the leading `#`.
    pub fn header(&self) -> &str {
        &self.header
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Buffered writer for `name`; the caller writes the header line.
    pub fn create(&self, name: &str) -> Result<BufWriter<File>, HarnessError> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    /// CSV of serializable rows, one header line of column names.
    pub fn write_rows<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<PathBuf, HarnessError> {
        let path = self.path(name);
        let mut w = BufWriter::new(File::create(&path)?);
        writeln!(w, "# {}", self.header)?;
        write_csv_rows(&mut w, rows)?;
        w.flush()?;
        Ok(path)
    }

    pub fn write_metadata(&self, command: &str, cfg: &ExperimentConfig, started: u64) -> Result<(), HarnessError> {
        let meta = serde_json::json!({
            "command": command,
            "version": VERSION,
            "config_sha256": cfg.hash(),
            "seed": cfg.sim.seed,
            "started_unix": started,
            "finished_unix": unix_now(),
            "workers": rayon::current_num_threads(),
            "config": cfg,
        });
        let mut w = self.create("metadata.json")?;
        serde_json::to_writer_pretty(&mut w, &meta)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }
}

pub fn header_line(cfg: &ExperimentConfig) -> String {
    format!(
        "hostpar {VERSION} config_sha256={} seed={}",
        cfg.hash(),
        cfg.sim.seed
    )
}

pub fn write_csv_rows<W: Write, T: Serialize>(w: W, rows: &[T]) -> Result<(), HarnessError> {
    let mut csv = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    for r in rows {
        csv.serialize(r).map_err(|e| HarnessError::Config(format!("csv: {e}")))?;
    }
    csv.flush()?;
    Ok(())
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
