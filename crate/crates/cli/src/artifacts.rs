//! Files written by the CLI: JSON summaries, trajectory CSVs and
//! whitespace-separated `.dat` tables for plotting.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

/// Creates `dir` and its parents.
pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

/// Pretty-printed JSON.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// A plot-ready table. Comment lines and the column header are written
/// with a leading `#`, so gnuplot and `numpy.loadtxt` read it directly.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatTable {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl DatTable {
    pub fn new(columns: &[&str]) -> Self {
        DatTable { comments: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn comment(&mut self, line: impl Into<String>) -> &mut Self {
        self.comments.push(line.into());
        self
    }

    /// Embeds a multi-line block (e.g. a TOML config) as comments.
    pub fn comment_block(&mut self, block: &str) -> &mut Self {
        self.comments.extend(block.lines().map(String::from));
        self
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        for c in &self.comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "# {}", self.columns.join(" "))?;
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
            writeln!(w, "{}", cells.join(" "))?;
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

/// Closed-loop run as CSV, keeping every `decimation`-th sample.
pub fn write_trajectory(path: &Path, run: &resctl_core::ControlRunResult, decimation: usize) -> Result<()> {
    let mut w = create(path)?;
    run.write_csv(&mut w, decimation)?;
    w.flush()?;
    Ok(())
}
