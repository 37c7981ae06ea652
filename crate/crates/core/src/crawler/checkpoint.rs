//! Line-delimited crawl checkpoint, one [`ElicitationResult`] per line.

use super::ElicitationResult;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint {path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

pub struct CheckpointWriter {
    out: BufWriter<File>,
}

impl CheckpointWriter {
    pub fn append(path: &Path) -> Result<Self, CheckpointError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(CheckpointWriter {
            out: BufWriter::new(file),
        })
    }

    pub fn write(&mut self, result: &ElicitationResult) -> Result<(), CheckpointError> {
        serde_json::to_writer(&mut self.out, result).map_err(std::io::Error::from)?;
        self.out.write_all(b"\n")?;
        Ok(())
    }

    /// Flush and sync; called at every layer barrier.
    pub fn commit(&mut self) -> Result<(), CheckpointError> {
        self.out.flush()?;
        self.out.get_ref().sync_data()?;
        Ok(())
    }
}

/// Read every record. A torn final line (no trailing newline, unparsable)
/// is what an interrupted write leaves behind and is dropped.
pub fn read_checkpoint(path: &Path) -> Result<Vec<ElicitationResult>, CheckpointError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut records = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(r) => records.push(r),
            Err(_) if !complete && i + 1 == lines.len() => {
                log::warn!("dropping torn final checkpoint line {}", i + 1);
            }
            Err(e) => {
                return Err(CheckpointError::Corrupt {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: e.to_string(),
                })
            }
        }
    }
    Ok(records)
}

/// Drop a torn final line so appends start on a fresh line.
pub fn repair(path: &Path) -> Result<(), CheckpointError> {
    let Ok(text) = std::fs::read_to_string(path) else {
        return Ok(());
    };
    if text.is_empty() || text.ends_with('\n') {
        return Ok(());
    }
    let keep = text.rfind('\n').map(|i| i + 1).unwrap_or(0);
    std::fs::write(path, &text[..keep])?;
    Ok(())
}
