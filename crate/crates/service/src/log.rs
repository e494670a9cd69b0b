use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, ServiceError};
use crate::session::Event;

/// Append-only JSON Lines event log of one session.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
}

impl EventLog {
    /// Creates a new log; fails if one already exists at `path`.
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create_new(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    /// Opens an existing log for appending, dropping a torn final line.
    pub fn reopen(path: &Path) -> Result<Self> {
        let mut file = OpenOptions::new().read(true).write(true).open(path)?;
        let complete = complete_length(&mut file)?;
        if complete < file.metadata()?.len() {
            tracing::warn!(path = %path.display(), "dropping incomplete final event");
            file.set_len(complete)?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one event and flushes it to disk.
    pub fn append(&mut self, event: &Event) -> Result<()> {
        let mut line = serde_json::to_vec(event).map_err(|e| ServiceError::Internal(e.to_string()))?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.sync_data()?;
        Ok(())
    }
}

/// Byte length of the prefix made of newline-terminated lines.
fn complete_length(file: &mut File) -> Result<u64> {
    file.seek(SeekFrom::Start(0))?;
    let mut reader = BufReader::new(&mut *file);
    let mut complete = 0u64;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 || buf.last() != Some(&b'\n') {
            return Ok(complete);
        }
        complete += n as u64;
    }
}

/// Reads every complete event of a log.
pub fn read_events(path: &Path) -> Result<Vec<Event>> {
    let mut file = File::open(path)?;
    let complete = complete_length(&mut file)?;
    file.seek(SeekFrom::Start(0))?;
    let reader = BufReader::new(file);
    let mut events = Vec::new();
    let mut read = 0u64;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        read += line.len() as u64 + 1;
        if read > complete {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| {
            ServiceError::Internal(format!("{}:{}: unreadable event: {e}", path.display(), i + 1))
        })?;
        events.push(event);
    }
    Ok(events)
}
