//! On-disk persistence: `events.jsonl` (append-only) and `snapshot.json`.

use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use softcrowd_core::event::{read_log, write_entry, LogEntry};
use softcrowd_core::worker_quality::QualityPolicy;

use crate::error::ServiceError;
use crate::state::ServiceState;

pub const LOG_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const POLICY_FILE: &str = "policy.json";

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotDocument {
    snapshot: u32,
    state: ServiceState,
}

#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    sync: bool,
}

impl EventLog {
    /// Opens (creating if needed) the log and returns it with its entries.
    /// A torn final line left by a crash mid-append is cut off.
    pub fn open(dir: &Path, sync: bool) -> Result<(Self, Vec<LogEntry>), ServiceError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOG_FILE);
        if path.exists() {
            repair_tail(&path)?;
        }
        let entries = if path.exists() { read_log(BufReader::new(File::open(&path)?))? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok((Self { path, file, sync }, entries))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes one line; returns after the data reaches the OS (and the disk when `sync` is set).
    pub fn append(&mut self, entry: &LogEntry) -> Result<(), ServiceError> {
        write_entry(&mut self.file, entry)?;
        self.file.flush()?;
        if self.sync {
            self.file.sync_data()?;
        }
        Ok(())
    }
}

fn repair_tail(path: &Path) -> Result<(), ServiceError> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let cut = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let tail = &bytes[cut..];
    let file = OpenOptions::new().write(true).open(path)?;
    if serde_json::from_slice::<LogEntry>(tail).is_ok() {
        // complete record missing only its newline
        let mut file = file;
        use std::io::{Seek, SeekFrom};
        file.seek(SeekFrom::End(0))?;
        file.write_all(b"\n")?;
    } else {
        file.set_len(cut as u64)?;
    }
    Ok(())
}

pub fn load_snapshot(dir: &Path) -> Result<Option<ServiceState>, ServiceError> {
    let path = dir.join(SNAPSHOT_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let doc: SnapshotDocument = serde_json::from_reader(BufReader::new(File::open(&path)?))
        .map_err(|e| ServiceError::Replay { seq: 0, message: format!("snapshot: {e}") })?;
    if doc.snapshot != SNAPSHOT_VERSION {
        return Err(ServiceError::Replay { seq: 0, message: format!("unsupported snapshot version {}", doc.snapshot) });
    }
    Ok(Some(doc.state))
}

/// Writes the snapshot atomically (temp file, then rename).
pub fn write_snapshot(dir: &Path, state: &ServiceState) -> Result<(), ServiceError> {
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    {
        let mut f = File::create(&tmp)?;
        let doc = SnapshotDocument { snapshot: SNAPSHOT_VERSION, state: state.clone() };
        serde_json::to_writer(&mut f, &doc).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
    Ok(())
}

/// The quality policy a data directory was created with. Written on first
/// open; later opens must use the same policy because the log was validated
/// under it.
pub fn pin_policy(dir: &Path, policy: &QualityPolicy) -> Result<(), ServiceError> {
    let path = dir.join(POLICY_FILE);
    if path.exists() {
        let pinned: QualityPolicy = serde_json::from_reader(BufReader::new(File::open(&path)?))
            .map_err(|e| ServiceError::Replay { seq: 0, message: format!("policy file: {e}") })?;
        if pinned != *policy {
            return Err(ServiceError::InvalidRequest(format!(
                "data directory was created with quality policy {pinned:?}, not {policy:?}"
            )));
        }
        return Ok(());
    }
    let mut f = File::create(&path)?;
    serde_json::to_writer_pretty(&mut f, policy).map_err(std::io::Error::from)?;
    f.write_all(b"\n")?;
    f.sync_all()?;
    Ok(())
}
