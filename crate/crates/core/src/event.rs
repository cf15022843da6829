//! Append-only event records shared by the annotation service, the campaign
//! simulator and the replay tools. One JSON object per line, discriminated by
//! `kind`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::label_model::{EmotionClass, ItemRecord};
use crate::worker_quality::ReviewDecision;

/// One worker's vote on one item within a campaign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationEvent {
    pub event_id: u64,
    pub worker_id: String,
    pub item_id: String,
    pub label: EmotionClass,
    pub campaign_id: String,
    /// UTC milliseconds since the Unix epoch.
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolPolicy {
    #[default]
    Any,
    FilteredOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignStatus {
    #[default]
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum CampaignChange {
    /// The manifest is embedded so replay does not depend on external files.
    Created {
        campaign_id: String,
        manifest_path: String,
        votes_per_item: u32,
        pool_policy: PoolPolicy,
        items: Vec<ItemRecord>,
    },
    Closed { campaign_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Consent {
        worker_id: String,
        consent: bool,
        timestamp: u64,
    },
    Label {
        #[serde(flatten)]
        event: AnnotationEvent,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        idempotency_key: Option<String>,
    },
    Review(ReviewDecision),
    CampaignChange(CampaignChange),
}

/// A log line: a sequence number plus the record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub record: LogRecord,
}

#[derive(Debug, thiserror::Error)]
pub enum LogFormatError {
    #[error("event log line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("event log line {line}: sequence {seq} does not follow {prev}")]
    Sequence { line: usize, seq: u64, prev: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Reads a JSON-Lines log. A torn final line (no trailing newline, unparsable)
/// is dropped, matching a crash during append.
pub fn read_log<R: BufRead>(mut reader: R) -> Result<Vec<LogEntry>, LogFormatError> {
    let mut entries: Vec<LogEntry> = Vec::new();
    let mut buf = String::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        if reader.read_line(&mut buf)? == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.ends_with('\n');
        let text = buf.trim();
        if text.is_empty() {
            continue;
        }
        let entry: LogEntry = match serde_json::from_str(text) {
            Ok(e) => e,
            Err(_) if !complete => break,
            Err(source) => return Err(LogFormatError::Parse { line: line_no, source }),
        };
        if let Some(prev) = entries.last() {
            if entry.seq <= prev.seq {
                return Err(LogFormatError::Sequence { line: line_no, seq: entry.seq, prev: prev.seq });
            }
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn write_entry<W: Write>(mut writer: W, entry: &LogEntry) -> std::io::Result<()> {
    let mut line = serde_json::to_vec(entry).expect("log entry serializes");
    line.push(b'\n');
    writer.write_all(&line)
}

/// Label events contained in a log, in order.
pub fn label_events(entries: &[LogEntry]) -> impl Iterator<Item = &AnnotationEvent> {
    entries.iter().filter_map(|e| match &e.record {
        LogRecord::Label { event, .. } => Some(event),
        _ => None,
    })
}

/// Per-item vote counts over the given events.
pub fn tally<'a, I>(events: I) -> std::collections::BTreeMap<String, crate::label_model::LabelCountVector>
where
    I: IntoIterator<Item = &'a AnnotationEvent>,
{
    let mut out: std::collections::BTreeMap<String, crate::label_model::LabelCountVector> = Default::default();
    for e in events {
        out.entry(e.item_id.clone()).or_default().increment(e.label);
    }
    out
}
