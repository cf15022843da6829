use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use softcrowd_core::aggregation::{write_count_table, CountRow};
use softcrowd_core::event::{AnnotationEvent, CampaignChange, LogEntry, LogRecord, PoolPolicy};
use softcrowd_core::label_model::{EmotionClass, ItemRecord, LabelCountVector, Manifest};
use softcrowd_core::worker_quality::{QualityPolicy, ReviewDecision, Verdict, WorkerProfile};

use crate::error::ServiceError;
use crate::state::{CampaignSummary, PoolFilter, ServiceState};
use crate::store::{load_snapshot, pin_policy, write_snapshot, EventLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub policy: QualityPolicy,
    /// Write a snapshot after this many log entries; 0 disables snapshots.
    pub snapshot_every: u64,
    /// fsync every append before acknowledging.
    pub sync: bool,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self { data_dir: PathBuf::from("data"), policy: QualityPolicy::default(), snapshot_every: 1000, sync: true }
    }
}

impl ServiceConfig {
    pub fn in_dir(dir: impl Into<PathBuf>) -> Self {
        Self { data_dir: dir.into(), ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelReceipt {
    pub event_id: u64,
    /// True when an earlier submission with the same idempotency key was returned.
    pub replayed: bool,
}

#[derive(Debug)]
struct Inner {
    state: ServiceState,
    log: EventLog,
}

/// The annotation service. All writes are serialized through one lock that
/// validates, appends to the log and then updates state.
#[derive(Debug)]
pub struct Service {
    config: ServiceConfig,
    inner: RwLock<Inner>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Rebuilds state by replaying `entries` on top of `base`.
pub fn replay(base: ServiceState, entries: &[LogEntry]) -> Result<ServiceState, ServiceError> {
    let mut state = base;
    for entry in entries {
        if entry.seq > state.last_seq() {
            state.apply(entry)?;
        }
    }
    Ok(state)
}

impl Service {
    /// Opens the data directory, loading the snapshot (if compatible) and
    /// replaying the log tail.
    pub fn open(config: ServiceConfig) -> Result<Self, ServiceError> {
        config.policy.validate()?;
        let (log, entries) = EventLog::open(&config.data_dir, config.sync)?;
        pin_policy(&config.data_dir, &config.policy)?;
        let base = match load_snapshot(&config.data_dir)? {
            Some(s) if entries.last().is_none_or(|e| e.seq >= s.last_seq()) => s,
            _ => ServiceState::new(config.policy)?,
        };
        let state = replay(base, &entries)?;
        Ok(Self { config, inner: RwLock::new(Inner { state, log }) })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    pub fn data_dir(&self) -> &Path {
        &self.config.data_dir
    }

    /// A copy of the current derived state.
    pub fn state(&self) -> ServiceState {
        self.inner.read().state.clone()
    }

    fn commit(&self, inner: &mut Inner, record: LogRecord) -> Result<(), ServiceError> {
        inner.state.check(&record)?;
        let entry = LogEntry { seq: inner.state.last_seq() + 1, record };
        inner.log.append(&entry)?;
        inner.state.apply(&entry)?;
        if self.config.snapshot_every > 0 && entry.seq.is_multiple_of(self.config.snapshot_every) {
            write_snapshot(&self.config.data_dir, &inner.state)?;
        }
        Ok(())
    }

    pub fn snapshot_now(&self) -> Result<(), ServiceError> {
        let inner = self.inner.read();
        write_snapshot(&self.config.data_dir, &inner.state)
    }

    pub fn register_worker(&self, worker_id: &str, consent: bool) -> Result<WorkerProfile, ServiceError> {
        let mut inner = self.inner.write();
        let record = LogRecord::Consent { worker_id: worker_id.to_string(), consent, timestamp: now_ms() };
        self.commit(&mut inner, record)?;
        inner.state.worker(worker_id).cloned()
    }

    pub fn worker(&self, worker_id: &str) -> Result<WorkerProfile, ServiceError> {
        self.inner.read().state.worker(worker_id).cloned()
    }

    /// Creates a campaign from a manifest file, embedding its items in the log.
    pub fn create_campaign(
        &self,
        manifest_path: &str,
        votes_per_item: u32,
        pool_policy: PoolPolicy,
    ) -> Result<String, ServiceError> {
        let path = self.resolve(manifest_path);
        let manifest = Manifest::read_jsonl(std::io::BufReader::new(std::fs::File::open(&path)?))?;
        self.create_campaign_with_items(manifest_path, manifest.items().to_vec(), votes_per_item, pool_policy)
    }

    pub fn create_campaign_with_items(
        &self,
        manifest_path: &str,
        items: Vec<ItemRecord>,
        votes_per_item: u32,
        pool_policy: PoolPolicy,
    ) -> Result<String, ServiceError> {
        let mut inner = self.inner.write();
        let campaign_id = inner.state.next_campaign_id();
        let record = LogRecord::CampaignChange(CampaignChange::Created {
            campaign_id: campaign_id.clone(),
            manifest_path: manifest_path.to_string(),
            votes_per_item,
            pool_policy,
            items,
        });
        self.commit(&mut inner, record)?;
        Ok(campaign_id)
    }

    fn resolve(&self, path: &str) -> PathBuf {
        let p = Path::new(path);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config.data_dir.join(p)
        }
    }

    pub fn close_campaign(&self, campaign_id: &str) -> Result<CampaignSummary, ServiceError> {
        let mut inner = self.inner.write();
        self.commit(&mut inner, LogRecord::CampaignChange(CampaignChange::Closed { campaign_id: campaign_id.into() }))?;
        Ok(inner.state.campaign(campaign_id)?.summary())
    }

    pub fn campaign(&self, campaign_id: &str) -> Result<CampaignSummary, ServiceError> {
        Ok(self.inner.read().state.campaign(campaign_id)?.summary())
    }

    pub fn next_task(&self, campaign_id: &str, worker_id: &str) -> Result<Option<ItemRecord>, ServiceError> {
        Ok(self.inner.read().state.next_task(campaign_id, worker_id)?.cloned())
    }

    pub fn submit_label(
        &self,
        campaign_id: &str,
        worker_id: &str,
        item_id: &str,
        label: EmotionClass,
        idempotency_key: Option<&str>,
    ) -> Result<LabelReceipt, ServiceError> {
        let mut inner = self.inner.write();
        if let Some(key) = idempotency_key {
            if let Some(event_id) = inner.state.idempotent_event(campaign_id, worker_id, key) {
                return Ok(LabelReceipt { event_id, replayed: true });
            }
        }
        let event_id = inner.state.last_event_id() + 1;
        let record = LogRecord::Label {
            event: AnnotationEvent {
                event_id,
                worker_id: worker_id.to_string(),
                item_id: item_id.to_string(),
                label,
                campaign_id: campaign_id.to_string(),
                timestamp: now_ms(),
            },
            idempotency_key: idempotency_key.map(str::to_string),
        };
        self.commit(&mut inner, record)?;
        Ok(LabelReceipt { event_id, replayed: false })
    }

    pub fn review(&self, reviewer_id: &str, worker_id: &str, item_id: &str, verdict: Verdict) -> Result<WorkerProfile, ServiceError> {
        if reviewer_id.trim().is_empty() {
            return Err(ServiceError::InvalidRequest("reviewer_id must be non-empty".into()));
        }
        let mut inner = self.inner.write();
        let decision = ReviewDecision {
            reviewer_id: reviewer_id.to_string(),
            worker_id: worker_id.to_string(),
            item_id: item_id.to_string(),
            verdict,
            timestamp: now_ms(),
        };
        self.commit(&mut inner, LogRecord::Review(decision))?;
        inner.state.worker(worker_id).cloned()
    }

    pub fn distribution(&self, campaign_id: &str, item_id: &str, pool: PoolFilter) -> Result<LabelCountVector, ServiceError> {
        self.inner.read().state.distribution(campaign_id, item_id, pool)
    }

    pub fn export_rows(&self, campaign_id: &str, pool: PoolFilter) -> Result<Vec<CountRow>, ServiceError> {
        self.inner.read().state.export(campaign_id, pool)
    }

    /// Count table CSV in the aggregation ingestion format.
    pub fn export_csv(&self, campaign_id: &str, pool: PoolFilter) -> Result<Vec<u8>, ServiceError> {
        let rows = self.export_rows(campaign_id, pool)?;
        let mut out = Vec::new();
        write_count_table(&mut out, &rows)?;
        Ok(out)
    }

    /// Entries currently in the log file, read back from disk.
    pub fn read_log(&self) -> Result<Vec<LogEntry>, ServiceError> {
        let inner = self.inner.read();
        let file = std::fs::File::open(inner.log.path())?;
        Ok(softcrowd_core::event::read_log(std::io::BufReader::new(file))?)
    }
}
