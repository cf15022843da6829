//! Derived service state. Every mutation goes through [`ServiceState::check`]
//! and [`ServiceState::apply`], so live requests and log replay share one code
//! path and replay reproduces the state exactly.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use softcrowd_core::aggregation::CountRow;
use softcrowd_core::event::{AnnotationEvent, CampaignChange, CampaignStatus, LogEntry, LogRecord, PoolPolicy};
use softcrowd_core::label_model::{ItemRecord, LabelCountVector, Manifest};
use softcrowd_core::worker_quality::{Pool, ProfileStore, QualityPolicy, WorkerProfile};

use crate::error::ServiceError;

/// Which workers' votes a count query includes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolFilter {
    /// Every worker not excluded.
    #[default]
    All,
    /// Workers currently in the filtered pool.
    Filtered,
}

impl std::str::FromStr for PoolFilter {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "all" => Ok(PoolFilter::All),
            "filtered" => Ok(PoolFilter::Filtered),
            other => Err(format!("unknown pool {other:?}, expected all or filtered")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub worker_id: String,
    pub label: softcrowd_core::EmotionClass,
    pub event_id: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Campaign {
    pub campaign_id: String,
    pub manifest_path: String,
    pub votes_per_item: u32,
    pub pool_policy: PoolPolicy,
    pub status: CampaignStatus,
    items: Vec<ItemRecord>,
    item_index: BTreeMap<String, usize>,
    votes: BTreeMap<String, Vec<Vote>>,
    /// (vote count, item id) for items still under quota.
    queue: BTreeSet<(u32, String)>,
}

/// Progress counters for one campaign.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub campaign_id: String,
    pub manifest_path: String,
    pub votes_per_item: u32,
    pub pool_policy: PoolPolicy,
    pub status: CampaignStatus,
    pub n_items: usize,
    pub n_complete: usize,
    pub n_votes: u64,
}

impl Campaign {
    fn new(
        campaign_id: String,
        manifest_path: String,
        votes_per_item: u32,
        pool_policy: PoolPolicy,
        items: Vec<ItemRecord>,
    ) -> Self {
        let item_index = items.iter().enumerate().map(|(i, it)| (it.item_id.clone(), i)).collect();
        let queue = items.iter().map(|it| (0, it.item_id.clone())).collect();
        Self {
            campaign_id,
            manifest_path,
            votes_per_item,
            pool_policy,
            status: CampaignStatus::Open,
            items,
            item_index,
            votes: BTreeMap::new(),
            queue,
        }
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn item(&self, item_id: &str) -> Option<&ItemRecord> {
        self.item_index.get(item_id).map(|&i| &self.items[i])
    }

    pub fn votes(&self, item_id: &str) -> &[Vote] {
        self.votes.get(item_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn has_voted(&self, worker_id: &str, item_id: &str) -> bool {
        self.votes(item_id).iter().any(|v| v.worker_id == worker_id)
    }

    pub fn summary(&self) -> CampaignSummary {
        CampaignSummary {
            campaign_id: self.campaign_id.clone(),
            manifest_path: self.manifest_path.clone(),
            votes_per_item: self.votes_per_item,
            pool_policy: self.pool_policy,
            status: self.status,
            n_items: self.items.len(),
            n_complete: self.items.len() - self.queue.len(),
            n_votes: self.votes.values().map(|v| v.len() as u64).sum(),
        }
    }

    fn add_vote(&mut self, item_id: &str, vote: Vote) {
        let votes = self.votes.entry(item_id.to_string()).or_default();
        let before = votes.len() as u32;
        votes.push(vote);
        self.queue.remove(&(before, item_id.to_string()));
        if before + 1 < self.votes_per_item {
            self.queue.insert((before + 1, item_id.to_string()));
        }
    }
}

/// Whether a worker in `pool` may label in a campaign with `policy`.
/// Excluded workers never receive tasks.
pub fn pool_eligible(policy: PoolPolicy, pool: Pool) -> bool {
    match policy {
        PoolPolicy::Any => pool != Pool::Excluded,
        PoolPolicy::FilteredOnly => pool == Pool::Filtered,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceState {
    workers: ProfileStore,
    campaigns: BTreeMap<String, Campaign>,
    last_event_id: u64,
    n_campaigns: u64,
    /// Idempotency keys scoped by campaign and worker, mapped to event ids.
    idempotency: BTreeMap<String, u64>,
    last_seq: u64,
}

fn idempotency_scope(campaign_id: &str, worker_id: &str, key: &str) -> String {
    format!("{campaign_id}\u{1f}{worker_id}\u{1f}{key}")
}

impl ServiceState {
    pub fn new(policy: QualityPolicy) -> Result<Self, ServiceError> {
        Ok(Self {
            workers: ProfileStore::new(policy)?,
            campaigns: BTreeMap::new(),
            last_event_id: 0,
            n_campaigns: 0,
            idempotency: BTreeMap::new(),
            last_seq: 0,
        })
    }

    pub fn policy(&self) -> QualityPolicy {
        self.workers.policy()
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn last_event_id(&self) -> u64 {
        self.last_event_id
    }

    pub fn workers(&self) -> &ProfileStore {
        &self.workers
    }

    pub fn worker(&self, worker_id: &str) -> Result<&WorkerProfile, ServiceError> {
        self.workers.get(worker_id).ok_or_else(|| ServiceError::UnknownWorker(worker_id.to_string()))
    }

    pub fn campaign(&self, campaign_id: &str) -> Result<&Campaign, ServiceError> {
        self.campaigns.get(campaign_id).ok_or_else(|| ServiceError::UnknownCampaign(campaign_id.to_string()))
    }

    pub fn campaigns(&self) -> impl Iterator<Item = &Campaign> {
        self.campaigns.values()
    }

    pub fn next_campaign_id(&self) -> String {
        format!("c{}", self.n_campaigns + 1)
    }

    pub fn idempotent_event(&self, campaign_id: &str, worker_id: &str, key: &str) -> Option<u64> {
        self.idempotency.get(&idempotency_scope(campaign_id, worker_id, key)).copied()
    }

    /// Checks a worker may label in a campaign at all.
    fn check_labeler(&self, campaign: &Campaign, worker_id: &str) -> Result<(), ServiceError> {
        let profile = self.worker(worker_id)?;
        if !profile.consented {
            return Err(ServiceError::ConsentRequired(worker_id.to_string()));
        }
        if campaign.status == CampaignStatus::Closed {
            return Err(ServiceError::CampaignClosed(campaign.campaign_id.clone()));
        }
        if !pool_eligible(campaign.pool_policy, profile.pool) {
            return Err(ServiceError::PoolIneligible(worker_id.to_string()));
        }
        Ok(())
    }

    /// Least-voted item the worker has not labeled, ties by item id.
    pub fn next_task(&self, campaign_id: &str, worker_id: &str) -> Result<Option<&ItemRecord>, ServiceError> {
        let campaign = self.campaign(campaign_id)?;
        self.check_labeler(campaign, worker_id)?;
        Ok(campaign
            .queue
            .iter()
            .find(|(_, item_id)| !campaign.has_voted(worker_id, item_id))
            .and_then(|(_, item_id)| campaign.item(item_id)))
    }

    pub fn distribution(&self, campaign_id: &str, item_id: &str, pool: PoolFilter) -> Result<LabelCountVector, ServiceError> {
        let campaign = self.campaign(campaign_id)?;
        if campaign.item(item_id).is_none() {
            return Err(ServiceError::UnknownItem { campaign_id: campaign_id.into(), item_id: item_id.into() });
        }
        let mut counts = LabelCountVector::zero();
        for vote in campaign.votes(item_id) {
            let pool_now = self.workers.get(&vote.worker_id).map(|p| p.pool);
            let include = match pool {
                PoolFilter::All => pool_now != Some(Pool::Excluded),
                PoolFilter::Filtered => pool_now == Some(Pool::Filtered),
            };
            if include {
                counts.increment(vote.label);
            }
        }
        Ok(counts)
    }

    /// One row per item that has received at least one vote, in manifest order.
    pub fn export(&self, campaign_id: &str, pool: PoolFilter) -> Result<Vec<CountRow>, ServiceError> {
        let campaign = self.campaign(campaign_id)?;
        campaign
            .items
            .iter()
            .filter(|it| !campaign.votes(&it.item_id).is_empty())
            .map(|it| {
                Ok(CountRow { item_id: it.item_id.clone(), counts: self.distribution(campaign_id, &it.item_id, pool)? })
            })
            .collect()
    }

    /// Validates a record against the current state without changing it.
    pub fn check(&self, record: &LogRecord) -> Result<(), ServiceError> {
        match record {
            LogRecord::Consent { worker_id, .. } => {
                if worker_id.trim().is_empty() {
                    return Err(ServiceError::InvalidRequest("worker_id must be non-empty".into()));
                }
                if self.workers.get(worker_id).is_some() {
                    return Err(ServiceError::DuplicateWorker(worker_id.clone()));
                }
                Ok(())
            }
            LogRecord::Label { event, .. } => {
                let campaign = self.campaign(&event.campaign_id)?;
                if campaign.item(&event.item_id).is_none() {
                    return Err(ServiceError::UnknownItem {
                        campaign_id: event.campaign_id.clone(),
                        item_id: event.item_id.clone(),
                    });
                }
                self.check_labeler(campaign, &event.worker_id)?;
                if campaign.has_voted(&event.worker_id, &event.item_id) {
                    return Err(ServiceError::DuplicateVote {
                        worker_id: event.worker_id.clone(),
                        item_id: event.item_id.clone(),
                    });
                }
                if campaign.votes(&event.item_id).len() as u32 >= campaign.votes_per_item {
                    return Err(ServiceError::QuotaReached(event.item_id.clone()));
                }
                if event.event_id <= self.last_event_id {
                    return Err(ServiceError::InvalidRequest(format!(
                        "event id {} does not follow {}",
                        event.event_id, self.last_event_id
                    )));
                }
                Ok(())
            }
            LogRecord::Review(decision) => Ok(self.workers.validate_review(decision)?),
            LogRecord::CampaignChange(CampaignChange::Created { campaign_id, votes_per_item, items, .. }) => {
                if self.campaigns.contains_key(campaign_id) {
                    return Err(ServiceError::InvalidRequest(format!("campaign {campaign_id:?} exists")));
                }
                if *votes_per_item == 0 {
                    return Err(ServiceError::InvalidRequest("votes_per_item must be >= 1".into()));
                }
                Manifest::new(items.clone())?;
                Ok(())
            }
            LogRecord::CampaignChange(CampaignChange::Closed { campaign_id }) => {
                let campaign = self.campaign(campaign_id)?;
                if campaign.status == CampaignStatus::Closed {
                    return Err(ServiceError::CampaignClosed(campaign_id.clone()));
                }
                Ok(())
            }
        }
    }

    /// Applies a checked entry.
    pub fn apply(&mut self, entry: &LogEntry) -> Result<(), ServiceError> {
        if entry.seq <= self.last_seq {
            return Err(ServiceError::Replay { seq: entry.seq, message: format!("does not follow {}", self.last_seq) });
        }
        self.check(&entry.record).map_err(|e| ServiceError::Replay { seq: entry.seq, message: e.to_string() })?;
        match &entry.record {
            LogRecord::Consent { worker_id, consent, .. } => {
                self.workers.register(worker_id, *consent)?;
            }
            LogRecord::Label { event, idempotency_key } => self.apply_label(event, idempotency_key.as_deref())?,
            LogRecord::Review(decision) => {
                self.workers.record_review(decision)?;
            }
            LogRecord::CampaignChange(CampaignChange::Created {
                campaign_id,
                manifest_path,
                votes_per_item,
                pool_policy,
                items,
            }) => {
                self.n_campaigns += 1;
                self.campaigns.insert(
                    campaign_id.clone(),
                    Campaign::new(campaign_id.clone(), manifest_path.clone(), *votes_per_item, *pool_policy, items.clone()),
                );
            }
            LogRecord::CampaignChange(CampaignChange::Closed { campaign_id }) => {
                self.campaigns.get_mut(campaign_id).expect("checked").status = CampaignStatus::Closed;
            }
        }
        self.last_seq = entry.seq;
        Ok(())
    }

    fn apply_label(&mut self, event: &AnnotationEvent, key: Option<&str>) -> Result<(), ServiceError> {
        self.workers.record_label(&event.worker_id, &event.item_id)?;
        let campaign = self.campaigns.get_mut(&event.campaign_id).expect("checked");
        campaign.add_vote(
            &event.item_id,
            Vote { worker_id: event.worker_id.clone(), label: event.label, event_id: event.event_id },
        );
        self.last_event_id = event.event_id;
        if let Some(key) = key {
            self.idempotency.insert(idempotency_scope(&event.campaign_id, &event.worker_id, key), event.event_id);
        }
        Ok(())
    }
}
