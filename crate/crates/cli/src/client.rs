//! The operations `simulate` and `review` need, against an embedded service
//! or a running one over HTTP.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use softcrowd_core::aggregation::{read_count_table, CountRow};
use softcrowd_core::event::PoolPolicy;
use softcrowd_core::worker_quality::{Verdict, WorkerProfile};
use softcrowd_core::{EmotionClass, ItemRecord};
use softcrowd_service::api::{
    CampaignCreated, CreateCampaign, LabelAccepted, RegisterWorker, SubmitLabel, SubmitReview, WorkerView,
};
use softcrowd_service::{PoolFilter, Service, ServiceError};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Task {
    Item(String),
    /// Nothing left for this worker.
    Done,
    /// The campaign refuses this worker.
    Ineligible,
}

pub trait Backend {
    fn register_worker(&mut self, worker_id: &str) -> Result<()>;
    fn create_campaign(&mut self, manifest_path: &Path, votes_per_item: u32, policy: PoolPolicy) -> Result<String>;
    fn next_task(&mut self, campaign_id: &str, worker_id: &str) -> Result<Task>;
    /// `None` when the vote was refused because the item is full or already labeled by this worker.
    fn submit(&mut self, campaign_id: &str, worker_id: &str, item_id: &str, label: EmotionClass, key: &str)
        -> Result<Option<u64>>;
    fn review(&mut self, reviewer_id: &str, worker_id: &str, item_id: &str, verdict: Verdict) -> Result<WorkerProfile>;
    fn export(&mut self, campaign_id: &str, pool: PoolFilter) -> Result<Vec<CountRow>>;
    fn worker(&mut self, worker_id: &str) -> Result<WorkerProfile>;
}

fn refused(code: &str) -> bool {
    matches!(code, "QuotaReached" | "DuplicateVote")
}

pub struct Embedded<'a> {
    pub service: &'a Service,
}

impl Backend for Embedded<'_> {
    fn register_worker(&mut self, worker_id: &str) -> Result<()> {
        self.service.register_worker(worker_id, true)?;
        Ok(())
    }

    fn create_campaign(&mut self, manifest_path: &Path, votes_per_item: u32, policy: PoolPolicy) -> Result<String> {
        let path = std::path::absolute(manifest_path).map_err(CliError::io(manifest_path))?;
        Ok(self.service.create_campaign(&path.to_string_lossy(), votes_per_item, policy)?)
    }

    fn next_task(&mut self, campaign_id: &str, worker_id: &str) -> Result<Task> {
        match self.service.next_task(campaign_id, worker_id) {
            Ok(Some(item)) => Ok(Task::Item(item.item_id)),
            Ok(None) => Ok(Task::Done),
            Err(ServiceError::PoolIneligible(_)) => Ok(Task::Ineligible),
            Err(e) => Err(e.into()),
        }
    }

    fn submit(&mut self, campaign_id: &str, worker_id: &str, item_id: &str, label: EmotionClass, key: &str)
        -> Result<Option<u64>> {
        match self.service.submit_label(campaign_id, worker_id, item_id, label, Some(key)) {
            Ok(receipt) => Ok(Some(receipt.event_id)),
            Err(e) if refused(e.code()) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn review(&mut self, reviewer_id: &str, worker_id: &str, item_id: &str, verdict: Verdict) -> Result<WorkerProfile> {
        Ok(self.service.review(reviewer_id, worker_id, item_id, verdict)?)
    }

    fn export(&mut self, campaign_id: &str, pool: PoolFilter) -> Result<Vec<CountRow>> {
        Ok(self.service.export_rows(campaign_id, pool)?)
    }

    fn worker(&mut self, worker_id: &str) -> Result<WorkerProfile> {
        Ok(self.service.worker(worker_id)?)
    }
}

/// Blocking HTTP client for a running `serve`.
pub struct Http {
    base: String,
    client: reqwest::blocking::Client,
}

#[derive(serde::Deserialize)]
struct ErrorBody {
    error: String,
    message: String,
}

impl Http {
    pub fn new(base_url: &str) -> Self {
        Self { base: base_url.trim_end_matches('/').to_string(), client: reqwest::blocking::Client::new() }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn transport(&self, e: reqwest::Error) -> CliError {
        CliError::Service { code: "Unreachable".into(), message: format!("{}: {e}", self.base) }
    }

    /// `Ok(None)` for 204; service errors come back as `CliError::Service` with their code.
    fn send(&self, req: reqwest::blocking::RequestBuilder) -> Result<Option<reqwest::blocking::Response>> {
        let resp = req.send().map_err(|e| self.transport(e))?;
        let status = resp.status();
        if status == reqwest::StatusCode::NO_CONTENT {
            return Ok(None);
        }
        if status.is_success() {
            return Ok(Some(resp));
        }
        let text = resp.text().map_err(|e| self.transport(e))?;
        Err(match serde_json::from_str::<ErrorBody>(&text) {
            Ok(body) => CliError::Service { code: body.error, message: body.message },
            Err(_) => CliError::Service { code: status.as_u16().to_string(), message: text },
        })
    }

    fn json<T: DeserializeOwned>(&self, req: reqwest::blocking::RequestBuilder) -> Result<T> {
        let resp = self
            .send(req)?
            .ok_or_else(|| CliError::Service { code: "204".into(), message: "unexpected empty response".into() })?;
        resp.json().map_err(|e| self.transport(e))
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        self.json(self.client.post(self.url(path)).json(body))
    }
}

fn pool_name(pool: PoolFilter) -> &'static str {
    match pool {
        PoolFilter::All => "all",
        PoolFilter::Filtered => "filtered",
    }
}

impl Backend for Http {
    fn register_worker(&mut self, worker_id: &str) -> Result<()> {
        let _: WorkerView = self.post("/workers", &RegisterWorker { worker_id: worker_id.into(), consent: true })?;
        Ok(())
    }

    fn create_campaign(&mut self, manifest_path: &Path, votes_per_item: u32, policy: PoolPolicy) -> Result<String> {
        let path = std::path::absolute(manifest_path).map_err(CliError::io(manifest_path))?;
        let body = CreateCampaign { manifest_path: path.to_string_lossy().into_owned(), votes_per_item, pool_policy: policy };
        let created: CampaignCreated = self.post("/campaigns", &body)?;
        Ok(created.campaign_id)
    }

    fn next_task(&mut self, campaign_id: &str, worker_id: &str) -> Result<Task> {
        let req = self
            .client
            .get(self.url(&format!("/campaigns/{campaign_id}/tasks/next")))
            .query(&[("worker_id", worker_id)]);
        match self.send(req) {
            Ok(None) => Ok(Task::Done),
            Ok(Some(resp)) => {
                let item: ItemRecord = resp.json().map_err(|e| self.transport(e))?;
                Ok(Task::Item(item.item_id))
            }
            Err(CliError::Service { code, .. }) if code == "PoolIneligible" => Ok(Task::Ineligible),
            Err(e) => Err(e),
        }
    }

    fn submit(&mut self, campaign_id: &str, worker_id: &str, item_id: &str, label: EmotionClass, key: &str)
        -> Result<Option<u64>> {
        let body = SubmitLabel {
            worker_id: worker_id.into(),
            item_id: item_id.into(),
            label,
            idempotency_key: Some(key.into()),
        };
        match self.post::<_, LabelAccepted>(&format!("/campaigns/{campaign_id}/labels"), &body) {
            Ok(accepted) => Ok(Some(accepted.event_id)),
            Err(CliError::Service { code, .. }) if refused(&code) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn review(&mut self, reviewer_id: &str, worker_id: &str, item_id: &str, verdict: Verdict) -> Result<WorkerProfile> {
        let body = SubmitReview {
            reviewer_id: reviewer_id.into(),
            worker_id: worker_id.into(),
            item_id: item_id.into(),
            verdict,
        };
        let view: WorkerView = self.post("/reviews", &body)?;
        Ok(view.profile)
    }

    fn export(&mut self, campaign_id: &str, pool: PoolFilter) -> Result<Vec<CountRow>> {
        let req = self
            .client
            .get(self.url(&format!("/campaigns/{campaign_id}/export")))
            .query(&[("pool", pool_name(pool))]);
        let resp = self
            .send(req)?
            .ok_or_else(|| CliError::Service { code: "204".into(), message: "empty export".into() })?;
        let bytes = resp.bytes().map_err(|e| self.transport(e))?;
        read_count_table(bytes.as_ref()).map_err(|e| CliError::Format(format!("export: {e}")))
    }

    fn worker(&mut self, worker_id: &str) -> Result<WorkerProfile> {
        let view: WorkerView = self.json(self.client.get(self.url(&format!("/workers/{worker_id}"))))?;
        Ok(view.profile)
    }
}
