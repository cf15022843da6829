//! Annotation campaign service: consent, least-voted-first task assignment,
//! label submission with per-item quotas, reviews feeding worker pools, and
//! count export. State is rebuilt from an append-only JSON-Lines log.

pub mod api;
mod error;
pub mod service;
pub mod state;
pub mod store;

pub use api::router;
pub use error::ServiceError;
pub use service::{replay, LabelReceipt, Service, ServiceConfig};
pub use state::{pool_eligible, Campaign, CampaignSummary, PoolFilter, ServiceState, Vote};
