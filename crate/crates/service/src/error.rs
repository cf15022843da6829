use softcrowd_core::aggregation::AggregationError;
use softcrowd_core::event::LogFormatError;
use softcrowd_core::label_model::LabelError;
use softcrowd_core::worker_quality::QualityError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("worker {0:?} already registered")]
    DuplicateWorker(String),
    #[error("unknown worker {0:?}")]
    UnknownWorker(String),
    #[error("unknown campaign {0:?}")]
    UnknownCampaign(String),
    #[error("unknown item {item_id:?} in campaign {campaign_id:?}")]
    UnknownItem { campaign_id: String, item_id: String },
    #[error("worker {0:?} has not consented")]
    ConsentRequired(String),
    #[error("worker {0:?} is not in a pool this campaign accepts")]
    PoolIneligible(String),
    #[error("worker {worker_id:?} already labeled {item_id:?}")]
    DuplicateVote { worker_id: String, item_id: String },
    #[error("item {0:?} already has its full quota of votes")]
    QuotaReached(String),
    #[error("campaign {0:?} is closed")]
    CampaignClosed(String),
    #[error(transparent)]
    Review(#[from] QualityError),
    #[error("manifest: {0}")]
    Manifest(#[from] LabelError),
    #[error("export: {0}")]
    Export(#[from] AggregationError),
    #[error("event log: {0}")]
    Log(#[from] LogFormatError),
    #[error("replaying log entry {seq}: {message}")]
    Replay { seq: u64, message: String },
    #[error("storage: {0}")]
    Storage(#[from] std::io::Error),
}

impl ServiceError {
    /// Stable machine-readable code used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::InvalidRequest(_) => "InvalidRequest",
            ServiceError::DuplicateWorker(_) => "DuplicateWorker",
            ServiceError::UnknownWorker(_) => "UnknownWorker",
            ServiceError::UnknownCampaign(_) => "UnknownCampaign",
            ServiceError::UnknownItem { .. } => "UnknownItem",
            ServiceError::ConsentRequired(_) => "ConsentRequired",
            ServiceError::PoolIneligible(_) => "PoolIneligible",
            ServiceError::DuplicateVote { .. } => "DuplicateVote",
            ServiceError::QuotaReached(_) => "QuotaReached",
            ServiceError::CampaignClosed(_) => "CampaignClosed",
            ServiceError::Review(QualityError::UnknownWorker(_)) => "UnknownWorker",
            ServiceError::Review(QualityError::UnknownLabel { .. }) => "UnknownLabel",
            ServiceError::Review(QualityError::DuplicateDecision { .. }) => "DuplicateDecision",
            ServiceError::Review(_) => "ReviewRejected",
            ServiceError::Manifest(_) => "InvalidManifest",
            ServiceError::Export(_) => "ExportFailed",
            ServiceError::Log(_) | ServiceError::Replay { .. } => "LogCorrupt",
            ServiceError::Storage(_) => "StorageError",
        }
    }
}
