//! HTTP/JSON routes.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use softcrowd_core::event::PoolPolicy;
use softcrowd_core::label_model::{EmotionClass, LabelCountVector};
use softcrowd_core::worker_quality::{QualityError, Verdict, WorkerProfile};
use tower_http::services::ServeDir;

use crate::error::ServiceError;
use crate::service::Service;
use crate::state::PoolFilter;

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::InvalidRequest(_) | ServiceError::Manifest(_) => StatusCode::BAD_REQUEST,
            ServiceError::DuplicateWorker(_) | ServiceError::DuplicateVote { .. } | ServiceError::CampaignClosed(_) => {
                StatusCode::CONFLICT
            }
            ServiceError::UnknownWorker(_) | ServiceError::UnknownCampaign(_) | ServiceError::UnknownItem { .. } => {
                StatusCode::NOT_FOUND
            }
            ServiceError::ConsentRequired(_) | ServiceError::PoolIneligible(_) => StatusCode::FORBIDDEN,
            ServiceError::QuotaReached(_) => StatusCode::GONE,
            ServiceError::Review(QualityError::UnknownWorker(_) | QualityError::UnknownLabel { .. }) => {
                StatusCode::NOT_FOUND
            }
            ServiceError::Review(QualityError::DuplicateDecision { .. }) => StatusCode::CONFLICT,
            ServiceError::Review(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Storage(e) if e.kind() == std::io::ErrorKind::NotFound => StatusCode::BAD_REQUEST,
            ServiceError::Export(_) | ServiceError::Log(_) | ServiceError::Replay { .. } | ServiceError::Storage(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody { error: self.code().to_string(), message: self.to_string() };
        (self.status(), Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;
type Shared = Arc<Service>;

/// Runs a blocking service call (it may fsync) off the async executor.
async fn blocking<T, F>(svc: &Shared, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Service) -> ApiResult<T> + Send + 'static,
{
    let svc = Arc::clone(svc);
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ServiceError::Storage(std::io::Error::other(e.to_string())))?
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterWorker {
    pub worker_id: String,
    pub consent: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateCampaign {
    pub manifest_path: String,
    #[serde(default = "default_votes")]
    pub votes_per_item: u32,
    #[serde(default)]
    pub pool_policy: PoolPolicy,
}

fn default_votes() -> u32 {
    100
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CampaignCreated {
    pub campaign_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WorkerQuery {
    pub worker_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitLabel {
    pub worker_id: String,
    pub item_id: String,
    pub label: EmotionClass,
    #[serde(default)]
    pub idempotency_key: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelAccepted {
    pub event_id: u64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
pub struct PoolQuery {
    #[serde(default)]
    pub pool: Option<String>,
}

impl PoolQuery {
    fn filter(&self) -> ApiResult<PoolFilter> {
        match &self.pool {
            None => Ok(PoolFilter::All),
            Some(p) => p.parse().map_err(ServiceError::InvalidRequest),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Distribution {
    pub item_id: String,
    pub pool: PoolFilter,
    pub counts: LabelCountVector,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitReview {
    pub reviewer_id: String,
    pub worker_id: String,
    pub item_id: String,
    pub verdict: Verdict,
}

/// Worker profile plus its accept rate.
#[derive(Debug, Serialize, Deserialize)]
pub struct WorkerView {
    #[serde(flatten)]
    pub profile: WorkerProfile,
    pub accept_rate: Option<f64>,
}

impl From<WorkerProfile> for WorkerView {
    fn from(profile: WorkerProfile) -> Self {
        let accept_rate = profile.accept_rate();
        Self { profile, accept_rate }
    }
}

async fn register_worker(State(svc): State<Shared>, Json(req): Json<RegisterWorker>) -> ApiResult<impl IntoResponse> {
    let profile = blocking(&svc, move |s| s.register_worker(&req.worker_id, req.consent)).await?;
    Ok((StatusCode::CREATED, Json(WorkerView::from(profile))))
}

async fn get_worker(State(svc): State<Shared>, Path(worker_id): Path<String>) -> ApiResult<Json<WorkerView>> {
    Ok(Json(svc.worker(&worker_id)?.into()))
}

async fn create_campaign(State(svc): State<Shared>, Json(req): Json<CreateCampaign>) -> ApiResult<impl IntoResponse> {
    let campaign_id =
        blocking(&svc, move |s| s.create_campaign(&req.manifest_path, req.votes_per_item, req.pool_policy)).await?;
    Ok((StatusCode::CREATED, Json(CampaignCreated { campaign_id })))
}

async fn get_campaign(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(svc.campaign(&id)?))
}

async fn close_campaign(State(svc): State<Shared>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(blocking(&svc, move |s| s.close_campaign(&id)).await?))
}

async fn next_task(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Query(q): Query<WorkerQuery>,
) -> ApiResult<Response> {
    Ok(match svc.next_task(&id, &q.worker_id)? {
        Some(item) => Json(item).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit_label(
    State(svc): State<Shared>,
    Path(id): Path<String>,
    Json(req): Json<SubmitLabel>,
) -> ApiResult<impl IntoResponse> {
    let receipt = blocking(&svc, move |s| {
        s.submit_label(&id, &req.worker_id, &req.item_id, req.label, req.idempotency_key.as_deref())
    })
    .await?;
    let status = if receipt.replayed { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(LabelAccepted { event_id: receipt.event_id })))
}

async fn distribution(
    State(svc): State<Shared>,
    Path((id, item_id)): Path<(String, String)>,
    Query(q): Query<PoolQuery>,
) -> ApiResult<Json<Distribution>> {
    let pool = q.filter()?;
    let counts = svc.distribution(&id, &item_id, pool)?;
    Ok(Json(Distribution { item_id, pool, counts }))
}

async fn export(State(svc): State<Shared>, Path(id): Path<String>, Query(q): Query<PoolQuery>) -> ApiResult<Response> {
    let csv = svc.export_csv(&id, q.filter()?)?;
    Ok(([(header::CONTENT_TYPE, "text/csv; charset=utf-8")], csv).into_response())
}

async fn submit_review(State(svc): State<Shared>, Json(req): Json<SubmitReview>) -> ApiResult<impl IntoResponse> {
    let profile =
        blocking(&svc, move |s| s.review(&req.reviewer_id, &req.worker_id, &req.item_id, req.verdict)).await?;
    Ok((StatusCode::CREATED, Json(WorkerView::from(profile))))
}

/// The service router. Images under `assets_dir` are served at `/assets/`.
pub fn router(service: Arc<Service>, assets_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/workers", post(register_worker))
        .route("/workers/{id}", get(get_worker))
        .route("/campaigns", post(create_campaign))
        .route("/campaigns/{id}", get(get_campaign))
        .route("/campaigns/{id}/close", post(close_campaign))
        .route("/campaigns/{id}/tasks/next", get(next_task))
        .route("/campaigns/{id}/labels", post(submit_label))
        .route("/campaigns/{id}/items/{item_id}/distribution", get(distribution))
        .route("/campaigns/{id}/export", get(export))
        .route("/reviews", post(submit_review))
        .with_state(service);
    match assets_dir {
        Some(dir) => api.nest_service("/assets", ServeDir::new(dir)),
        None => api,
    }
}
