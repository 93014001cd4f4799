//! HTTP interface: campaign creation, block leasing, grade submission,
//! export, status, and static image serving.
//!
//! Errors are returned as `{"error": <code>, "message": <text>}` with the
//! codes of [`CampaignError::code`].

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use sentifuse_core::dataset::{read_manifest, read_records, write_grades_csv};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{Campaign, CampaignError, CampaignStore, GradeInput, NextBlock};

#[derive(Debug)]
pub struct AppState {
    pub store: CampaignStore,
    /// Directory of image files named `<image_id>` or `<image_id>.<ext>`.
    pub image_dir: Option<PathBuf>,
    /// Base for relative manifest paths in campaign requests.
    pub data_dir: Option<PathBuf>,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/campaigns", post(create_campaign))
        .route("/campaigns/{id}/next-block", get(next_block))
        .route("/campaigns/{id}/export", get(export))
        .route("/campaigns/{id}/status", get(status))
        .route("/forms/{fid}/grades", post(submit_grades))
        .route("/images/{image_id}", get(image))
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

struct ApiError(StatusCode, &'static str, String);

impl From<CampaignError> for ApiError {
    fn from(e: CampaignError) -> Self {
        let status = match &e {
            CampaignError::UnknownCampaign(_) | CampaignError::UnknownForm(_) => {
                StatusCode::NOT_FOUND
            }
            CampaignError::DuplicateCampaign(_)
            | CampaignError::LeaseMismatch { .. }
            | CampaignError::AlreadySubmitted(_) => StatusCode::CONFLICT,
            CampaignError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::BAD_REQUEST,
        };
        ApiError(status, e.code(), e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": self.1, "message": self.2}))).into_response()
    }
}

fn bad_request(code: &'static str, message: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, code, message.into())
}

/// Body of `POST /campaigns`: either an explicit image list or a dataset
/// manifest whose record ids become the campaign images.
#[derive(Debug, Deserialize)]
struct CreateCampaign {
    campaign_id: String,
    #[serde(default)]
    image_ids: Option<Vec<String>>,
    #[serde(default)]
    manifest: Option<PathBuf>,
    block_size: Option<usize>,
    min_raters: Option<usize>,
    forms_per_volunteer: Option<usize>,
    #[serde(default)]
    seed: u64,
}

fn manifest_images(path: &Path, data_dir: Option<&Path>) -> Result<Vec<String>, ApiError> {
    let path = match data_dir {
        Some(d) if path.is_relative() => d.join(path),
        _ => path.to_path_buf(),
    };
    let invalid =
        |e: sentifuse_core::dataset::DatasetError| bad_request("invalid_manifest", e.to_string());
    let manifest = read_manifest(&path).map_err(invalid)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let records = read_records(&manifest, dir).map_err(invalid)?;
    Ok(records.into_iter().map(|r| r.image_id).collect())
}

async fn create_campaign(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateCampaign>, axum::extract::rejection::JsonRejection>,
) -> Result<(StatusCode, Json<crate::CampaignStatus>), ApiError> {
    let Json(req) = body.map_err(|e| bad_request("invalid_request", e.body_text()))?;
    let image_ids = match (req.image_ids, &req.manifest) {
        (Some(ids), None) => ids,
        (None, Some(m)) => manifest_images(m, app.data_dir.as_deref())?,
        _ => {
            return Err(bad_request(
                "invalid_request",
                "give exactly one of image_ids or manifest",
            ))
        }
    };
    let mut campaign = Campaign::new(req.campaign_id, image_ids, req.seed);
    if let Some(v) = req.block_size {
        campaign.block_size = v;
    }
    if let Some(v) = req.min_raters {
        campaign.min_raters = v;
    }
    if let Some(v) = req.forms_per_volunteer {
        campaign.forms_per_volunteer = v;
    }
    let status = app.store.create_campaign(campaign)?;
    Ok((StatusCode::CREATED, Json(status)))
}

#[derive(Debug, Deserialize)]
struct VolunteerQuery {
    volunteer: Option<String>,
}

#[derive(Debug, Serialize)]
struct BlockItem {
    image_id: String,
    url: String,
}

async fn next_block(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<VolunteerQuery>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let volunteer = q
        .volunteer
        .filter(|v| !v.is_empty())
        .ok_or_else(|| bad_request("invalid_volunteer", "missing volunteer query parameter"))?;
    let block = app.store.next_block(&id, &volunteer)?;
    let body = match block {
        NextBlock::Form {
            campaign_id,
            form_id,
            images,
            leased_at,
            lease_expires_at,
        } => {
            let items: Vec<BlockItem> = images
                .into_iter()
                .map(|image_id| BlockItem {
                    url: format!("/images/{image_id}"),
                    image_id,
                })
                .collect();
            json!({
                "status": "form",
                "campaign_id": campaign_id,
                "form_id": form_id,
                "volunteer_id": volunteer,
                "items": items,
                "leased_at": leased_at,
                "lease_expires_at": lease_expires_at,
            })
        }
        complete @ NextBlock::Complete { .. } => {
            serde_json::to_value(complete).expect("serializable")
        }
    };
    Ok(Json(body))
}

#[derive(Debug, Deserialize)]
struct SubmitBody {
    volunteer_id: String,
    grades: Vec<GradeInput>,
}

async fn submit_grades(
    State(app): State<Arc<AppState>>,
    UrlPath(fid): UrlPath<String>,
    body: Result<Json<SubmitBody>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<serde_json::Value>, ApiError> {
    let Json(req) = body.map_err(|e| bad_request("invalid_request", e.body_text()))?;
    let n = app
        .store
        .submit_grades(&fid, &req.volunteer_id, &req.grades)?;
    Ok(Json(
        json!({"status": "accepted", "form_id": fid, "grades": n}),
    ))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    format: Option<String>,
}

async fn export(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, ApiError> {
    let report = app.store.export(&id)?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(report).into_response()),
        Some("csv") => {
            let mut buf = Vec::new();
            write_grades_csv(&mut buf, &report.grades).map_err(|e| {
                ApiError(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
            })?;
            Ok(([(header::CONTENT_TYPE, "text/csv")], buf).into_response())
        }
        Some(other) => Err(bad_request(
            "invalid_request",
            format!("unknown format {other:?}"),
        )),
    }
}

async fn status(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<crate::CampaignStatus>, ApiError> {
    Ok(Json(app.store.status(&id)?))
}

const IMAGE_TYPES: [(&str, &str); 6] = [
    ("jpg", "image/jpeg"),
    ("jpeg", "image/jpeg"),
    ("png", "image/png"),
    ("gif", "image/gif"),
    ("webp", "image/webp"),
    ("bmp", "image/bmp"),
];

fn safe_name(id: &str) -> bool {
    !id.is_empty() && !id.starts_with('.') && !id.contains(['/', '\\', '\0']) && !id.contains("..")
}

fn content_type(path: &Path) -> &'static str {
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    IMAGE_TYPES
        .iter()
        .find(|(e, _)| *e == ext)
        .map_or("application/octet-stream", |(_, t)| t)
}

async fn image(
    State(app): State<Arc<AppState>>,
    UrlPath(image_id): UrlPath<String>,
) -> Result<Response, ApiError> {
    let not_found = || {
        ApiError(
            StatusCode::NOT_FOUND,
            "unknown_image",
            format!("no image {image_id}"),
        )
    };
    if !safe_name(&image_id) {
        return Err(bad_request(
            "invalid_image_id",
            format!("invalid image id {image_id:?}"),
        ));
    }
    let dir = app.image_dir.as_ref().ok_or_else(not_found)?;
    let candidates = std::iter::once(dir.join(&image_id)).chain(
        IMAGE_TYPES
            .iter()
            .map(|(ext, _)| dir.join(format!("{image_id}.{ext}"))),
    );
    for path in candidates {
        if path.is_file() {
            let bytes = tokio::fs::read(&path).await.map_err(|e| {
                ApiError(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string())
            })?;
            return Ok(([(header::CONTENT_TYPE, content_type(&path))], bytes).into_response());
        }
    }
    Err(not_found())
}
