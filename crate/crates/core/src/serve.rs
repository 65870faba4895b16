//! Local HTTP session service for interactive scribbling.
//!
//! | method | path | body | response |
//! |---|---|---|---|
//! | POST | `/sessions` | `{image_png, config?}` | `{id, superpixel_counts}` |
//! | POST | `/sessions/{id}/scribbles` | `{scribbles_png}` or `{strokes}` | `{mask_png, confidence_png, ms}` |
//! | GET | `/sessions/{id}/mask` | | last mask as PNG |
//! | DELETE | `/sessions/{id}` | | 204 |
//!
//! Images and masks travel as base64 PNG. A session caches every
//! scribble-independent artifact at creation; submissions only run
//! [`predict`] against that cache.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use uuid::Uuid;

use crate::config::PipelineConfig;
use crate::features::ColorSpace;
use crate::io::{decode_image, decode_scribble_png, encode_gray_png, encode_mask_png, IoError};
use crate::mask::LabelMask;
use crate::propagation::{predict, prepare, PipelineOutput, PreparedImage, PropagationError};
use crate::scribbles::{ScribbleError, ScribbleSet, Stroke, StrokeFile};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error("unknown session {0}")]
    UnknownSession(String),
    #[error("session has no mask yet")]
    NoMask,
    #[error("invalid base64 payload: {0}")]
    Base64(#[from] base64::DecodeError),
    #[error("request needs exactly one of `scribbles_png` and `strokes`")]
    BadPayload,
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Scribbles(#[from] ScribbleError),
    #[error(transparent)]
    Pipeline(#[from] PropagationError),
    #[error("worker task failed: {0}")]
    Task(String),
}

impl ServeError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServeError::UnknownSession(_) | ServeError::NoMask => StatusCode::NOT_FOUND,
            ServeError::Base64(_)
            | ServeError::BadPayload
            | ServeError::Io(_)
            | ServeError::Scribbles(_) => StatusCode::BAD_REQUEST,
            ServeError::Pipeline(PropagationError::Config(_))
            | ServeError::Pipeline(PropagationError::SizeMismatch { .. }) => StatusCode::BAD_REQUEST,
            ServeError::Pipeline(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServeError::Task(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServeError {
    fn into_response(self) -> Response {
        let body = Json(serde_json::json!({ "error": self.to_string() }));
        (self.status(), body).into_response()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperpixelCount {
    pub space: ColorSpace,
    pub k: f64,
    pub sigma_fh: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateRequest {
    /// Base64 PNG (or binary PPM).
    pub image_png: String,
    #[serde(default)]
    pub config: Option<PipelineConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateResponse {
    pub id: String,
    pub superpixel_counts: Vec<SuperpixelCount>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ScribbleRequest {
    /// Base64 gray PNG, 255 = unlabeled.
    #[serde(default)]
    pub scribbles_png: Option<String>,
    /// Strokes in image coordinates, painted in order.
    #[serde(default)]
    pub strokes: Option<Vec<Stroke>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScribbleResponse {
    pub mask_png: String,
    pub confidence_png: String,
    pub ms: u64,
}

/// One image with its cached artifacts.
#[derive(Debug)]
pub struct Session {
    prepared: PreparedImage,
    /// Also serializes submissions within the session.
    last_mask: Mutex<Option<LabelMask>>,
}

impl Session {
    pub fn prepared(&self) -> &PreparedImage {
        &self.prepared
    }

    pub fn superpixel_counts(&self) -> Vec<SuperpixelCount> {
        self.prepared
            .jobs
            .iter()
            .map(|j| SuperpixelCount {
                space: j.space,
                k: j.k,
                sigma_fh: j.sigma_fh,
                count: j.superpixels.count(),
            })
            .collect()
    }

    fn scribble_set(&self, req: &ScribbleRequest) -> Result<ScribbleSet, ServeError> {
        let n_cl = self.prepared.config.n_cl;
        match (&req.scribbles_png, &req.strokes) {
            (Some(png), None) => Ok(decode_scribble_png(&B64.decode(png)?, n_cl)?),
            (None, Some(strokes)) => Ok(StrokeFile {
                width: self.prepared.width,
                height: self.prepared.height,
                strokes: strokes.clone(),
            }
            .rasterize(n_cl)?),
            _ => Err(ServeError::BadPayload),
        }
    }

    /// Runs the scribble-dependent stages and remembers the mask.
    pub fn submit(&self, scribbles: &ScribbleSet) -> Result<PipelineOutput, ServeError> {
        let mut last = self.last_mask.lock().expect("session lock");
        let out = predict(&self.prepared, scribbles)?;
        *last = Some(out.mask.clone());
        Ok(out)
    }

    pub fn last_mask(&self) -> Option<LabelMask> {
        self.last_mask.lock().expect("session lock").clone()
    }
}

/// Sessions keyed by id, plus the configuration used when a request has none.
#[derive(Debug, Clone)]
pub struct SessionStore {
    sessions: Arc<Mutex<HashMap<String, Arc<Session>>>>,
    default_config: PipelineConfig,
}

impl SessionStore {
    pub fn new(default_config: PipelineConfig) -> Self {
        Self {
            sessions: Arc::default(),
            default_config,
        }
    }

    pub fn create(
        &self,
        image_bytes: &[u8],
        config: Option<PipelineConfig>,
    ) -> Result<(String, Arc<Session>), ServeError> {
        let image = decode_image(image_bytes)?;
        let cfg = config.unwrap_or_else(|| self.default_config.clone());
        let session = Arc::new(Session {
            prepared: prepare(&image, &cfg)?,
            last_mask: Mutex::new(None),
        });
        let id = Uuid::new_v4().to_string();
        self.sessions
            .lock()
            .expect("store lock")
            .insert(id.clone(), session.clone());
        Ok((id, session))
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>, ServeError> {
        self.sessions
            .lock()
            .expect("store lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ServeError::UnknownSession(id.to_string()))
    }

    pub fn remove(&self, id: &str) -> Result<(), ServeError> {
        self.sessions
            .lock()
            .expect("store lock")
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ServeError::UnknownSession(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServeError> + Send + 'static,
) -> Result<T, ServeError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServeError::Task(e.to_string()))?
}

async fn create_session(
    State(store): State<SessionStore>,
    Json(req): Json<CreateRequest>,
) -> Result<(StatusCode, Json<CreateResponse>), ServeError> {
    let bytes = B64.decode(&req.image_png)?;
    let response = blocking(move || {
        let (id, session) = store.create(&bytes, req.config)?;
        Ok(CreateResponse {
            id,
            superpixel_counts: session.superpixel_counts(),
        })
    })
    .await?;
    Ok((StatusCode::CREATED, Json(response)))
}

async fn submit_scribbles(
    State(store): State<SessionStore>,
    Path(id): Path<String>,
    Json(req): Json<ScribbleRequest>,
) -> Result<Json<ScribbleResponse>, ServeError> {
    let session = store.get(&id)?;
    let response = blocking(move || {
        let start = Instant::now();
        let scribbles = session.scribble_set(&req)?;
        let out = session.submit(&scribbles)?;
        Ok(ScribbleResponse {
            mask_png: B64.encode(encode_mask_png(&out.mask)),
            confidence_png: B64.encode(encode_gray_png(
                out.mask.width(),
                out.mask.height(),
                &out.confidence,
            )),
            ms: start.elapsed().as_millis() as u64,
        })
    })
    .await?;
    Ok(Json(response))
}

async fn get_mask(
    State(store): State<SessionStore>,
    Path(id): Path<String>,
) -> Result<Response, ServeError> {
    let mask = store.get(&id)?.last_mask().ok_or(ServeError::NoMask)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], encode_mask_png(&mask)).into_response())
}

async fn delete_session(
    State(store): State<SessionStore>,
    Path(id): Path<String>,
) -> Result<StatusCode, ServeError> {
    store.remove(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

pub fn router(store: SessionStore) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", delete(delete_session))
        .route("/sessions/{id}/scribbles", post(submit_scribbles))
        .route("/sessions/{id}/mask", get(get_mask))
        .with_state(store)
}

/// Serves [`router`] on `addr` until the process is stopped.
pub async fn serve(addr: SocketAddr, default_config: PipelineConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(SessionStore::new(default_config))).await
}
