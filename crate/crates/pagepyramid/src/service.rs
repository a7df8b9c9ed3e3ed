//! JSON-over-HTTP front end. Three routes: a health probe, fused
//! retrieval, and retrieval-backed answer generation. All errors come
//! back as JSON bodies with conventional status codes.

use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use pagepyramid_core::fusion::{retrieve, FusionConfig, FusionError};
use pagepyramid_core::pyramid::PyramidIndex;
use pagepyramid_core::query::QueryError;
use serde::Deserialize;
use serde_json::json;

use crate::clients::ServiceClients;
use crate::corpus::{self, DocumentManifest};

/// Shared service state. The index and corpus are optional so the
/// service can report their absence instead of failing to start.
#[derive(Clone)]
pub struct AppState {
    index: Option<Arc<PyramidIndex>>,
    manifests: Arc<Vec<DocumentManifest>>,
    clients: Arc<ServiceClients>,
    base: FusionConfig,
}

impl AppState {
    pub fn new(
        index: Option<PyramidIndex>,
        manifests: Vec<DocumentManifest>,
        clients: ServiceClients,
        base: FusionConfig,
    ) -> Self {
        Self {
            index: index.map(Arc::new),
            manifests: Arc::new(manifests),
            clients: Arc::new(clients),
            base,
        }
    }
}

fn err_json(status: StatusCode, message: impl Into<String>) -> Response {
    (status, Json(json!({ "error": message.into() }))).into_response()
}

fn fusion_status(e: &FusionError) -> StatusCode {
    match e {
        FusionError::InvalidConfig(_) | FusionError::EmptyInput => StatusCode::BAD_REQUEST,
        FusionError::Expand(QueryError::EmptyQuery) => StatusCode::BAD_REQUEST,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

async fn healthz(State(state): State<AppState>) -> Response {
    let index = state.index.as_ref().map(|index| {
        json!({
            "pages": index.page_count(),
            "vectors": index.total_vectors(),
            "dim": index.dim(),
            "embedder_model": index.meta().embedder_model,
        })
    });
    Json(json!({ "status": "ok", "index": index })).into_response()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRequest {
    question: String,
    #[serde(default)]
    k: Option<usize>,
    /// Full retrieval config replacing the server's base config;
    /// omitted fields fall back to the built-in defaults.
    #[serde(default)]
    config: Option<FusionConfig>,
}

async fn query(State(state): State<AppState>, body: String) -> Response {
    let req: QueryRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return err_json(StatusCode::BAD_REQUEST, format!("bad request body: {e}")),
    };
    let Some(index) = state.index.clone() else {
        return err_json(StatusCode::NOT_FOUND, "no index loaded");
    };
    let mut cfg = req.config.unwrap_or_else(|| state.base.clone());
    if let Some(k) = req.k {
        cfg.k_final = k;
    }
    let clients = state.clients.clone();
    let joined = tokio::task::spawn_blocking(move || {
        retrieve(
            &req.question,
            &index,
            &cfg,
            &clients.embedder(),
            &clients.query_expander(),
        )
    })
    .await;
    match joined {
        Ok(Ok(fused)) => Json(fused).into_response(),
        Ok(Err(e)) => err_json(fusion_status(&e), e.to_string()),
        Err(e) => err_json(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnswerRequest {
    question: String,
    #[serde(default)]
    k: Option<usize>,
}

async fn answer(State(state): State<AppState>, body: String) -> Response {
    let req: AnswerRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return err_json(StatusCode::BAD_REQUEST, format!("bad request body: {e}")),
    };
    let Some(index) = state.index.clone() else {
        return err_json(StatusCode::NOT_FOUND, "no index loaded");
    };
    if state.manifests.is_empty() {
        return err_json(
            StatusCode::NOT_FOUND,
            "no corpus loaded for answer generation",
        );
    }
    let mut cfg = state.base.clone();
    if let Some(k) = req.k {
        cfg.k_final = k;
    }
    let clients = state.clients.clone();
    let manifests = state.manifests.clone();
    let joined = tokio::task::spawn_blocking(move || {
        let fused = retrieve(
            &req.question,
            &index,
            &cfg,
            &clients.embedder(),
            &clients.query_expander(),
        )
        .map_err(|e| err_json(fusion_status(&e), e.to_string()))?;
        let pages = fused.page_list();
        let mut images = Vec::with_capacity(pages.len());
        for page in &pages {
            let bytes = corpus::read_page(&manifests, page)
                .map_err(|e| err_json(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
            images.push(bytes);
        }
        if images.is_empty() {
            return Err(err_json(
                StatusCode::NOT_FOUND,
                "retrieval produced no pages to answer from",
            ));
        }
        let text = clients
            .generate_answer(&req.question, &images)
            .map_err(|e| err_json(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
        Ok::<Response, Response>(
            Json(json!({
                "answer": text,
                "pages": pages.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
                "k": pages.len(),
            }))
            .into_response(),
        )
    })
    .await;
    match joined {
        Ok(Ok(resp)) => resp,
        Ok(Err(resp)) => resp,
        Err(e) => err_json(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn fallback() -> Response {
    err_json(StatusCode::NOT_FOUND, "unknown route")
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/query", post(query))
        .route("/answer", post(answer))
        .fallback(fallback)
        .with_state(state)
}

/// Serves until the listener closes or the task is aborted.
pub async fn serve_on(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
