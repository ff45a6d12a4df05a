//! HTTP search API over a loaded engine.
//!
//! `GET /health`, `POST /search`, `GET /theorem/{id}`. Errors are
//! `{"error": {"code", "message"}}`.

use std::future::Future;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mathsearch::embedding::EmbedError;
use mathsearch::query::{SearchError, SearchOptions};
use mathsearch::SearchEngine;
use serde::Deserialize;
use serde_json::json;
use tokio::net::TcpListener;
use tower_http::cors::CorsLayer;

use crate::config::Config;
use crate::output::{SearchResponse, TheoremView};

pub const TIMING_HEADER: &str = "x-search-time-ms";

#[derive(Clone)]
pub struct AppState {
    engine: Arc<SearchEngine>,
    config: Arc<Config>,
}

impl AppState {
    pub fn new(config: Config, engine: Arc<SearchEngine>) -> Self {
        AppState {
            engine,
            config: Arc::new(config),
        }
    }
}

#[derive(Debug, Deserialize)]
struct SearchRequest {
    query: String,
    k: Option<usize>,
    augment: Option<bool>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({"error": {"code": self.code, "message": self.message}});
        (self.status, Json(body)).into_response()
    }
}

impl From<SearchError> for ApiError {
    fn from(e: SearchError) -> Self {
        match &e {
            SearchError::EmptyQuery => ApiError::bad_request("empty_query", e.to_string()),
            SearchError::Embedding(EmbedError::Provider(_) | EmbedError::Vector(_)) => {
                ApiError::new(StatusCode::BAD_GATEWAY, "embedding_provider_error", e.to_string())
            }
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()),
        }
    }
}

pub fn router(state: AppState) -> Router {
    let cors = state.config.cors;
    let app = Router::new()
        .route("/health", get(health))
        .route("/search", post(search))
        .route("/theorem/{id}", get(theorem))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state);
    if cors {
        app.layer(CorsLayer::permissive())
    } else {
        app
    }
}

async fn health(State(state): State<AppState>) -> Json<serde_json::Value> {
    let index = state.engine.index();
    let p = index.params();
    Json(json!({
        "status": "ok",
        "corpus_size": state.engine.corpus().len(),
        "indexed": index.len(),
        "preset": state.engine.presets().name,
        "index": {
            "dim": index.dim(),
            "m": p.m,
            "m0": p.m0,
            "ef_construction": p.ef_construction,
            "ef_search": p.ef_search,
        },
    }))
}

async fn search(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let started = Instant::now();
    let req: SearchRequest = serde_json::from_slice(&body)
        .map_err(|e| ApiError::bad_request("invalid_request", format!("invalid request body: {e}")))?;
    let config = &state.config;
    if req.query.trim().is_empty() {
        return Err(ApiError::bad_request("empty_query", "query is empty"));
    }
    let chars = req.query.chars().count();
    if chars > config.max_query_chars {
        return Err(ApiError::bad_request(
            "query_too_long",
            format!("query has {chars} characters; the limit is {}", config.max_query_chars),
        ));
    }
    let k = req.k.unwrap_or(config.default_k);
    if !(1..=100).contains(&k) {
        return Err(ApiError::bad_request("invalid_k", format!("k must be between 1 and 100, got {k}")));
    }
    let opts = SearchOptions {
        k,
        augment: req.augment.unwrap_or(config.augment),
        ef: None,
    };
    let engine = state.engine.clone();
    let query = req.query;
    let task = tokio::task::spawn_blocking(move || engine.run_search(&query, &opts));
    let timeout = Duration::from_secs_f64(config.request_timeout_secs);
    let outcome = match tokio::time::timeout(timeout, task).await {
        Err(_) => return Err(ApiError::new(StatusCode::GATEWAY_TIMEOUT, "timeout", "search timed out")),
        Ok(Err(join)) => {
            return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", join.to_string()))
        }
        Ok(Ok(result)) => result?,
    };
    let mut response = SearchResponse::from_outcome(outcome);
    let elapsed_ms = started.elapsed().as_secs_f64() * 1000.0;
    if config.timing_in_body {
        response.timing_ms = Some(elapsed_ms);
    }
    let mut http = Json(response).into_response();
    if let Ok(v) = HeaderValue::from_str(&format!("{elapsed_ms:.3}")) {
        http.headers_mut().insert(TIMING_HEADER, v);
    }
    http.headers_mut()
        .insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    Ok(http)
}

async fn theorem(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let record = state
        .engine
        .corpus()
        .get(&id)
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "not_found", format!("no theorem `{id}`")))?;
    Ok(Json(TheoremView::new(record, state.engine.informal(&id))).into_response())
}

/// Serves `state` on `listener` until `shutdown` resolves, then drains
/// in-flight requests.
pub async fn run(listener: TcpListener, state: AppState, shutdown: impl Future<Output = ()> + Send + 'static) -> anyhow::Result<()> {
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await?;
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
    tracing::info!("shutting down");
}

/// Binds `config.listen`, prints the bound address and serves until Ctrl-C
/// or SIGTERM.
pub async fn serve(config: Config, engine: Arc<SearchEngine>) -> anyhow::Result<()> {
    let listener = TcpListener::bind(&config.listen)
        .await
        .map_err(|e| anyhow::anyhow!("cannot bind {}: {e}", config.listen))?;
    let addr = listener.local_addr()?;
    println!("listening on http://{addr}");
    std::io::Write::flush(&mut std::io::stdout())?;
    run(listener, AppState::new(config, engine), shutdown_signal()).await
}
