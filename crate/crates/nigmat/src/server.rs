//! JSON-over-HTTP front end for a single [`Service`].
//!
//! Every handler takes the one session lock, so mutations are serialised and
//! the service is linearizable at round granularity.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use crate::session::{LabelError, LabelRequest, Service};

pub type Shared = Arc<Mutex<Service>>;

pub fn router(service: Service) -> Router {
    Router::new()
        .route("/session", get(get_session))
        .route("/label", post(post_label))
        .route("/step", post(post_step))
        .route("/metrics", get(get_metrics))
        .with_state(Arc::new(Mutex::new(service)))
}

fn lock(s: &Shared) -> MutexGuard<'_, Service> {
    // A panic mid-step leaves the previous round intact (run_round only
    // commits on success), so a poisoned lock is still usable.
    s.lock().unwrap_or_else(|e| e.into_inner())
}

fn error(status: StatusCode, msg: impl ToString) -> Response {
    (status, Json(json!({ "error": msg.to_string() }))).into_response()
}

async fn get_session(State(s): State<Shared>) -> Response {
    Json(lock(&s).wire().clone()).into_response()
}

async fn post_label(State(s): State<Shared>, Json(req): Json<LabelRequest>) -> Response {
    match lock(&s).label(&req) {
        Ok(ack) => Json(ack).into_response(),
        Err(e @ LabelError::Unknown(_)) => error(StatusCode::NOT_FOUND, e),
        Err(e @ LabelError::Stale { .. }) => error(StatusCode::CONFLICT, e),
    }
}

async fn post_step(State(s): State<Shared>) -> Response {
    let mut svc = lock(&s);
    match svc.step() {
        Ok(wire) => Json(wire.clone()).into_response(),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn get_metrics(State(s): State<Shared>) -> Response {
    match lock(&s).metrics() {
        Ok(Some(m)) => Json(m).into_response(),
        Ok(None) => error(StatusCode::NOT_FOUND, "session has no ground truth"),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

/// Serves until the process is stopped.
pub fn serve(
    service: Service,
    addr: SocketAddr,
    on_bound: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        on_bound(listener.local_addr()?);
        axum::serve(listener, router(service)).await
    })
}
