//! Stateless HTTP facade: `GET /api/model` and `POST /api/repose`.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use kinechain_core::io::{model_to_json, repose_to_json, PoseDoc};
use kinechain_core::ModelBundle;
use tower_http::services::ServeDir;

/// Read-only after startup.
pub struct ServiceState {
    pub bundle: ModelBundle,
    model_json: String,
}

impl ServiceState {
    pub fn new(bundle: ModelBundle) -> Self {
        let model_json = model_to_json(&bundle);
        ServiceState { bundle, model_json }
    }

    /// The `/api/repose` body for a raw pose document.
    pub fn repose(&self, body: &[u8]) -> Result<String, String> {
        let doc: PoseDoc = serde_json::from_slice(body).map_err(|e| e.to_string())?;
        let pose = doc.to_pose(&self.bundle.chain).map_err(|e| e.to_string())?;
        let reposed = self.bundle.repose(&pose).map_err(|e| e.to_string())?;
        Ok(repose_to_json(&reposed))
    }
}

fn json(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn get_model(State(state): State<Arc<ServiceState>>) -> Response {
    json(StatusCode::OK, state.model_json.clone())
}

async fn post_repose(State(state): State<Arc<ServiceState>>, body: Bytes) -> Response {
    let result = tokio::task::spawn_blocking(move || state.repose(&body)).await;
    match result {
        Ok(Ok(body)) => json(StatusCode::OK, body),
        Ok(Err(msg)) => {
            log::debug!("rejected pose: {msg}");
            json(
                StatusCode::BAD_REQUEST,
                serde_json::json!({ "error": msg }).to_string(),
            )
        }
        Err(e) => json(
            StatusCode::INTERNAL_SERVER_ERROR,
            serde_json::json!({ "error": e.to_string() }).to_string(),
        ),
    }
}

pub fn router(bundle: ModelBundle, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/api/model", get(get_model))
        .route("/api/repose", post(post_repose))
        .with_state(Arc::new(ServiceState::new(bundle)));
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(app: Router, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
