use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::json;

use crate::query::{PredictRequest, Predictor, QueryError};

pub fn router(predictor: Arc<Predictor>) -> Router {
    Router::new().route("/v1/predict", post(handle_predict)).route("/v1/health", get(health)).with_state(predictor)
}

fn error(status: StatusCode, message: String, detail: String) -> Response {
    (status, Json(json!({ "error": message, "detail": detail }))).into_response()
}

async fn handle_predict(State(predictor): State<Arc<Predictor>>, body: Result<Json<PredictRequest>, JsonRejection>) -> Response {
    let req = match body {
        Ok(Json(req)) => req,
        Err(JsonRejection::MissingJsonContentType(e)) => {
            return error(StatusCode::UNSUPPORTED_MEDIA_TYPE, "expected Content-Type: application/json".into(), e.body_text());
        }
        Err(e) => return error(StatusCode::BAD_REQUEST, "malformed request body".into(), e.body_text()),
    };
    match predictor.predict(&req) {
        Ok(resp) => (StatusCode::OK, Json(resp)).into_response(),
        Err(e) => {
            let status = match &e {
                QueryError::InvalidSmiles(_) | QueryError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
                QueryError::UnknownCell(_) => StatusCode::NOT_FOUND,
                QueryError::PanelLength { .. } => StatusCode::UNPROCESSABLE_ENTITY,
                QueryError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
            };
            let detail = match &e {
                QueryError::InvalidSmiles(c) => format!("{c:?}"),
                other => other.to_string(),
            };
            error(status, e.to_string(), detail)
        }
    }
}

async fn health(State(predictor): State<Arc<Predictor>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "checkpoint": predictor.checkpoint_hash(),
        "model": predictor.checkpoint().spec.kind.name(),
    }))
}

/// Binds `host:port` and serves until the process is stopped.
pub fn run(predictor: Predictor, host: &str, port: u16) -> std::io::Result<()> {
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        log::info!("serving on {}", listener.local_addr()?);
        axum::serve(listener, router(Arc::new(predictor))).await
    })
}
