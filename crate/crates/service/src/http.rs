//! Routes:
//!
//! - `GET /health` → `{"status":"ok","sessions":n,"waiting":m}`
//! - `GET /scenarios/{id}` → scenario JSON (admin)
//! - `POST /ratings` → `{"transcript_id", "fluency", "correctness",
//!   "cooperation", "human_likeness", "comment"?}`; 201 with `rating_id`
//! - `GET /wire/v1.json` → JSON schema of the socket protocol
//! - `GET /ws` → socket carrying one WireEvent per text frame
//! - anything else → static files from the configured directory

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures_util::{SinkExt, StreamExt};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::error::ServiceError;
use crate::hub::Hub;
use crate::wire::{self, RatingScores, ServerEvent};

pub const WIRE_SCHEMA: &str = include_str!("../wire-v1.schema.json");

#[derive(Debug, Deserialize)]
pub struct RatingRequest {
    pub transcript_id: String,
    #[serde(flatten)]
    pub scores: RatingScores,
}

pub fn router(hub: Arc<Hub>, static_dir: Option<&std::path::Path>) -> Router {
    let app = Router::new()
        .route("/health", get(health))
        .route("/scenarios/{id}", get(scenario))
        .route("/ratings", post(rate))
        .route("/wire/v1.json", get(wire_schema))
        .route("/ws", get(ws))
        .with_state(hub);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

async fn health(State(hub): State<Arc<Hub>>) -> Json<serde_json::Value> {
    let (sessions, waiting) = hub.counts();
    Json(json!({"status": "ok", "sessions": sessions, "waiting": waiting}))
}

async fn scenario(State(hub): State<Arc<Hub>>, Path(id): Path<String>) -> Response {
    match hub.scenario(&id) {
        Some(s) => ([(header::CONTENT_TYPE, "application/json")], s.to_json_line()).into_response(),
        None => (StatusCode::NOT_FOUND, Json(json!({"error": format!("no scenario {id}")}))).into_response(),
    }
}

async fn wire_schema() -> impl IntoResponse {
    ([(header::CONTENT_TYPE, "application/schema+json")], WIRE_SCHEMA)
}

async fn rate(State(hub): State<Arc<Hub>>, body: Result<Json<RatingRequest>, axum::extract::rejection::JsonRejection>) -> Response {
    let Json(req) = match body {
        Ok(b) => b,
        Err(e) => return (StatusCode::BAD_REQUEST, Json(json!({"error": e.body_text()}))).into_response(),
    };
    let storage = Arc::clone(hub.storage());
    let saved = tokio::task::spawn_blocking(move || storage.save_rating(&req.transcript_id, &req.scores)).await;
    match saved {
        Ok(Ok(rating_id)) => (StatusCode::CREATED, Json(json!({"rating_id": rating_id}))).into_response(),
        Ok(Err(e @ ServiceError::Rating(_))) => (StatusCode::BAD_REQUEST, Json(json!({"error": e.to_string()}))).into_response(),
        Ok(Err(e @ ServiceError::NotFound(_))) => (StatusCode::NOT_FOUND, Json(json!({"error": e.to_string()}))).into_response(),
        Ok(Err(e)) => (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"error": e.to_string()}))).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, Json(json!({"error": e.to_string()}))).into_response(),
    }
}

async fn ws(State(hub): State<Arc<Hub>>, upgrade: WebSocketUpgrade) -> Response {
    upgrade.on_upgrade(move |socket| client(hub, socket))
}

async fn client(hub: Arc<Hub>, socket: WebSocket) {
    let handle = hub.connect();
    let conn = handle.conn;
    let mut rx = handle.rx;
    let (mut sink, mut stream) = socket.split();
    let writer = tokio::spawn(async move {
        while let Some(event) = rx.recv().await {
            if sink.send(Message::Text(wire::encode(&event).into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = stream.next().await {
        match msg {
            Message::Text(text) => match wire::decode_client(&text) {
                Ok(event) => hub.handle(conn, event),
                Err(message) => hub.reply(conn, ServerEvent::Error { message }),
            },
            Message::Close(_) => break,
            _ => {}
        }
    }
    hub.disconnect(conn);
    writer.abort();
}

pub async fn serve(hub: Arc<Hub>, addr: SocketAddr, static_dir: Option<std::path::PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(hub, static_dir.as_deref())).await
}
