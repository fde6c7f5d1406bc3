//! Mock inference server exposing a model over the /v1 wire protocol.

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::model::LanguageModel;
use crate::token::TokenSeq;

/// Vocabularies up to this size get full probability rows on the wire;
/// larger ones are truncated to top-K with client-side renormalization.
pub const FULL_DIST_MAX_VOCAB: usize = 4096;

pub const DEFAULT_TOP_K: usize = 64;

struct ServerModel {
    model: Box<dyn LanguageModel>,
    top_k: usize,
}

#[derive(Deserialize)]
struct ForwardRequest {
    tokens: Vec<u32>,
    from_position: usize,
}

#[derive(Serialize)]
#[serde(untagged)]
enum ForwardResponse {
    Full {
        vocab_size: usize,
        probs: Vec<Vec<f64>>,
    },
    TopK {
        vocab_size: usize,
        top_k: Vec<Vec<(u32, f64)>>,
    },
}

fn bad_request(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(json!({ "error": message }))).into_response()
}

async fn vocab_handler(State(state): State<Arc<ServerModel>>) -> Response {
    let vocab = state.model.vocab();
    Json(json!({ "size": vocab.size(), "eos_id": vocab.eos_id().0 })).into_response()
}

async fn forward_handler(State(state): State<Arc<ServerModel>>, body: String) -> Response {
    let request: ForwardRequest = match serde_json::from_str(&body) {
        Ok(r) => r,
        Err(e) => return bad_request(format!("malformed request: {e}")),
    };
    let prompt = TokenSeq::from(request.tokens);
    if request.from_position > prompt.len() {
        return bad_request(format!(
            "from_position {} past prompt length {}",
            request.from_position,
            prompt.len()
        ));
    }
    let dists = match state.model.forward(&prompt, request.from_position) {
        Ok(d) => d,
        Err(e) => return bad_request(e.to_string()),
    };
    let vocab_size = state.model.vocab().size();
    let response = if vocab_size <= FULL_DIST_MAX_VOCAB {
        ForwardResponse::Full {
            vocab_size,
            probs: dists.into_iter().map(|d| d.as_slice().to_vec()).collect(),
        }
    } else {
        ForwardResponse::TopK {
            vocab_size,
            top_k: dists
                .iter()
                .map(|d| {
                    let mut ids: Vec<u32> = (0..vocab_size as u32).collect();
                    // Highest probability first, lowest id on ties.
                    ids.sort_by(|a, b| {
                        d.as_slice()[*b as usize]
                            .partial_cmp(&d.as_slice()[*a as usize])
                            .unwrap()
                            .then(a.cmp(b))
                    });
                    ids.truncate(state.top_k);
                    ids.into_iter().map(|i| (i, d.as_slice()[i as usize])).collect()
                })
                .collect(),
        }
    };
    Json(response).into_response()
}

fn router(state: Arc<ServerModel>) -> Router {
    Router::new()
        .route("/v1/vocab", get(vocab_handler))
        .route("/v1/forward", post(forward_handler))
        .with_state(state)
}

/// A running mock server; dropping or calling `shutdown` stops it.
pub struct MockServer {
    addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MockServer {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            tx.send(()).ok();
        }
        if let Some(thread) = self.thread.take() {
            thread.join().ok();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Spawn the server on its own runtime thread and return once it is bound.
pub fn spawn_mock_server(
    model: Box<dyn LanguageModel>,
    addr: SocketAddr,
    top_k: usize,
) -> Result<MockServer> {
    let state = Arc::new(ServerModel { model, top_k });
    let (addr_tx, addr_rx) = std::sync::mpsc::channel();
    let (shutdown_tx, shutdown_rx) = tokio::sync::oneshot::channel::<()>();
    let thread = std::thread::spawn(move || {
        let runtime = match tokio::runtime::Builder::new_current_thread().enable_io().build() {
            Ok(rt) => rt,
            Err(e) => {
                addr_tx.send(Err(Error::Transport(format!("runtime: {e}")))).ok();
                return;
            }
        };
        runtime.block_on(async move {
            let listener = match tokio::net::TcpListener::bind(addr).await {
                Ok(l) => l,
                Err(e) => {
                    addr_tx
                        .send(Err(Error::Transport(format!("bind {addr}: {e}"))))
                        .ok();
                    return;
                }
            };
            addr_tx.send(Ok(listener.local_addr().unwrap())).ok();
            axum::serve(listener, router(state))
                .with_graceful_shutdown(async {
                    shutdown_rx.await.ok();
                })
                .await
                .ok();
        });
    });
    let addr = addr_rx
        .recv()
        .map_err(|_| Error::Transport("server thread exited before binding".into()))??;
    Ok(MockServer {
        addr,
        shutdown: Some(shutdown_tx),
        thread: Some(thread),
    })
}

/// Serve until interrupted; used by the CLI serve-mock command.
pub fn serve_mock_blocking(model: Box<dyn LanguageModel>, addr: SocketAddr, top_k: usize) -> Result<()> {
    let state = Arc::new(ServerModel { model, top_k });
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_io()
        .build()
        .map_err(|e| Error::Transport(format!("runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Error::Transport(format!("bind {addr}: {e}")))?;
        log::info!("mock server listening on {}", listener.local_addr().unwrap());
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                tokio::signal::ctrl_c().await.ok();
            })
            .await
            .map_err(|e| Error::Transport(format!("serve: {e}")))
    })
}
