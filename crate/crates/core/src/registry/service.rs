//! HTTP front end for the registry.
//!
//! ```text
//! POST /v1/accounts            {"username","public_key"} -> 201 {"account_id"} | 409 | 400
//! GET  /v1/accounts/{username}                           -> 200 {"username","public_key","account_id"} | 404
//! ```

use std::future::Future;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use dashmap::mapref::entry::Entry;
use dashmap::DashMap;
use serde::{Deserialize, Serialize};
use tokio::sync::oneshot;

use super::{append_durably, open_log, validate_registration, Clock, RegistryError, RegistryRecord};
use crate::crypto::AccountId;

/// Registry shared between request handlers.
///
/// Registration holds the per-username map entry while the record is
/// appended, so two racing registrations of one name serialize and the
/// second sees the first. Lookups and registrations of other names only
/// contend on the log file mutex or on a shard for the duration of an
/// insert.
#[derive(Debug)]
pub struct ConcurrentRegistry {
    index: DashMap<String, RegistryRecord>,
    log: Mutex<std::fs::File>,
}

impl ConcurrentRegistry {
    pub fn open(path: &Path) -> Result<Self, RegistryError> {
        let (records, file) = open_log(path)?;
        let index = records.into_iter().map(|r| (r.username.clone(), r)).collect();
        Ok(Self {
            index,
            log: Mutex::new(file),
        })
    }

    pub fn register(&self, username: &str, public_key: &str) -> Result<AccountId, RegistryError> {
        let (_, account_id) = validate_registration(username, public_key)?;
        match self.index.entry(username.to_owned()) {
            Entry::Occupied(_) => Err(RegistryError::DuplicateUsername(username.to_owned())),
            Entry::Vacant(slot) => {
                let record = RegistryRecord {
                    username: username.to_owned(),
                    public_key: public_key.to_owned(),
                    account_id: account_id.clone(),
                    registered_at: Clock::Wall.now(),
                };
                {
                    let mut file = self.log.lock().expect("log mutex poisoned");
                    append_durably(&mut file, &record)?;
                }
                slot.insert(record);
                Ok(account_id)
            }
        }
    }

    pub fn lookup(&self, username: &str) -> Result<RegistryRecord, RegistryError> {
        self.index
            .get(username)
            .map(|r| r.clone())
            .ok_or_else(|| RegistryError::NotFound(username.to_owned()))
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn flush(&self) -> Result<(), RegistryError> {
        self.log.lock().expect("log mutex poisoned").sync_all()?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct RegisterRequest {
    pub username: String,
    pub public_key: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct RegisterResponse {
    pub account_id: AccountId,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct LookupResponse {
    pub username: String,
    pub public_key: String,
    pub account_id: AccountId,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct ErrorBody {
    pub error: String,
}

fn error(status: StatusCode, msg: impl ToString) -> Response {
    (status, Json(ErrorBody { error: msg.to_string() })).into_response()
}

async fn register(State(reg): State<Arc<ConcurrentRegistry>>, body: Bytes) -> Response {
    let req: RegisterRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };
    // The append fsyncs; keep it off the async workers.
    let result = tokio::task::spawn_blocking(move || reg.register(&req.username, &req.public_key)).await;
    match result {
        Ok(Ok(account_id)) => (StatusCode::CREATED, Json(RegisterResponse { account_id })).into_response(),
        Ok(Err(e @ RegistryError::DuplicateUsername(_))) => error(StatusCode::CONFLICT, e),
        Ok(Err(e @ (RegistryError::InvalidKey(_) | RegistryError::InvalidUsername(_)))) => {
            error(StatusCode::BAD_REQUEST, e)
        }
        Ok(Err(e)) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
        Err(e) => error(StatusCode::INTERNAL_SERVER_ERROR, e),
    }
}

async fn lookup(State(reg): State<Arc<ConcurrentRegistry>>, UrlPath(username): UrlPath<String>) -> Response {
    match reg.lookup(&username) {
        Ok(r) => Json(LookupResponse {
            username: r.username,
            public_key: r.public_key,
            account_id: r.account_id,
        })
        .into_response(),
        Err(e) => error(StatusCode::NOT_FOUND, e),
    }
}

pub fn router(registry: Arc<ConcurrentRegistry>) -> Router {
    Router::new()
        .route("/v1/accounts", post(register))
        .route("/v1/accounts/{username}", get(lookup))
        .with_state(registry)
}

fn bind(addr: &str) -> Result<std::net::TcpListener, RegistryError> {
    let bind_err = |e: std::io::Error| RegistryError::Bind {
        addr: addr.to_owned(),
        reason: e.to_string(),
    };
    let listener = std::net::TcpListener::bind(addr).map_err(bind_err)?;
    listener.set_nonblocking(true).map_err(bind_err)?;
    Ok(listener)
}

async fn run(
    listener: std::net::TcpListener,
    registry: Arc<ConcurrentRegistry>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<(), RegistryError> {
    let listener = tokio::net::TcpListener::from_std(listener)?;
    axum::serve(listener, router(registry.clone()))
        .with_graceful_shutdown(shutdown)
        .await?;
    registry.flush()
}

/// A registry service running on a background thread.
#[derive(Debug)]
pub struct RegistryServer {
    addr: SocketAddr,
    registry: Arc<ConcurrentRegistry>,
    stop: Option<oneshot::Sender<()>>,
    thread: Option<JoinHandle<Result<(), RegistryError>>>,
}

impl RegistryServer {
    /// Replays `store_path`, binds `bind_addr` and starts serving. Fails
    /// before binding if the log is corrupt.
    pub fn start(bind_addr: &str, store_path: &Path) -> Result<Self, RegistryError> {
        let registry = Arc::new(ConcurrentRegistry::open(store_path)?);
        let listener = bind(bind_addr)?;
        let addr = listener.local_addr()?;
        let (stop, stopped) = oneshot::channel::<()>();
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()?;
        let reg = registry.clone();
        let thread = std::thread::Builder::new().name("sos-registry".into()).spawn(move || {
            rt.block_on(run(listener, reg, async move {
                let _ = stopped.await;
            }))
        })?;
        tracing::info!(%addr, "registry listening");
        Ok(Self {
            addr,
            registry,
            stop: Some(stop),
            thread: Some(thread),
        })
    }

    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn registry(&self) -> &ConcurrentRegistry {
        &self.registry
    }

    /// Stops accepting connections, drains in-flight requests and flushes
    /// the log.
    pub fn shutdown(mut self) -> Result<(), RegistryError> {
        self.stop_and_join()
    }

    fn stop_and_join(&mut self) -> Result<(), RegistryError> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .map_err(|_| RegistryError::Io("registry thread panicked".into()))?,
            None => Ok(()),
        }
    }
}

impl Drop for RegistryServer {
    fn drop(&mut self) {
        let _ = self.stop_and_join();
    }
}

/// Serves until Ctrl-C (SIGINT), then shuts down gracefully.
pub fn serve_until_signal(bind_addr: &str, store_path: &Path) -> Result<(), RegistryError> {
    let registry = Arc::new(ConcurrentRegistry::open(store_path)?);
    let listener = bind(bind_addr)?;
    let addr = listener.local_addr()?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    tracing::info!(%addr, "registry listening");
    rt.block_on(run(listener, registry, async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    }))
}
