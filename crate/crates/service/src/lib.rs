//! HTTP API over one store file. Reads see the current snapshot; mutations
//! go through the single engine writer, one appended event each.

mod api;
mod error;
pub mod session;

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::Router;
use ownership_core::persist::FileJournal;
use ownership_core::time::Timestamp;
use ownership_core::Engine;
use parking_lot::RwLock;
use thiserror::Error;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

pub use api::*;
pub use error::ApiError;
pub use session::{Capability, Session, SessionTable};

/// Where mutation timestamps come from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Clock {
    /// Wall-clock seconds, never behind the store.
    #[default]
    Wall,
    /// One second past the latest time in the store; reproducible.
    Logical,
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub bind: SocketAddr,
    pub store_path: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub sessions: SessionTable,
    pub clock: Clock,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("cannot bind {addr}: {source}")]
    BindFailure {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error(transparent)]
    Store(#[from] ownership_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub struct AppState {
    pub engine: RwLock<Engine<FileJournal>>,
    pub sessions: SessionTable,
    pub clock: Clock,
}

impl AppState {
    pub fn new(engine: Engine<FileJournal>, sessions: SessionTable, clock: Clock) -> Self {
        Self {
            engine: RwLock::new(engine),
            sessions,
            clock,
        }
    }

    fn now(&self, engine: &Engine<FileJournal>) -> Timestamp {
        let next = engine.next_time();
        match self.clock {
            Clock::Wall => chrono::Utc::now().timestamp().max(next),
            Clock::Logical => next,
        }
    }
}

pub fn router(state: Arc<AppState>, static_dir: Option<PathBuf>) -> Router {
    let app = api::routes().with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

/// A server running on a background task.
pub struct RunningServer {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    handle: JoinHandle<std::io::Result<()>>,
}

impl RunningServer {
    /// Stops accepting, drains in-flight requests and releases the store lock.
    pub async fn shutdown(mut self) -> Result<(), ServiceError> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.wait().await
    }

    pub async fn wait(self) -> Result<(), ServiceError> {
        match self.handle.await {
            Ok(r) => Ok(r?),
            Err(e) => Err(std::io::Error::other(e).into()),
        }
    }
}

/// Opens the store (taking its writer lock), binds and starts serving.
pub async fn start(config: ServiceConfig) -> Result<RunningServer, ServiceError> {
    let engine = Engine::open(&config.store_path)?;
    let listener = tokio::net::TcpListener::bind(config.bind)
        .await
        .map_err(|source| ServiceError::BindFailure {
            addr: config.bind,
            source,
        })?;
    let addr = listener.local_addr()?;
    let state = Arc::new(AppState::new(engine, config.sessions, config.clock));
    let app = router(state, config.static_dir);
    let (stop, stopped) = oneshot::channel::<()>();
    let handle = tokio::spawn(async move {
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = stopped.await;
            })
            .await
    });
    log::info!("listening on {addr}");
    Ok(RunningServer {
        addr,
        stop: Some(stop),
        handle,
    })
}

/// Serves until `signal` resolves.
pub async fn serve(config: ServiceConfig, signal: impl Future<Output = ()>) -> Result<(), ServiceError> {
    let server = start(config).await?;
    signal.await;
    server.shutdown().await
}
