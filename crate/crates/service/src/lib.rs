//! HTTP consultation service.
//!
//! Sessions live in memory keyed by id and expire after an idle timeout.
//! Knowledge base changes go through [`SharedKb`], so with a backing file
//! each one is on disk before the response is sent.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::routing::{get, post};
use axum::Router;
use hepx_core::inference::Session;
use hepx_core::store::SharedKb;

mod error;
mod kb;
mod sessions;

pub use error::ApiError;
pub use sessions::{QuestionView, ResultView, SessionView};

/// Environment variable holding the default bind address.
pub const ADDR_ENV: &str = "HEPX_ADDR";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Clone)]
pub struct Config {
    pub idle_timeout: Duration,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            idle_timeout: Duration::from_secs(30 * 60),
        }
    }
}

pub(crate) struct Slot {
    pub session: Session,
    /// Number of answers applied so far.
    pub seq: u64,
    pub last_answer: Option<(String, String)>,
    /// Firing counts already credited to the knowledge base.
    pub recorded: bool,
    pub touched: Instant,
}

pub struct AppState {
    pub kb: SharedKb,
    config: Config,
    sessions: Mutex<HashMap<String, Arc<Mutex<Slot>>>>,
}

impl AppState {
    pub fn new(kb: SharedKb, config: Config) -> Arc<Self> {
        Arc::new(Self {
            kb,
            config,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    fn table(&self) -> MutexGuard<'_, HashMap<String, Arc<Mutex<Slot>>>> {
        self.sessions.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub(crate) fn insert(&self, id: String, slot: Slot) {
        self.expire_idle();
        self.table().insert(id, Arc::new(Mutex::new(slot)));
    }

    pub(crate) fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>, ApiError> {
        self.expire_idle();
        self.table().get(id).cloned().ok_or_else(|| ApiError::unknown_session(id))
    }

    /// Drops sessions idle longer than the timeout. Sessions busy with a
    /// request are kept.
    pub fn expire_idle(&self) {
        let timeout = self.config.idle_timeout;
        self.table().retain(|_, slot| match slot.try_lock() {
            Ok(s) => s.touched.elapsed() < timeout,
            Err(_) => true,
        });
    }

    pub fn session_count(&self) -> usize {
        self.table().len()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(sessions::create))
        .route("/sessions/{id}", get(sessions::show))
        .route("/sessions/{id}/answer", post(sessions::answer))
        .route("/sessions/{id}/explanation", get(sessions::explanation))
        .route("/sessions/{id}/discovery", post(sessions::propose))
        .route("/sessions/{id}/discovery/abort", post(sessions::abort))
        .route("/sessions/{id}/discovery/commit", post(sessions::commit))
        .route("/kb/rules", get(kb::rules))
        .route("/kb/rules/{id}", get(kb::rule))
        .route("/kb/cases", get(kb::cases))
        .route("/kb/audit", get(kb::audit))
        .route("/kb/experience-report", get(kb::experience_report))
        .route("/kb/induce", post(kb::induce))
        .route("/kb/generalize", post(kb::generalize))
        .with_state(state)
}

/// Serves until Ctrl-C.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            sweeper.expire_idle();
        }
    });
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
