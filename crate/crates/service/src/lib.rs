//! HTTP service for the Python-to-R tutor: the JSON API under `/api`, a
//! file-backed session store, and static hosting of the client bundle at `/`.

pub mod api;
pub mod store;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::response::Html;
use axum::routing::get;
use axum::Router;
use thiserror::Error;
use tower_http::services::ServeDir;
use tutor_core::knowledge::{check_curriculum, RuleError, RuleSet};
use tutor_core::{load_pack, validate_pack, LessonPack, LoadError};

pub use store::{SessionStore, StoreError};

/// Shared, read-only data plus the store.
#[derive(Debug)]
pub struct AppState {
    pub packs: BTreeMap<String, Arc<LessonPack>>,
    pub rules: RuleSet,
    pub store: Arc<SessionStore>,
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error("{path}: {source}")]
    Pack { path: String, source: LoadError },
    #[error("{path}: {count} validation problem(s), first: {first}")]
    InvalidPack {
        path: String,
        count: usize,
        first: String,
    },
    #[error("duplicate pack id `{0}`")]
    DuplicatePack(String),
    #[error("no lesson packs found")]
    NoPacks,
    #[error("rules: {0}")]
    Rules(#[from] RuleError),
    #[error("rules: {0}")]
    InvalidRules(String),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("server failed: {0}")]
    Serve(std::io::Error),
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub pack_paths: Vec<PathBuf>,
    pub rules_path: PathBuf,
    pub store_root: PathBuf,
    pub addr: SocketAddr,
    /// Built client bundle served at `/`; a placeholder page when absent.
    pub static_dir: Option<PathBuf>,
}

/// Pack files in `dir`: every `*.pack.json`, sorted by name.
pub fn pack_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with(".pack.json"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Loads and checks packs and rules and opens the store. Any problem is fatal.
pub fn build_state(config: &ServiceConfig) -> Result<AppState, StartupError> {
    let rules = RuleSet::load(&config.rules_path)?;
    let problems = rules.problems();
    if let Some(first) = problems.first() {
        return Err(StartupError::InvalidRules(first.clone()));
    }
    let mut packs = BTreeMap::new();
    for path in &config.pack_paths {
        let shown = path.display().to_string();
        let pack = load_pack(path).map_err(|source| StartupError::Pack {
            path: shown.clone(),
            source,
        })?;
        let mut report = validate_pack(&pack);
        report
            .violations
            .extend(check_curriculum(&pack, &rules).violations);
        if let Some(first) = report.violations.first() {
            return Err(StartupError::InvalidPack {
                path: shown,
                count: report.violations.len(),
                first: first.to_string(),
            });
        }
        if packs
            .insert(pack.id.clone(), Arc::new(pack.clone()))
            .is_some()
        {
            return Err(StartupError::DuplicatePack(pack.id));
        }
    }
    if packs.is_empty() {
        return Err(StartupError::NoPacks);
    }
    Ok(AppState {
        packs,
        rules,
        store: Arc::new(SessionStore::open(&config.store_root)?),
    })
}

const PLACEHOLDER: &str = "<!doctype html>\n<title>Python-to-R tutor</title>\n<p>The tutor API is running under <code>/api</code>. \
Start the server with <code>--static &lt;dir&gt;</code> to serve the client bundle here.</p>\n";

pub fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let app = Router::new().nest("/api", api::routes());
    let app = match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(PLACEHOLDER) })),
    };
    app.with_state(Arc::new(state))
}

/// Runs until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), StartupError> {
    let state = build_state(&config)?;
    let app = router(state, config.static_dir.as_deref());
    let listener = tokio::net::TcpListener::bind(config.addr)
        .await
        .map_err(|source| StartupError::Bind {
            addr: config.addr,
            source,
        })?;
    let local = listener.local_addr().map_err(StartupError::Serve)?;
    eprintln!("tutor listening on http://{local}");
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(StartupError::Serve)
}
