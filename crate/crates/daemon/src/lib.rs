//! Photo access guard service: keeps a classification cache of a photo
//! directory, decides live access requests, queues user prompts and keeps
//! an audit trail. See [`Daemon::start`].

pub mod api;
pub mod audit;
pub mod bench;
pub mod config;
pub mod guard;
pub mod prompts;
pub mod watcher;

use std::future::Future;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use photoguard_core::classifier::PhotoClassifier;
use photoguard_core::store::StoreError;
use photoguard_core::{ContentStore, PhotoLibrary};
use serde::Serialize;
use thiserror::Error;

use crate::audit::{AuditError, AuditLog};
use crate::config::{ConfigError, DaemonConfig};
use crate::guard::Guard;
use crate::watcher::DirectoryWatcher;

pub use config::ClassifierChoice;

pub(crate) fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("library root {0} is not a readable directory")]
    MissingRoot(PathBuf),
    #[error("store {path}: {source}")]
    Store { path: PathBuf, source: StoreError },
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("cannot watch {path}: {source}")]
    Watch { path: PathBuf, source: notify::Error },
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct StartupReport {
    /// Records read from an existing store file.
    pub loaded: usize,
    pub classified: usize,
    pub reused: usize,
    pub removed: usize,
    pub skipped: Vec<(PathBuf, String)>,
}

pub struct Daemon {
    pub config: DaemonConfig,
    pub guard: Arc<Guard>,
    pub startup: StartupReport,
    watcher: Option<DirectoryWatcher>,
}

impl Daemon {
    /// Builds the classifier named in `config` and starts.
    pub fn start(config: DaemonConfig) -> Result<Self, StartupError> {
        let clf = config.classifier.build().map_err(ConfigError::from)?;
        Self::start_with(config, clf)
    }

    /// Loads or builds the store, brings it up to date with the library and
    /// starts watching the library for changes.
    pub fn start_with(config: DaemonConfig, clf: Arc<dyn PhotoClassifier>) -> Result<Self, StartupError> {
        config.validate()?;
        let timeout = config.prompt_timeout()?;
        if !config.library_root.is_dir() {
            return Err(StartupError::MissingRoot(config.library_root.clone()));
        }
        let store_err = |source| StartupError::Store { path: config.store_path.clone(), source };
        let store = if config.store_path.exists() {
            ContentStore::load(&config.store_path, config.extensions.clone()).map_err(store_err)?
        } else {
            ContentStore::new(config.extensions.clone())
        };
        let loaded = store.len();
        let library = PhotoLibrary::scan(&config.library_root, &config.extensions).map_err(store_err)?;
        let scan = store.initialize_scan(&library, clf.as_ref());
        store.persist(&config.store_path).map_err(store_err)?;
        let startup = StartupReport {
            loaded,
            classified: scan.classified,
            reused: scan.reused,
            removed: scan.removed.len(),
            skipped: scan.skipped,
        };
        log::info!(
            "store ready: {} photos ({} loaded, {} classified, {} reused, {} removed, {} skipped)",
            store.len(),
            startup.loaded,
            startup.classified,
            startup.reused,
            startup.removed,
            startup.skipped.len()
        );

        let store = Arc::new(store);
        let audit = match &config.audit_log {
            Some(path) => AuditLog::open(path)?,
            None => AuditLog::in_memory(),
        };
        let watcher = DirectoryWatcher::start(&config.library_root, Arc::clone(&store), Arc::clone(&clf), Some(config.store_path.clone()))
            .map_err(|source| StartupError::Watch { path: config.library_root.clone(), source })?;
        let guard = Guard::new(store, clf, config.whitelist.clone(), audit, timeout).with_library_root(config.library_root.clone());
        Ok(Self { config, guard: Arc::new(guard), startup, watcher: Some(watcher) })
    }

    pub fn router(&self) -> axum::Router {
        api::router(Arc::clone(&self.guard))
    }

    /// Serves the API on `listener` until `shutdown` resolves, then stops
    /// the watcher and persists the store.
    pub async fn serve(mut self, listener: tokio::net::TcpListener, shutdown: impl Future<Output = ()> + Send + 'static) -> std::io::Result<()> {
        axum::serve(listener, self.router()).with_graceful_shutdown(shutdown).await?;
        self.shutdown();
        Ok(())
    }

    pub fn shutdown(&mut self) {
        drop(self.watcher.take());
        if let Err(e) = self.guard.store().persist(&self.config.store_path) {
            log::error!("cannot persist store on shutdown: {e}");
        }
    }
}
