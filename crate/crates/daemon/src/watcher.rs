//! Keeps the content store in step with the photo directory.

use std::path::{Path, PathBuf};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use notify::{RecommendedWatcher, RecursiveMode, Watcher};
use photoguard_core::classifier::PhotoClassifier;
use photoguard_core::store::StoreError;
use photoguard_core::{ContentStore, PhotoLibrary};

/// Applies one filesystem change to the store. Existing files are (re)added,
/// which only classifies when their bytes changed; missing paths are removed.
/// Returns whether the store changed.
pub fn apply_change(store: &ContentStore, clf: &dyn PhotoClassifier, path: &Path) -> bool {
    if path.is_file() {
        match store.add_photo(path, clf) {
            Ok(u) if u.classified => {
                log::info!("classified {} as {}", path.display(), u.record.category);
                true
            }
            Ok(_) | Err(StoreError::NotAPhoto(_)) => false,
            Err(e) => {
                log::warn!("{e}");
                // a record for bytes we can no longer classify is stale
                store.on_photo_removed(path).is_some()
            }
        }
    } else if path.is_dir() {
        // files created before the new directory's watch was in place send no events
        let Ok(lib) = PhotoLibrary::scan(path, store.extensions()) else { return false };
        lib.photos().iter().fold(false, |changed, p| apply_change(store, clf, p) | changed)
    } else if path.exists() {
        false
    } else if store.on_photo_removed(path).is_some() {
        true
    } else {
        let gone = store.on_directory_removed(path);
        if !gone.is_empty() {
            log::info!("dropped {} records under {}", gone.len(), path.display());
        }
        !gone.is_empty()
    }
}

pub struct DirectoryWatcher {
    watcher: Option<RecommendedWatcher>,
    worker: Option<JoinHandle<()>>,
}

impl DirectoryWatcher {
    /// Watches `root` recursively; changes are applied on a worker thread and
    /// the store is persisted to `store_path` after each burst of events.
    pub fn start(
        root: &Path,
        store: Arc<ContentStore>,
        clf: Arc<dyn PhotoClassifier>,
        store_path: Option<PathBuf>,
    ) -> notify::Result<Self> {
        let (tx, rx) = mpsc::channel::<notify::Result<notify::Event>>();
        let mut watcher = notify::recommended_watcher(tx)?;
        watcher.watch(root, RecursiveMode::Recursive)?;
        let worker = std::thread::Builder::new()
            .name("photo-watcher".into())
            .spawn(move || run(rx, &store, clf.as_ref(), store_path.as_deref()))
            .expect("spawn watcher thread");
        Ok(Self { watcher: Some(watcher), worker: Some(worker) })
    }
}

impl Drop for DirectoryWatcher {
    fn drop(&mut self) {
        // dropping the notify watcher closes the channel and ends the worker
        drop(self.watcher.take());
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

fn run(rx: mpsc::Receiver<notify::Result<notify::Event>>, store: &ContentStore, clf: &dyn PhotoClassifier, store_path: Option<&Path>) {
    while let Ok(first) = rx.recv() {
        let mut paths = Vec::new();
        let mut collect = |ev: notify::Result<notify::Event>| match ev {
            Ok(ev) if !ev.kind.is_access() => paths.extend(ev.paths),
            Ok(_) => {}
            Err(e) => log::warn!("watch error: {e}"),
        };
        collect(first);
        while let Ok(ev) = rx.recv_timeout(Duration::from_millis(50)) {
            collect(ev);
        }
        paths.sort();
        paths.dedup();
        let mut changed = false;
        for p in &paths {
            changed |= apply_change(store, clf, p);
        }
        // the store file may live under the watched root; only write on real changes
        if let Some(sp) = store_path.filter(|_| changed) {
            if let Err(e) = store.persist(sp) {
                log::error!("cannot persist store: {e}");
            }
        }
    }
}
