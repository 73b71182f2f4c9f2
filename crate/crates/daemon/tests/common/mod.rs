#![allow(dead_code)]

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use photoguard_core::classifier::{ClassifierError, FnClassifier, PhotoClassifier};
use photoguard_core::{ContentCategory, ContentStore, Whitelist};
use photoguard_daemon::audit::AuditLog;
use photoguard_daemon::guard::Guard;

/// Category from the file name up to its last underscore (`photo_id_7.jpg`
/// is photo_id). Files without a label prefix fail to classify.
pub fn prefix_classifier(calls: Arc<AtomicUsize>) -> Arc<dyn PhotoClassifier> {
    Arc::new(FnClassifier::new("prefix", move |path: &Path, _: &[u8]| {
        calls.fetch_add(1, Ordering::SeqCst);
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        name.rsplit_once('_').map_or("", |(label, _)| label).parse::<ContentCategory>().map_err(|e| ClassifierError::Other(e.to_string()))
    }))
}

pub fn write_photos(dir: &Path, names: &[&str]) {
    for n in names {
        std::fs::write(dir.join(n), n.as_bytes()).unwrap();
    }
}

pub fn guard(dir: &Path, timeout: Duration, calls: Arc<AtomicUsize>) -> Arc<Guard> {
    Arc::new(
        Guard::new(Arc::new(ContentStore::default()), prefix_classifier(calls), Whitelist::new(), AuditLog::in_memory(), timeout)
            .with_library_root(dir),
    )
}

/// Polls `f` every 10 ms until it returns `Some`, for at most `limit`.
pub async fn eventually<T>(limit: Duration, mut f: impl FnMut() -> Option<T>) -> Option<T> {
    let deadline = tokio::time::Instant::now() + limit;
    loop {
        if let Some(v) = f() {
            return Some(v);
        }
        if tokio::time::Instant::now() > deadline {
            return None;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

/// Result of [`fail_closed_run`].
pub struct ConcurrentRun {
    pub requests: usize,
    pub entries: Vec<photoguard_daemon::audit::AuditEntry>,
    /// Categories the library was generated with, keyed by photo path.
    pub truth: std::collections::HashMap<String, ContentCategory>,
}

/// Fires `n` concurrent access requests with random device states against
/// a library whose classifier errors on about a third of calls. A responder
/// answers some prompts and leaves the rest to time out.
pub async fn fail_closed_run(n: usize, seed: u64) -> ConcurrentRun {
    use photoguard_core::{AppRunState, SystemStatus, UserChoice};
    use photoguard_daemon::guard::AccessQuery;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth = std::collections::HashMap::new();
    let mut names = Vec::new();
    for i in 0..20 {
        let cat = ContentCategory::ALL[i % 5];
        let name = format!("{}_{i}.jpg", cat.label());
        std::fs::write(dir.path().join(&name), name.as_bytes()).unwrap();
        truth.insert(dir.path().canonicalize().unwrap().join(&name).to_string_lossy().into_owned(), cat);
        names.push(name);
    }
    let flaky_rng = Arc::new(parking_lot::Mutex::new(ChaCha8Rng::seed_from_u64(seed ^ 0x5eed)));
    let inner = prefix_classifier(Default::default());
    let flaky: Arc<dyn PhotoClassifier> = Arc::new(FnClassifier::new("flaky", move |path: &Path, bytes: &[u8]| {
        if flaky_rng.lock().gen_bool(0.35) {
            return Err(ClassifierError::Remote("injected failure".into()));
        }
        inner.classify(path, bytes).map(|c| c.category)
    }));
    // a store that never caches, so every request goes to the classifier
    let store = Arc::new(ContentStore::new(photoguard_core::ExtensionSet::default()));
    let whitelist: Whitelist = ["trusted"].into_iter().collect();
    let g = Arc::new(
        Guard::new(store, flaky, whitelist, AuditLog::in_memory(), Duration::from_millis(200)).with_library_root(dir.path()),
    );

    let stop = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let responder = {
        let g = Arc::clone(&g);
        let stop = Arc::clone(&stop);
        tokio::spawn(async move {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            let mut seen = std::collections::HashSet::new();
            while !stop.load(Ordering::SeqCst) {
                for p in g.pending().into_iter().filter(|p| seen.insert(p.prompt_id)) {
                    match rng.gen_range(0..3) {
                        0 => drop(g.answer(p.prompt_id, UserChoice::Allow)),
                        1 => drop(g.answer(p.prompt_id, UserChoice::Deny)),
                        _ => {}
                    }
                }
                tokio::time::sleep(Duration::from_millis(5)).await;
            }
        })
    };

    let mut tasks = Vec::new();
    for _ in 0..n {
        let query = AccessQuery {
            app_id: ["trusted", "gallery", "chat", "cloud"][rng.gen_range(0..4)].to_string(),
            path: if rng.gen_bool(0.1) { "notes.txt".into() } else { names[rng.gen_range(0..names.len())].clone() },
            system: if rng.gen_bool(0.5) { SystemStatus::Locked } else { SystemStatus::Unlocked },
            app_state: if rng.gen_bool(0.7) { AppRunState::Foreground } else { AppRunState::Background },
        };
        let worker = Arc::clone(&g);
        tasks.push(tokio::spawn(async move { worker.handle_access(query).await.unwrap() }));
        // clear the cache now and then so classification keeps happening
        if rng.gen_bool(0.3) {
            for r in g.store().records() {
                g.store().remove(&r.photo_id);
            }
        }
    }
    for t in tasks {
        t.await.unwrap();
    }
    stop.store(true, Ordering::SeqCst);
    responder.await.unwrap();
    let entries = g.audit().entries();
    drop(dir);
    ConcurrentRun { requests: n, entries, truth }
}

/// Entries that allow a private photo without whitelist or user consent.
pub fn fail_open_entries(run: &ConcurrentRun) -> Vec<&photoguard_daemon::audit::AuditEntry> {
    use photoguard_core::Reason;
    run.entries
        .iter()
        .filter(|e| {
            let private = run.truth.get(&e.photo_path).is_some_and(|c| c.is_private());
            private && e.decision.is_allow() && !matches!(e.decision.reason(), Reason::UserAllowed | Reason::Whitelisted)
        })
        .collect()
}
