//! Live access decisions: classification lookup, policy, prompting and audit.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use parking_lot::RwLock;
use photoguard_core::classifier::PhotoClassifier;
use photoguard_core::{
    decide_assessed, requires_control, AccessRequest, AppRunState, ContentAssessment, ContentStore, PolicyDecision,
    SystemStatus, UserChoice, Whitelist,
};
use photoguard_core::policy::PolicyError;
use serde::{Deserialize, Serialize};

use crate::audit::{AuditEntry, AuditLog, AuditRecord};
use crate::prompts::{AnswerError, LateAnswer, PendingPrompt, PromptQueue};

/// One access attempt, with the device state declared by the caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessQuery {
    pub app_id: String,
    pub path: String,
    pub system: SystemStatus,
    pub app_state: AppRunState,
}

#[derive(Debug, Clone, Serialize)]
pub struct Status {
    pub status: &'static str,
    pub classifier: String,
    pub photos: usize,
    pub pending_prompts: usize,
    pub audit_entries: usize,
    pub late_answers: usize,
    pub whitelisted_apps: usize,
    pub prompt_timeout_ms: u64,
}

pub struct Guard {
    store: Arc<ContentStore>,
    classifier: Arc<dyn PhotoClassifier>,
    whitelist: RwLock<Whitelist>,
    prompts: PromptQueue,
    audit: AuditLog,
    prompt_timeout: Duration,
    library_root: Option<PathBuf>,
}

impl Guard {
    pub fn new(
        store: Arc<ContentStore>,
        classifier: Arc<dyn PhotoClassifier>,
        whitelist: Whitelist,
        audit: AuditLog,
        prompt_timeout: Duration,
    ) -> Self {
        Self {
            store,
            classifier,
            whitelist: RwLock::new(whitelist),
            prompts: PromptQueue::new(),
            audit,
            prompt_timeout,
            library_root: None,
        }
    }

    /// Relative request paths are resolved against `root`.
    pub fn with_library_root(mut self, root: impl Into<PathBuf>) -> Self {
        self.library_root = Some(root.into());
        self
    }

    pub fn store(&self) -> &Arc<ContentStore> {
        &self.store
    }

    pub fn classifier(&self) -> &Arc<dyn PhotoClassifier> {
        &self.classifier
    }

    pub fn audit(&self) -> &AuditLog {
        &self.audit
    }

    pub fn prompts(&self) -> &PromptQueue {
        &self.prompts
    }

    fn resolve(&self, path: &str) -> PathBuf {
        match &self.library_root {
            Some(root) if Path::new(path).is_relative() => root.join(path),
            _ => PathBuf::from(path),
        }
    }

    async fn assess(&self, path: &Path, whitelisted: bool) -> ContentAssessment {
        if whitelisted {
            // the category cannot change the outcome, so skip classification
            return match photoguard_core::store::photo_id_for(path).ok().and_then(|id| self.store.lookup(&id)) {
                Some(r) => ContentAssessment::Known(r.category),
                None => ContentAssessment::Unverified,
            };
        }
        let store = Arc::clone(&self.store);
        let clf = Arc::clone(&self.classifier);
        let owned = path.to_path_buf();
        let result = tokio::task::spawn_blocking(move || store.lookup_or_classify(&owned, clf.as_ref())).await;
        match result {
            Ok(Ok(r)) => ContentAssessment::Known(r.category),
            Ok(Err(e)) => {
                log::warn!("cannot classify {}: {e}", path.display());
                ContentAssessment::Unverified
            }
            Err(e) => {
                log::error!("classification task failed for {}: {e}", path.display());
                ContentAssessment::Unverified
            }
        }
    }

    /// Decides one access, waiting for the user when a prompt is needed.
    /// Every successful call appends exactly one audit entry.
    ///
    /// Callers that may be cancelled (HTTP handlers) should run this on its
    /// own task so an abandoned request still gets its audit entry.
    pub async fn handle_access(&self, query: AccessQuery) -> Result<AuditEntry, PolicyError> {
        let path = self.resolve(&query.path);
        let request = AccessRequest::new(query.app_id.clone(), path.to_string_lossy(), crate::now_ms())?;

        let (assessment, mut decision) = if !requires_control(&path, self.store.extensions()) {
            (None, PolicyDecision::NOT_A_PHOTO)
        } else {
            let whitelisted = self.whitelist.read().contains(&query.app_id);
            let assessment = self.assess(&path, whitelisted).await;
            let wl = self.whitelist.read().clone();
            (Some(assessment), decide_assessed(&request, query.system, query.app_state, assessment, &wl))
        };

        let mut prompt_id = None;
        let mut latency = None;
        if decision.is_prompt() {
            let category = assessment.and_then(|a| a.category());
            let timeout_ms = self.prompt_timeout.as_millis().min(u64::MAX as u128) as u64;
            let mut ticket = self.prompts.open(request.clone(), category, crate::now_ms(), timeout_ms);
            let id = ticket.prompt.prompt_id;
            decision = match tokio::time::timeout(self.prompt_timeout, &mut ticket.answer).await {
                Ok(Ok(d)) => d,
                _ => match self.prompts.expire(id) {
                    Some(d) => d,
                    // answered between the timer firing and taking the lock
                    None => ticket.answer.try_recv().unwrap_or_else(|_| self.prompts.outcome(id).unwrap_or(timed_out())),
                },
            };
            prompt_id = Some(id);
            latency = Some(crate::now_ms().saturating_sub(ticket.prompt.created_at_ms));
        }

        let (entry, written) = self.audit.append(AuditRecord {
            app_id: query.app_id,
            photo_path: request.photo_path().to_string(),
            system: query.system,
            app_state: query.app_state,
            category: assessment.and_then(|a| a.category()),
            classifier_failed: matches!(assessment, Some(ContentAssessment::Unverified)),
            decision,
            prompt_id,
            prompt_latency_ms: latency,
        });
        if let Err(e) = written {
            log::error!("{e}");
        }
        Ok(entry)
    }

    pub fn answer(&self, prompt_id: u64, choice: UserChoice) -> Result<PolicyDecision, AnswerError> {
        self.prompts.answer(prompt_id, choice, crate::now_ms())
    }

    pub fn pending(&self) -> Vec<PendingPrompt> {
        self.prompts.pending()
    }

    /// File behind an open prompt; nothing is served for other photos.
    pub fn pending_photo(&self, prompt_id: u64) -> Option<PathBuf> {
        self.prompts.get(prompt_id).map(|p| PathBuf::from(p.request.photo_path()))
    }

    pub fn late_answers(&self) -> Vec<LateAnswer> {
        self.prompts.late_answers()
    }

    pub fn whitelist(&self) -> Whitelist {
        self.whitelist.read().clone()
    }

    pub fn update_whitelist(&self, add: &[String], remove: &[String]) -> Whitelist {
        let mut wl = self.whitelist.write();
        for app in add {
            wl.insert(app.clone());
        }
        for app in remove {
            wl.remove(app);
        }
        wl.clone()
    }

    pub fn status(&self) -> Status {
        Status {
            status: "ok",
            classifier: self.classifier.name(),
            photos: self.store.len(),
            pending_prompts: self.prompts.pending().len(),
            audit_entries: self.audit.len(),
            late_answers: self.prompts.late_answers().len(),
            whitelisted_apps: self.whitelist.read().len(),
            prompt_timeout_ms: self.prompt_timeout.as_millis() as u64,
        }
    }
}

fn timed_out() -> PolicyDecision {
    photoguard_core::resolve_prompt(PolicyDecision::PROMPT, UserChoice::Timeout).expect("PROMPT is a prompt")
}
