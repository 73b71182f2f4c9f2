//! Pending user prompts. Each prompt is answered at most once: by the user
//! through [`PromptQueue::answer`] or by the timeout through
//! [`PromptQueue::expire`], whichever takes the lock first.

use std::collections::{BTreeMap, HashMap};

use parking_lot::Mutex;
use photoguard_core::{resolve_prompt, AccessRequest, ContentCategory, PolicyDecision, UserChoice};
use serde::Serialize;
use thiserror::Error;
use tokio::sync::oneshot;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PendingPrompt {
    pub prompt_id: u64,
    pub request: AccessRequest,
    /// `None` when the classifier failed and the photo is treated as private.
    pub category: Option<ContentCategory>,
    pub alert_text: String,
    pub created_at_ms: u64,
    pub expires_at_ms: u64,
}

pub fn alert_text(category: Option<ContentCategory>) -> String {
    match category {
        Some(c) => format!("This photo contains: {}", c.display_name()),
        None => "This photo could not be checked and may contain private content".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnswerError {
    #[error("no prompt with id {0}")]
    Unknown(u64),
    #[error("prompt {prompt_id} was already resolved as {decision}")]
    AlreadyResolved { prompt_id: u64, decision: PolicyDecision },
}

/// An answer that arrived after the prompt was closed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LateAnswer {
    pub prompt_id: u64,
    pub choice: UserChoice,
    pub received_at_ms: u64,
    pub decision_kept: PolicyDecision,
}

struct Open {
    prompt: PendingPrompt,
    reply: oneshot::Sender<PolicyDecision>,
}

#[derive(Default)]
struct Inner {
    next_id: u64,
    open: BTreeMap<u64, Open>,
    closed: HashMap<u64, PolicyDecision>,
    late: Vec<LateAnswer>,
}

#[derive(Default)]
pub struct PromptQueue {
    inner: Mutex<Inner>,
}

pub struct Ticket {
    pub prompt: PendingPrompt,
    pub answer: oneshot::Receiver<PolicyDecision>,
}

impl PromptQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open(&self, request: AccessRequest, category: Option<ContentCategory>, now_ms: u64, timeout_ms: u64) -> Ticket {
        let mut inner = self.inner.lock();
        inner.next_id += 1;
        let prompt = PendingPrompt {
            prompt_id: inner.next_id,
            request,
            category,
            alert_text: alert_text(category),
            created_at_ms: now_ms,
            expires_at_ms: now_ms.saturating_add(timeout_ms),
        };
        let (reply, answer) = oneshot::channel();
        inner.open.insert(prompt.prompt_id, Open { prompt: prompt.clone(), reply });
        Ticket { prompt, answer }
    }

    /// Delivers the user's answer. The returned decision is final.
    pub fn answer(&self, prompt_id: u64, choice: UserChoice, now_ms: u64) -> Result<PolicyDecision, AnswerError> {
        let mut inner = self.inner.lock();
        if let Some(open) = inner.open.remove(&prompt_id) {
            let decision = resolve_prompt(PolicyDecision::PROMPT, choice).expect("PROMPT is a prompt");
            inner.closed.insert(prompt_id, decision);
            // the waiter may have gone away; the decision stands either way
            let _ = open.reply.send(decision);
            return Ok(decision);
        }
        match inner.closed.get(&prompt_id).copied() {
            Some(decision) => {
                inner.late.push(LateAnswer { prompt_id, choice, received_at_ms: now_ms, decision_kept: decision });
                Err(AnswerError::AlreadyResolved { prompt_id, decision })
            }
            None => Err(AnswerError::Unknown(prompt_id)),
        }
    }

    /// Closes the prompt as timed out. Returns `None` if it had already
    /// been answered; the answer is then waiting on the ticket.
    pub fn expire(&self, prompt_id: u64) -> Option<PolicyDecision> {
        let mut inner = self.inner.lock();
        inner.open.remove(&prompt_id)?;
        let decision = resolve_prompt(PolicyDecision::PROMPT, UserChoice::Timeout).expect("PROMPT is a prompt");
        inner.closed.insert(prompt_id, decision);
        Some(decision)
    }

    pub fn pending(&self) -> Vec<PendingPrompt> {
        self.inner.lock().open.values().map(|o| o.prompt.clone()).collect()
    }

    pub fn get(&self, prompt_id: u64) -> Option<PendingPrompt> {
        self.inner.lock().open.get(&prompt_id).map(|o| o.prompt.clone())
    }

    pub fn outcome(&self, prompt_id: u64) -> Option<PolicyDecision> {
        self.inner.lock().closed.get(&prompt_id).copied()
    }

    pub fn late_answers(&self) -> Vec<LateAnswer> {
        self.inner.lock().late.clone()
    }
}
