//! Access decision workflow.
//!
//! A request is checked in a fixed order: whitelist, lock screen, app run
//! state, then content. Only foreground access to private content by a
//! non-whitelisted app reaches the human prompt. Everything here is pure.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::category::ContentCategory;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("access request has an empty app id")]
    EmptyAppId,
    #[error("access request has an empty photo path")]
    EmptyPath,
    #[error("only a prompt-required decision can be resolved, got {0}")]
    NotPending(PolicyDecision),
    #[error("invalid decision: {verdict} with reason {reason}")]
    InvalidDecision { verdict: Verdict, reason: Reason },
    #[error("unrecognized {kind} {value:?}")]
    Unrecognized { kind: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemStatus {
    Locked,
    Unlocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppRunState {
    Foreground,
    Background,
}

macro_rules! keyword_enum {
    ($ty:ident, $kind:literal, { $($variant:ident => $kw:literal),+ $(,)? }) => {
        impl $ty {
            pub fn keyword(self) -> &'static str {
                match self { $(Self::$variant => $kw),+ }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.keyword())
            }
        }

        impl FromStr for $ty {
            type Err = PolicyError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($kw => Ok(Self::$variant),)+
                    _ => Err(PolicyError::Unrecognized { kind: $kind, value: s.to_string() }),
                }
            }
        }
    };
}

keyword_enum!(SystemStatus, "system status", { Locked => "locked", Unlocked => "unlocked" });
keyword_enum!(AppRunState, "app state", { Foreground => "foreground", Background => "background" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Allow,
    Deny,
    #[serde(rename = "prompt")]
    PromptRequired,
}

keyword_enum!(Verdict, "verdict", { Allow => "allow", Deny => "deny", PromptRequired => "prompt" });

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Whitelisted,
    PublicContent,
    ScreenLocked,
    AppInBackground,
    PrivateContent,
    UserAllowed,
    UserDenied,
    PromptTimeout,
    NotAPhoto,
}

keyword_enum!(Reason, "reason", {
    Whitelisted => "whitelisted",
    PublicContent => "public_content",
    ScreenLocked => "screen_locked",
    AppInBackground => "app_in_background",
    PrivateContent => "private_content",
    UserAllowed => "user_allowed",
    UserDenied => "user_denied",
    PromptTimeout => "prompt_timeout",
    NotAPhoto => "not_a_photo",
});

/// The human answer to a pending prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UserChoice {
    Allow,
    Deny,
    Timeout,
}

keyword_enum!(UserChoice, "user choice", { Allow => "allow", Deny => "deny", Timeout => "timeout" });

/// Verdict plus the reason that produced it. Only the combinations the
/// workflow can produce are constructible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDecision")]
pub struct PolicyDecision {
    verdict: Verdict,
    reason: Reason,
}

#[derive(Deserialize)]
struct RawDecision {
    verdict: Verdict,
    reason: Reason,
}

impl TryFrom<RawDecision> for PolicyDecision {
    type Error = PolicyError;

    fn try_from(raw: RawDecision) -> Result<Self, Self::Error> {
        PolicyDecision::new(raw.verdict, raw.reason)
    }
}

impl PolicyDecision {
    pub fn new(verdict: Verdict, reason: Reason) -> Result<Self, PolicyError> {
        use Reason::*;
        let valid = match verdict {
            Verdict::Allow => matches!(reason, Whitelisted | PublicContent | UserAllowed | NotAPhoto),
            Verdict::Deny => matches!(reason, ScreenLocked | AppInBackground | UserDenied | PromptTimeout),
            Verdict::PromptRequired => reason == PrivateContent,
        };
        if valid {
            Ok(Self { verdict, reason })
        } else {
            Err(PolicyError::InvalidDecision { verdict, reason })
        }
    }

    const fn allow(reason: Reason) -> Self {
        Self { verdict: Verdict::Allow, reason }
    }

    const fn deny(reason: Reason) -> Self {
        Self { verdict: Verdict::Deny, reason }
    }

    pub const NOT_A_PHOTO: Self = Self::allow(Reason::NotAPhoto);
    pub const PROMPT: Self = Self { verdict: Verdict::PromptRequired, reason: Reason::PrivateContent };

    pub fn verdict(&self) -> Verdict {
        self.verdict
    }

    pub fn reason(&self) -> Reason {
        self.reason
    }

    pub fn is_allow(&self) -> bool {
        self.verdict == Verdict::Allow
    }

    pub fn is_prompt(&self) -> bool {
        self.verdict == Verdict::PromptRequired
    }
}

impl fmt::Display for PolicyDecision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.verdict, self.reason)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccessRequest {
    app_id: String,
    photo_path: String,
    timestamp: u64,
}

impl AccessRequest {
    pub fn new(
        app_id: impl Into<String>,
        photo_path: impl Into<String>,
        timestamp: u64,
    ) -> Result<Self, PolicyError> {
        let app_id = app_id.into();
        let photo_path = photo_path.into();
        if app_id.is_empty() {
            return Err(PolicyError::EmptyAppId);
        }
        if photo_path.is_empty() {
            return Err(PolicyError::EmptyPath);
        }
        Ok(Self { app_id, photo_path, timestamp })
    }

    pub fn app_id(&self) -> &str {
        &self.app_id
    }

    pub fn photo_path(&self) -> &str {
        &self.photo_path
    }

    /// Milliseconds since the Unix epoch (or a logical counter in replay).
    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }
}

/// Apps that bypass the whole pipeline, lock screen included.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Whitelist {
    entries: BTreeSet<String>,
}

impl Whitelist {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if the app was already present.
    pub fn insert(&mut self, app_id: impl Into<String>) -> bool {
        self.entries.insert(app_id.into())
    }

    pub fn remove(&mut self, app_id: &str) -> bool {
        self.entries.remove(app_id)
    }

    pub fn contains(&self, app_id: &str) -> bool {
        self.entries.contains(app_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<S: Into<String>> FromIterator<S> for Whitelist {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self { entries: iter.into_iter().map(Into::into).collect() }
    }
}

/// Lower-cased file extensions that mark a file as a photo.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct ExtensionSet {
    exts: BTreeSet<String>,
}

impl ExtensionSet {
    pub const DEFAULT: [&'static str; 7] = ["jpg", "jpeg", "png", "gif", "bmp", "webp", "heic"];

    pub fn new<I, S>(exts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            exts: exts
                .into_iter()
                .map(|e| e.as_ref().trim_start_matches('.').to_ascii_lowercase())
                .collect(),
        }
    }

    pub fn contains(&self, ext: &str) -> bool {
        self.exts.contains(&ext.to_ascii_lowercase())
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.exts.iter().map(String::as_str)
    }
}

impl Default for ExtensionSet {
    fn default() -> Self {
        Self::new(Self::DEFAULT)
    }
}

impl From<Vec<String>> for ExtensionSet {
    fn from(v: Vec<String>) -> Self {
        Self::new(v)
    }
}

impl From<ExtensionSet> for Vec<String> {
    fn from(s: ExtensionSet) -> Self {
        s.exts.into_iter().collect()
    }
}

/// True iff the final extension of `photo_path` is a controlled photo type.
/// Anything else bypasses the policy with Allow/NotAPhoto.
pub fn requires_control(photo_path: impl AsRef<Path>, extensions: &ExtensionSet) -> bool {
    photo_path
        .as_ref()
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| extensions.contains(e))
}

/// What the content store knows about a photo at decision time.
///
/// `Unverified` means classification failed; it is treated as private so
/// the request falls through to the prompt instead of being granted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContentAssessment {
    Known(ContentCategory),
    Unverified,
}

impl ContentAssessment {
    pub fn is_private(self) -> bool {
        match self {
            Self::Known(c) => c.is_private(),
            Self::Unverified => true,
        }
    }

    pub fn category(self) -> Option<ContentCategory> {
        match self {
            Self::Known(c) => Some(c),
            Self::Unverified => None,
        }
    }
}

impl From<ContentCategory> for ContentAssessment {
    fn from(c: ContentCategory) -> Self {
        Self::Known(c)
    }
}

pub fn decide(
    req: &AccessRequest,
    sys: SystemStatus,
    app: AppRunState,
    category: ContentCategory,
    wl: &Whitelist,
) -> PolicyDecision {
    decide_assessed(req, sys, app, category.into(), wl)
}

/// Same workflow as [`decide`], for content that may have failed
/// classification.
pub fn decide_assessed(
    req: &AccessRequest,
    sys: SystemStatus,
    app: AppRunState,
    content: ContentAssessment,
    wl: &Whitelist,
) -> PolicyDecision {
    if wl.contains(req.app_id()) {
        return PolicyDecision::allow(Reason::Whitelisted);
    }
    if sys == SystemStatus::Locked {
        return PolicyDecision::deny(Reason::ScreenLocked);
    }
    if app == AppRunState::Background {
        return PolicyDecision::deny(Reason::AppInBackground);
    }
    if !content.is_private() {
        return PolicyDecision::allow(Reason::PublicContent);
    }
    PolicyDecision::PROMPT
}

/// Turns a pending prompt into a final decision. A timeout denies.
pub fn resolve_prompt(pending: PolicyDecision, choice: UserChoice) -> Result<PolicyDecision, PolicyError> {
    if !pending.is_prompt() {
        return Err(PolicyError::NotPending(pending));
    }
    Ok(match choice {
        UserChoice::Allow => PolicyDecision::allow(Reason::UserAllowed),
        UserChoice::Deny => PolicyDecision::deny(Reason::UserDenied),
        UserChoice::Timeout => PolicyDecision::deny(Reason::PromptTimeout),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DecisionInputs {
    pub system: SystemStatus,
    pub app_state: AppRunState,
    pub category: ContentCategory,
    pub whitelisted: bool,
}

/// App ids used when materializing table rows as requests.
pub const TABLE_APP: &str = "app";
pub const TABLE_WHITELISTED_APP: &str = "whitelisted-app";

/// Every combination of lock state, run state, category and whitelist
/// membership (2 x 2 x 5 x 2 = 40 rows) with its decision.
pub fn decision_table() -> Vec<(DecisionInputs, PolicyDecision)> {
    let wl: Whitelist = [TABLE_WHITELISTED_APP].into_iter().collect();
    let mut rows = Vec::with_capacity(40);
    for whitelisted in [false, true] {
        let app_id = if whitelisted { TABLE_WHITELISTED_APP } else { TABLE_APP };
        let req = AccessRequest::new(app_id, "table.jpg", 0).expect("valid table request");
        for system in [SystemStatus::Locked, SystemStatus::Unlocked] {
            for app_state in [AppRunState::Foreground, AppRunState::Background] {
                for category in ContentCategory::ALL {
                    let inputs = DecisionInputs { system, app_state, category, whitelisted };
                    rows.push((inputs, decide(&req, system, app_state, category, &wl)));
                }
            }
        }
    }
    rows
}
