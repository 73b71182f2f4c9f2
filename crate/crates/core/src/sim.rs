//! Deterministic replay of access scenarios.
//!
//! A scenario is a line-oriented script of state changes, photo additions
//! and access attempts. Running it against a content store and classifier
//! yields a [`SimTrace`] with one entry per directive, stamped with a
//! logical clock so identical inputs give byte-identical traces.
//!
//! ```text
//! # comment
//! SET_SYSTEM locked|unlocked
//! SET_APP <id> foreground|background
//! WHITELIST <id>
//! ADD_PHOTO <path> [<category-label>]
//! ACCESS <id> <path>
//! USER_DECISION allow|deny|timeout
//! EXPECT allow|deny|prompt <reason>
//! ```
//!
//! Relative paths resolve against the scenario's base directory. A category
//! on `ADD_PHOTO` declares the photo's content without classifying it.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::category::ContentCategory;
use crate::classifier::PhotoClassifier;
use crate::policy::{
    decide_assessed, decision_table, requires_control, resolve_prompt, AccessRequest, AppRunState, ContentAssessment,
    PolicyDecision, Reason, SystemStatus, UserChoice, Verdict, Whitelist, TABLE_APP, TABLE_WHITELISTED_APP,
};
use crate::store::{ContentStore, StoreError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: USER_DECISION without a pending prompt")]
    NoPendingPrompt { line: usize },
    #[error("line {line}: fixture {path}: {source}")]
    Fixture {
        line: usize,
        path: PathBuf,
        #[source]
        source: StoreError,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioEvent {
    SetSystem(SystemStatus),
    SetApp { app_id: String, state: AppRunState },
    Whitelist(String),
    AddPhoto { path: String, category: Option<ContentCategory> },
    Access { app_id: String, path: String },
    UserDecision(UserChoice),
    Expect { verdict: Verdict, reason: Reason },
}

impl fmt::Display for ScenarioEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SetSystem(s) => write!(f, "SET_SYSTEM {s}"),
            Self::SetApp { app_id, state } => write!(f, "SET_APP {app_id} {state}"),
            Self::Whitelist(a) => write!(f, "WHITELIST {a}"),
            Self::AddPhoto { path, category: Some(c) } => write!(f, "ADD_PHOTO {path} {c}"),
            Self::AddPhoto { path, category: None } => write!(f, "ADD_PHOTO {path}"),
            Self::Access { app_id, path } => write!(f, "ACCESS {app_id} {path}"),
            Self::UserDecision(c) => write!(f, "USER_DECISION {c}"),
            Self::Expect { verdict, reason } => write!(f, "EXPECT {verdict} {reason}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ScenarioScript {
    /// `(line number, event)` in file order.
    pub events: Vec<(usize, ScenarioEvent)>,
}

impl ScenarioScript {
    pub fn to_text(&self) -> String {
        self.events.iter().map(|(_, e)| format!("{e}\n")).collect()
    }
}

fn parse_line(line: usize, text: &str) -> Result<ScenarioEvent, SimError> {
    let err = |message: String| SimError::Parse { line, message };
    let words: Vec<&str> = text.split_whitespace().collect();
    let arity = |n: usize| -> Result<(), SimError> {
        if words.len() == n + 1 {
            Ok(())
        } else {
            Err(err(format!("{} takes {n} argument(s), got {}", words[0], words.len() - 1)))
        }
    };
    fn parsed<T>(line: usize, r: Result<T, crate::policy::PolicyError>) -> Result<T, SimError> {
        r.map_err(|e| SimError::Parse { line, message: e.to_string() })
    }
    Ok(match words[0] {
        "SET_SYSTEM" => {
            arity(1)?;
            ScenarioEvent::SetSystem(parsed(line, words[1].parse())?)
        }
        "SET_APP" => {
            arity(2)?;
            ScenarioEvent::SetApp { app_id: words[1].into(), state: parsed(line, words[2].parse())? }
        }
        "WHITELIST" => {
            arity(1)?;
            ScenarioEvent::Whitelist(words[1].into())
        }
        "ADD_PHOTO" => {
            let category = match words.len() {
                2 => None,
                3 => Some(words[2].parse().map_err(|e: crate::category::CategoryError| err(e.to_string()))?),
                n => return Err(err(format!("ADD_PHOTO takes 1 or 2 arguments, got {}", n - 1))),
            };
            ScenarioEvent::AddPhoto { path: words[1].into(), category }
        }
        "ACCESS" => {
            arity(2)?;
            ScenarioEvent::Access { app_id: words[1].into(), path: words[2].into() }
        }
        "USER_DECISION" => {
            arity(1)?;
            ScenarioEvent::UserDecision(parsed(line, words[1].parse())?)
        }
        "EXPECT" => {
            arity(2)?;
            let verdict = parsed(line, words[1].parse())?;
            let reason = parsed(line, words[2].parse())?;
            PolicyDecision::new(verdict, reason).map_err(|e| err(e.to_string()))?;
            ScenarioEvent::Expect { verdict, reason }
        }
        other => return Err(err(format!("unknown directive {other:?}"))),
    })
}

pub fn parse_scenario(text: &str) -> Result<ScenarioScript, SimError> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        events.push((i + 1, parse_line(i + 1, line)?));
    }
    Ok(ScenarioScript { events })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    State(String),
    Decision(PolicyDecision),
    ExpectPassed,
    ExpectFailed { expected: PolicyDecision, actual: Option<PolicyDecision> },
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::State(s) => f.write_str(s),
            Self::Decision(d) => write!(f, "{d}"),
            Self::ExpectPassed => f.write_str("ok"),
            Self::ExpectFailed { expected, actual: Some(a) } => write!(f, "MISMATCH expected {expected}, got {a}"),
            Self::ExpectFailed { expected, actual: None } => write!(f, "MISMATCH expected {expected}, no access yet"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    /// Logical clock: the entry's position, starting at 1.
    pub time: u64,
    pub line: usize,
    pub event: ScenarioEvent,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimTrace {
    pub entries: Vec<TraceEntry>,
}

impl SimTrace {
    pub fn mismatches(&self) -> impl Iterator<Item = &TraceEntry> {
        self.entries.iter().filter(|e| matches!(e.outcome, Outcome::ExpectFailed { .. }))
    }

    pub fn passed(&self) -> bool {
        self.mismatches().next().is_none()
    }

    /// Line of the first failed expectation.
    pub fn failed_at(&self) -> Option<usize> {
        self.mismatches().next().map(|e| e.line)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{:04} L{:<4} {:<40} => {}", e.time, e.line, e.event.to_string(), e.outcome);
        }
        out
    }
}

struct Simulator<'a> {
    store: &'a ContentStore,
    clf: &'a dyn PhotoClassifier,
    base: &'a Path,
    system: SystemStatus,
    apps: HashMap<String, AppRunState>,
    whitelist: Whitelist,
    declared: HashMap<PathBuf, ContentCategory>,
    pending: Option<PolicyDecision>,
    last: Option<PolicyDecision>,
}

impl Simulator<'_> {
    fn resolve(&self, path: &str) -> PathBuf {
        self.base.join(path)
    }

    fn assess(&self, path: &Path) -> ContentAssessment {
        if let Some(c) = self.declared.get(path) {
            return ContentAssessment::Known(*c);
        }
        match self.store.lookup_or_classify(path, self.clf) {
            Ok(r) => ContentAssessment::Known(r.category),
            Err(_) => ContentAssessment::Unverified,
        }
    }

    fn step(&mut self, line: usize, time: u64, event: &ScenarioEvent) -> Result<Outcome, SimError> {
        Ok(match event {
            ScenarioEvent::SetSystem(s) => {
                self.system = *s;
                Outcome::State(format!("system={s}"))
            }
            ScenarioEvent::SetApp { app_id, state } => {
                self.apps.insert(app_id.clone(), *state);
                Outcome::State(format!("{app_id}={state}"))
            }
            ScenarioEvent::Whitelist(app) => {
                self.whitelist.insert(app.clone());
                Outcome::State(format!("whitelisted {app}"))
            }
            ScenarioEvent::AddPhoto { path, category } => {
                let resolved = self.resolve(path);
                match category {
                    Some(c) => {
                        self.declared.insert(resolved, *c);
                        Outcome::State(format!("declared {c}"))
                    }
                    None => match self.store.on_photo_added(&resolved, self.clf) {
                        Ok(r) => {
                            self.declared.remove(&resolved);
                            Outcome::State(format!("classified {}", r.category))
                        }
                        Err(e @ StoreError::Classify { .. }) => Outcome::State(format!("classification failed: {e}")),
                        Err(source) => return Err(SimError::Fixture { line, path: resolved, source }),
                    },
                }
            }
            ScenarioEvent::Access { app_id, path } => {
                let resolved = self.resolve(path);
                let decision = if !requires_control(&resolved, self.store.extensions()) {
                    PolicyDecision::NOT_A_PHOTO
                } else {
                    let req = AccessRequest::new(app_id.clone(), resolved.to_string_lossy(), time)
                        .map_err(|e| SimError::Parse { line, message: e.to_string() })?;
                    let app = self.apps.get(app_id).copied().unwrap_or(AppRunState::Background);
                    decide_assessed(&req, self.system, app, self.assess(&resolved), &self.whitelist)
                };
                self.pending = decision.is_prompt().then_some(decision);
                self.last = Some(decision);
                Outcome::Decision(decision)
            }
            ScenarioEvent::UserDecision(choice) => {
                let pending = self.pending.take().ok_or(SimError::NoPendingPrompt { line })?;
                let decision = resolve_prompt(pending, *choice).expect("pending decision is a prompt");
                self.last = Some(decision);
                Outcome::Decision(decision)
            }
            ScenarioEvent::Expect { verdict, reason } => {
                let expected = PolicyDecision::new(*verdict, *reason).expect("validated at parse time");
                if self.last == Some(expected) {
                    Outcome::ExpectPassed
                } else {
                    Outcome::ExpectFailed { expected, actual: self.last }
                }
            }
        })
    }
}

/// Replays `script` in order. Unset system state starts `Locked` and
/// unknown apps count as `Background`, so an incomplete script fails closed.
pub fn run_scenario(
    script: &ScenarioScript,
    store: &ContentStore,
    clf: &dyn PhotoClassifier,
    base_dir: &Path,
) -> Result<SimTrace, SimError> {
    let mut sim = Simulator {
        store,
        clf,
        base: base_dir,
        system: SystemStatus::Locked,
        apps: HashMap::new(),
        whitelist: Whitelist::new(),
        declared: HashMap::new(),
        pending: None,
        last: None,
    };
    let mut trace = SimTrace::default();
    for (i, (line, event)) in script.events.iter().enumerate() {
        let time = i as u64 + 1;
        let outcome = sim.step(*line, time, event)?;
        trace.entries.push(TraceEntry { time, line: *line, event: event.clone(), outcome });
    }
    Ok(trace)
}

/// Scenario exercising every row of [`decision_table`], with an `EXPECT`
/// after each access. Prompted rows are answered with `deny`.
pub fn decision_table_scenario() -> String {
    let mut out = String::from("# every lock x run-state x category x whitelist combination\n");
    for c in ContentCategory::ALL {
        let _ = writeln!(out, "ADD_PHOTO /table/{0}.jpg {0}", c.label());
    }
    let _ = writeln!(out, "WHITELIST {TABLE_WHITELISTED_APP}");
    for (inputs, decision) in decision_table() {
        let app = if inputs.whitelisted { TABLE_WHITELISTED_APP } else { TABLE_APP };
        let _ = writeln!(out, "SET_SYSTEM {}", inputs.system);
        let _ = writeln!(out, "SET_APP {app} {}", inputs.app_state);
        let _ = writeln!(out, "ACCESS {app} /table/{}.jpg", inputs.category.label());
        let _ = writeln!(out, "EXPECT {} {}", decision.verdict(), decision.reason());
        if decision.is_prompt() {
            out.push_str("USER_DECISION deny\nEXPECT deny user_denied\n");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::StubClassifier;

    fn run(text: &str) -> SimTrace {
        let store = ContentStore::default();
        let clf = StubClassifier::new();
        run_scenario(&parse_scenario(text).unwrap(), &store, &clf, Path::new("/")).unwrap()
    }

    #[test]
    fn parses_directives() {
        let s = parse_scenario("SET_SYSTEM locked\n\n# c\nACCESS gallery /p/a.jpg\nEXPECT deny screen_locked  # trailing\n").unwrap();
        assert_eq!(
            s.events,
            vec![
                (1, ScenarioEvent::SetSystem(SystemStatus::Locked)),
                (4, ScenarioEvent::Access { app_id: "gallery".into(), path: "/p/a.jpg".into() }),
                (5, ScenarioEvent::Expect { verdict: Verdict::Deny, reason: Reason::ScreenLocked }),
            ]
        );
    }

    #[test]
    fn parse_errors_carry_line() {
        for (text, line) in [
            ("SET_SYSTEM sideways", 1),
            ("SET_SYSTEM locked\nFLY away", 2),
            ("\n\nACCESS onlyone", 3),
            ("EXPECT allow screen_locked", 1),
            ("ADD_PHOTO a.jpg selfie", 1),
            ("ADD_PHOTO", 1),
        ] {
            match parse_scenario(text) {
                Err(SimError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn locked_access_denied() {
        let t = run("ADD_PHOTO /p/a.jpg photo_id\nSET_SYSTEM locked\nACCESS a /p/a.jpg\nEXPECT deny screen_locked\n");
        assert!(t.passed(), "{}", t.render());
    }

    #[test]
    fn public_foreground_allowed() {
        let t = run("ADD_PHOTO /p/pub.jpg public\nSET_SYSTEM unlocked\nSET_APP a foreground\nACCESS a /p/pub.jpg\nEXPECT allow public_content\n");
        assert!(t.passed(), "{}", t.render());
    }

    #[test]
    fn private_prompt_then_user_allows() {
        let t = run(
            "ADD_PHOTO /p/id.jpg photo_id\nSET_SYSTEM unlocked\nSET_APP a foreground\nACCESS a /p/id.jpg\n\
             EXPECT prompt private_content\nUSER_DECISION allow\nEXPECT allow user_allowed\n",
        );
        assert!(t.passed(), "{}", t.render());
    }

    #[test]
    fn mismatch_marks_line() {
        let t = run("SET_SYSTEM locked\nACCESS a /p/a.jpg\nEXPECT allow public_content\nEXPECT deny screen_locked\n");
        assert!(!t.passed());
        assert_eq!(t.failed_at(), Some(3));
    }

    #[test]
    fn user_decision_requires_pending_prompt() {
        let store = ContentStore::default();
        let clf = StubClassifier::new();
        let s = parse_scenario("SET_SYSTEM locked\nACCESS a /p/a.jpg\nUSER_DECISION allow\n").unwrap();
        assert!(matches!(run_scenario(&s, &store, &clf, Path::new("/")), Err(SimError::NoPendingPrompt { line: 3 })));
    }

    #[test]
    fn unclassifiable_photo_prompts() {
        // stub has no entry and the file does not exist: content unverified
        let t = run("SET_SYSTEM unlocked\nSET_APP a foreground\nACCESS a /nowhere/x.jpg\nEXPECT prompt private_content\n");
        assert!(t.passed(), "{}", t.render());
    }

    #[test]
    fn non_photo_bypasses() {
        let t = run("SET_SYSTEM locked\nACCESS a /music/song.mp3\nEXPECT allow not_a_photo\n");
        assert!(t.passed());
    }

    #[test]
    fn table_scenario_passes() {
        let text = decision_table_scenario();
        let t = run(&text);
        assert!(t.passed(), "{}", t.render());
        assert_eq!(t.entries.iter().filter(|e| matches!(e.event, ScenarioEvent::Access { .. })).count(), 40);
    }

    #[test]
    fn script_text_round_trip() {
        let s = parse_scenario(&decision_table_scenario()).unwrap();
        let again = parse_scenario(&s.to_text()).unwrap();
        let strip = |s: &ScenarioScript| s.events.iter().map(|(_, e)| e.clone()).collect::<Vec<_>>();
        assert_eq!(strip(&s), strip(&again));
    }
}
