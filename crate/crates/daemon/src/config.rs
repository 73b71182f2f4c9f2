//! Daemon configuration, read from TOML.
//!
//! ```toml
//! library_root = "photos"
//! store_path = "photoguard.store"
//! prompt_timeout_secs = 30
//! whitelist = ["com.example.backup"]
//! listen = "127.0.0.1:7878"
//! audit_log = "audit.jsonl"
//!
//! [classifier]
//! kind = "builtin"
//! model = "model.json"
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use photoguard_core::classifier::remote::RemoteClassifier;
use photoguard_core::classifier::{BuiltinClassifier, ClassifierError, PhotoClassifier, StubClassifier};
use photoguard_core::{ExtensionSet, Whitelist};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_PROMPT_TIMEOUT_SECS: f64 = 30.0;
pub const DEFAULT_LISTEN: &str = "127.0.0.1:7878";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("prompt_timeout_secs must be a positive number, got {0}")]
    BadTimeout(f64),
    #[error("cannot set up classifier: {0}")]
    Classifier(#[from] ClassifierError),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClassifierChoice {
    /// Trained softmax model saved as JSON.
    Builtin { model: PathBuf },
    /// `<label> <path>` table, for fixtures.
    Stub { table: PathBuf },
    /// Out-of-process classifier speaking the line protocol.
    Remote { address: String, timeout_secs: Option<f64> },
}

impl ClassifierChoice {
    pub fn build(&self) -> Result<Arc<dyn PhotoClassifier>, ClassifierError> {
        Ok(match self {
            Self::Builtin { model } => Arc::new(BuiltinClassifier::<f64>::load(model)?),
            Self::Stub { table } => {
                let text = std::fs::read_to_string(table).map_err(|e| ClassifierError::Io { path: table.clone(), source: e })?;
                Arc::new(StubClassifier::parse_table(&text)?)
            }
            Self::Remote { address, timeout_secs } => {
                let mut clf = RemoteClassifier::new(address.clone());
                if let Some(t) = timeout_secs {
                    let t = Duration::try_from_secs_f64(*t)
                        .map_err(|e| ClassifierError::BadConfig(format!("remote timeout: {e}")))?;
                    clf = clf.with_timeout(t);
                }
                Arc::new(clf)
            }
        })
    }

    fn rebase(&mut self, base: &Path) {
        match self {
            Self::Builtin { model } => *model = base.join(&*model),
            Self::Stub { table } => *table = base.join(&*table),
            Self::Remote { .. } => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaemonConfig {
    pub library_root: PathBuf,
    pub store_path: PathBuf,
    #[serde(default)]
    pub extensions: ExtensionSet,
    #[serde(default = "default_timeout")]
    pub prompt_timeout_secs: f64,
    #[serde(default)]
    pub whitelist: Whitelist,
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    #[serde(default)]
    pub audit_log: Option<PathBuf>,
    pub classifier: ClassifierChoice,
}

fn default_timeout() -> f64 {
    DEFAULT_PROMPT_TIMEOUT_SECS
}

fn default_listen() -> SocketAddr {
    DEFAULT_LISTEN.parse().expect("valid default address")
}

impl DaemonConfig {
    /// Config with defaults for everything but the paths and classifier.
    pub fn new(library_root: impl Into<PathBuf>, store_path: impl Into<PathBuf>, classifier: ClassifierChoice) -> Self {
        Self {
            library_root: library_root.into(),
            store_path: store_path.into(),
            extensions: ExtensionSet::default(),
            prompt_timeout_secs: DEFAULT_PROMPT_TIMEOUT_SECS,
            whitelist: Whitelist::new(),
            listen: default_listen(),
            audit_log: None,
            classifier,
        }
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.to_path_buf(), source: e })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> Result<Self, ConfigError> {
        let mut cfg: Self = toml::from_str(text)?;
        cfg.library_root = base.join(&cfg.library_root);
        cfg.store_path = base.join(&cfg.store_path);
        cfg.audit_log = cfg.audit_log.map(|p| base.join(p));
        cfg.classifier.rebase(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.prompt_timeout()?;
        Ok(())
    }

    pub fn prompt_timeout(&self) -> Result<Duration, ConfigError> {
        let secs = self.prompt_timeout_secs;
        if secs.is_nan() || secs <= 0.0 {
            return Err(ConfigError::BadTimeout(secs));
        }
        Duration::try_from_secs_f64(secs).map_err(|_| ConfigError::BadTimeout(secs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let cfg = DaemonConfig::parse(
            "library_root = \"lib\"\nstore_path = \"s.db\"\n[classifier]\nkind = \"stub\"\ntable = \"t.txt\"\n",
            Path::new("/etc/pg"),
        )
        .unwrap();
        assert_eq!(cfg.library_root, Path::new("/etc/pg/lib"));
        assert_eq!(cfg.prompt_timeout().unwrap(), Duration::from_secs(30));
        assert_eq!(cfg.listen.to_string(), DEFAULT_LISTEN);
        assert_eq!(cfg.classifier, ClassifierChoice::Stub { table: "/etc/pg/t.txt".into() });
        assert!(cfg.whitelist.is_empty());
        assert!(cfg.extensions.contains("HEIC"));
    }

    #[test]
    fn absolute_paths_are_kept() {
        let cfg = DaemonConfig::parse(
            "library_root = \"/photos\"\nstore_path = \"/var/s.db\"\nwhitelist = [\"backup\"]\nextensions = [\"jpg\"]\n[classifier]\nkind = \"remote\"\naddress = \"127.0.0.1:9000\"\n",
            Path::new("/etc"),
        )
        .unwrap();
        assert_eq!(cfg.library_root, Path::new("/photos"));
        assert!(cfg.whitelist.contains("backup"));
        assert!(!cfg.extensions.contains("png"));
    }

    #[test]
    fn timeout_must_be_positive() {
        for bad in ["0", "-1", "nan"] {
            let text = format!("library_root = \"l\"\nstore_path = \"s\"\nprompt_timeout_secs = {bad}\n[classifier]\nkind = \"stub\"\ntable = \"t\"\n");
            assert!(matches!(DaemonConfig::parse(&text, Path::new(".")), Err(ConfigError::BadTimeout(_))), "{bad}");
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = "library_root = \"l\"\nstore_path = \"s\"\nprompt_timeout = 3\n[classifier]\nkind = \"stub\"\ntable = \"t\"\n";
        assert!(matches!(DaemonConfig::parse(text, Path::new(".")), Err(ConfigError::Syntax(_))));
    }
}
