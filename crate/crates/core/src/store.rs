//! Cached photo classifications keyed by canonical path.
//!
//! Every record carries a SHA-256 fingerprint of the bytes it was classified
//! from; re-adding a photo with unchanged bytes reuses the record, changed
//! bytes force reclassification.
//!
//! # Persistence format
//!
//! UTF-8 text, newline terminated lines:
//!
//! ```text
//! photoguard-store 1
//! <fingerprint hex, 64 chars> <category code> <classified_at ms> <photo_id>
//! ...
//! end <record count>
//! ```
//!
//! `photo_id` is the last field and may contain spaces; backslash, CR and LF
//! inside it are escaped as `\\`, `\r` and `\n`. The `end` trailer makes a
//! truncated file detectable. Files are replaced atomically (write to a
//! sibling temp file, fsync, rename).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::category::ContentCategory;
use crate::classifier::{ClassifierError, PhotoClassifier};
use crate::policy::{requires_control, ExtensionSet};

pub const FORMAT_HEADER: &str = "photoguard-store 1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is not a controlled photo type")]
    NotAPhoto(PathBuf),
    #[error("classification of {path} failed: {source}")]
    Classify {
        path: PathBuf,
        #[source]
        source: ClassifierError,
    },
    #[error("corrupt store at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
}

impl StoreError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Fingerprint([u8; 32]);

impl Fingerprint {
    pub fn of(bytes: &[u8]) -> Self {
        Self(Sha256::digest(bytes).into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).ok()?;
        Some(Self(out))
    }
}

impl From<[u8; 32]> for Fingerprint {
    fn from(b: [u8; 32]) -> Self {
        Self(b)
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl From<Fingerprint> for String {
    fn from(fp: Fingerprint) -> Self {
        fp.to_hex()
    }
}

impl TryFrom<String> for Fingerprint {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::from_hex(&s).ok_or_else(|| format!("bad fingerprint {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentRecord {
    pub photo_id: String,
    pub fingerprint: Fingerprint,
    pub category: ContentCategory,
    pub classified_at: u64,
}

/// Photos found under a library root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhotoLibrary {
    root: PathBuf,
    photos: Vec<PathBuf>,
}

impl PhotoLibrary {
    /// Recursively lists files under `root` whose extension is controlled.
    pub fn scan(root: &Path, extensions: &ExtensionSet) -> Result<Self, StoreError> {
        let meta = std::fs::metadata(root).map_err(|e| StoreError::io(root, e))?;
        if !meta.is_dir() {
            return Err(StoreError::io(
                root,
                std::io::Error::new(std::io::ErrorKind::NotADirectory, "library root is not a directory"),
            ));
        }
        std::fs::read_dir(root).map_err(|e| StoreError::io(root, e))?;
        let mut photos: Vec<PathBuf> = walkdir::WalkDir::new(root)
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file() && requires_control(e.path(), extensions))
            .map(|e| e.into_path())
            .collect();
        photos.sort();
        Ok(Self { root: root.to_path_buf(), photos })
    }

    pub fn from_parts(root: PathBuf, photos: Vec<PathBuf>) -> Self {
        Self { root, photos }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn photos(&self) -> &[PathBuf] {
        &self.photos
    }
}

#[derive(Debug, Default, Clone)]
pub struct ScanReport {
    pub classified: usize,
    pub reused: usize,
    /// Files that could not be read or classified, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
    /// Records dropped because their file is no longer in the library.
    pub removed: Vec<String>,
}

/// Outcome of adding a photo: whether the classifier actually ran.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Upsert {
    pub record: ContentRecord,
    pub classified: bool,
}

/// Canonical absolute path used as the record key. Falls back to the
/// canonical parent for files that no longer exist.
pub fn photo_id_for(path: &Path) -> Result<String, StoreError> {
    let canon = match path.canonicalize() {
        Ok(p) => p,
        Err(e) => {
            let (Some(parent), Some(name)) = (path.parent(), path.file_name()) else {
                return Err(StoreError::io(path, e));
            };
            let parent = if parent.as_os_str().is_empty() { Path::new(".") } else { parent };
            parent.canonicalize().map_err(|_| StoreError::io(path, e))?.join(name)
        }
    };
    Ok(canon.to_string_lossy().into_owned())
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

/// Single-writer, multi-reader cache of classifications.
#[derive(Debug)]
pub struct ContentStore {
    extensions: ExtensionSet,
    records: RwLock<BTreeMap<String, ContentRecord>>,
    writer: Mutex<()>,
    persisting: Mutex<()>,
}

impl Default for ContentStore {
    fn default() -> Self {
        Self::new(ExtensionSet::default())
    }
}

impl ContentStore {
    pub fn new(extensions: ExtensionSet) -> Self {
        Self {
            extensions,
            records: RwLock::new(BTreeMap::new()),
            writer: Mutex::new(()),
            persisting: Mutex::new(()),
        }
    }

    pub fn extensions(&self) -> &ExtensionSet {
        &self.extensions
    }

    pub fn len(&self) -> usize {
        self.records.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.read().is_empty()
    }

    pub fn lookup(&self, photo_id: &str) -> Option<ContentRecord> {
        self.records.read().get(photo_id).cloned()
    }

    /// Snapshot of all records ordered by photo id.
    pub fn records(&self) -> Vec<ContentRecord> {
        self.records.read().values().cloned().collect()
    }

    /// Inserts or replaces a record (last write wins).
    pub fn upsert(&self, record: ContentRecord) {
        let _w = self.writer.lock();
        self.records.write().insert(record.photo_id.clone(), record);
    }

    pub fn remove(&self, photo_id: &str) -> Option<ContentRecord> {
        let _w = self.writer.lock();
        self.records.write().remove(photo_id)
    }

    /// Removes the record for a file that was deleted.
    pub fn on_photo_removed(&self, path: &Path) -> Option<ContentRecord> {
        photo_id_for(path).ok().and_then(|id| self.remove(&id))
    }

    /// Removes every record under a deleted directory.
    pub fn on_directory_removed(&self, dir: &Path) -> Vec<ContentRecord> {
        let Ok(id) = photo_id_for(dir) else { return Vec::new() };
        let prefix = format!("{}{}", id.trim_end_matches(std::path::MAIN_SEPARATOR), std::path::MAIN_SEPARATOR);
        let _w = self.writer.lock();
        let mut records = self.records.write();
        let doomed: Vec<String> = records.range(prefix.clone()..).take_while(|(k, _)| k.starts_with(&prefix)).map(|(k, _)| k.clone()).collect();
        doomed.into_iter().filter_map(|k| records.remove(&k)).collect()
    }

    /// Classifies `path` and stores the result, unless an existing record
    /// already matches the file's current bytes.
    pub fn on_photo_added(&self, path: &Path, clf: &dyn PhotoClassifier) -> Result<ContentRecord, StoreError> {
        self.add_photo(path, clf).map(|u| u.record)
    }

    pub fn add_photo(&self, path: &Path, clf: &dyn PhotoClassifier) -> Result<Upsert, StoreError> {
        if !requires_control(path, &self.extensions) {
            return Err(StoreError::NotAPhoto(path.to_path_buf()));
        }
        let bytes = std::fs::read(path).map_err(|e| StoreError::io(path, e))?;
        let photo_id = photo_id_for(path)?;
        let fingerprint = Fingerprint::of(&bytes);
        if let Some(existing) = self.lookup(&photo_id) {
            if existing.fingerprint == fingerprint {
                return Ok(Upsert { record: existing, classified: false });
            }
        }
        let classification = clf
            .classify(Path::new(&photo_id), &bytes)
            .map_err(|source| StoreError::Classify { path: path.to_path_buf(), source })?;
        let record = ContentRecord { photo_id, fingerprint, category: classification.category, classified_at: now_ms() };
        self.upsert(record.clone());
        Ok(Upsert { record, classified: true })
    }

    /// Cached record for `path`, classifying and caching it on a miss.
    pub fn lookup_or_classify(&self, path: &Path, clf: &dyn PhotoClassifier) -> Result<ContentRecord, StoreError> {
        let id = photo_id_for(path)?;
        match self.lookup(&id) {
            Some(r) => Ok(r),
            None => self.on_photo_added(path, clf),
        }
    }

    /// Brings the store in line with `lib`: classifies new or changed photos,
    /// keeps unchanged ones and drops records whose files are gone.
    pub fn initialize_scan(&self, lib: &PhotoLibrary, clf: &dyn PhotoClassifier) -> ScanReport {
        let mut report = ScanReport::default();
        let mut seen = BTreeSet::new();
        for path in lib.photos() {
            match self.add_photo(path, clf) {
                Ok(u) => {
                    if u.classified {
                        report.classified += 1;
                    } else {
                        report.reused += 1;
                    }
                    seen.insert(u.record.photo_id);
                }
                Err(e) => {
                    if let Ok(id) = photo_id_for(path) {
                        // keep a stale record out: the file exists but cannot be classified now
                        self.remove(&id);
                    }
                    report.skipped.push((path.clone(), e.to_string()));
                }
            }
        }
        let _w = self.writer.lock();
        let mut records = self.records.write();
        let stale: Vec<String> = records.keys().filter(|id| !seen.contains(*id)).cloned().collect();
        for id in stale {
            records.remove(&id);
            report.removed.push(id);
        }
        report
    }

    /// Writes the store atomically to `path`.
    pub fn persist(&self, path: &Path) -> Result<(), StoreError> {
        let _p = self.persisting.lock();
        let text = encode(&self.records());
        let tmp = temp_sibling(path);
        let write = || -> std::io::Result<()> {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(text.as_bytes())?;
            f.sync_all()?;
            std::fs::rename(&tmp, path)?;
            if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                if let Ok(d) = std::fs::File::open(dir) {
                    let _ = d.sync_all();
                }
            }
            Ok(())
        };
        write().map_err(|e| {
            let _ = std::fs::remove_file(&tmp);
            StoreError::io(path, e)
        })
    }

    pub fn load(path: &Path, extensions: ExtensionSet) -> Result<Self, StoreError> {
        let text = std::fs::read(path).map_err(|e| StoreError::io(path, e))?;
        let records = decode(&text)?;
        let store = Self::new(extensions);
        *store.records.write() = records.into_iter().map(|r| (r.photo_id.clone(), r)).collect();
        Ok(store)
    }
}

/// Temp file used while persisting to `path`.
pub fn temp_sibling(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

fn escape_id(id: &str) -> String {
    let mut out = String::with_capacity(id.len());
    for ch in id.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_id(s: &str) -> Option<String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next()? {
            '\\' => out.push('\\'),
            'n' => out.push('\n'),
            'r' => out.push('\r'),
            _ => return None,
        }
    }
    Some(out)
}

pub fn encode(records: &[ContentRecord]) -> String {
    let mut out = String::new();
    out.push_str(FORMAT_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{} {} {} {}\n",
            r.fingerprint.to_hex(),
            r.category.code(),
            r.classified_at,
            escape_id(&r.photo_id)
        ));
    }
    out.push_str(&format!("end {}\n", records.len()));
    out
}

/// Parses the persistence format. Any defect fails the whole load.
pub fn decode(bytes: &[u8]) -> Result<Vec<ContentRecord>, StoreError> {
    let err = |offset: usize, message: String| StoreError::Parse { offset, message };
    let mut lines = Vec::new();
    let mut start = 0;
    while start < bytes.len() {
        let Some(nl) = bytes[start..].iter().position(|&b| b == b'\n') else {
            return Err(err(start, "unterminated final line (truncated file?)".into()));
        };
        let line = std::str::from_utf8(&bytes[start..start + nl]).map_err(|e| err(start + e.valid_up_to(), "invalid UTF-8".into()))?;
        lines.push((start, line));
        start += nl + 1;
    }
    let mut iter = lines.into_iter();
    match iter.next() {
        Some((_, FORMAT_HEADER)) => {}
        Some((off, other)) => return Err(err(off, format!("unsupported header {other:?}"))),
        None => return Err(err(0, "empty file".into())),
    }
    let mut records = Vec::new();
    let mut ids = BTreeSet::new();
    for (off, line) in iter.by_ref() {
        if let Some(count) = line.strip_prefix("end ") {
            let count: usize = count.parse().map_err(|_| err(off + 4, format!("bad record count {count:?}")))?;
            if count != records.len() {
                return Err(err(off, format!("trailer says {count} records, found {}", records.len())));
            }
            if let Some((extra, _)) = iter.next() {
                return Err(err(extra, "data after trailer".into()));
            }
            return Ok(records);
        }
        let mut fields = line.splitn(4, ' ');
        let (Some(fp), Some(code), Some(at), Some(id)) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
            return Err(err(off, "expected 4 fields".into()));
        };
        let fingerprint = Fingerprint::from_hex(fp).ok_or_else(|| err(off, format!("bad fingerprint {fp:?}")))?;
        let code_off = off + fp.len() + 1;
        let category = code
            .parse::<i64>()
            .ok()
            .and_then(|c| ContentCategory::from_code(c).ok())
            .ok_or_else(|| err(code_off, format!("bad category code {code:?}")))?;
        let at_off = code_off + code.len() + 1;
        let classified_at = at.parse().map_err(|_| err(at_off, format!("bad timestamp {at:?}")))?;
        let id_off = at_off + at.len() + 1;
        let photo_id = unescape_id(id).ok_or_else(|| err(id_off, "bad escape in photo id".into()))?;
        if photo_id.is_empty() {
            return Err(err(id_off, "empty photo id".into()));
        }
        if !ids.insert(photo_id.clone()) {
            return Err(err(id_off, format!("duplicate photo id {photo_id:?}")));
        }
        records.push(ContentRecord { photo_id, fingerprint, category, classified_at });
    }
    Err(err(bytes.len(), "missing end trailer (truncated file?)".into()))
}
