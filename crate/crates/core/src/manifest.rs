//! App manifest permission analysis.
//!
//! Flags apps that request both external-storage read and network access,
//! the pair that lets an app exfiltrate stored photos, and aggregates the
//! flag over a corpus of decoded (text) `AndroidManifest.xml` files.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_rational::Ratio;
use quick_xml::escape::escape;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub const READ_EXTERNAL_STORAGE: &str = "android.permission.READ_EXTERNAL_STORAGE";
pub const INTERNET: &str = "android.permission.INTERNET";
pub const ANDROID_NS: &str = "http://schemas.android.com/apk/res/android";

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("malformed XML at line {line}, column {column}: {message}")]
    Xml { line: usize, column: usize, message: String },
    #[error("root element is <{0}>, expected <manifest>")]
    WrongRoot(String),
    #[error("<manifest> has no package attribute")]
    MissingPackage,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ManifestDoc {
    pub app_id: String,
    pub permissions: BTreeSet<String>,
}

impl ManifestDoc {
    pub fn new<I, S>(app_id: impl Into<String>, permissions: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { app_id: app_id.into(), permissions: permissions.into_iter().map(Into::into).collect() }
    }

    /// Minimal manifest containing only the package and permissions.
    pub fn to_xml(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<manifest xmlns:android=\"{ANDROID_NS}\" package=\"{}\">",
            escape(self.app_id.as_str())
        );
        for p in &self.permissions {
            let _ = writeln!(out, "    <uses-permission android:name=\"{}\" />", escape(p.as_str()));
        }
        out.push_str("</manifest>\n");
        out
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text.as_bytes()[..offset];
    let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
    let column = offset - before.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1) + 1;
    (line, column)
}

fn xml_error(text: &str, offset: u64, message: impl Into<String>) -> ManifestError {
    let (line, column) = line_col(text, offset as usize);
    ManifestError::Xml { line, column, message: message.into() }
}

/// Attribute value by local name, restricted to the given prefixes (empty
/// string means unprefixed).
fn attr_value(
    text: &str,
    reader: &Reader<&[u8]>,
    e: &BytesStart<'_>,
    local: &str,
    prefixes: &[String],
) -> Result<Option<String>, ManifestError> {
    for attr in e.attributes() {
        let attr = attr.map_err(|err| xml_error(text, reader.buffer_position(), err.to_string()))?;
        let key = attr.key;
        if key.local_name().as_ref() != local.as_bytes() {
            continue;
        }
        let prefix = key.prefix().map(|p| String::from_utf8_lossy(p.as_ref()).into_owned()).unwrap_or_default();
        if prefixes.contains(&prefix) {
            let value = attr
                .unescape_value()
                .map_err(|err| xml_error(text, reader.buffer_position(), err.to_string()))?;
            return Ok(Some(value.into_owned()));
        }
    }
    Ok(None)
}

/// Extracts the package name and the `android:name` of every
/// `<uses-permission>` directly under `<manifest>`. Other elements, and
/// `uses-permission` elements nested deeper, are ignored.
pub fn parse_manifest(text: &str) -> Result<ManifestDoc, ManifestError> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().check_end_names = true;
    let mut depth = 0usize;
    let mut saw_root = false;
    let mut app_id = None;
    // prefixes accepted for the permission name attribute
    let mut name_prefixes = vec![String::new(), "android".to_string()];
    let mut permissions = BTreeSet::new();
    loop {
        let event = reader
            .read_event()
            .map_err(|e| xml_error(text, reader.error_position(), e.to_string()))?;
        let (start, empty) = match &event {
            Event::Start(e) => (Some(e), false),
            Event::Empty(e) => (Some(e), true),
            Event::End(_) => {
                depth -= 1;
                continue;
            }
            Event::Eof => break,
            _ => continue,
        };
        let Some(e) = start else { continue };
        if depth == 0 {
            if saw_root {
                return Err(xml_error(text, reader.buffer_position(), "more than one root element"));
            }
            saw_root = true;
            let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
            if e.local_name().as_ref() != b"manifest" {
                return Err(ManifestError::WrongRoot(name));
            }
            // extra prefixes bound to the android namespace
            let mut ns: HashMap<String, String> = HashMap::new();
            for attr in e.attributes().flatten() {
                if let Some(p) = attr.key.as_ref().strip_prefix(b"xmlns:") {
                    let uri = attr.unescape_value().map(|v| v.into_owned()).unwrap_or_default();
                    ns.insert(String::from_utf8_lossy(p).into_owned(), uri);
                }
            }
            name_prefixes.extend(ns.into_iter().filter(|(_, uri)| uri == ANDROID_NS).map(|(p, _)| p));
            app_id = attr_value(text, &reader, e, "package", &[String::new()])?;
        } else if depth == 1 && e.local_name().as_ref() == b"uses-permission" {
            if let Some(name) = attr_value(text, &reader, e, "name", &name_prefixes)? {
                permissions.insert(name);
            }
        }
        if !empty {
            depth += 1;
        }
    }
    if !saw_root {
        return Err(xml_error(text, text.len() as u64, "no root element"));
    }
    if depth != 0 {
        return Err(xml_error(text, text.len() as u64, "unexpected end of document; unclosed element"));
    }
    match app_id {
        Some(id) if !id.is_empty() => Ok(ManifestDoc { app_id: id, permissions }),
        _ => Err(ManifestError::MissingPackage),
    }
}

pub fn flags_photo_leak_risk(doc: &ManifestDoc) -> bool {
    doc.permissions.contains(READ_EXTERNAL_STORAGE) && doc.permissions.contains(INTERNET)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AppRisk {
    pub app_id: String,
    pub risky: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CorpusReport {
    pub total_apps: u64,
    pub risky_apps: u64,
    /// Sorted lexicographically.
    pub risky_ids: Vec<String>,
    /// Per-app flags, sorted by app id.
    pub apps: Vec<AppRisk>,
    /// Files that failed to parse; excluded from the totals.
    pub failures: Vec<(PathBuf, String)>,
}

impl CorpusReport {
    pub fn from_docs<'a>(docs: impl IntoIterator<Item = &'a ManifestDoc>) -> Self {
        let mut apps: Vec<AppRisk> = docs
            .into_iter()
            .map(|d| AppRisk { app_id: d.app_id.clone(), risky: flags_photo_leak_risk(d) })
            .collect();
        apps.sort_by(|a, b| a.app_id.cmp(&b.app_id).then(a.risky.cmp(&b.risky)));
        let risky_ids: Vec<String> = apps.iter().filter(|a| a.risky).map(|a| a.app_id.clone()).collect();
        Self {
            total_apps: apps.len() as u64,
            risky_apps: risky_ids.len() as u64,
            risky_ids,
            apps,
            failures: Vec::new(),
        }
    }

    /// Exact `risky / total`; `None` when the corpus is empty.
    pub fn proportion(&self) -> Option<Ratio<u64>> {
        (self.total_apps > 0).then(|| Ratio::new(self.risky_apps, self.total_apps))
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<48} RISKY", "APP");
        for a in &self.apps {
            let _ = writeln!(out, "{:<48} {}", a.app_id, if a.risky { "yes" } else { "no" });
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "apps analyzed:  {}", self.total_apps);
        let _ = writeln!(out, "storage+network: {}", self.risky_apps);
        match self.proportion() {
            Some(p) => {
                let _ = writeln!(out, "proportion:     {}/{} = {:.4}", p.numer(), p.denom(), crate::classifier::ratio_to_f64(p));
            }
            None => {
                let _ = writeln!(out, "proportion:     undefined (no parsable manifests)");
            }
        }
        if !self.failures.is_empty() {
            let _ = writeln!(out, "unparsable files: {}", self.failures.len());
            for (p, why) in &self.failures {
                let _ = writeln!(out, "  {}: {}", p.display(), why);
            }
        }
        out
    }

    /// One JSON object per app: `{"app_id": ..., "risky": ...}`.
    pub fn render_records(&self) -> String {
        self.apps
            .iter()
            .map(|a| serde_json::to_string(a).expect("plain struct serializes") + "\n")
            .collect()
    }
}

/// Parses every `*.xml` file under `dir` (recursively) and aggregates the
/// storage+network flag. The result does not depend on parse order.
pub fn analyze_corpus(dir: &Path) -> Result<CorpusReport, ManifestError> {
    std::fs::read_dir(dir).map_err(|source| ManifestError::Io { path: dir.to_path_buf(), source })?;
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(dir)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| {
            e.file_type().is_file()
                && e.path().extension().and_then(|x| x.to_str()).is_some_and(|x| x.eq_ignore_ascii_case("xml"))
        })
        .map(|e| e.into_path())
        .collect();
    files.sort();
    let parsed: Vec<(PathBuf, Result<ManifestDoc, String>)> = files
        .into_par_iter()
        .map(|path| {
            let result = std::fs::read_to_string(&path)
                .map_err(|e| e.to_string())
                .and_then(|t| parse_manifest(&t).map_err(|e| e.to_string()));
            (path, result)
        })
        .collect();
    let mut docs = Vec::new();
    let mut failures = Vec::new();
    for (path, r) in parsed {
        match r {
            Ok(d) => docs.push(d),
            Err(e) => failures.push((path, e)),
        }
    }
    let mut report = CorpusReport::from_docs(&docs);
    report.failures = failures;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO: &str = r#"<?xml version="1.0" encoding="utf-8"?>
<manifest xmlns:android="http://schemas.android.com/apk/res/android" package="com.example.app">
    <uses-permission android:name="android.permission.READ_EXTERNAL_STORAGE" />
    <uses-permission android:name="android.permission.INTERNET"/>
    <application android:label="x">
        <activity android:name=".Main" />
    </application>
</manifest>"#;

    #[test]
    fn extracts_two_permissions() {
        let doc = parse_manifest(TWO).unwrap();
        assert_eq!(doc.app_id, "com.example.app");
        assert_eq!(doc.permissions, [READ_EXTERNAL_STORAGE, INTERNET].into_iter().map(String::from).collect());
        assert!(flags_photo_leak_risk(&doc));
    }

    #[test]
    fn no_permissions() {
        let doc = parse_manifest(r#"<manifest package="a.b"><application/></manifest>"#).unwrap();
        assert!(doc.permissions.is_empty());
    }

    #[test]
    fn duplicates_collapse() {
        let xml = r#"<manifest package="a.b">
            <uses-permission android:name="android.permission.INTERNET"/>
            <uses-permission android:name="android.permission.INTERNET"/>
        </manifest>"#;
        assert_eq!(parse_manifest(xml).unwrap().permissions.len(), 1);
    }

    #[test]
    fn undeclared_android_prefix_and_custom_prefix() {
        // no xmlns:android declaration at all
        let xml = r#"<manifest package="a.b"><uses-permission android:name="p.ONE"/></manifest>"#;
        assert!(parse_manifest(xml).unwrap().permissions.contains("p.ONE"));
        let xml = format!(r#"<manifest xmlns:a="{ANDROID_NS}" package="a.b"><uses-permission a:name="p.TWO"/></manifest>"#);
        assert!(parse_manifest(&xml).unwrap().permissions.contains("p.TWO"));
        let xml = r#"<manifest package="a.b"><uses-permission tools:name="p.THREE"/></manifest>"#;
        assert!(parse_manifest(xml).unwrap().permissions.is_empty());
    }

    #[test]
    fn nested_uses_permission_ignored() {
        let xml = r#"<manifest package="a.b"><application><uses-permission android:name="p.X"/></application></manifest>"#;
        assert!(parse_manifest(xml).unwrap().permissions.is_empty());
    }

    #[test]
    fn risk_flag_requires_both() {
        assert!(!flags_photo_leak_risk(&ManifestDoc::new("a", [INTERNET])));
        assert!(!flags_photo_leak_risk(&ManifestDoc::new("a", [READ_EXTERNAL_STORAGE, "android.permission.CAMERA"])));
        assert!(flags_photo_leak_risk(&ManifestDoc::new("a", [READ_EXTERNAL_STORAGE, INTERNET])));
    }

    #[test]
    fn malformed_xml_reports_position() {
        let xml = "<manifest package=\"a.b\">\n  <uses-permission>\n</manifest>";
        match parse_manifest(xml) {
            Err(ManifestError::Xml { line, .. }) => assert!(line >= 2, "line {line}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_manifest("<manifest package=\"a\">"), Err(ManifestError::Xml { .. })));
        assert!(matches!(parse_manifest(""), Err(ManifestError::Xml { .. })));
    }

    #[test]
    fn structural_errors() {
        assert!(matches!(parse_manifest("<manifest/>"), Err(ManifestError::MissingPackage)));
        assert!(matches!(parse_manifest("<resources/>"), Err(ManifestError::WrongRoot(_))));
    }

    #[test]
    fn xml_round_trip_with_escapes() {
        let doc = ManifestDoc::new("com.a&b", ["x.<weird>\"perm\"", INTERNET]);
        assert_eq!(parse_manifest(&doc.to_xml()).unwrap(), doc);
    }

    #[test]
    fn line_col_math() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
