use std::path::Path;

use num_rational::Ratio;
use photoguard_core::manifest::*;
use proptest::prelude::*;

const OTHER: [&str; 4] = [
    "android.permission.CAMERA",
    "android.permission.ACCESS_FINE_LOCATION",
    "android.permission.WAKE_LOCK",
    "android.permission.VIBRATE",
];

fn manifest_xml(package: &str, permissions: &[&str]) -> String {
    let mut body = String::new();
    for p in permissions {
        body.push_str(&format!("  <uses-permission android:name=\"{p}\" />\n"));
    }
    format!(
        "<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<manifest xmlns:android=\"{ANDROID_NS}\" package=\"{package}\">\n{body}  <application android:label=\"app\"/>\n</manifest>\n"
    )
}

fn write_corpus(dir: &Path, apps: &[(String, Vec<&str>)]) {
    for (pkg, perms) in apps {
        std::fs::write(dir.join(format!("{pkg}.xml")), manifest_xml(pkg, perms)).unwrap();
    }
}

#[test]
fn three_of_four_risky() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(
        dir.path(),
        &[
            ("com.zeta".into(), vec![READ_EXTERNAL_STORAGE, INTERNET]),
            ("com.alpha".into(), vec![INTERNET, READ_EXTERNAL_STORAGE, OTHER[0]]),
            ("com.mid".into(), vec![INTERNET]),
            ("com.beta".into(), vec![READ_EXTERNAL_STORAGE, INTERNET]),
        ],
    );
    let report = analyze_corpus(dir.path()).unwrap();
    assert_eq!(report.total_apps, 4);
    assert_eq!(report.proportion(), Some(Ratio::new(3, 4)));
    assert_eq!(report.risky_ids, vec!["com.alpha", "com.beta", "com.zeta"]);
}

#[test]
fn single_safe_app() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &[("com.safe".into(), vec![OTHER[1]])]);
    let report = analyze_corpus(dir.path()).unwrap();
    assert_eq!(report.proportion(), Some(Ratio::from_integer(0)));
}

#[test]
fn empty_directory_has_undefined_proportion() {
    let dir = tempfile::tempdir().unwrap();
    let report = analyze_corpus(dir.path()).unwrap();
    assert_eq!(report.total_apps, 0);
    assert_eq!(report.proportion(), None);
    assert!(report.render_table().contains("undefined"));
}

#[test]
fn unparsable_files_are_itemized_and_excluded() {
    let dir = tempfile::tempdir().unwrap();
    write_corpus(dir.path(), &[("com.ok".into(), vec![READ_EXTERNAL_STORAGE, INTERNET])]);
    std::fs::write(dir.path().join("broken.xml"), "<manifest package=\"x\">").unwrap();
    std::fs::write(dir.path().join("readme.txt"), "ignored").unwrap();
    let report = analyze_corpus(dir.path()).unwrap();
    assert_eq!(report.total_apps, 1);
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.proportion(), Some(Ratio::from_integer(1)));
}

#[test]
fn missing_directory_is_an_error() {
    assert!(matches!(analyze_corpus(Path::new("/no/such/corpus")), Err(ManifestError::Io { .. })));
}

#[test]
fn records_are_line_delimited_json() {
    let report = CorpusReport::from_docs(&[
        ManifestDoc::new("b", [INTERNET]),
        ManifestDoc::new("a", [INTERNET, READ_EXTERNAL_STORAGE]),
    ]);
    assert_eq!(report.render_records(), "{\"app_id\":\"a\",\"risky\":true}\n{\"app_id\":\"b\",\"risky\":false}\n");
}

proptest! {
    #[test]
    fn element_order_does_not_matter(mut perms in prop::sample::subsequence(
        vec![READ_EXTERNAL_STORAGE, INTERNET, OTHER[0], OTHER[1], OTHER[2], OTHER[3]], 0..6), seed in any::<u64>()) {
        let a = parse_manifest(&manifest_xml("com.x", &perms)).unwrap();
        let n = perms.len().max(1);
        perms.rotate_left((seed as usize) % n);
        perms.reverse();
        let b = parse_manifest(&manifest_xml("com.x", &perms)).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(flags_photo_leak_risk(&a), perms.contains(&READ_EXTERNAL_STORAGE) && perms.contains(&INTERNET));
    }

    #[test]
    fn minimal_xml_round_trips(pkg in "[a-z]{1,5}(\\.[a-z]{1,5}){0,3}", perms in prop::collection::btree_set("[A-Za-z_.&<>\"]{1,20}", 0..8)) {
        let doc = ManifestDoc { app_id: pkg, permissions: perms };
        prop_assert_eq!(parse_manifest(&doc.to_xml()).unwrap(), doc);
    }
}
