//! Reports on the corpus battery against checked-in documents. Numbers are
//! compared to a relative 1e-9 so that libm differences between platforms
//! do not matter; structure must match exactly. Set UPDATE_GOLDEN=1 to
//! rewrite the documents.

mod common;

use std::path::Path;

use common::{assert_valid, diff, fixture, run, stdout_json};
use steklov_core::corpus::corpus_names;

fn golden(name: &str, args: &[&str], schema: &str) {
    let doc = stdout_json(&run(args));
    assert_valid(schema, &doc);
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"));
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap() + "\n").unwrap();
        return;
    }
    let text = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing golden file {}", path.display()));
    let expected: serde_json::Value = serde_json::from_str(&text).unwrap();
    let mut out = Vec::new();
    diff(&expected, &doc, name, 1e-9, &mut out);
    assert!(out.is_empty(), "{name} differs from golden:\n{}", out.join("\n"));
}

#[test]
fn subdiff_reports_on_corpus() {
    for name in corpus_names() {
        let cfg = fixture(&format!("golden_{name}.toml"));
        golden(&format!("subdiff_{name}"), &["subdiff", "--config", cfg.to_str().unwrap()], "subdiff");
    }
}

#[test]
fn check_and_calculus_reports() {
    let cfg = fixture("check_abs1d.toml");
    golden("check_abs1d", &["check", "--config", cfg.to_str().unwrap()], "check");
    let cfg = fixture("sum1_abs_identity.toml");
    golden("calculus_sum1", &["calculus", "--config", cfg.to_str().unwrap()], "calculus");
    golden("corpus_list", &["corpus-list"], "corpus-list");
}
