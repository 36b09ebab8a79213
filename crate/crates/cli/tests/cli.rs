use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::io::Write;

fn adapipe(args: &[&str], stdin: Option<&str>) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_adapipe"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    if let Some(s) = stdin {
        child.stdin.take().unwrap().write_all(s.as_bytes()).unwrap();
    }
    drop(child.stdin.take());
    child.wait_with_output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = adapipe(args, None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Trains a tiny two-language package and returns (tempdir, data dir, package dir).
fn tiny_package() -> (tempfile::TempDir, std::path::PathBuf, std::path::PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let pkg = tmp.path().join("pkg");
    ok(&["toy", "--lang", "xa", "--sentences", "8", "--seed", "1", "--out", p(&data)]);
    ok(&["toy", "--lang", "xb", "--sentences", "6", "--seed", "1", "--out", p(&data)]);
    ok(&[
        "train",
        "--treebank",
        p(&data.join("xa.conllu")),
        p(&data.join("xb.conllu")),
        "--lang",
        "xa",
        "xb",
        "--ner",
        p(&data.join("xa.ner.tsv")),
        "-",
        "--vocab-size",
        "800",
        "--epochs",
        "2",
        "--out",
        p(&pkg),
    ]);
    (tmp, data, pkg)
}

#[test]
fn train_inspect_annotate_eval() {
    let (_tmp, data, pkg) = tiny_package();
    let inspect = ok(&["package", "inspect", p(&pkg)]);
    let xa = inspect.lines().find(|l| l.starts_with("xa ")).unwrap();
    assert!(xa.starts_with("xa     adapters"), "{inspect}");
    assert!(xa.ends_with("tagparse,lemma,ner"), "{inspect}");

    let out = adapipe(&["annotate", "--package", p(&pkg), "--lang", "xa"], Some("Da bo. Ke ti."));
    assert!(out.status.success());
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["text"], "Da bo. Ke ti.");

    let out = adapipe(
        &["annotate", "--package", p(&pkg), "--lang", "xb", "--pretokenized", "--format", "conllu"],
        Some("John runs\n"),
    );
    assert!(out.status.success());
    let conllu = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = conllu.lines().filter(|l| !l.starts_with('#') && !l.is_empty()).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("1\tJohn\t"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ner: not in bundle"));

    let report = ok(&["eval", "--package", p(&pkg), "--lang", "xa", "--gold", p(&data.join("xa.conllu"))]);
    for m in ["Tokens", "Sentences", "Words", "UPOS", "XPOS", "UFeats", "Lemmas", "UAS", "LAS"] {
        assert!(report.contains(m), "{report}");
    }
    let json = ok(&[
        "eval",
        "--package",
        p(&pkg),
        "--lang",
        "xa",
        "--gold",
        p(&data.join("xa.conllu")),
        "--gold-words",
        "--json",
    ]);
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["metrics"][0]["metric"], "Tokens");
    assert_eq!(v["metrics"][0]["f1"], 100.0);
}

#[test]
fn exit_codes() {
    let (tmp, data, pkg) = tiny_package();
    assert_eq!(adapipe(&["frobnicate"], None).status.code(), Some(1));
    assert_eq!(adapipe(&["train", "--lang", "xa"], None).status.code(), Some(1));
    assert_eq!(adapipe(&["--help"], None).status.code(), Some(0));
    let unknown = adapipe(&["annotate", "--package", p(&pkg), "--lang", "zz"], Some("a"));
    assert_eq!(unknown.status.code(), Some(1));
    let bad_data = adapipe(
        &["eval", "--package", p(&pkg), "--lang", "xa", "--gold", p(&data.join("xa.txt"))],
        None,
    );
    assert_eq!(bad_data.status.code(), Some(2));

    let bundle = pkg.join("xa.bundle");
    let mut bytes = std::fs::read(&bundle).unwrap();
    bytes[100] ^= 0xff;
    std::fs::write(&bundle, bytes).unwrap();
    let tampered = adapipe(&["annotate", "--package", p(&pkg), "--lang", "xa"], Some("a"));
    assert_eq!(tampered.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&tampered.stderr).contains("xa.bundle"));
    drop(tmp);
}

#[test]
fn cache_dir_is_honored() {
    let (tmp, _data, _pkg) = tiny_package();
    let out = Command::new(env!("CARGO_BIN_EXE_adapipe"))
        .args(["package", "inspect", "pkg"])
        .env("ADAPIPE_CACHE_DIR", tmp.path())
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn retraining_one_language_keeps_the_other() {
    let (_tmp, data, pkg) = tiny_package();
    ok(&[
        "train",
        "--component",
        "tagparse",
        "--treebank",
        p(&data.join("xb.conllu")),
        "--lang",
        "xb",
        "--epochs",
        "1",
        "--out",
        p(&pkg),
    ]);
    let inspect = ok(&["package", "inspect", p(&pkg)]);
    let langs: Vec<&str> = inspect
        .lines()
        .filter(|l| l.starts_with("xa ") || l.starts_with("xb "))
        .collect();
    assert_eq!(langs.len(), 2, "{inspect}");
    assert!(langs[1].ends_with("tagparse"));
}
