#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn llfl(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_llfl"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn llfl")
}

pub fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = llfl(dir, args);
    assert!(
        out.status.success(),
        "llfl {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub const DATA: [&str; 6] = [
    "--facts",
    "d/facts.tsv",
    "--embeddings",
    "d/embeddings.txt",
    "--examples",
    "d/examples.csv",
];

/// `args` followed by the three data flags.
pub fn with_data<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend(DATA);
    v
}

pub fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec!["synth", "--out", "d"];
    args.extend(extra);
    ok(dir, &args);
}

pub fn bytes(p: impl AsRef<Path>) -> Vec<u8> {
    fs::read(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

/// Every regular file under `dir` with its contents, sorted by name.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out: Vec<(PathBuf, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().into(), bytes(&p)))
        .collect();
    out.sort();
    out
}

pub fn csv_rows(p: impl AsRef<Path>) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(p.as_ref()).unwrap();
    r.records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect()
}

/// Same file names and bytes, manifests aside (they record the output path).
pub fn assert_same_outputs(a: &Path, b: &Path) {
    let strip = |d: &Path| -> Vec<(PathBuf, Vec<u8>)> {
        tree(d)
            .into_iter()
            .filter(|(n, _)| !n.to_string_lossy().ends_with("manifest.json"))
            .collect()
    };
    let (x, y) = (strip(a), strip(b));
    let names = |v: &[(PathBuf, Vec<u8>)]| v.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
    assert_eq!(names(&x), names(&y));
    for ((n, p), (_, q)) in x.iter().zip(&y) {
        assert!(p == q, "{} differs", n.display());
    }
}
