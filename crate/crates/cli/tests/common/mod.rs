#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hesslens::spectral::SpectralDensity;

pub fn hesslens() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hesslens"));
    c.env_remove("HESSLENS_SEED").env_remove("RUST_LOG");
    c
}

/// Runs the binary and panics with its stderr unless it exits with `code`.
pub fn run_expect(args: &[&str], code: i32) -> Output {
    let out = hesslens().args(args).output().unwrap();
    assert_eq!(
        out.status.code(),
        Some(code),
        "hesslens {}\n{}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn run_ok(args: &[&str]) -> Output {
    run_expect(args, 0)
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Header and rows of a small CSV file.
pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(String::from).collect())
        .collect();
    (header, rows)
}

pub fn column(path: &Path, name: &str) -> Vec<f64> {
    let (h, rows) = read_csv(path);
    let i = h
        .iter()
        .position(|c| c == name)
        .unwrap_or_else(|| panic!("no column {name} in {h:?}"));
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

pub fn read_density(path: &Path) -> SpectralDensity {
    SpectralDensity::from_samples(column(path, "t"), column(path, "phi")).unwrap()
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Trains `model` on `data` and returns the run directory.
pub fn train(dir: &Path, name: &str, model: &str, data: &str, extra: &[&str]) -> PathBuf {
    let out = dir.join(name);
    let mut args = vec!["train", "--model", model, "--data", data, "--out", p(&out)];
    args.extend_from_slice(extra);
    run_ok(&args);
    out
}
