#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_joganic");

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Runs the binary; returns (exit code, stdout, stderr).
pub fn run(args: &[&str]) -> (i32, String, String) {
    let Output { status, stdout, stderr } = Command::new(BIN)
        .args(args)
        .env_remove("JOGANIC_DATA_DIR")
        .output()
        .expect("binary runs");
    (
        status.code().unwrap_or(-1),
        String::from_utf8_lossy(&stdout).into_owned(),
        String::from_utf8_lossy(&stderr).into_owned(),
    )
}

/// Runs the binary and panics with its stderr unless it exits 0.
pub fn run_ok(args: &[&str]) -> String {
    let (code, out, err) = run(args);
    assert_eq!(code, 0, "joganic {args:?} failed: {err}");
    out
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// Fixture dataset plus the preprocessing outputs for it.
pub struct Prepared {
    pub dir: PathBuf,
    pub data: PathBuf,
    pub vocab: PathBuf,
}

pub fn prepare(dir: &Path, train: usize, test: usize, seed: u64) -> Prepared {
    let data = joganic::pipeline::synth::write_captioning_fixture(dir, train, test, seed, 4, 64).unwrap();
    let vocab = dir.join("prep");
    run_ok(&["preprocess", "--data", p(&data), "--out", p(&vocab)]);
    Prepared { dir: dir.to_path_buf(), data, vocab }
}
