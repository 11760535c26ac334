#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const BIN: &str = env!("CARGO_BIN_EXE_sfid");

/// Flags for a model small enough to train in seconds.
pub const TINY: &[&str] = &[
    "--embedding-dim",
    "12",
    "--hidden-dim",
    "10",
    "--attention-dim",
    "10",
    "--id-proj-dim",
    "10",
    "--batch-size",
    "8",
];

pub fn sfid(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn path(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

/// Writes a synthetic dataset root with `train` training utterances.
pub fn dataset(root: &Path, train: usize, seed: u64) -> PathBuf {
    sfid::synthetic::write_dataset(root, train, 20, 20, seed).unwrap();
    root.to_path_buf()
}

/// Trains a tiny model into `out`, panicking on failure.
pub fn train(data: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["train", "--data", path(data), "--out", path(out), "--seed", "3"];
    args.extend_from_slice(TINY);
    args.extend_from_slice(extra);
    let o = sfid(&args);
    assert!(o.status.success(), "train failed: {}", stderr(&o));
}

/// Every file below `dir` with its contents, sorted by path.
pub fn snapshot(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.clone(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
