#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evmbound_core::fixtures::Fixture;

pub struct Files {
    pub code: PathBuf,
    pub layout: PathBuf,
    pub srcmap: PathBuf,
    pub source: PathBuf,
}

/// Writes a fixture's artifacts into `dir`.
pub fn write_fixture(dir: &Path, f: &Fixture) -> Files {
    let files = Files {
        code: dir.join(format!("{}.hex", f.name)),
        layout: dir.join(format!("{}.layout.json", f.name)),
        srcmap: dir.join(format!("{}.srcmap", f.name)),
        source: dir.join(format!("{}.sol", f.name)),
    };
    fs::write(&files.code, format!("0x{}\n", f.hex())).unwrap();
    fs::write(&files.layout, &f.layout_json).unwrap();
    fs::write(&files.srcmap, f.srcmap()).unwrap();
    fs::write(&files.source, &f.source).unwrap();
    files
}

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evmbound")).args(args).output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
