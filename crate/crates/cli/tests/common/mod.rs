#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mspf::config::ConfigFile;
use sha2::{Digest, Sha256};

pub fn mspf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mspf"))
        .args(args)
        .env("MSPF_THREADS", "2")
        .output()
        .expect("run mspf binary")
}

/// The first study shrunk to a few fine and coarse steps.
pub fn small_sim1(fine: usize, coarse: usize) -> ConfigFile {
    let mut file = mspf::presets::sim1_file().unwrap();
    file.scales[0].horizon = fine;
    file.scales[0].summary_weights = Some(vec![1.0; fine]);
    file.scales[1].horizon = coarse;
    file
}

pub fn write_config(dir: &Path, name: &str, file: &ConfigFile) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, file.to_toml().unwrap()).unwrap();
    path
}

/// SHA-256 of every file below `root`, keyed by relative path.
pub fn digest_tree(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let hash = Sha256::digest(fs::read(&path).unwrap());
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, hash.iter().map(|b| format!("{b:02x}")).collect());
            }
        }
    }
    out
}
