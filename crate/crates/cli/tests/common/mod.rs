#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

const DOCS: [(&str, &str, &str); 4] = [
    (
        "biology",
        "cells.txt",
        "The heart pumps blood through the body. Veins return blood to the heart.\n\n\
         Bees pollinate flowers. A colony follows a single queen.\n\n\
         Leaves capture sunlight. Roots draw water from the soil.",
    ),
    (
        "biology",
        "ocean.txt",
        "Whales breathe air through a blowhole. Coral reefs shelter many fish.\n\n\
         Kelp forests grow in cold water. Sharks sense electric fields.",
    ),
    (
        "physics",
        "light.txt",
        "Lasers emit coherent light. Mirrors reflect photons back.\n\n\
         Prisms split white light into colors. Lenses bend light rays.",
    ),
    (
        "physics",
        "fields.txt",
        "Magnets attract iron filings. Superconductors expel magnetic fields.\n\n\
         Charges repel when alike. Currents create circular fields.",
    ),
];

/// A small two-domain corpus plus a config that fits the toy model.
pub struct Workspace {
    pub dir: tempfile::TempDir,
}

impl Workspace {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        for (domain, name, text) in DOCS {
            let d = dir.path().join("corpus").join(domain);
            fs::create_dir_all(&d).unwrap();
            fs::write(d.join(name), text).unwrap();
        }
        let cfg = serde_json::json!({
            "corpus": dir.path().join("corpus"),
            "out_dir": dir.path().join("out"),
            "split": { "target_size": 80, "overlap": 0 },
            "retrieval": { "theta": 0.3 },
            "model": { "d_model": 16, "n_layers": 1, "n_heads": 2, "d_ff": 32, "max_seq_len": 220 },
            "train": { "epochs": 2, "batch_size": 4, "lr": 1e-2, "n_experts": 4, "top_k": 2, "rank": 2, "alpha": 4.0 },
            "eval": { "max_new_tokens": 12 }
        });
        fs::write(
            dir.path().join("config.json"),
            serde_json::to_string_pretty(&cfg).unwrap(),
        )
        .unwrap();
        Workspace { dir }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn out(&self) -> PathBuf {
        self.path().join("out")
    }

    /// Runs `moral --config <ws>/config.json --stub-clients <args>`.
    pub fn run(&self, args: &[&str]) -> Output {
        let config = self.path().join("config.json");
        let mut full = vec!["--config", config.to_str().unwrap(), "--stub-clients"];
        full.extend_from_slice(args);
        moral(&full)
    }
}

pub fn moral(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moral")).args(args).output().unwrap()
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn sha256(path: &Path) -> String {
    let bytes = fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Relative path and digest of every file under `root`, sorted.
pub fn tree_digest(root: &Path) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, sha256(&path)));
            }
        }
    }
    out.sort();
    out
}
