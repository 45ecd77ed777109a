#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use react_cmg_core::corpus::{Corpus, DiffMessagePair};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_react-cmg"));
    for var in ["REACT_CMG_CONFIG", "REACT_CMG_API_KEY", "SOURCE_DATE_EPOCH", "RUST_LOG"] {
        cmd.env_remove(var);
    }
    cmd
}

pub fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn react-cmg")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn git(dir: &Path, args: &[&str]) -> String {
    let out = Command::new("git")
        .arg("-C")
        .arg(dir)
        .args(args)
        .env("GIT_AUTHOR_NAME", "Dev")
        .env("GIT_AUTHOR_EMAIL", "dev@example.com")
        .env("GIT_COMMITTER_NAME", "Dev")
        .env("GIT_COMMITTER_EMAIL", "dev@example.com")
        .env("GIT_EDITOR", "true")
        .env_remove("GIT_DIR")
        .env_remove("GIT_INDEX_FILE")
        .output()
        .expect("run git");
    assert!(out.status.success(), "git {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stdout).into_owned()
}

pub fn init_repo(dir: &Path) {
    git(dir, &["init", "-q"]);
    git(dir, &["config", "user.name", "Dev"]);
    git(dir, &["config", "user.email", "dev@example.com"]);
    git(dir, &["config", "commit.gpgsign", "false"]);
}

pub fn write_corpus(path: &Path, entries: Vec<DiffMessagePair>) -> Corpus {
    let c = Corpus::from_entries(entries).unwrap();
    c.write_jsonl(path).unwrap();
    c
}

/// Three repositories sharing vocabulary, so unrestricted retrieval often
/// crosses repository lines.
pub fn mixed_repo_entries() -> Vec<DiffMessagePair> {
    let repos = ["electron/electron", "acme/parser", "globex/ui"];
    let topics = [
        ("window resize handler", "fix window resize"),
        ("menu accelerator key", "support menu accelerators"),
        ("ipc channel message", "validate ipc messages"),
        ("tray icon click", "handle tray clicks"),
        ("crash reporter upload", "retry crash uploads"),
        ("dialog file filter", "add dialog filters"),
    ];
    let mut out = Vec::new();
    for (i, (diff, msg)) in topics.iter().enumerate() {
        for (j, repo) in repos.iter().enumerate() {
            let id = format!("{}-{i}", repo.replace('/', "_"));
            let body = format!("--- a/src/{j}.c\n+++ b/src/{j}.c\n- old {diff} {j}\n+ new {diff} v{j}\n");
            out.push(DiffMessagePair::new(id, body, format!("{msg} ({repo})")).with_repo(*repo));
        }
    }
    out
}
