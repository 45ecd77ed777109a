//! Thin wrappers over the `git` executable.

use std::path::{Path, PathBuf};
use std::process::Command;

use anyhow::{bail, Context};
use react_cmg_core::corpus::git::{parse_log, repo_slug_from_remote, LOG_FORMAT};
use react_cmg_core::corpus::GitRecord;

pub fn git(dir: &Path, args: &[&str]) -> anyhow::Result<String> {
    let out = Command::new("git")
        .arg("-C")
        .arg(dir)
        .args(args)
        .output()
        .context("cannot run git")?;
    if !out.status.success() {
        bail!("git {} failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim());
    }
    String::from_utf8(out.stdout).with_context(|| format!("git {} printed invalid UTF-8", args.join(" ")))
}

pub fn staged_diff(dir: &Path) -> anyhow::Result<String> {
    git(dir, &["diff", "--cached", "--no-color", "--no-ext-diff"])
}

/// Non-merge commits reachable from HEAD, newest first.
pub fn history(dir: &Path) -> anyhow::Result<Vec<GitRecord>> {
    let log = git(dir, &["log", "--no-merges", &format!("--format={LOG_FORMAT}")])?;
    parse_log(&log)?
        .into_iter()
        .map(|h| {
            let diff = git(dir, &["show", "--format=", "--no-color", "--no-ext-diff", &h.hash])?;
            Ok(h.with_diff(diff))
        })
        .collect()
}

/// `owner/name` of the `origin` remote, if there is one.
pub fn origin_slug(dir: &Path) -> Option<String> {
    git(dir, &["remote", "get-url", "origin"]).ok().and_then(|url| repo_slug_from_remote(url.trim()))
}

/// Repository slug for `dir`: the origin remote, else the top-level
/// directory name.
pub fn repo_slug(dir: &Path) -> anyhow::Result<String> {
    if let Some(slug) = origin_slug(dir) {
        return Ok(slug);
    }
    let top = PathBuf::from(git(dir, &["rev-parse", "--show-toplevel"])?.trim());
    Ok(top.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default())
}

pub fn hooks_dir(dir: &Path) -> anyhow::Result<PathBuf> {
    let p = PathBuf::from(git(dir, &["rev-parse", "--git-path", "hooks"])?.trim());
    Ok(if p.is_absolute() { p } else { dir.join(p) })
}
