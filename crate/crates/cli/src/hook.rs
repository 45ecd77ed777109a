use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use crate::git;

pub const HOOK_NAME: &str = "prepare-commit-msg";
pub const MARKER: &str = "# managed by react-cmg hook-install";

fn sh_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Hook body. It only writes a suggestion when the message file holds
/// nothing but comments and blank lines, and it never fails the commit.
pub fn script(binary: &Path, project: &str, global_args: &[String], generate_args: &[String]) -> String {
    let quoted = |args: &[String]| args.iter().map(|a| format!(" {}", sh_quote(a))).collect::<String>();
    let cmd = format!(
        "{}{} generate --from-staged --project-only {}{}",
        sh_quote(&binary.display().to_string()),
        quoted(global_args),
        sh_quote(project),
        quoted(generate_args)
    );
    format!(
        r#"#!/bin/sh
{MARKER}
msg_file="$1"
if grep -v '^#' "$msg_file" | grep -q '[^[:space:]]'; then
    exit 0
fi
suggestion=$({cmd}) || exit 0
[ -n "$suggestion" ] || exit 0
tmp="$msg_file.react-cmg"
{{ printf '%s\n' "$suggestion"; cat "$msg_file"; }} > "$tmp" && mv "$tmp" "$msg_file"
exit 0
"#
    )
}

fn is_ours(path: &Path) -> bool {
    fs::read_to_string(path).is_ok_and(|s| s.lines().any(|l| l == MARKER))
}

pub fn install(
    repo: &Path,
    project: &str,
    global_args: &[String],
    generate_args: &[String],
    force: bool,
) -> anyhow::Result<PathBuf> {
    let dir = git::hooks_dir(repo)?;
    let path = dir.join(HOOK_NAME);
    if path.exists() && !is_ours(&path) && !force {
        bail!("{} exists and was not installed by react-cmg; use --force to replace it", path.display());
    }
    let binary = std::env::current_exe().context("cannot locate the react-cmg executable")?;
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    fs::write(&path, script(&binary, project, global_args, generate_args)).with_context(|| format!("cannot write {}", path.display()))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(&path, fs::Permissions::from_mode(0o755))?;
    }
    Ok(path)
}

/// Removes our hook. Returns `None` when there was nothing to remove.
pub fn uninstall(repo: &Path, force: bool) -> anyhow::Result<Option<PathBuf>> {
    let path = git::hooks_dir(repo)?.join(HOOK_NAME);
    if !path.exists() {
        return Ok(None);
    }
    if !is_ours(&path) && !force {
        bail!("{} was not installed by react-cmg; use --force to remove it", path.display());
    }
    fs::remove_file(&path).with_context(|| format!("cannot remove {}", path.display()))?;
    Ok(Some(path))
}
