//! Export of a local git repository into the commit-stream format.
//!
//! Runs the system `git` binary once over all refs and parses its patch
//! output. Merge commits are diffed against their first parent, renames are
//! not detected, and binary diffs are skipped.

use std::path::Path;
use std::process::Command;

use crate::error::{Error, Result};
use crate::ingest::{is_python_path, CommitRecord, FileDelta};

const RECORD_SEP: char = '\u{1e}';
const FIELD_SEP: char = '\u{1f}';

/// Normalized author identity: trimmed, lowercased email.
pub fn normalize_author(email: &str) -> String {
    email.trim().to_lowercase()
}

/// Reads every commit reachable from any ref of the repository at
/// `repo_path`. `repo_id` defaults to the directory name.
pub fn export_from_git(repo_path: &Path, repo_id: Option<&str>) -> Result<Vec<CommitRecord>> {
    let repo_id = match repo_id {
        Some(id) => id.to_string(),
        None => repo_path
            .canonicalize()
            .map_err(|e| Error::io(repo_path, e))?
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "repo".into()),
    };
    let output = Command::new("git")
        .arg("-C")
        .arg(repo_path)
        .args([
            "-c",
            "core.quotepath=off",
            "log",
            "--all",
            "--no-color",
            "--no-ext-diff",
            "--no-renames",
            "--diff-merges=first-parent",
            "--unified=0",
            "-p",
            "--format=%x1e%H%x1f%P%x1f%ae%x1f%at",
        ])
        .output()
        .map_err(|e| Error::Git(format!("cannot run git: {e}")))?;
    if !output.status.success() {
        return Err(Error::Git(format!(
            "git log failed in {}: {}",
            repo_path.display(),
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let text = String::from_utf8_lossy(&output.stdout);
    parse_git_log(&text, &repo_id)
}

/// Parses `git log -p` output produced with the record format used by
/// [`export_from_git`]. Commits are returned in git's output order.
pub fn parse_git_log(text: &str, repo_id: &str) -> Result<Vec<CommitRecord>> {
    let mut commits = Vec::new();
    for chunk in text.split(RECORD_SEP).skip(1) {
        let (header, patch) = chunk.split_once('\n').unwrap_or((chunk, ""));
        let fields: Vec<&str> = header.split(FIELD_SEP).collect();
        let [hash, parents, email, time] = fields[..] else {
            return Err(Error::Git(format!("unexpected log header {header:?}")));
        };
        let timestamp = time
            .trim()
            .parse()
            .map_err(|_| Error::Git(format!("bad timestamp {time:?} for {hash}")))?;
        commits.push(CommitRecord {
            repo_id: repo_id.to_string(),
            hash: hash.to_string(),
            parents: parents.split_whitespace().map(str::to_string).collect(),
            author_id: normalize_author(email),
            timestamp,
            deltas: parse_patch(patch)?,
        });
    }
    Ok(commits)
}

/// Extracts added and deleted lines of `.py` files from a unified diff.
///
/// Hunk bodies are consumed by the line counts in their `@@` headers, so
/// content lines that happen to start with `---` or `+++` are not mistaken
/// for file headers.
pub fn parse_patch(patch: &str) -> Result<Vec<FileDelta>> {
    let mut deltas: Vec<FileDelta> = Vec::new();
    let mut current: Option<FileDelta> = None;
    let mut old_path: Option<String> = None;
    let mut lines = patch.lines().peekable();

    let flush = |current: &mut Option<FileDelta>, deltas: &mut Vec<FileDelta>| {
        if let Some(d) = current.take() {
            if is_python_path(&d.path) && !(d.added_lines.is_empty() && d.deleted_lines.is_empty()) {
                deltas.push(d);
            }
        }
    };

    while let Some(line) = lines.next() {
        if let Some(rest) = line.strip_prefix("diff --git ") {
            flush(&mut current, &mut deltas);
            old_path = None;
            // Path from the header; replaced by the +++/--- lines when present.
            let path = rest.rsplit_once(" b/").map(|(_, b)| b.to_string()).unwrap_or_default();
            current = Some(FileDelta {
                path,
                added_lines: Vec::new(),
                deleted_lines: Vec::new(),
            });
        } else if let Some(p) = line.strip_prefix("--- ") {
            old_path = p.strip_prefix("a/").map(str::to_string);
        } else if let Some(p) = line.strip_prefix("+++ ") {
            if let Some(d) = current.as_mut() {
                match p.strip_prefix("b/") {
                    Some(new) => d.path = new.to_string(),
                    None => {
                        if let Some(old) = old_path.take() {
                            d.path = old;
                        }
                    }
                }
            }
        } else if line.starts_with("Binary files ") {
            // Binary content carries no source lines.
            if let Some(d) = current.as_mut() {
                d.added_lines.clear();
                d.deleted_lines.clear();
            }
        } else if let Some(header) = line.strip_prefix("@@ ") {
            let (del_count, add_count) =
                hunk_counts(header).ok_or_else(|| Error::Git(format!("malformed hunk header {line:?}")))?;
            let (mut del_left, mut add_left) = (del_count, add_count);
            while del_left + add_left > 0 {
                let Some(body) = lines.next_if(|l| l.starts_with(['-', '+', ' ', '\\']) || l.is_empty()) else {
                    break;
                };
                if let Some(text) = body.strip_prefix('-') {
                    del_left = del_left.saturating_sub(1);
                    if let Some(d) = current.as_mut() {
                        d.deleted_lines.push(text.to_string());
                    }
                } else if let Some(text) = body.strip_prefix('+') {
                    add_left = add_left.saturating_sub(1);
                    if let Some(d) = current.as_mut() {
                        d.added_lines.push(text.to_string());
                    }
                } else if body.starts_with(' ') || body.is_empty() {
                    del_left = del_left.saturating_sub(1);
                    add_left = add_left.saturating_sub(1);
                }
                // "\ No newline at end of file" consumes no count.
            }
            while lines.peek().is_some_and(|l| l.starts_with('\\')) {
                lines.next();
            }
        }
    }
    flush(&mut current, &mut deltas);
    Ok(deltas)
}

/// Old and new line counts from the part of a hunk header after `@@ `.
fn hunk_counts(header: &str) -> Option<(usize, usize)> {
    let mut parts = header.split_whitespace();
    let old = parts.next()?.strip_prefix('-')?;
    let new = parts.next()?.strip_prefix('+')?;
    let count = |range: &str| match range.split_once(',') {
        Some((_, n)) => n.parse().ok(),
        None => Some(1),
    };
    Some((count(old)?, count(new)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\u{1e}abc\u{1f}p1 p2\u{1f}Dev@Example.COM \u{1f}1700000000
diff --git a/main.py b/main.py
index 000..111 100644
--- a/main.py
+++ b/main.py
@@ -1,2 +1,0 @@
--- not a header
-import os
@@ -5,0 +3,2 @@ def f():
+import sys
++++ still content
diff --git a/img.png b/img.png
Binary files a/img.png and b/img.png differ
diff --git a/notes.txt b/notes.txt
--- a/notes.txt
+++ b/notes.txt
@@ -0,0 +1 @@
+hello
diff --git a/gone.py b/gone.py
deleted file mode 100644
--- a/gone.py
+++ /dev/null
@@ -1 +0,0 @@
-x = 1
\\ No newline at end of file
";

    #[test]
    fn parses_header_and_hunks() {
        let commits = parse_git_log(SAMPLE, "r").unwrap();
        assert_eq!(commits.len(), 1);
        let c = &commits[0];
        assert_eq!(c.hash, "abc");
        assert_eq!(c.parents, vec!["p1", "p2"]);
        assert_eq!(c.author_id, "dev@example.com");
        assert_eq!(c.timestamp, 1_700_000_000);
        assert_eq!(c.deltas.len(), 2);
        assert_eq!(c.deltas[0].path, "main.py");
        assert_eq!(c.deltas[0].deleted_lines, vec!["-- not a header", "import os"]);
        assert_eq!(c.deltas[0].added_lines, vec!["import sys", "+++ still content"]);
        assert_eq!(c.deltas[1].path, "gone.py");
        assert_eq!(c.deltas[1].deleted_lines, vec!["x = 1"]);
    }

    #[test]
    fn hunk_header_counts() {
        assert_eq!(hunk_counts("-1,2 +1,0 @@"), Some((2, 0)));
        assert_eq!(hunk_counts("-5 +3,2 @@ def f():"), Some((1, 2)));
        assert_eq!(hunk_counts("garbage"), None);
    }
}
