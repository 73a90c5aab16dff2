//! Commit-stream ingestion and commit-graph ordering.
//!
//! The canonical on-disk form of a repository history is a JSONL stream, one
//! commit per line:
//!
//! ```text
//! {"repo_id": "...", "hash": "...", "parents": ["..."], "author_id": "...",
//!  "timestamp": 1500000000, "deltas": [{"path": "a.py", "added": ["..."], "deleted": ["..."]}]}
//! ```
//!
//! Histories are ordered by parent pointers, not by wall-clock time.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lines added and removed in one Python file by one commit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDelta {
    pub path: String,
    #[serde(rename = "added")]
    pub added_lines: Vec<String>,
    #[serde(rename = "deleted")]
    pub deleted_lines: Vec<String>,
}

impl FileDelta {
    pub fn is_python(&self) -> bool {
        is_python_path(&self.path)
    }
}

pub fn is_python_path(path: &str) -> bool {
    path.ends_with(".py")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub repo_id: String,
    pub hash: String,
    pub parents: Vec<String>,
    pub author_id: String,
    pub timestamp: i64,
    pub deltas: Vec<FileDelta>,
}

/// Commits of one repository in topological order.
#[derive(Debug, Clone, Serialize)]
pub struct OrderedHistory {
    pub repo_id: String,
    pub commits: Vec<CommitRecord>,
    #[serde(skip)]
    pub index_of: HashMap<String, usize>,
    /// Parent hashes referenced by commits but absent from the stream.
    pub external_parents: BTreeSet<String>,
}

impl OrderedHistory {
    pub fn empty(repo_id: impl Into<String>) -> Self {
        OrderedHistory {
            repo_id: repo_id.into(),
            commits: Vec::new(),
            index_of: HashMap::new(),
            external_parents: BTreeSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.commits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.commits.is_empty()
    }

    pub fn position(&self, hash: &str) -> Option<usize> {
        self.index_of.get(hash).copied()
    }
}

// Mirrors the wire format with every field optional, so that a missing field
// is reported by name rather than by serde's positional message.
#[derive(Deserialize)]
struct WireCommit {
    repo_id: Option<String>,
    hash: Option<String>,
    parents: Option<Vec<String>>,
    author_id: Option<String>,
    timestamp: Option<i64>,
    deltas: Option<Vec<WireDelta>>,
}

#[derive(Deserialize)]
struct WireDelta {
    path: Option<String>,
    added: Option<Vec<String>>,
    deleted: Option<Vec<String>>,
}

fn required<T>(value: Option<T>, field: &str, line: usize) -> Result<T> {
    value.ok_or_else(|| Error::Stream {
        line,
        message: format!("missing required field `{field}`"),
    })
}

fn parse_line(text: &str, line: usize) -> Result<CommitRecord> {
    let wire: WireCommit = serde_json::from_str(text).map_err(|e| Error::Stream {
        line,
        message: format!("malformed JSON: {e}"),
    })?;
    let mut deltas = Vec::new();
    for d in required(wire.deltas, "deltas", line)? {
        let delta = FileDelta {
            path: required(d.path, "deltas.path", line)?,
            added_lines: required(d.added, "deltas.added", line)?,
            deleted_lines: required(d.deleted, "deltas.deleted", line)?,
        };
        if delta.is_python() {
            deltas.push(delta);
        }
    }
    Ok(CommitRecord {
        repo_id: required(wire.repo_id, "repo_id", line)?,
        hash: required(wire.hash, "hash", line)?,
        parents: required(wire.parents, "parents", line)?,
        author_id: required(wire.author_id, "author_id", line)?,
        timestamp: required(wire.timestamp, "timestamp", line)?,
        deltas,
    })
}

/// Parses a commit-stream JSONL document, grouping commits by `repo_id`.
///
/// Blank lines are skipped, non-Python deltas are dropped, and the input order
/// of each repository's commits is preserved. Line numbers in errors are
/// 1-based.
pub fn parse_commit_stream<R: BufRead>(input: R) -> Result<BTreeMap<String, Vec<CommitRecord>>> {
    let mut repos: BTreeMap<String, Vec<CommitRecord>> = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let text = line.map_err(|e| Error::Stream {
            line: line_no,
            message: e.to_string(),
        })?;
        if text.trim().is_empty() {
            continue;
        }
        let record = parse_line(&text, line_no)?;
        repos.entry(record.repo_id.clone()).or_default().push(record);
    }
    Ok(repos)
}

/// Serializes commits back into the JSONL wire format.
pub fn write_commit_stream<W: std::io::Write>(out: &mut W, commits: &[CommitRecord]) -> Result<()> {
    for c in commits {
        serde_json::to_writer(&mut *out, c)?;
        out.write_all(b"\n").map_err(|e| Error::io("<commit stream>", e))?;
    }
    Ok(())
}

/// Orders a repository's commits so that every in-stream parent precedes its
/// children.
///
/// Kahn's algorithm; among ready commits the one with the smallest
/// `(timestamp, hash)` goes first, which makes the order a pure function of
/// the input set. Parents missing from the stream are recorded as external
/// boundary commits. Timestamps need not be monotone in the result.
pub fn enforce_monotonic_order(commits: Vec<CommitRecord>) -> Result<OrderedHistory> {
    let repo_id = commits.first().map(|c| c.repo_id.clone()).unwrap_or_default();
    let mut slot_of: HashMap<&str, usize> = HashMap::with_capacity(commits.len());
    for (i, c) in commits.iter().enumerate() {
        if slot_of.insert(c.hash.as_str(), i).is_some() {
            return Err(Error::DuplicateCommit {
                repo_id,
                hash: c.hash.clone(),
            });
        }
    }

    let mut external_parents = BTreeSet::new();
    let mut pending = vec![0usize; commits.len()];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); commits.len()];
    for (i, c) in commits.iter().enumerate() {
        // A commit listing the same parent twice still waits on it once.
        let distinct: BTreeSet<&str> = c.parents.iter().map(String::as_str).collect();
        for p in distinct {
            match slot_of.get(p) {
                Some(&j) => {
                    pending[i] += 1;
                    children[j].push(i);
                }
                None => {
                    external_parents.insert(p.to_string());
                }
            }
        }
    }
    if !external_parents.is_empty() {
        log::warn!(
            "{repo_id}: {} parent(s) outside the stream treated as boundary commits",
            external_parents.len()
        );
    }

    let key = |i: usize| Reverse((commits[i].timestamp, commits[i].hash.as_str(), i));
    let mut ready: BinaryHeap<_> = (0..commits.len()).filter(|&i| pending[i] == 0).map(key).collect();
    let mut order = Vec::with_capacity(commits.len());
    while let Some(Reverse((_, _, i))) = ready.pop() {
        order.push(i);
        for &child in &children[i] {
            pending[child] -= 1;
            if pending[child] == 0 {
                ready.push(key(child));
            }
        }
    }

    if order.len() != commits.len() {
        let hash = cycle_member(&commits, &slot_of, &pending);
        return Err(Error::Cycle { repo_id, hash });
    }

    let mut slots: Vec<Option<CommitRecord>> = commits.into_iter().map(Some).collect();
    let ordered: Vec<CommitRecord> = order
        .into_iter()
        .map(|i| slots[i].take().expect("each slot emitted once"))
        .collect();
    let index_of = ordered.iter().enumerate().map(|(i, c)| (c.hash.clone(), i)).collect();
    Ok(OrderedHistory {
        repo_id,
        commits: ordered,
        index_of,
        external_parents,
    })
}

/// Walks parent pointers among the commits Kahn's algorithm could not emit
/// until a commit repeats; that commit lies on a cycle.
fn cycle_member(commits: &[CommitRecord], slot_of: &HashMap<&str, usize>, pending: &[usize]) -> String {
    let start = (0..commits.len())
        .filter(|&i| pending[i] > 0)
        .min_by(|&a, &b| commits[a].hash.cmp(&commits[b].hash))
        .expect("a cycle leaves commits pending");
    let mut seen = BTreeSet::new();
    let mut cur = start;
    while seen.insert(cur) {
        cur = commits[cur]
            .parents
            .iter()
            .filter_map(|p| slot_of.get(p.as_str()).copied())
            .filter(|&j| pending[j] > 0)
            .min_by(|&a, &b| commits[a].hash.cmp(&commits[b].hash))
            .expect("a blocked commit has a blocked parent");
    }
    commits[cur].hash.clone()
}
