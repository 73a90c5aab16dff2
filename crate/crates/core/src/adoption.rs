//! Adoption events and corpus-level distributions.
//!
//! A library is adopted by a project at the first commit, in graph order,
//! whose added lines reference it.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::Result;
use crate::imports::{replay_history, HistoryUsage, LibraryRef, Vocabulary};
use crate::ingest::OrderedHistory;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AdoptionEvent {
    pub repo_id: String,
    pub library: LibraryRef,
    pub timestamp: i64,
    /// 0-based position of the adopting commit in the ordered history.
    pub commit_index: usize,
    pub adopter: String,
}

/// Adoption events from an already replayed history, sorted by commit index
/// then library name.
pub fn adoptions_from_usage(history: &OrderedHistory, usage: &HistoryUsage, vocab: &Vocabulary) -> Vec<AdoptionEvent> {
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    let mut events = Vec::new();
    for (index, (commit, counts)) in history.commits.iter().zip(&usage.commits).enumerate() {
        // BTreeMap iteration keeps same-commit events in name order.
        for (lib, loc) in counts {
            if loc.added > 0 && seen.insert(lib.as_str()) {
                events.push(AdoptionEvent {
                    repo_id: history.repo_id.clone(),
                    library: vocab.library_ref(lib),
                    timestamp: commit.timestamp,
                    commit_index: index,
                    adopter: commit.author_id.clone(),
                });
            }
        }
    }
    events
}

pub fn detect_adoptions(history: &OrderedHistory, vocab: &Vocabulary) -> Vec<AdoptionEvent> {
    adoptions_from_usage(history, &replay_history(history), vocab)
}

/// Adoption counts at one commit index across the corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexAdoptions {
    pub commit_index: usize,
    pub mean: f64,
    pub median: f64,
    /// Number of projects that have a commit at this index.
    pub volume: u64,
}

/// Per-project facts needed by the corpus aggregates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectSummary {
    pub repo_id: String,
    pub commits: usize,
    pub team_size: usize,
    /// Adoption commit indices, one entry per adoption event.
    pub adoption_indices: Vec<usize>,
}

impl ProjectSummary {
    pub fn new(history: &OrderedHistory, events: &[AdoptionEvent]) -> Self {
        let authors: BTreeSet<&str> = history.commits.iter().map(|c| c.author_id.as_str()).collect();
        ProjectSummary {
            repo_id: history.repo_id.clone(),
            commits: history.len(),
            team_size: authors.len(),
            adoption_indices: events.iter().map(|e| e.commit_index).collect(),
        }
    }

    pub fn libraries(&self) -> usize {
        self.adoption_indices.len()
    }
}

/// Mean and median number of adoptions at each commit index, over projects
/// that reached that index.
pub fn adoptions_per_commit_profile(projects: &[ProjectSummary]) -> Vec<IndexAdoptions> {
    let max_len = projects.iter().map(|p| p.commits).max().unwrap_or(0);
    let mut per_index: Vec<Vec<f64>> = vec![Vec::new(); max_len];
    for p in projects {
        let mut counts = vec![0u64; p.commits];
        for &i in &p.adoption_indices {
            counts[i] += 1;
        }
        for (i, c) in counts.into_iter().enumerate() {
            per_index[i].push(c as f64);
        }
    }
    per_index
        .into_iter()
        .enumerate()
        .filter(|(_, v)| !v.is_empty())
        .map(|(i, v)| IndexAdoptions {
            commit_index: i,
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: stats::median(&v).expect("nonempty"),
            volume: v.len() as u64,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusDistributions {
    pub commits_per_project: BTreeMap<u64, f64>,
    pub libraries_per_project: BTreeMap<u64, f64>,
    pub team_size_per_project: BTreeMap<u64, f64>,
    pub adoptions_by_commit_index: Vec<IndexAdoptions>,
}

/// Team size is the number of distinct authors over the project lifetime.
pub fn corpus_distributions(projects: &[ProjectSummary]) -> Result<CorpusDistributions> {
    Ok(CorpusDistributions {
        commits_per_project: stats::pmf(projects.iter().map(|p| p.commits as u64))?,
        libraries_per_project: stats::pmf(projects.iter().map(|p| p.libraries() as u64))?,
        team_size_per_project: stats::pmf(projects.iter().map(|p| p.team_size as u64))?,
        adoptions_by_commit_index: adoptions_per_commit_profile(projects),
    })
}

/// Lifetime LOC facts of one adopted library in one project.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AdoptionLifetime {
    /// Referencing lines present at the end of history: added minus deleted
    /// from the adoption commit on.
    pub total_loc: i64,
    pub inserted: u64,
    pub deleted: u64,
    /// Commits from adoption on whose lines reference the library.
    pub touching_commits: u64,
}

impl AdoptionLifetime {
    pub fn from_usage(usage: &HistoryUsage, event: &AdoptionEvent) -> Self {
        let mut life = AdoptionLifetime::default();
        for counts in &usage.commits[event.commit_index..] {
            if let Some(loc) = counts.get(&event.library.name) {
                if loc.changed() > 0 {
                    life.inserted += loc.added;
                    life.deleted += loc.deleted;
                    life.touching_commits += 1;
                }
            }
        }
        life.total_loc = life.inserted as i64 - life.deleted as i64;
        life
    }
}

/// Summary statistics of adopted libraries' LOC.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdoptionStats {
    pub adoptions: u64,
    pub avg_loc: Option<f64>,
    pub median_loc: Option<f64>,
    /// Mean referencing lines inserted per commit touching the library.
    pub avg_inserted_loc: Option<f64>,
    pub avg_deleted_loc: Option<f64>,
}

pub fn adoption_stats(lifetimes: &[AdoptionLifetime]) -> AdoptionStats {
    let totals: Vec<f64> = lifetimes.iter().map(|l| l.total_loc as f64).collect();
    let touching: u64 = lifetimes.iter().map(|l| l.touching_commits).sum();
    let inserted: u64 = lifetimes.iter().map(|l| l.inserted).sum();
    let deleted: u64 = lifetimes.iter().map(|l| l.deleted).sum();
    let per_commit = |n: u64| (touching > 0).then(|| n as f64 / touching as f64);
    AdoptionStats {
        adoptions: lifetimes.len() as u64,
        avg_loc: (!totals.is_empty()).then(|| totals.iter().sum::<f64>() / totals.len() as f64),
        median_loc: stats::median(&totals).ok(),
        avg_inserted_loc: per_commit(inserted),
        avg_deleted_loc: per_commit(deleted),
    }
}
