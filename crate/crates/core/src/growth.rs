//! Post-adoption usage series and the multiplicative growth index.
//!
//! For a library adopted at commit `x = 0`, `n_x` is the number of changed
//! (added plus deleted) lines referencing it in the `x`-th project commit
//! after adoption. The growth index is
//!
//! ```text
//! y_0 = 1,   y_x = y_{x-1} * (S_{x-1} + n_x) / S_{x-1},   S_k = n_0 + ... + n_k
//! ```
//!
//! which telescopes to `y_x = S_x / n_0`. Curves keep the integer partial sums
//! and evaluate that closed form, so the identity holds to one rounding.

use std::fmt;

use serde::Serialize;

use crate::adoption::AdoptionEvent;
use crate::error::{Error, Result};
use crate::imports::HistoryUsage;
use crate::ingest::OrderedHistory;
use crate::stats;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UsageEntry {
    /// Commits since adoption; 0 is the adoption commit.
    pub x: usize,
    pub author_id: String,
    pub added: u64,
    pub deleted: u64,
}

impl UsageEntry {
    pub fn net(&self) -> i64 {
        self.added as i64 - self.deleted as i64
    }

    pub fn changed(&self) -> u64 {
        self.added + self.deleted
    }

    pub fn touches(&self) -> bool {
        self.changed() > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UsageSeries {
    pub repo_id: String,
    pub library: String,
    pub adoption_time: i64,
    pub entries: Vec<UsageEntry>,
}

impl UsageSeries {
    pub fn changed(&self) -> Vec<u64> {
        self.entries.iter().map(UsageEntry::changed).collect()
    }
}

/// Usage of the event's library in every project commit from adoption up to
/// `horizon` commits later (all remaining commits when `horizon` is `None`).
pub fn build_usage_series(
    history: &OrderedHistory,
    usage: &HistoryUsage,
    event: &AdoptionEvent,
    horizon: Option<usize>,
) -> UsageSeries {
    let start = event.commit_index;
    let end = match horizon {
        Some(h) => (start + h + 1).min(history.len()),
        None => history.len(),
    };
    let entries = (start..end)
        .map(|i| {
            let loc = usage.loc(i, &event.library.name);
            UsageEntry {
                x: i - start,
                author_id: history.commits[i].author_id.clone(),
                added: loc.added,
                deleted: loc.deleted,
            }
        })
        .collect();
    UsageSeries {
        repo_id: history.repo_id.clone(),
        library: event.library.name.clone(),
        adoption_time: event.timestamp,
        entries,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrowthCurve {
    base: u64,
    cumulative: Vec<u64>,
}

impl GrowthCurve {
    /// Curve of a changed-lines series; `n[0]` must be positive.
    pub fn from_changes(changes: &[u64]) -> Result<Self> {
        let base = changes.first().copied().unwrap_or(0);
        if base == 0 {
            return Err(Error::Invalid(
                "growth curve needs changed lines in the adoption commit".into(),
            ));
        }
        let cumulative = changes
            .iter()
            .scan(0u64, |s, &n| {
                *s += n;
                Some(*s)
            })
            .collect();
        Ok(GrowthCurve { base, cumulative })
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    /// `S_x`, the changed lines from adoption through commit `x`.
    pub fn partial_sum(&self, x: usize) -> Option<u64> {
        self.cumulative.get(x).copied()
    }

    pub fn y(&self, x: usize) -> Option<f64> {
        self.partial_sum(x).map(|s| s as f64 / self.base as f64)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).filter_map(|x| self.y(x)).collect()
    }
}

pub fn growth_curve(series: &UsageSeries) -> Result<GrowthCurve> {
    GrowthCurve::from_changes(&series.changed())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum TeamBucket {
    One,
    Two,
    ThreeToFive,
    SixToNine,
    TenPlus,
}

impl TeamBucket {
    pub const ALL: [TeamBucket; 5] = [
        TeamBucket::One,
        TeamBucket::Two,
        TeamBucket::ThreeToFive,
        TeamBucket::SixToNine,
        TeamBucket::TenPlus,
    ];

    pub fn of(team_size: usize) -> Self {
        match team_size {
            0 | 1 => TeamBucket::One,
            2 => TeamBucket::Two,
            3..=5 => TeamBucket::ThreeToFive,
            6..=9 => TeamBucket::SixToNine,
            _ => TeamBucket::TenPlus,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            TeamBucket::One => "1",
            TeamBucket::Two => "2",
            TeamBucket::ThreeToFive => "3-5",
            TeamBucket::SixToNine => "6-9",
            TeamBucket::TenPlus => "10+",
        }
    }
}

impl fmt::Display for TeamBucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileRow {
    pub group: String,
    pub x: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub volume: u64,
}

/// Values at `x` of every curve that reaches `x`, sorted.
fn column<'a, I>(curves: I, x: usize) -> Vec<f64>
where
    I: IntoIterator<Item = &'a GrowthCurve>,
{
    let mut v: Vec<f64> = curves.into_iter().filter_map(|c| c.y(x)).collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Per-index quartiles of each group's curves. Groups without curves are
/// omitted; output follows the order of `groups`.
pub fn growth_quantiles(groups: &[(String, Vec<&GrowthCurve>)]) -> Vec<QuantileRow> {
    let mut rows = Vec::new();
    for (group, curves) in groups {
        let longest = curves.iter().map(|c| c.len()).max().unwrap_or(0);
        for x in 0..longest {
            let col = column(curves.iter().copied(), x);
            rows.push(QuantileRow {
                group: group.clone(),
                x,
                q1: stats::quantile_sorted(&col, 0.25),
                median: stats::quantile_sorted(&col, 0.5),
                q3: stats::quantile_sorted(&col, 0.75),
                volume: col.len() as u64,
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PctChangeRow {
    pub group: String,
    pub x: usize,
    pub median_pct_change: f64,
    pub volume: u64,
}

/// Per-index median of `100 * (y_x - 1)`.
pub fn median_pct_change(groups: &[(String, Vec<&GrowthCurve>)]) -> Vec<PctChangeRow> {
    let mut rows = Vec::new();
    for (group, curves) in groups {
        let longest = curves.iter().map(|c| c.len()).max().unwrap_or(0);
        for x in 0..longest {
            let mut pct: Vec<f64> = curves
                .iter()
                .filter_map(|c| c.y(x))
                .map(|y| 100.0 * (y - 1.0))
                .collect();
            pct.sort_by(f64::total_cmp);
            rows.push(PctChangeRow {
                group: group.clone(),
                x,
                median_pct_change: stats::quantile_sorted(&pct, 0.5),
                volume: pct.len() as u64,
            });
        }
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub bucket: TeamBucket,
    pub x: usize,
    pub mean_add: f64,
    pub ci_add: f64,
    /// Mean deleted lines, reported as a negative number.
    pub mean_del: f64,
    pub ci_del: f64,
    pub mean_net: f64,
    pub volume: u64,
}

/// Mean additions, deletions and net usage per commit after adoption, with
/// 95% half-widths, for each team-size bucket.
pub fn post_adoption_profile(buckets: &[(TeamBucket, Vec<&UsageSeries>)]) -> Vec<ProfileRow> {
    let mut rows = Vec::new();
    for (bucket, series) in buckets {
        let longest = series.iter().map(|s| s.entries.len()).max().unwrap_or(0);
        for x in 0..longest {
            let at: Vec<&UsageEntry> = series.iter().filter_map(|s| s.entries.get(x)).collect();
            let added: Vec<f64> = at.iter().map(|e| e.added as f64).collect();
            let deleted: Vec<f64> = at.iter().map(|e| e.deleted as f64).collect();
            let net: Vec<f64> = at.iter().map(|e| e.net() as f64).collect();
            let (mean_add, ci_add) = stats::mean_ci(&added);
            let (mean_del, ci_del) = stats::mean_ci(&deleted);
            let (mean_net, _) = stats::mean_ci(&net);
            rows.push(ProfileRow {
                bucket: *bucket,
                x,
                mean_add,
                ci_add,
                mean_del: -mean_del,
                ci_del,
                mean_net,
                volume: at.len() as u64,
            });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imports::{replay_history, Vocabulary};
    use crate::ingest::{enforce_monotonic_order, CommitRecord, FileDelta};

    fn curve(n: &[u64]) -> GrowthCurve {
        GrowthCurve::from_changes(n).unwrap()
    }

    fn history(commits: &[(&str, &[&str], &[&str])]) -> OrderedHistory {
        let records = commits
            .iter()
            .enumerate()
            .map(|(i, (author, added, deleted))| CommitRecord {
                repo_id: "p".into(),
                hash: format!("h{i:03}"),
                parents: if i == 0 { vec![] } else { vec![format!("h{:03}", i - 1)] },
                author_id: author.to_string(),
                timestamp: i as i64,
                deltas: vec![FileDelta {
                    path: "m.py".into(),
                    added_lines: added.iter().map(|s| s.to_string()).collect(),
                    deleted_lines: deleted.iter().map(|s| s.to_string()).collect(),
                }],
            })
            .collect();
        enforce_monotonic_order(records).unwrap()
    }

    fn series_of(h: &OrderedHistory, horizon: Option<usize>) -> UsageSeries {
        let usage = replay_history(h);
        let events = crate::adoption::adoptions_from_usage(h, &usage, &Vocabulary::bundled());
        build_usage_series(h, &usage, &events[0], horizon)
    }

    fn entry(x: usize, author: &str, added: u64, deleted: u64) -> UsageEntry {
        UsageEntry {
            x,
            author_id: author.into(),
            added,
            deleted,
        }
    }

    #[test]
    fn series_includes_untouched_commits() {
        let h = history(&[("a", &["import os", "os.x()"], &[]), ("b", &["y = 2"], &[])]);
        let s = series_of(&h, None);
        assert_eq!(s.entries, vec![entry(0, "a", 2, 0), entry(1, "b", 0, 0)]);
    }

    #[test]
    fn series_records_deletions() {
        let h = history(&[("a", &["import os", "os.x()"], &[]), ("b", &[], &["os.x()"])]);
        let s = series_of(&h, None);
        assert_eq!(s.entries[1], entry(1, "b", 0, 1));
        assert_eq!(s.entries[1].net(), -1);
    }

    #[test]
    fn zero_horizon_keeps_adoption_only() {
        let h = history(&[("a", &["import os"], &[]), ("b", &["os.x()"], &[])]);
        assert_eq!(series_of(&h, Some(0)).entries.len(), 1);
        assert_eq!(series_of(&h, Some(5)).entries.len(), 2);
    }

    #[test]
    fn growth_examples() {
        assert_eq!(curve(&[4]).values(), vec![1.0]);
        assert_eq!(curve(&[4, 2]).values(), vec![1.0, 1.5]);
        assert_eq!(curve(&[10, 0, 5]).values(), vec![1.0, 1.0, 1.5]);
        assert!(GrowthCurve::from_changes(&[0, 3]).is_err());
        assert!(GrowthCurve::from_changes(&[]).is_err());
    }

    #[test]
    fn growth_matches_recurrence() {
        // Direct evaluation of the multiplicative recurrence.
        let n = [3u64, 1, 0, 7, 2, 0, 11];
        let mut y = vec![1.0f64];
        let mut s = n[0] as f64;
        for &nx in &n[1..] {
            let prev = *y.last().unwrap();
            y.push(prev * (s + nx as f64) / s);
            s += nx as f64;
        }
        for (a, b) in curve(&n).values().iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn quantile_examples() {
        let c = curve(&[1, 1]);
        let rows = growth_quantiles(&[("g".into(), vec![&c])]);
        assert_eq!(rows.len(), 2);
        assert_eq!((rows[1].q1, rows[1].median, rows[1].q3), (2.0, 2.0, 2.0));

        // y_5 in {1, 2, 3}.
        let a = curve(&[1, 0, 0, 0, 0, 0]);
        let b = curve(&[1, 0, 0, 0, 0, 1]);
        let c = curve(&[1, 0, 0, 0, 0, 2]);
        let rows = growth_quantiles(&[("g".into(), vec![&a, &b, &c])]);
        let r5 = &rows[5];
        assert_eq!((r5.q1, r5.median, r5.q3, r5.volume), (1.5, 2.0, 2.5, 3));
    }

    #[test]
    fn quantiles_skip_empty_groups_and_dead_curves() {
        let long = curve(&[1, 1, 1]);
        let short = curve(&[2]);
        let rows = growth_quantiles(&[("e".into(), vec![]), ("g".into(), vec![&long, &short])]);
        assert!(rows.iter().all(|r| r.group == "g"));
        assert_eq!(rows.iter().map(|r| r.volume).collect::<Vec<_>>(), vec![2, 1, 1]);
    }

    #[test]
    fn pct_change_examples() {
        let c = curve(&[2, 1]);
        let rows = median_pct_change(&[("1".into(), vec![&c])]);
        assert_eq!(rows[1].median_pct_change, 50.0);

        let a = curve(&[5, 0]);
        let b = curve(&[5, 1]);
        let c = curve(&[5, 5]);
        let rows = median_pct_change(&[("1".into(), vec![&a, &b, &c])]);
        assert!((rows[1].median_pct_change - 20.0).abs() < 1e-12);
    }

    fn series(entries: Vec<UsageEntry>) -> UsageSeries {
        UsageSeries {
            repo_id: "p".into(),
            library: "l".into(),
            adoption_time: 0,
            entries,
        }
    }

    #[test]
    fn profile_examples() {
        let s1 = series(vec![entry(0, "a", 1, 0), entry(1, "a", 2, 0)]);
        let s2 = series(vec![entry(0, "a", 1, 0), entry(1, "a", 2, 0)]);
        let rows = post_adoption_profile(&[(TeamBucket::One, vec![&s1, &s2])]);
        assert_eq!((rows[1].mean_add, rows[1].ci_add), (2.0, 0.0));

        let s1 = series(vec![entry(0, "a", 1, 0), entry(1, "a", 1, 2)]);
        let s2 = series(vec![entry(0, "a", 1, 0), entry(1, "a", 3, 0)]);
        let rows = post_adoption_profile(&[(TeamBucket::Two, vec![&s1, &s2])]);
        assert_eq!(rows[1].mean_add, 2.0);
        assert!((rows[1].ci_add - 1.96).abs() < 1e-12);
        assert_eq!(rows[1].mean_del, -1.0);
        assert_eq!(rows[1].mean_net, 1.0);
        assert_eq!(rows[1].volume, 2);
    }

    #[test]
    fn team_buckets() {
        let got: Vec<_> = [1, 2, 3, 5, 6, 9, 10, 40]
            .iter()
            .map(|&n| TeamBucket::of(n).label())
            .collect();
        assert_eq!(got, vec!["1", "2", "3-5", "3-5", "6-9", "6-9", "10+", "10+"]);
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn curve_is_monotone(head in 1u64..50, tail in prop::collection::vec(0u64..50, 0..100)) {
                let mut n = vec![head];
                n.extend(tail);
                let y = GrowthCurve::from_changes(&n).unwrap().values();
                prop_assert_eq!(y[0], 1.0);
                prop_assert!(y.windows(2).all(|w| w[0] <= w[1]));
            }

            #[test]
            fn identical_curves_are_their_own_quartiles(
                head in 1u64..20,
                tail in prop::collection::vec(0u64..20, 0..30),
                copies in 1usize..6,
            ) {
                let mut n = vec![head];
                n.extend(tail);
                let c = GrowthCurve::from_changes(&n).unwrap();
                let rows = growth_quantiles(&[("g".into(), vec![&c; copies])]);
                for (row, y) in rows.iter().zip(c.values()) {
                    prop_assert_eq!((row.q1, row.median, row.q3), (y, y, y));
                }
            }
        }
    }
}
