//! Code-fight detection over post-adoption usage series.
//!
//! The commits touching a library after its adoption are split into rounds:
//! maximal runs by one author. With `n^{<=r}` the running net LOC through
//! round `r`, a fight fires at the first round `r >= 1` whose running total
//! drops by at least a fraction `epsilon` of the previous one:
//!
//! ```text
//! n^{<=r} <= (1 - epsilon) * n^{<=(r-1)},   n^{<=(r-1)} > 0
//! ```
//!
//! The opposite inequality is available as [`FightMode::AsPrinted`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::growth::UsageSeries;
use crate::ingest::OrderedHistory;

const PPM: i128 = 1_000_000;

/// A fight threshold in (0, 1), held exactly in parts per million.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Epsilon(u32);

impl Epsilon {
    pub fn from_ppm(ppm: u32) -> Result<Self> {
        if ppm == 0 || ppm as i128 >= PPM {
            return Err(Error::Invalid(format!(
                "epsilon must lie strictly between 0 and 1, got {}",
                ppm as f64 / PPM as f64
            )));
        }
        Ok(Epsilon(ppm))
    }

    pub fn ppm(self) -> u32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / PPM as f64
    }

    /// The default threshold set 0.1, 0.2, 0.3, 0.4, 0.5.
    pub fn standard_set() -> Vec<Epsilon> {
        (1..=5).map(|k| Epsilon(k * 100_000)).collect()
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Invalid(format!("cannot parse epsilon {s:?}"));
        let s = s.trim();
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 6 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let int: u32 = if int.is_empty() {
            0
        } else {
            int.parse().map_err(|_| bad())?
        };
        let frac_ppm: u32 = if frac.is_empty() {
            0
        } else {
            format!("{frac:0<6}").parse().map_err(|_| bad())?
        };
        let ppm = int
            .checked_mul(PPM as u32)
            .and_then(|v| v.checked_add(frac_ppm))
            .ok_or_else(bad)?;
        Epsilon::from_ppm(ppm)
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let frac = format!("{:06}", self.0);
        write!(f, "0.{}", frac.trim_end_matches('0'))
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Direction of the fight inequality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FightMode {
    /// Running total fell to at most `(1 - epsilon)` of its previous value.
    #[default]
    Reduction,
    /// `(1 - epsilon) * n^{<=(r-1)} <= n^{<=r}`, taken literally.
    AsPrinted,
}

impl FromStr for FightMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reduction" => Ok(FightMode::Reduction),
            "as-printed" => Ok(FightMode::AsPrinted),
            other => Err(Error::Invalid(format!(
                "unknown fight inequality {other:?} (expected reduction or as-printed)"
            ))),
        }
    }
}

impl fmt::Display for FightMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FightMode::Reduction => "reduction",
            FightMode::AsPrinted => "as-printed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Round {
    pub index: usize,
    pub author_id: String,
    pub first_x: usize,
    pub last_x: usize,
    pub commits: usize,
    /// Net referencing LOC over the round's commits.
    pub net: i64,
}

/// Maximal same-author runs over the commits that reference the library.
/// Commits that do not reference it never split a round.
pub fn segment_rounds(series: &UsageSeries) -> Vec<Round> {
    let mut rounds: Vec<Round> = Vec::new();
    for e in series.entries.iter().filter(|e| e.touches()) {
        match rounds.last_mut() {
            Some(r) if r.author_id == e.author_id => {
                r.last_x = e.x;
                r.commits += 1;
                r.net += e.net();
            }
            _ => rounds.push(Round {
                index: rounds.len(),
                author_id: e.author_id.clone(),
                first_x: e.x,
                last_x: e.x,
                commits: 1,
                net: e.net(),
            }),
        }
    }
    rounds
}

/// Running totals `n^{<=r}`.
pub fn running_totals(rounds: &[Round]) -> Vec<i64> {
    rounds
        .iter()
        .scan(0i64, |s, r| {
            *s += r.net;
            Some(*s)
        })
        .collect()
}

/// First round at which the fight condition holds.
pub fn detect_fight(running: &[i64], epsilon: Epsilon, mode: FightMode) -> Option<usize> {
    let keep = PPM - epsilon.ppm() as i128;
    (1..running.len()).find(|&r| {
        let prev = running[r - 1] as i128;
        let cur = running[r] as i128;
        prev > 0
            && match mode {
                FightMode::Reduction => cur * PPM <= keep * prev,
                FightMode::AsPrinted => keep * prev <= cur * PPM,
            }
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FightTrace {
    pub repo_id: String,
    pub library: String,
    pub rounds: Vec<Round>,
    pub running: Vec<i64>,
    /// Distinct round authors in order of first appearance.
    pub participants: Vec<String>,
    pub adopter_id: String,
    /// Time of the adoption commit, where the first round starts.
    pub start_time: i64,
}

impl FightTrace {
    /// `None` when no commit references the library.
    pub fn from_series(series: &UsageSeries) -> Option<Self> {
        let rounds = segment_rounds(series);
        let adopter_id = rounds.first()?.author_id.clone();
        let mut participants: Vec<String> = Vec::new();
        for r in &rounds {
            if !participants.contains(&r.author_id) {
                participants.push(r.author_id.clone());
            }
        }
        Some(FightTrace {
            repo_id: series.repo_id.clone(),
            library: series.library.clone(),
            running: running_totals(&rounds),
            rounds,
            participants,
            adopter_id,
            start_time: series.adoption_time,
        })
    }

    pub fn fired_at(&self, epsilon: Epsilon, mode: FightMode) -> Option<usize> {
        detect_fight(&self.running, epsilon, mode)
    }

    pub fn is_two_person(&self) -> bool {
        self.participants.len() == 2
    }

    /// Author of the last round referencing the library.
    pub fn winner(&self) -> &str {
        &self.rounds.last().expect("a trace has at least one round").author_id
    }
}

/// Fights per 100,000 commits; `None` for an empty corpus.
pub fn fight_rate(fights: usize, total_commits: u64) -> Option<f64> {
    (total_commits > 0).then(|| fights as f64 * 100_000.0 / total_commits as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundMean {
    pub round: usize,
    pub mean_net: f64,
    pub volume: u64,
}

/// Mean net LOC per round position over two-person fights, up to `depth`
/// rounds. The adopter holds the even positions.
pub fn round_profile(fights: &[&FightTrace], depth: usize) -> Vec<RoundMean> {
    let mut sums: Vec<(i64, u64)> = vec![(0, 0); depth];
    for t in fights.iter().filter(|t| t.is_two_person()) {
        for r in t.rounds.iter().take(depth) {
            sums[r.index].0 += r.net;
            sums[r.index].1 += 1;
        }
    }
    sums.into_iter()
        .enumerate()
        .filter(|(_, (_, n))| *n > 0)
        .map(|(round, (s, n))| RoundMean {
            round,
            mean_net: s as f64 / n as f64,
            volume: n,
        })
        .collect()
}

/// Time of every author's first commit anywhere in the corpus.
#[derive(Debug, Clone, Default)]
pub struct ExperienceLedger {
    first_commit: HashMap<String, i64>,
}

impl ExperienceLedger {
    pub fn from_histories<'a, I>(histories: I) -> Self
    where
        I: IntoIterator<Item = &'a OrderedHistory>,
    {
        let mut ledger = ExperienceLedger::default();
        for h in histories {
            for c in &h.commits {
                ledger.observe(&c.author_id, c.timestamp);
            }
        }
        ledger
    }

    pub fn observe(&mut self, author: &str, t: i64) {
        self.first_commit
            .entry(author.to_string())
            .and_modify(|f| *f = (*f).min(t))
            .or_insert(t);
    }

    /// Merges another ledger, keeping the earlier time per author.
    pub fn merge(&mut self, other: &ExperienceLedger) {
        for (a, &t) in &other.first_commit {
            self.observe(a, t);
        }
    }

    pub fn first_commit(&self, author: &str) -> Option<i64> {
        self.first_commit.get(author).copied()
    }

    /// Seconds since the author's first commit, negative when `t` precedes it.
    pub fn experience(&self, author: &str, t: i64) -> Result<i64> {
        self.first_commit(author)
            .map(|first| t - first)
            .ok_or_else(|| Error::UnknownAuthor(author.to_string()))
    }
}

pub const DAY: i64 = 86_400;
pub const WEEK: i64 = 7 * DAY;

/// Default experience-gap bucket edges in seconds: under a day, a day to a
/// week, a week to thirty days, longer.
pub fn default_gap_edges() -> Vec<i64> {
    vec![DAY, WEEK, 30 * DAY]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapBucket {
    pub min_gap_seconds: i64,
    pub max_gap_seconds: Option<i64>,
    pub fights: u64,
    pub experienced_wins: u64,
    pub win_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperienceWinReport {
    pub fights: u64,
    pub experienced_wins: u64,
    pub win_fraction: Option<f64>,
    /// Two-person fights whose participants had equal experience.
    pub ties: u64,
    pub buckets: Vec<GapBucket>,
}

/// Signed experience gap of a two-person fight: winner's experience minus
/// the other participant's, both at the fight's start.
pub fn experience_gap(trace: &FightTrace, ledger: &ExperienceLedger) -> Result<Option<i64>> {
    if !trace.is_two_person() {
        return Ok(None);
    }
    let winner = trace.winner();
    let loser = trace
        .participants
        .iter()
        .find(|p| p.as_str() != winner)
        .expect("two participants");
    let t = trace.start_time;
    Ok(Some(ledger.experience(winner, t)? - ledger.experience(loser, t)?))
}

/// Probability that the more experienced participant of a two-person fight
/// wins, overall and per bucket of absolute experience gap. `edges` are the
/// ascending inner bucket boundaries in seconds.
pub fn experience_win_analysis(
    fights: &[&FightTrace],
    ledger: &ExperienceLedger,
    edges: &[i64],
) -> Result<ExperienceWinReport> {
    let mut buckets: Vec<GapBucket> = (0..=edges.len())
        .map(|i| GapBucket {
            min_gap_seconds: if i == 0 { 0 } else { edges[i - 1] },
            max_gap_seconds: edges.get(i).copied(),
            fights: 0,
            experienced_wins: 0,
            win_fraction: None,
        })
        .collect();
    let mut ties = 0;
    for t in fights {
        let Some(gap) = experience_gap(t, ledger)? else {
            continue;
        };
        if gap == 0 {
            ties += 1;
            continue;
        }
        let slot = edges.partition_point(|&e| e <= gap.abs());
        buckets[slot].fights += 1;
        if gap > 0 {
            buckets[slot].experienced_wins += 1;
        }
    }
    let frac = |w: u64, n: u64| (n > 0).then(|| w as f64 / n as f64);
    for b in &mut buckets {
        b.win_fraction = frac(b.experienced_wins, b.fights);
    }
    let total: u64 = buckets.iter().map(|b| b.fights).sum();
    let wins: u64 = buckets.iter().map(|b| b.experienced_wins).sum();
    Ok(ExperienceWinReport {
        fights: total,
        experienced_wins: wins,
        win_fraction: frac(wins, total),
        ties,
        buckets,
    })
}

/// Outcome of one trace at one threshold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FightVerdict {
    pub epsilon: Epsilon,
    pub fired_round: usize,
    pub winner: String,
    /// Author of the round that triggered the fight.
    pub deleter: String,
    pub adopter_won: bool,
    pub experience_gap_seconds: Option<i64>,
}

pub fn judge(
    trace: &FightTrace,
    epsilon: Epsilon,
    mode: FightMode,
    ledger: &ExperienceLedger,
) -> Result<Option<FightVerdict>> {
    let Some(fired_round) = trace.fired_at(epsilon, mode) else {
        return Ok(None);
    };
    let winner = trace.winner().to_string();
    Ok(Some(FightVerdict {
        epsilon,
        fired_round,
        adopter_won: winner == trace.adopter_id,
        deleter: trace.rounds[fired_round].author_id.clone(),
        winner,
        experience_gap_seconds: experience_gap(trace, ledger)?,
    }))
}

/// Fractions of fights won by the deleter and by the adopter.
pub fn win_fractions(verdicts: &[&FightVerdict]) -> (Option<f64>, Option<f64>) {
    if verdicts.is_empty() {
        return (None, None);
    }
    let n = verdicts.len() as f64;
    let deleter = verdicts.iter().filter(|v| v.winner == v.deleter).count() as f64;
    let adopter = verdicts.iter().filter(|v| v.adopter_won).count() as f64;
    (Some(deleter / n), Some(adopter / n))
}

/// Count of fights per threshold.
pub fn fights_by_epsilon(verdicts: &[FightVerdict]) -> BTreeMap<Epsilon, usize> {
    let mut out = BTreeMap::new();
    for v in verdicts {
        *out.entry(v.epsilon).or_default() += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::UsageEntry;

    fn eps(s: &str) -> Epsilon {
        s.parse().unwrap()
    }

    fn series(commits: &[(&str, u64, u64)]) -> UsageSeries {
        UsageSeries {
            repo_id: "p".into(),
            library: "l".into(),
            adoption_time: 1000,
            entries: commits
                .iter()
                .enumerate()
                .map(|(x, &(a, added, deleted))| UsageEntry {
                    x,
                    author_id: a.into(),
                    added,
                    deleted,
                })
                .collect(),
        }
    }

    fn authors(rounds: &[Round]) -> Vec<(&str, usize)> {
        rounds.iter().map(|r| (r.author_id.as_str(), r.commits)).collect()
    }

    #[test]
    fn epsilon_parsing() {
        assert_eq!(eps("0.1").ppm(), 100_000);
        assert_eq!(eps(".25").ppm(), 250_000);
        assert_eq!(eps("0.5").to_string(), "0.5");
        assert_eq!(eps("0.125").to_string(), "0.125");
        for bad in ["0", "1", "1.5", "abc", "0.1234567", "-0.1"] {
            assert!(bad.parse::<Epsilon>().is_err(), "{bad}");
        }
        assert_eq!(
            Epsilon::standard_set()
                .iter()
                .map(|e| e.to_string())
                .collect::<Vec<_>>(),
            vec!["0.1", "0.2", "0.3", "0.4", "0.5"]
        );
    }

    #[test]
    fn rounds_run_length() {
        let s = series(&[("u", 1, 0), ("u", 1, 0), ("v", 0, 1), ("u", 1, 0)]);
        assert_eq!(authors(&segment_rounds(&s)), vec![("u", 2), ("v", 1), ("u", 1)]);
        let s = series(&[("u", 3, 0)]);
        assert_eq!(authors(&segment_rounds(&s)), vec![("u", 1)]);
        let s = series(&[("u", 3, 0), ("v", 0, 1), ("v", 1, 0), ("w", 0, 1)]);
        assert_eq!(authors(&segment_rounds(&s)), vec![("u", 1), ("v", 2), ("w", 1)]);
    }

    #[test]
    fn untouched_commits_do_not_split_rounds() {
        let s = series(&[("u", 2, 0), ("w", 0, 0), ("u", 1, 0), ("v", 0, 2)]);
        let rounds = segment_rounds(&s);
        assert_eq!(authors(&rounds), vec![("u", 2), ("v", 1)]);
        assert_eq!((rounds[0].first_x, rounds[0].last_x, rounds[0].net), (0, 2, 3));
        assert_eq!(running_totals(&rounds), vec![3, 1]);
    }

    #[test]
    fn fight_examples() {
        let r = FightMode::Reduction;
        assert_eq!(detect_fight(&[20, 5], eps("0.5"), r), Some(1));
        assert_eq!(detect_fight(&[20, 15], eps("0.5"), r), None);
        assert_eq!(detect_fight(&[20, 15], eps("0.2"), r), Some(1));
        for e in Epsilon::standard_set() {
            assert_eq!(detect_fight(&[1, 1, 4, 9, 9], e, r), None);
        }
    }

    #[test]
    fn fight_boundaries_are_exact() {
        // 20 -> 18 is exactly a 10% drop.
        assert_eq!(detect_fight(&[20, 18], eps("0.1"), FightMode::Reduction), Some(1));
        assert_eq!(detect_fight(&[20, 19], eps("0.1"), FightMode::Reduction), None);
        assert_eq!(detect_fight(&[10, 7], eps("0.3"), FightMode::Reduction), Some(1));
        // Nothing to lose: no fight from a non-positive total.
        assert_eq!(detect_fight(&[0, -5], eps("0.1"), FightMode::Reduction), None);
        assert_eq!(detect_fight(&[5, -1, -9], eps("0.1"), FightMode::Reduction), Some(1));
    }

    #[test]
    fn as_printed_reading() {
        assert_eq!(detect_fight(&[20, 15], eps("0.5"), FightMode::AsPrinted), Some(1));
        assert_eq!(detect_fight(&[20, 5], eps("0.5"), FightMode::AsPrinted), None);
        assert_eq!(detect_fight(&[20, 5, 30], eps("0.5"), FightMode::AsPrinted), Some(2));
        assert_eq!("as-printed".parse::<FightMode>().unwrap(), FightMode::AsPrinted);
        assert!("sideways".parse::<FightMode>().is_err());
    }

    #[test]
    fn rate_examples() {
        assert_eq!(fight_rate(2, 100_000), Some(2.0));
        assert_eq!(fight_rate(0, 5), Some(0.0));
        assert_eq!(fight_rate(0, 0), None);
    }

    fn trace(rounds: &[(&str, i64)]) -> FightTrace {
        let entries: Vec<(&str, u64, u64)> = rounds
            .iter()
            .map(|&(a, n)| if n >= 0 { (a, n as u64, 0) } else { (a, 0, (-n) as u64) })
            .collect();
        FightTrace::from_series(&series(&entries)).unwrap()
    }

    #[test]
    fn profile_examples() {
        let t = trace(&[("u", 10), ("v", -9), ("u", 1)]);
        let p = round_profile(&[&t], 10);
        assert_eq!(p.iter().map(|m| m.mean_net).collect::<Vec<_>>(), vec![10.0, -9.0, 1.0]);

        let a = trace(&[("u", 10), ("v", -9)]);
        let b = trace(&[("u", 20), ("v", -19)]);
        let p = round_profile(&[&a, &b], 10);
        assert_eq!(p.iter().map(|m| m.mean_net).collect::<Vec<_>>(), vec![15.0, -14.0]);

        let three = trace(&[("u", 10), ("v", -9), ("w", 3)]);
        assert!(round_profile(&[&three], 10).is_empty());
        assert_eq!(round_profile(&[&t], 2).len(), 2);
    }

    #[test]
    fn winners() {
        assert_eq!(trace(&[("u", 5), ("v", -5)]).winner(), "v");
        assert_eq!(trace(&[("u", 5), ("v", -5), ("u", 2)]).winner(), "u");
    }

    #[test]
    fn experience_examples() {
        let mut ledger = ExperienceLedger::default();
        ledger.observe("a", 300);
        ledger.observe("a", 100);
        assert_eq!(ledger.experience("a", 250).unwrap(), 150);
        assert_eq!(ledger.experience("a", 100).unwrap(), 0);
        assert!(matches!(ledger.experience("b", 1), Err(Error::UnknownAuthor(_))));
    }

    #[test]
    fn experience_win_fractions() {
        let mut ledger = ExperienceLedger::default();
        ledger.observe("old", 0);
        ledger.observe("new", 2 * DAY);
        ledger.observe("twin", 0);

        let won = trace(&[("new", 10), ("old", -10)]);
        let r = experience_win_analysis(&[&won], &ledger, &default_gap_edges()).unwrap();
        assert_eq!(r.win_fraction, Some(1.0));
        assert_eq!(r.buckets[1].fights, 1);

        let lost = trace(&[("old", 10), ("new", -10)]);
        let r = experience_win_analysis(&[&won, &won, &won, &lost], &ledger, &default_gap_edges()).unwrap();
        assert_eq!(r.win_fraction, Some(0.75));

        let tie = trace(&[("old", 10), ("twin", -10)]);
        let r = experience_win_analysis(&[&tie], &ledger, &default_gap_edges()).unwrap();
        assert_eq!((r.ties, r.fights, r.win_fraction), (1, 0, None));
    }

    #[test]
    fn verdict_fields() {
        let ledger = {
            let mut l = ExperienceLedger::default();
            l.observe("u", 0);
            l.observe("v", 500);
            l
        };
        let t = trace(&[("u", 20), ("v", -15)]);
        let v = judge(&t, eps("0.5"), FightMode::Reduction, &ledger).unwrap().unwrap();
        assert_eq!(v.fired_round, 1);
        assert_eq!(v.winner, "v");
        assert_eq!(v.deleter, "v");
        assert!(!v.adopter_won);
        assert_eq!(v.experience_gap_seconds, Some(-500));
        assert!(judge(&t, eps("0.8"), FightMode::Reduction, &ledger).unwrap().is_none());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rounds_cover_touching_commits(
                commits in prop::collection::vec((0usize..3, 0u64..3, 0u64..3), 0..40)
            ) {
                let names = ["u", "v", "w"];
                let raw: Vec<(&str, u64, u64)> =
                    commits.iter().map(|&(a, x, y)| (names[a], x, y)).collect();
                let s = series(&raw);
                let rounds = segment_rounds(&s);
                let touching: Vec<(usize, &str)> = s.entries.iter()
                    .filter(|e| e.touches())
                    .map(|e| (e.x, e.author_id.as_str()))
                    .collect();
                let covered: Vec<(usize, &str)> = rounds.iter()
                    .flat_map(|r| touching.iter()
                        .filter(move |(x, _)| *x >= r.first_x && *x <= r.last_x)
                        .map(move |&(x, _)| (x, r.author_id.as_str())))
                    .collect();
                prop_assert_eq!(&covered, &touching);
                prop_assert!(rounds.windows(2).all(|w| w[0].author_id != w[1].author_id));
                prop_assert_eq!(rounds.iter().map(|r| r.commits).sum::<usize>(), touching.len());
                if let Some(t) = FightTrace::from_series(&s) {
                    let last = touching.last().unwrap().1;
                    prop_assert_eq!(t.winner(), last);
                }
            }
        }
    }
}
