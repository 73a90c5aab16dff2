//! End-to-end analysis run and plot-data extraction.
//!
//! `run_analyze` loads commit streams, analyses each repository in parallel,
//! merges the per-repository results in repository order and writes the
//! report bundle. Output bytes do not depend on the worker count.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::adoption::{
    adoption_stats, adoptions_from_usage, corpus_distributions, AdoptionEvent, AdoptionLifetime, AdoptionStats,
    ProjectSummary,
};
use crate::error::{Error, Result};
use crate::fight::{
    default_gap_edges, experience_win_analysis, fight_rate, judge, round_profile, win_fractions, Epsilon,
    ExperienceLedger, FightMode, FightTrace, FightVerdict, GapBucket,
};
use crate::growth::{
    build_usage_series, growth_curve, growth_quantiles, median_pct_change, post_adoption_profile, GrowthCurve,
    TeamBucket, UsageSeries,
};
use crate::imports::{read_token_file, replay_history, LibraryClass, Vocabulary};
use crate::ingest::{enforce_monotonic_order, parse_commit_stream, CommitRecord};
use crate::so::{
    correlate_users_posts, default_python_tags, parse_posts_dump, so_bin, LibraryPopularity, MentionIndex, SoBin,
    FIT_FLOOR,
};
use crate::synth::LABELS_FILE;

pub const ADOPTIONS_CSV: &str = "adoptions.csv";
pub const DISTRIBUTIONS_CSV: &str = "distributions.csv";
pub const ADOPTIONS_BY_INDEX_CSV: &str = "adoptions_by_index.csv";
pub const GROWTH_CSV: &str = "growth.csv";
pub const PCT_CHANGE_CSV: &str = "pct_change.csv";
pub const PROFILE_CSV: &str = "profile.csv";
pub const FIGHTS_CSV: &str = "fights.csv";
pub const ROUNDS_CSV: &str = "rounds.csv";
pub const SO_INDEX_CSV: &str = "so_index.csv";
pub const CORRELATIONS_CSV: &str = "correlations.csv";
pub const SUMMARY_JSON: &str = "summary.json";

/// Every file of a report bundle, in write order.
pub const OUTPUT_FILES: [&str; 11] = [
    ADOPTIONS_CSV,
    DISTRIBUTIONS_CSV,
    ADOPTIONS_BY_INDEX_CSV,
    GROWTH_CSV,
    PCT_CHANGE_CSV,
    PROFILE_CSV,
    FIGHTS_CSV,
    ROUNDS_CSV,
    SO_INDEX_CSV,
    CORRELATIONS_CSV,
    SUMMARY_JSON,
];

pub const DEFAULT_HORIZON: usize = 100;
pub const DEFAULT_ROUND_DEPTH: usize = 10;

#[derive(Debug, Clone)]
pub struct RunConfig {
    /// Commit-stream files, or directories of `*.jsonl` streams (a synth
    /// label file is skipped).
    pub inputs: Vec<PathBuf>,
    pub so_dump: Option<PathBuf>,
    pub builtin_vocab: Option<PathBuf>,
    pub pypi_vocab: Option<PathBuf>,
    pub python_tags: Option<PathBuf>,
    pub epsilons: Vec<Epsilon>,
    pub mode: FightMode,
    pub horizon: usize,
    pub round_depth: usize,
    /// Worker threads; `None` uses rayon's default pool.
    pub threads: Option<usize>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn new(inputs: Vec<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        RunConfig {
            inputs,
            so_dump: None,
            builtin_vocab: None,
            pypi_vocab: None,
            python_tags: None,
            epsilons: Epsilon::standard_set(),
            mode: FightMode::default(),
            horizon: DEFAULT_HORIZON,
            round_depth: DEFAULT_ROUND_DEPTH,
            threads: None,
            out_dir: out_dir.into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Invalid("horizon must be at least 1".into()));
        }
        if self.epsilons.is_empty() {
            return Err(Error::Invalid("epsilon set is empty".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Invalid("thread count must be positive".into()));
        }
        Ok(())
    }

    fn vocabulary(&self) -> Result<Vocabulary> {
        let bundled = Vocabulary::bundled();
        Ok(Vocabulary {
            builtin: match &self.builtin_vocab {
                Some(p) => read_token_file(p)?,
                None => bundled.builtin,
            },
            pypi: match &self.pypi_vocab {
                Some(p) => read_token_file(p)?,
                None => bundled.pypi,
            },
        })
    }
}

fn stream_files(path: &Path) -> Result<Vec<PathBuf>> {
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    if meta.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        // A synth output directory can be analysed as is.
        let is_labels = p.file_name().is_some_and(|n| n == LABELS_FILE);
        if p.is_file() && p.extension().is_some_and(|e| e == "jsonl") && !is_labels {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Reads every commit stream under `inputs`, grouped by repository.
pub fn load_streams(inputs: &[PathBuf]) -> Result<BTreeMap<String, Vec<CommitRecord>>> {
    let mut repos: BTreeMap<String, Vec<CommitRecord>> = BTreeMap::new();
    for input in inputs {
        for file in stream_files(input)? {
            let f = File::open(&file).map_err(|e| Error::io(&file, e))?;
            let parsed = parse_commit_stream(BufReader::new(f)).map_err(|e| match e {
                Error::Stream { line, message } => {
                    Error::Invalid(format!("{}: line {line}: {message}", file.display()))
                }
                other => other,
            })?;
            for (repo, commits) in parsed {
                repos.entry(repo).or_default().extend(commits);
            }
        }
    }
    if repos.is_empty() {
        return Err(Error::NoStreams);
    }
    Ok(repos)
}

struct RepoResult {
    summary: ProjectSummary,
    events: Vec<AdoptionEvent>,
    lifetimes: Vec<AdoptionLifetime>,
    /// Horizon-limited series, parallel to `events`.
    series: Vec<UsageSeries>,
    curves: Vec<GrowthCurve>,
    /// Full-history traces, parallel to `events`.
    traces: Vec<FightTrace>,
    users: BTreeSet<(String, String)>,
    ledger: ExperienceLedger,
}

fn analyze_repo(commits: Vec<CommitRecord>, vocab: &Vocabulary, horizon: usize) -> Result<RepoResult> {
    let history = enforce_monotonic_order(commits)?;
    let usage = replay_history(&history);
    let events = adoptions_from_usage(&history, &usage, vocab);
    let mut users = BTreeSet::new();
    for (commit, counts) in history.commits.iter().zip(&usage.commits) {
        for (lib, loc) in counts {
            if loc.changed() > 0 {
                users.insert((lib.clone(), commit.author_id.clone()));
            }
        }
    }
    let mut series = Vec::with_capacity(events.len());
    let mut curves = Vec::with_capacity(events.len());
    let mut traces = Vec::with_capacity(events.len());
    let mut lifetimes = Vec::with_capacity(events.len());
    for e in &events {
        let s = build_usage_series(&history, &usage, e, Some(horizon));
        curves.push(
            growth_curve(&s).map_err(|err| Error::Invariant(format!("{} {}: {err}", e.repo_id, e.library.name)))?,
        );
        series.push(s);
        let full = build_usage_series(&history, &usage, e, None);
        traces.push(
            FightTrace::from_series(&full).ok_or_else(|| {
                Error::Invariant(format!("{} {}: adoption without rounds", e.repo_id, e.library.name))
            })?,
        );
        lifetimes.push(AdoptionLifetime::from_usage(&usage, e));
    }
    Ok(RepoResult {
        summary: ProjectSummary::new(&history, &events),
        ledger: ExperienceLedger::from_histories([&history]),
        events,
        lifetimes,
        series,
        curves,
        traces,
        users,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FightSummary {
    pub epsilon: Epsilon,
    pub fights: usize,
    pub fight_rate_per_100k_commits: Option<f64>,
    pub two_person_fights: u64,
    pub deleter_win_fraction: Option<f64>,
    pub adopter_win_fraction: Option<f64>,
    pub experienced_win_fraction: Option<f64>,
    pub experience_ties: u64,
    pub experience_buckets: Vec<GapBucket>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub projects: usize,
    pub commits: u64,
    pub adoptions: usize,
    pub libraries: usize,
    pub so_posts: usize,
    pub so_malformed_rows: u64,
    pub horizon: usize,
    pub fight_inequality: FightMode,
    pub adoption_stats: AdoptionStats,
    pub fights: Vec<FightSummary>,
}

/// A report bundle held in memory as file name and bytes.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub files: Vec<(&'static str, Vec<u8>)>,
    pub summary: Summary,
}

impl Bundle {
    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| *n == name).map(|(_, b)| b.as_slice())
    }

    /// Writes every file into `dir`; on failure the files written so far are
    /// removed.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        for (name, bytes) in &self.files {
            let path = dir.join(name);
            if let Err(e) = fs::write(&path, bytes) {
                for p in &written {
                    let _ = fs::remove_file(p);
                }
                let _ = fs::remove_file(&path);
                return Err(Error::io(path, e));
            }
            written.push(path);
        }
        Ok(())
    }
}

/// Fixed six-decimal rendering; negative zero prints as zero.
pub fn fmt_f64(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".into()
    } else {
        s
    }
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    fn new(header: &[&str]) -> Result<Self> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(header)?;
        Ok(Table { w })
    }

    fn row<I, S>(&mut self, fields: I) -> Result<()>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        Ok(self.w.write_record(fields)?)
    }

    fn finish(self) -> Result<Vec<u8>> {
        self.w
            .into_inner()
            .map_err(|e| Error::Invariant(format!("csv buffer: {}", e.error())))
    }
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Invalid(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Computes the report bundle without touching the output directory.
pub fn analyze(config: &RunConfig) -> Result<Bundle> {
    config.validate()?;
    let vocab = config.vocabulary()?;
    let python_tags = match &config.python_tags {
        Some(p) => read_token_file(p)?,
        None => default_python_tags(),
    };
    let repos = load_streams(&config.inputs)?;
    log::info!("loaded {} repositories", repos.len());
    let posts = match &config.so_dump {
        Some(p) => {
            let f = File::open(p).map_err(|e| Error::io(p, e))?;
            Some(parse_posts_dump(BufReader::new(f), &python_tags)?)
        }
        None => None,
    };

    let results: Vec<RepoResult> = with_pool(config.threads, || {
        repos
            .into_par_iter()
            .map(|(_, commits)| analyze_repo(commits, &vocab, config.horizon))
            .collect::<Result<Vec<_>>>()
    })??;
    log::info!("analysed repositories");

    let mut ledger = ExperienceLedger::default();
    for r in &results {
        ledger.merge(&r.ledger);
    }
    let events: Vec<&AdoptionEvent> = results.iter().flat_map(|r| &r.events).collect();
    let mut mention_vocab: BTreeSet<String> = vocab.builtin.union(&vocab.pypi).cloned().collect();
    mention_vocab.extend(events.iter().map(|e| e.library.name.clone()));
    let (index, so_posts, so_malformed) = match &posts {
        Some(p) => (
            MentionIndex::build(&p.posts, &mention_vocab),
            p.posts.len(),
            p.malformed,
        ),
        None => (MentionIndex::build(&[], &mention_vocab), 0, 0),
    };

    let mut files = Vec::new();

    // Adoptions and distributions.
    let mut t = Table::new(&["repo_id", "library", "class", "commit_index", "timestamp", "adopter"])?;
    for e in &events {
        t.row([
            e.repo_id.clone(),
            e.library.name.clone(),
            e.library.class.as_str().to_string(),
            e.commit_index.to_string(),
            e.timestamp.to_string(),
            e.adopter.clone(),
        ])?;
    }
    files.push((ADOPTIONS_CSV, t.finish()?));

    let summaries: Vec<ProjectSummary> = results.iter().map(|r| r.summary.clone()).collect();
    let dists = corpus_distributions(&summaries)?;
    let mut t = Table::new(&["kind", "x", "p"])?;
    for (kind, pmf) in [
        ("commits_per_project", &dists.commits_per_project),
        ("libraries_per_project", &dists.libraries_per_project),
        ("team_size", &dists.team_size_per_project),
    ] {
        for (x, p) in pmf {
            t.row([kind.to_string(), x.to_string(), fmt_f64(*p)])?;
        }
    }
    files.push((DISTRIBUTIONS_CSV, t.finish()?));

    let mut t = Table::new(&["commit_index", "mean_adoptions", "median_adoptions", "volume"])?;
    for row in &dists.adoptions_by_commit_index {
        t.row([
            row.commit_index.to_string(),
            fmt_f64(row.mean),
            fmt_f64(row.median),
            row.volume.to_string(),
        ])?;
    }
    files.push((ADOPTIONS_BY_INDEX_CSV, t.finish()?));

    // Growth, grouped by SO popularity at adoption and by team size.
    let mut by_bin: BTreeMap<SoBin, Vec<&GrowthCurve>> = BTreeMap::new();
    let mut curves_by_team: BTreeMap<TeamBucket, Vec<&GrowthCurve>> = BTreeMap::new();
    let mut series_by_team: BTreeMap<TeamBucket, Vec<&UsageSeries>> = BTreeMap::new();
    for r in &results {
        let bucket = TeamBucket::of(r.summary.team_size);
        for ((e, c), s) in r.events.iter().zip(&r.curves).zip(&r.series) {
            let bin = so_bin(index.posts_before(&e.library.name, e.timestamp));
            by_bin.entry(bin).or_default().push(c);
            curves_by_team.entry(bucket).or_default().push(c);
            series_by_team.entry(bucket).or_default().push(s);
        }
    }
    let mut groups: Vec<(String, Vec<&GrowthCurve>)> = SoBin::ALL
        .iter()
        .filter_map(|b| by_bin.remove(b).map(|c| (format!("so:{}", b.label()), c)))
        .collect();
    let team_groups: Vec<(String, Vec<&GrowthCurve>)> = TeamBucket::ALL
        .iter()
        .filter_map(|b| curves_by_team.get(b).map(|c| (b.label().to_string(), c.clone())))
        .collect();
    groups.extend(team_groups.iter().map(|(g, c)| (format!("team:{g}"), c.clone())));

    let mut t = Table::new(&["group", "x", "q1", "median", "q3", "volume"])?;
    for row in growth_quantiles(&groups) {
        t.row([
            row.group,
            row.x.to_string(),
            fmt_f64(row.q1),
            fmt_f64(row.median),
            fmt_f64(row.q3),
            row.volume.to_string(),
        ])?;
    }
    files.push((GROWTH_CSV, t.finish()?));

    let mut t = Table::new(&["team_size", "x", "median_pct_change", "volume"])?;
    for row in median_pct_change(&team_groups) {
        t.row([
            row.group,
            row.x.to_string(),
            fmt_f64(row.median_pct_change),
            row.volume.to_string(),
        ])?;
    }
    files.push((PCT_CHANGE_CSV, t.finish()?));

    let team_series: Vec<(TeamBucket, Vec<&UsageSeries>)> = TeamBucket::ALL
        .iter()
        .filter_map(|b| series_by_team.remove(b).map(|s| (*b, s)))
        .collect();
    let mut t = Table::new(&[
        "bucket", "x", "mean_add", "ci_add", "mean_del", "ci_del", "mean_net", "volume",
    ])?;
    for row in post_adoption_profile(&team_series) {
        t.row([
            row.bucket.label().to_string(),
            row.x.to_string(),
            fmt_f64(row.mean_add),
            fmt_f64(row.ci_add),
            fmt_f64(row.mean_del),
            fmt_f64(row.ci_del),
            fmt_f64(row.mean_net),
            row.volume.to_string(),
        ])?;
    }
    files.push((PROFILE_CSV, t.finish()?));

    // Fights.
    let total_commits: u64 = results.iter().map(|r| r.summary.commits as u64).sum();
    let mut traces: Vec<&FightTrace> = results.iter().flat_map(|r| &r.traces).collect();
    traces.sort_by(|a, b| (&a.repo_id, &a.library).cmp(&(&b.repo_id, &b.library)));
    let mut verdicts: Vec<(&FightTrace, FightVerdict)> = Vec::new();
    for tr in &traces {
        for &eps in &config.epsilons {
            if let Some(v) = judge(tr, eps, config.mode, &ledger)? {
                verdicts.push((tr, v));
            }
        }
    }
    let mut t = Table::new(&[
        "repo_id",
        "library",
        "epsilon",
        "fired_round",
        "participants",
        "winner",
        "adopter_won",
        "experience_gap_seconds",
    ])?;
    for (tr, v) in &verdicts {
        t.row([
            tr.repo_id.clone(),
            tr.library.clone(),
            v.epsilon.to_string(),
            v.fired_round.to_string(),
            tr.participants.len().to_string(),
            v.winner.clone(),
            v.adopter_won.to_string(),
            fmt_opt(v.experience_gap_seconds),
        ])?;
    }
    files.push((FIGHTS_CSV, t.finish()?));

    let mut t = Table::new(&["epsilon", "round", "mean_net_loc", "volume"])?;
    let mut fight_summaries = Vec::new();
    for &eps in &config.epsilons {
        let fired: Vec<&FightTrace> = verdicts
            .iter()
            .filter(|(_, v)| v.epsilon == eps)
            .map(|(t, _)| *t)
            .collect();
        let at_eps: Vec<&FightVerdict> = verdicts
            .iter()
            .filter(|(_, v)| v.epsilon == eps)
            .map(|(_, v)| v)
            .collect();
        for row in round_profile(&fired, config.round_depth) {
            t.row([
                eps.to_string(),
                row.round.to_string(),
                fmt_f64(row.mean_net),
                row.volume.to_string(),
            ])?;
        }
        let (deleter, adopter) = win_fractions(&at_eps);
        let exp = experience_win_analysis(&fired, &ledger, &default_gap_edges())?;
        fight_summaries.push(FightSummary {
            epsilon: eps,
            fights: fired.len(),
            fight_rate_per_100k_commits: fight_rate(fired.len(), total_commits),
            two_person_fights: fired.iter().filter(|t| t.is_two_person()).count() as u64,
            deleter_win_fraction: deleter,
            adopter_win_fraction: adopter,
            experienced_win_fraction: exp.win_fraction,
            experience_ties: exp.ties,
            experience_buckets: exp.buckets,
        });
    }
    files.push((ROUNDS_CSV, t.finish()?));

    // Stack Overflow.
    let mut t = Table::new(&["library", "total_posts", "first_post_time"])?;
    for lib in index.libraries() {
        t.row([
            lib.to_string(),
            index.total(lib).to_string(),
            fmt_opt(index.first_post_time(lib)),
        ])?;
    }
    files.push((SO_INDEX_CSV, t.finish()?));

    let mut distinct_users: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for r in &results {
        for (lib, author) in &r.users {
            distinct_users.entry(lib.as_str()).or_default().insert(author.as_str());
        }
    }
    let mut post_sums: BTreeMap<&str, (u64, u64, LibraryClass)> = BTreeMap::new();
    for e in &events {
        let entry = post_sums
            .entry(e.library.name.as_str())
            .or_insert((0, 0, e.library.class));
        entry.0 += index.posts_before(&e.library.name, e.timestamp);
        entry.1 += 1;
    }
    let popularity: Vec<LibraryPopularity> = post_sums
        .iter()
        .map(|(lib, &(sum, n, class))| LibraryPopularity {
            library: lib.to_string(),
            class,
            users: distinct_users.get(lib).map_or(0, |s| s.len() as u64),
            posts: sum as f64 / n as f64,
        })
        .collect();
    let mut t = Table::new(&["kind", "class", "library", "users", "posts", "a", "b", "r2", "n_points"])?;
    for p in &popularity {
        t.row([
            "point".to_string(),
            p.class.as_str().to_string(),
            p.library.clone(),
            p.users.to_string(),
            fmt_f64(p.posts),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])?;
    }
    for fit in correlate_users_posts(&popularity, FIT_FLOOR) {
        let (a, b, r2, n) = match &fit.fit {
            Some(f) => (fmt_f64(f.a), fmt_f64(f.b), fmt_f64(f.r_squared), f.n_points.to_string()),
            None => Default::default(),
        };
        t.row([
            "fit".to_string(),
            fit.class.as_str().to_string(),
            String::new(),
            String::new(),
            String::new(),
            a,
            b,
            r2,
            n,
        ])?;
    }
    files.push((CORRELATIONS_CSV, t.finish()?));

    let lifetimes: Vec<AdoptionLifetime> = results.iter().flat_map(|r| r.lifetimes.iter().cloned()).collect();
    let summary = Summary {
        projects: results.len(),
        commits: total_commits,
        adoptions: events.len(),
        libraries: post_sums.len(),
        so_posts,
        so_malformed_rows: so_malformed,
        horizon: config.horizon,
        fight_inequality: config.mode,
        adoption_stats: adoption_stats(&lifetimes),
        fights: fight_summaries,
    };
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    files.push((SUMMARY_JSON, json));

    Ok(Bundle { files, summary })
}

/// Runs the analysis and writes the bundle into `config.out_dir`.
pub fn run_analyze(config: &RunConfig) -> Result<Summary> {
    let bundle = analyze(config)?;
    bundle.write_to(&config.out_dir)?;
    Ok(bundle.summary)
}

pub const FIGURE_IDS: [&str; 9] = ["1a", "1b", "1c", "2", "3", "4", "6a", "6b", "7"];

/// Column name and predicate selecting source rows.
type RowFilter<'a> = (&'a str, &'a dyn Fn(&str) -> bool);

struct Source {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Source {
    fn read(dir: &Path, name: &str) -> Result<Self> {
        let path = dir.join(name);
        let f = File::open(&path).map_err(|e| Error::io(&path, e))?;
        let mut r = csv::Reader::from_reader(f);
        let headers = r.headers()?.iter().map(String::from).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Source { headers, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Invalid(format!("report column {name:?} missing")))
    }

    /// Rows whose `key` column satisfies `keep`, projected onto `columns`.
    fn select(&self, key: Option<RowFilter<'_>>, columns: &[&str]) -> Result<Vec<Vec<String>>> {
        let key = match key {
            Some((k, f)) => Some((self.col(k)?, f)),
            None => None,
        };
        let cols = columns.iter().map(|c| self.col(c)).collect::<Result<Vec<_>>>()?;
        Ok(self
            .rows
            .iter()
            .filter(|r| key.is_none_or(|(k, f)| f(&r[k])))
            .map(|r| cols.iter().map(|&c| r[c].clone()).collect())
            .collect())
    }
}

fn render(header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut t = Table::new(header)?;
    for r in rows {
        t.row(r)?;
    }
    String::from_utf8(t.finish()?).map_err(|e| Error::Invariant(e.to_string()))
}

/// Plot-ready CSV for one figure, read from a written report bundle.
pub fn emit_plot_data(report_dir: &Path, figure: &str) -> Result<String> {
    let kind_is = |k: &'static str| move |v: &str| v == k;
    match figure {
        "1a" | "1b" | "6b" => {
            let (kind, axis) = match figure {
                "1a" => ("commits_per_project", "commits"),
                "1b" => ("libraries_per_project", "libraries"),
                _ => ("team_size", "team_size"),
            };
            let src = Source::read(report_dir, DISTRIBUTIONS_CSV)?;
            let f = kind_is(kind);
            render(&[axis, "p"], src.select(Some(("kind", &f)), &["x", "p"])?)
        }
        "1c" => {
            let src = Source::read(report_dir, ADOPTIONS_BY_INDEX_CSV)?;
            render(
                &["commit_index", "mean_adoptions", "volume"],
                src.select(None, &["commit_index", "mean_adoptions", "volume"])?,
            )
        }
        "2" => {
            let src = Source::read(report_dir, PROFILE_CSV)?;
            let cols = [
                "bucket", "x", "mean_add", "ci_add", "mean_del", "ci_del", "mean_net", "volume",
            ];
            render(&cols, src.select(None, &cols)?)
        }
        "3" => {
            let src = Source::read(report_dir, CORRELATIONS_CSV)?;
            let point = kind_is("point");
            let fit = kind_is("fit");
            let mut rows: Vec<Vec<String>> = src
                .select(Some(("kind", &point)), &["class", "posts", "users"])?
                .into_iter()
                .map(|mut r| {
                    r.extend([String::new(), String::new(), String::new()]);
                    r
                })
                .collect();
            for r in src.select(Some(("kind", &fit)), &["class", "a", "b", "r2"])? {
                let mut out = vec![r[0].clone(), String::new(), String::new()];
                out.extend(r[1..].iter().cloned());
                rows.push(out);
            }
            render(&["class", "posts", "users", "a", "b", "r2"], rows)
        }
        "4" => {
            let src = Source::read(report_dir, GROWTH_CSV)?;
            let f = |g: &str| g.starts_with("so:");
            let rows = src
                .select(Some(("group", &f)), &["group", "x", "q1", "median", "q3", "volume"])?
                .into_iter()
                .map(|mut r| {
                    r[0] = r[0]["so:".len()..].to_string();
                    r
                })
                .collect();
            render(&["so_bin", "x", "q1", "median", "q3", "volume"], rows)
        }
        "6a" => {
            let src = Source::read(report_dir, PCT_CHANGE_CSV)?;
            let cols = ["team_size", "x", "median_pct_change", "volume"];
            render(&cols, src.select(None, &cols)?)
        }
        "7" => {
            let src = Source::read(report_dir, ROUNDS_CSV)?;
            render(
                &["epsilon", "round", "mean_net_loc"],
                src.select(None, &["epsilon", "round", "mean_net_loc"])?,
            )
        }
        other => Err(Error::UnknownFigure {
            given: other.to_string(),
            valid: FIGURE_IDS.join(", "),
        }),
    }
}
