//! Synthetic commit streams with ground-truth labels.
//!
//! Every project is a linear chain of commits. Libraries come from a reserved
//! namespace (`synlib0001`, ...) that no vocabulary contains, so they classify
//! as Local. Ordinary adopted libraries only ever gain lines, so they can
//! never trigger a fight; planted fights live on their own libraries and
//! files and follow their round plans exactly.
//!
//! Output depends only on the spec: each project draws from its own RNG
//! seeded from `(seed, project index)`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fight::Epsilon;
use crate::ingest::{write_commit_stream, CommitRecord, FileDelta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitSampler {
    /// `P(k) ∝ (k + offset)^(-alpha)` for `k` in `1..=max`.
    Zipf {
        alpha: f64,
        offset: f64,
        max: u64,
    },
    Fixed(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFight {
    pub project: usize,
    /// Net LOC of each round; the first is the adoption round.
    pub rounds: Vec<i64>,
    /// Team-member index authoring each round.
    pub authors: Vec<usize>,
    /// Threshold the plan must trigger.
    pub epsilon: String,
}

fn default_epsilons() -> Vec<String> {
    Epsilon::standard_set().iter().map(ToString::to_string).collect()
}

fn default_team_weights() -> Vec<f64> {
    vec![0.6, 0.2, 0.1, 0.05, 0.05]
}

fn default_pool() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub projects: usize,
    pub seed: u64,
    pub commits: CommitSampler,
    /// Relative weights of team sizes 1, 2, 3, ...
    #[serde(default = "default_team_weights")]
    pub team_weights: Vec<f64>,
    #[serde(default = "default_pool")]
    pub author_pool: usize,
    #[serde(default = "default_pool")]
    pub library_pool: usize,
    /// Upper bound on ordinary libraries adopted per project.
    #[serde(default)]
    pub max_libraries: usize,
    /// Chance that a commit adds usage of an already adopted library.
    #[serde(default)]
    pub activity: f64,
    #[serde(default)]
    pub fights: Vec<PlantedFight>,
    /// Thresholds listed in fight labels.
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<String>,
    #[serde(default)]
    pub start_time: i64,
}

impl SynthSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Label {
    Adoption {
        repo_id: String,
        library: String,
        commit_index: usize,
        timestamp: i64,
        adopter: String,
    },
    Fight {
        repo_id: String,
        library: String,
        epsilon: String,
        fired_round: usize,
        winner: String,
        adopter: String,
    },
}

pub const COMMITS_FILE: &str = "commits.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";

#[derive(Debug, Clone)]
pub struct SynthOutput {
    /// Commits of every project, newest first within a project.
    pub commits: Vec<CommitRecord>,
    pub labels: Vec<Label>,
}

impl SynthOutput {
    pub fn stream(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        write_commit_stream(&mut out, &self.commits)?;
        Ok(out)
    }

    pub fn labels_jsonl(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for l in &self.labels {
            serde_json::to_writer(&mut out, l)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    /// Writes [`COMMITS_FILE`] and [`LABELS_FILE`] into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let commits = dir.join(COMMITS_FILE);
        fs::write(&commits, self.stream()?).map_err(|e| Error::io(&commits, e))?;
        let labels = dir.join(LABELS_FILE);
        fs::write(&labels, self.labels_jsonl()?).map_err(|e| Error::io(&labels, e))?;
        Ok(())
    }
}

pub fn read_labels(text: &str) -> Result<Vec<Label>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Round of first fight for planted nets, by direct evaluation of
/// `total_r <= (1 - eps) * total_{r-1}` with `total_{r-1} > 0`.
pub fn planted_fire_round(nets: &[i64], epsilon: Epsilon) -> Option<usize> {
    let mut total: i64 = 0;
    for (r, &n) in nets.iter().enumerate() {
        let prev = total;
        total += n;
        if r >= 1 && prev > 0 && (total as i128) * 1_000_000 <= (1_000_000 - epsilon.ppm() as i128) * prev as i128 {
            return Some(r);
        }
    }
    None
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn library_name(k: usize) -> String {
    format!("synlib{:04}", k + 1)
}

fn author_name(k: usize) -> String {
    format!("dev{k:05}@synth.test")
}

fn repo_name(i: usize) -> String {
    format!("synth{i:05}")
}

/// Inverse-CDF sampler over a finite support.
struct Discrete {
    cdf: Vec<f64>,
}

impl Discrete {
    fn new(weights: impl Iterator<Item = f64>) -> Result<Self> {
        let mut acc = 0.0;
        let cdf: Vec<f64> = weights
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        if cdf.is_empty() || !acc.is_finite() || acc <= 0.0 {
            return Err(Error::SynthSpec("sampler weights must have a positive sum".into()));
        }
        Ok(Discrete {
            cdf: cdf.into_iter().map(|c| c / acc).collect(),
        })
    }

    /// 0-based index of the drawn outcome.
    fn draw(&self, rng: &mut impl Rng) -> usize {
        let u: f64 = rng.gen();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

struct Plan<'a> {
    spec: &'a SynthSpec,
    commits: CommitDraw,
    team: Discrete,
    fights_by_project: Vec<Vec<(usize, &'a PlantedFight, Epsilon)>>,
    label_eps: Vec<Epsilon>,
}

enum CommitDraw {
    Zipf(Discrete),
    Fixed(u64),
}

fn validate_fight(i: usize, f: &PlantedFight, projects: usize) -> Result<Epsilon> {
    let err = |m: String| Err(Error::SynthSpec(format!("fight {i}: {m}")));
    if f.project >= projects {
        return err(format!("project {} out of range", f.project));
    }
    if f.rounds.len() < 2 || f.rounds.len() != f.authors.len() {
        return err("needs at least two rounds and one author per round".into());
    }
    if f.authors.windows(2).any(|w| w[0] == w[1]) {
        return err("consecutive rounds must have different authors".into());
    }
    let mut total = 0i64;
    for (r, &n) in f.rounds.iter().enumerate() {
        if n == 0 && total < 2 {
            return err(format!("round {r} has zero net but nothing to exchange"));
        }
        total += n;
        if total < 1 {
            return err(format!(
                "running total {total} after round {r}; the import line must survive"
            ));
        }
    }
    let eps: Epsilon = f.epsilon.parse()?;
    if planted_fire_round(&f.rounds, eps).is_none() {
        return err(format!("round nets {:?} never trigger epsilon {eps}", f.rounds));
    }
    Ok(eps)
}

impl<'a> Plan<'a> {
    fn new(spec: &'a SynthSpec) -> Result<Self> {
        if spec.projects == 0 {
            return Err(Error::SynthSpec("project count must be positive".into()));
        }
        if spec.author_pool == 0 {
            return Err(Error::SynthSpec("author pool must be positive".into()));
        }
        if spec.max_libraries > spec.library_pool {
            return Err(Error::SynthSpec("max_libraries exceeds the library pool".into()));
        }
        if !(0.0..=1.0).contains(&spec.activity) {
            return Err(Error::SynthSpec("activity must be a probability".into()));
        }
        let commits = match spec.commits {
            CommitSampler::Zipf { alpha, offset, max } => {
                if alpha.is_nan() || alpha <= 1.0 || max == 0 || offset <= -1.0 {
                    return Err(Error::SynthSpec(
                        "zipf sampler needs alpha > 1, max >= 1 and offset > -1".into(),
                    ));
                }
                CommitDraw::Zipf(Discrete::new((1..=max).map(|k| (k as f64 + offset).powf(-alpha)))?)
            }
            CommitSampler::Fixed(0) => return Err(Error::SynthSpec("fixed commit count must be positive".into())),
            CommitSampler::Fixed(n) => CommitDraw::Fixed(n),
        };
        let team = Discrete::new(spec.team_weights.iter().copied())?;
        let mut fights_by_project = vec![Vec::new(); spec.projects];
        for (i, f) in spec.fights.iter().enumerate() {
            let eps = validate_fight(i, f, spec.projects)?;
            fights_by_project[f.project].push((i, f, eps));
        }
        let label_eps = spec
            .epsilons
            .iter()
            .map(|e| e.parse())
            .collect::<Result<Vec<Epsilon>>>()?;
        Ok(Plan {
            spec,
            commits,
            team,
            fights_by_project,
            label_eps,
        })
    }
}

struct LibState {
    name: String,
    file: String,
    next_call: usize,
    live: Vec<String>,
}

impl LibState {
    fn new(name: String, file: String) -> Self {
        LibState {
            name,
            file,
            next_call: 0,
            live: Vec::new(),
        }
    }

    fn usage_line(&mut self) -> String {
        self.next_call += 1;
        let line = format!("{}.call_{}(x)", self.name, self.next_call);
        self.live.push(line.clone());
        line
    }
}

fn delta_for<'d>(deltas: &'d mut Vec<FileDelta>, path: &str) -> &'d mut FileDelta {
    let pos = match deltas.iter().position(|d| d.path == path) {
        Some(p) => p,
        None => {
            deltas.push(FileDelta {
                path: path.to_string(),
                added_lines: Vec::new(),
                deleted_lines: Vec::new(),
            });
            deltas.len() - 1
        }
    };
    &mut deltas[pos]
}

fn generate_project(plan: &Plan<'_>, index: usize) -> (Vec<CommitRecord>, Vec<Label>) {
    let spec = plan.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(spec.seed ^ splitmix(index as u64)));
    let repo_id = repo_name(index);
    let fights = &plan.fights_by_project[index];

    let mut n_commits = match &plan.commits {
        CommitDraw::Zipf(d) => d.draw(&mut rng) + 1,
        CommitDraw::Fixed(n) => *n as usize,
    };
    let mut team_size = plan.team.draw(&mut rng) + 1;
    // Fights start at commit 1 and run back to back.
    let mut fight_slots = Vec::new();
    let mut cursor = 1;
    for &(id, f, _) in fights {
        team_size = team_size.max(f.authors.iter().max().map_or(0, |m| m + 1));
        fight_slots.push((id, f, cursor));
        cursor += f.rounds.len();
    }
    if !fights.is_empty() {
        n_commits = n_commits.max(cursor);
    }
    let team_size = team_size.min(spec.author_pool);
    let team: Vec<String> = sample(&mut rng, spec.author_pool, team_size)
        .into_iter()
        .map(author_name)
        .collect();

    let n_libs = if spec.max_libraries == 0 {
        0
    } else {
        rng.gen_range(0..=spec.max_libraries)
    };
    let mut libs: Vec<(usize, LibState)> = sample(&mut rng, spec.library_pool, n_libs)
        .into_iter()
        .map(|k| {
            let name = library_name(k);
            let u: f64 = rng.gen();
            let at = ((n_commits as f64) * u.powi(3)) as usize;
            let file = format!("src/use_{name}.py");
            (at.min(n_commits - 1), LibState::new(name, file))
        })
        .collect();
    libs.sort_by(|a, b| (a.0, &a.1.name).cmp(&(b.0, &b.1.name)));

    let mut fight_libs: Vec<LibState> = fight_slots
        .iter()
        .map(|&(id, _, _)| {
            let name = library_name(spec.library_pool + id);
            let file = format!("src/fight_{name}.py");
            LibState::new(name, file)
        })
        .collect();

    let mut time = spec.start_time + rng.gen_range(0..3 * 365 * 86_400);
    let mut filler_live: Vec<String> = Vec::new();
    let mut commits = Vec::with_capacity(n_commits);
    let mut labels = Vec::new();

    for c in 0..n_commits {
        let mut author = team[rng.gen_range(0..team.len())].clone();
        let mut deltas: Vec<FileDelta> = Vec::new();

        for (slot, &(_, f, start)) in fight_slots.iter().enumerate() {
            if c < start || c >= start + f.rounds.len() {
                continue;
            }
            let r = c - start;
            let lib = &mut fight_libs[slot];
            author = team[f.authors[r]].clone();
            let net = f.rounds[r];
            let file = lib.file.clone();
            let mut added = Vec::new();
            let mut deleted = Vec::new();
            if r == 0 {
                added.push(format!("import {}", lib.name));
                for _ in 1..net {
                    added.push(lib.usage_line());
                }
            } else if net > 0 {
                for _ in 0..net {
                    added.push(lib.usage_line());
                }
            } else if net < 0 {
                for _ in 0..(-net) {
                    deleted.push(lib.live.pop().expect("validated plan"));
                }
            } else {
                deleted.push(lib.live.pop().expect("validated plan"));
                added.push(lib.usage_line());
            }
            let d = delta_for(&mut deltas, &file);
            d.added_lines.extend(added);
            d.deleted_lines.extend(deleted);
        }

        for (at, lib) in libs.iter_mut() {
            let mut added = Vec::new();
            if *at == c {
                added.push(format!("import {}", lib.name));
                for _ in 0..rng.gen_range(0..3) {
                    added.push(lib.usage_line());
                }
            } else if *at < c && rng.gen_bool(spec.activity) {
                for _ in 0..rng.gen_range(1..3) {
                    added.push(lib.usage_line());
                }
            }
            if !added.is_empty() {
                let file = lib.file.clone();
                delta_for(&mut deltas, &file).added_lines.extend(added);
            }
        }

        let filler = delta_for(&mut deltas, "src/app.py");
        for j in 0..rng.gen_range(1..4) {
            let line = format!("value_{c}_{j} = {j}");
            filler.added_lines.push(line.clone());
            filler_live.push(line);
        }
        if filler_live.len() > 3 && rng.gen_bool(0.3) {
            let k = rng.gen_range(0..filler_live.len() - 3);
            filler.deleted_lines.push(filler_live.swap_remove(k));
        }

        // Occasional clock skew; order still comes from parent pointers.
        if c > 0 && rng.gen_bool(0.05) {
            time -= rng.gen_range(1..3_600);
        } else {
            time += rng.gen_range(60..3 * 86_400);
        }
        for (at, lib) in &libs {
            if *at == c {
                labels.push(Label::Adoption {
                    repo_id: repo_id.clone(),
                    library: lib.name.clone(),
                    commit_index: c,
                    timestamp: time,
                    adopter: author.clone(),
                });
            }
        }
        for (slot, &(_, _, start)) in fight_slots.iter().enumerate() {
            if start == c {
                labels.push(Label::Adoption {
                    repo_id: repo_id.clone(),
                    library: fight_libs[slot].name.clone(),
                    commit_index: c,
                    timestamp: time,
                    adopter: author.clone(),
                });
            }
        }
        commits.push(CommitRecord {
            repo_id: repo_id.clone(),
            hash: format!("{:016x}", splitmix(((index as u64) << 32) | c as u64)),
            parents: commits
                .last()
                .map(|p: &CommitRecord| vec![p.hash.clone()])
                .unwrap_or_default(),
            author_id: author,
            timestamp: time,
            deltas,
        });
    }

    for (slot, &(_, f, _)) in fight_slots.iter().enumerate() {
        let winner = team[*f.authors.last().expect("validated")].clone();
        let adopter = team[f.authors[0]].clone();
        for &eps in &plan.label_eps {
            if let Some(fired_round) = planted_fire_round(&f.rounds, eps) {
                labels.push(Label::Fight {
                    repo_id: repo_id.clone(),
                    library: fight_libs[slot].name.clone(),
                    epsilon: eps.to_string(),
                    fired_round,
                    winner: winner.clone(),
                    adopter: adopter.clone(),
                });
            }
        }
    }

    commits.reverse();
    (commits, labels)
}

/// Generates the corpus described by `spec`.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    let plan = Plan::new(spec)?;
    let per_project: Vec<(Vec<CommitRecord>, Vec<Label>)> = (0..spec.projects)
        .into_par_iter()
        .map(|i| generate_project(&plan, i))
        .collect();
    let mut commits = Vec::new();
    let mut labels = Vec::new();
    for (c, l) in per_project {
        commits.extend(c);
        labels.extend(l);
    }
    labels.sort();
    Ok(SynthOutput { commits, labels })
}

/// Planted libraries of a label set.
pub fn labelled_libraries(labels: &[Label]) -> BTreeSet<(String, String)> {
    labels
        .iter()
        .map(|l| match l {
            Label::Adoption { repo_id, library, .. } | Label::Fight { repo_id, library, .. } => {
                (repo_id.clone(), library.clone())
            }
        })
        .collect()
}
