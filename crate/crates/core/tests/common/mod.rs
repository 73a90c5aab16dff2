#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use adoptminer::fight::Epsilon;
use adoptminer::imports::{extract_imports, line_references, BindingIndex};
use adoptminer::pipeline::{self, Bundle, RunConfig};

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn three_repos() -> PathBuf {
    fixtures().join("three_repos")
}

/// Run configuration of the three-repository fixture.
pub fn fixture_config(out: &Path) -> RunConfig {
    let dir = three_repos();
    let mut c = RunConfig::new(vec![dir.join("commits.jsonl")], out);
    c.so_dump = Some(dir.join("Posts.xml"));
    c.epsilons = vec!["0.2".parse::<Epsilon>().unwrap(), "0.5".parse().unwrap()];
    c
}

pub fn fixture_bundle() -> Bundle {
    pipeline::analyze(&fixture_config(Path::new("unused"))).expect("fixture analysis")
}

/// Expected CSV files of the fixture, as (name, bytes).
pub fn fixture_oracles() -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(three_repos().join("expected"))
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[derive(Debug, Default)]
pub struct ImportCase {
    pub name: String,
    pub context: Vec<String>,
    pub line: String,
    /// (library, bound name) pairs.
    pub imports: BTreeSet<(String, String)>,
    pub refs: BTreeSet<String>,
}

fn parse_imports_field(v: &str) -> BTreeSet<(String, String)> {
    let mut out = BTreeSet::new();
    for part in v.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (lib, names) = part.split_once(':').expect("lib:names");
        for n in names.split(',') {
            out.insert((lib.trim().to_string(), n.trim().to_string()));
        }
    }
    out
}

pub fn import_corpus() -> Vec<ImportCase> {
    let text = fs::read_to_string(fixtures().join("import_corpus.txt")).unwrap();
    let mut cases = Vec::new();
    let mut cur: Option<ImportCase> = None;
    for raw in text.lines() {
        if raw.starts_with('#') {
            continue;
        }
        if raw.trim().is_empty() {
            cases.extend(cur.take());
            continue;
        }
        let c = cur.get_or_insert_with(ImportCase::default);
        let (key, value) = raw.split_once(':').expect("key: value");
        let value = value.strip_prefix(' ').unwrap_or(value);
        match key {
            "case" => c.name = value.to_string(),
            "context" => c.context.push(value.to_string()),
            "line" => c.line = value.to_string(),
            "imports" => c.imports = parse_imports_field(value),
            "refs" => {
                c.refs = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            other => panic!("unknown corpus key {other:?}"),
        }
    }
    cases.extend(cur);
    cases
}

#[derive(Debug, Default)]
pub struct Score {
    pub cases: usize,
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub mismatches: Vec<String>,
}

impl Score {
    pub fn precision(&self) -> f64 {
        self.true_pos as f64 / (self.true_pos + self.false_pos).max(1) as f64
    }

    pub fn recall(&self) -> f64 {
        self.true_pos as f64 / (self.true_pos + self.false_neg).max(1) as f64
    }
}

/// Scores extraction and reference detection against the annotations.
/// Items are (case, kind, value) triples.
pub fn score_import_corpus(cases: &[ImportCase]) -> Score {
    let mut score = Score {
        cases: cases.len(),
        ..Score::default()
    };
    for c in cases {
        let mut got: BTreeSet<String> = BTreeSet::new();
        for b in extract_imports(&c.line) {
            for n in &b.bound_names {
                got.insert(format!("import {}:{}", b.library, n));
            }
        }
        let context: Vec<_> = c.context.iter().flat_map(|l| extract_imports(l)).collect();
        let index = BindingIndex::from_bindings(&context);
        for lib in line_references(&c.line, &index) {
            got.insert(format!("ref {lib}"));
        }
        let want: BTreeSet<String> = c
            .imports
            .iter()
            .map(|(l, n)| format!("import {l}:{n}"))
            .chain(c.refs.iter().map(|r| format!("ref {r}")))
            .collect();
        score.true_pos += got.intersection(&want).count();
        let fp: Vec<_> = got.difference(&want).collect();
        let fneg: Vec<_> = want.difference(&got).collect();
        score.false_pos += fp.len();
        score.false_neg += fneg.len();
        if !fp.is_empty() || !fneg.is_empty() {
            score
                .mismatches
                .push(format!("{}: unexpected {fp:?}, missing {fneg:?}", c.name));
        }
    }
    score
}
