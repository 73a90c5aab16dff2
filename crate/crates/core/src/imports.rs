//! Line-level import extraction and library-reference counting.
//!
//! This is a pattern-matching analysis over physical diff lines, not a
//! Python parser. A library is referenced by a line when the line imports
//! it, or when one of the names its imports bound in the same file appears
//! as a whole token immediately followed by `.` or `(`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::{FileDelta, OrderedHistory};

/// Bound name recorded for `from x import *`. It can never match a token.
pub const WILDCARD: &str = "*";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum LibraryClass {
    Builtin,
    PyPI,
    Local,
}

impl LibraryClass {
    pub const ALL: [LibraryClass; 3] = [LibraryClass::Builtin, LibraryClass::PyPI, LibraryClass::Local];

    pub fn as_str(self) -> &'static str {
        match self {
            LibraryClass::Builtin => "Builtin",
            LibraryClass::PyPI => "PyPI",
            LibraryClass::Local => "Local",
        }
    }
}

impl fmt::Display for LibraryClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct LibraryRef {
    pub name: String,
    pub class: LibraryClass,
}

/// A library together with the names an import statement bound for it.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ImportBinding {
    pub library: String,
    pub bound_names: BTreeSet<String>,
}

impl ImportBinding {
    pub fn new<I, S>(library: &str, names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ImportBinding {
            library: library.to_string(),
            bound_names: names.into_iter().map(Into::into).collect(),
        }
    }
}

/// Standard-library and package-index vocabularies.
#[derive(Debug, Clone, Default)]
pub struct Vocabulary {
    pub builtin: BTreeSet<String>,
    pub pypi: BTreeSet<String>,
}

const DEFAULT_BUILTIN: &str = include_str!("../data/builtin.txt");
const DEFAULT_PYPI: &str = include_str!("../data/pypi.txt");

/// Reads a token list: one token per line, `#` starts a comment.
pub fn parse_token_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn read_token_file(path: &Path) -> Result<BTreeSet<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_token_list(&text))
}

impl Vocabulary {
    /// The vocabularies shipped with the crate.
    pub fn bundled() -> Self {
        Vocabulary {
            builtin: parse_token_list(DEFAULT_BUILTIN),
            pypi: parse_token_list(DEFAULT_PYPI),
        }
    }

    pub fn from_files(builtin: &Path, pypi: &Path) -> Result<Self> {
        Ok(Vocabulary {
            builtin: read_token_file(builtin)?,
            pypi: read_token_file(pypi)?,
        })
    }

    pub fn classify(&self, name: &str) -> LibraryClass {
        classify_library(name, &self.builtin, &self.pypi)
    }

    pub fn library_ref(&self, name: &str) -> LibraryRef {
        LibraryRef {
            name: name.to_string(),
            class: self.classify(name),
        }
    }
}

/// Builtin wins over PyPI when a name is in both vocabularies.
pub fn classify_library(name: &str, builtin: &BTreeSet<String>, pypi: &BTreeSet<String>) -> LibraryClass {
    if builtin.contains(name) {
        LibraryClass::Builtin
    } else if pypi.contains(name) {
        LibraryClass::PyPI
    } else {
        LibraryClass::Local
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(is_ident_start) && chars.all(is_ident_char)
}

fn import_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^import\s+(.+)$").expect("static regex"))
}

fn from_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^from\s+(\S+)\s+import(?:\s+|\s*\(\s*|\s*$)(.*)$").expect("static regex"))
}

/// Library token of a dotted module path: its first component, lowercased.
/// `None` for relative or malformed paths.
fn library_of(dotted: &str) -> Option<String> {
    if dotted.starts_with('.') || !dotted.split('.').all(is_identifier) {
        return None;
    }
    dotted.split('.').next().map(str::to_lowercase)
}

/// Splits `name` or `name as alias` into the bound identifier.
fn alias_target(item: &str) -> Option<(&str, &str)> {
    let mut words = item.split_whitespace();
    let name = words.next()?;
    match (words.next(), words.next(), words.next()) {
        (None, _, _) => Some((name, name)),
        (Some("as"), Some(alias), None) if is_identifier(alias) => Some((name, alias)),
        _ => None,
    }
}

fn parse_import_clause(body: &str) -> Vec<ImportBinding> {
    let mut out = Vec::new();
    for item in body.split(',') {
        let item = item.trim().trim_end_matches('\\').trim();
        if item.is_empty() {
            continue;
        }
        let Some((module, bound)) = alias_target(item) else {
            return Vec::new();
        };
        let Some(library) = library_of(module) else {
            return Vec::new();
        };
        // `import a.b` binds `a`; `import a.b as c` binds `c`.
        let name = if bound == module {
            module.split('.').next().unwrap_or(module).to_string()
        } else {
            bound.to_string()
        };
        out.push(ImportBinding {
            library,
            bound_names: BTreeSet::from([name]),
        });
    }
    out
}

fn parse_from_clause(module: &str, names: &str) -> Vec<ImportBinding> {
    let Some(library) = library_of(module) else {
        return Vec::new();
    };
    let names = names
        .trim()
        .trim_end_matches('\\')
        .trim()
        .trim_start_matches('(')
        .trim_end_matches(')')
        .trim();
    if names == "*" {
        return vec![ImportBinding::new(&library, [WILDCARD])];
    }
    let mut bound = BTreeSet::new();
    for item in names.split(',') {
        let item = item.trim();
        if item.is_empty() {
            continue;
        }
        match alias_target(item) {
            Some((name, alias)) if is_identifier(name) => {
                bound.insert(alias.to_string());
            }
            _ => return Vec::new(),
        }
    }
    if bound.is_empty() {
        return Vec::new();
    }
    vec![ImportBinding {
        library,
        bound_names: bound,
    }]
}

/// Strips a trailing `#` comment. Quotes are not tracked; an import
/// statement has no string literals before a comment.
fn strip_comment(line: &str) -> &str {
    line.split('#').next().unwrap_or("")
}

/// Import bindings declared by one physical source line.
///
/// Recognizes `import a[.b][ as x][, ...]`, `from a[.b] import f[ as g][, ...]`
/// (optionally parenthesized) and `from a import *`, with any indentation and
/// `;`-separated statements. Relative imports and lines that do not match are
/// ignored.
pub fn extract_imports(line: &str) -> Vec<ImportBinding> {
    let code = strip_comment(line);
    let mut out = Vec::new();
    for stmt in code.split(';') {
        let stmt = stmt.trim();
        if let Some(caps) = from_re().captures(stmt) {
            out.extend(parse_from_clause(&caps[1], &caps[2]));
        } else if let Some(caps) = import_re().captures(stmt) {
            out.extend(parse_import_clause(&caps[1]));
        }
    }
    out
}

/// Libraries imported by a line.
pub fn imported_libraries(line: &str) -> BTreeSet<String> {
    extract_imports(line).into_iter().map(|b| b.library).collect()
}

/// Lookup from bound name to the libraries that bound it.
#[derive(Debug, Clone, Default)]
pub struct BindingIndex {
    by_name: HashMap<String, BTreeSet<String>>,
}

impl BindingIndex {
    pub fn from_bindings<'a, I>(bindings: I) -> Self
    where
        I: IntoIterator<Item = &'a ImportBinding>,
    {
        let mut idx = BindingIndex::default();
        for b in bindings {
            idx.add(b);
        }
        idx
    }

    fn add(&mut self, b: &ImportBinding) {
        for name in &b.bound_names {
            self.by_name.entry(name.clone()).or_default().insert(b.library.clone());
        }
    }

    pub fn libraries_for(&self, name: &str) -> Option<&BTreeSet<String>> {
        self.by_name.get(name)
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }
}

/// Whole identifier tokens of `line` that are immediately followed by `.`
/// or `(`.
pub fn indicator_tokens(line: &str) -> impl Iterator<Item = &str> {
    tokens_followed_by(line, b".(")
}

/// Whole identifier tokens of `line` immediately followed by one of the
/// ASCII `indicators`.
pub fn tokens_followed_by<'a>(line: &'a str, indicators: &'a [u8]) -> impl Iterator<Item = &'a str> {
    let bytes = line.as_bytes();
    let mut pos = 0;
    std::iter::from_fn(move || {
        while pos < line.len() {
            let rest = &line[pos..];
            let c = rest.chars().next()?;
            if !is_ident_start(c) {
                // Skip non-identifier chars, and digits that would otherwise
                // start a token in the middle of a number.
                if is_ident_char(c) {
                    let len: usize = rest
                        .char_indices()
                        .find(|&(_, ch)| !is_ident_char(ch))
                        .map(|(i, _)| i)
                        .unwrap_or(rest.len());
                    pos += len;
                } else {
                    pos += c.len_utf8();
                }
                continue;
            }
            let len = rest
                .char_indices()
                .find(|&(_, ch)| !is_ident_char(ch))
                .map(|(i, _)| i)
                .unwrap_or(rest.len());
            let start = pos;
            pos += len;
            if bytes.get(pos).is_some_and(|b| indicators.contains(b)) {
                return Some(&line[start..pos]);
            }
        }
        None
    })
}

/// Libraries referenced by a line under the given file bindings.
///
/// String and comment contents are not excluded.
pub fn line_references(line: &str, bindings: &BindingIndex) -> BTreeSet<String> {
    let mut refs = imported_libraries(line);
    if !bindings.is_empty() {
        for token in indicator_tokens(line) {
            if let Some(libs) = bindings.libraries_for(token) {
                refs.extend(libs.iter().cloned());
            }
        }
    }
    refs
}

/// Import bindings alive in one file, with multiplicity so that deleting one
/// of two identical import lines keeps the binding.
#[derive(Debug, Clone, Default)]
pub struct FileBindingState {
    live: BTreeMap<ImportBinding, usize>,
    index: BindingIndex,
}

impl FileBindingState {
    pub fn bindings(&self) -> impl Iterator<Item = &ImportBinding> {
        self.live.keys()
    }

    pub fn index(&self) -> &BindingIndex {
        &self.index
    }

    pub fn contains(&self, b: &ImportBinding) -> bool {
        self.live.contains_key(b)
    }

    fn rebuild(&mut self) {
        self.index = BindingIndex::from_bindings(self.live.keys());
    }

    /// Applies a commit's import changes: deleted import lines release their
    /// bindings, then added import lines create theirs.
    pub fn apply(&mut self, delta: &FileDelta) {
        let mut changed = false;
        for line in &delta.deleted_lines {
            for b in extract_imports(line) {
                if let Some(n) = self.live.get_mut(&b) {
                    *n -= 1;
                    if *n == 0 {
                        self.live.remove(&b);
                    }
                    changed = true;
                }
            }
        }
        for line in &delta.added_lines {
            for b in extract_imports(line) {
                *self.live.entry(b).or_default() += 1;
                changed = true;
            }
        }
        if changed {
            self.rebuild();
        }
    }
}

/// Added and deleted lines referencing one library.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LocCount {
    pub added: u64,
    pub deleted: u64,
}

impl LocCount {
    pub fn changed(self) -> u64 {
        self.added + self.deleted
    }

    pub fn net(self) -> i64 {
        self.added as i64 - self.deleted as i64
    }
}

/// Counts referencing lines of a delta and advances `state` past it.
///
/// Deleted lines are judged against the bindings before the commit, added
/// lines against the bindings including this commit's import changes. A line
/// referencing several libraries counts once for each.
pub fn count_loc(delta: &FileDelta, state: &mut FileBindingState) -> BTreeMap<String, LocCount> {
    let mut counts: BTreeMap<String, LocCount> = BTreeMap::new();
    for line in &delta.deleted_lines {
        for lib in line_references(line, state.index()) {
            counts.entry(lib).or_default().deleted += 1;
        }
    }
    state.apply(delta);
    for line in &delta.added_lines {
        for lib in line_references(line, state.index()) {
            counts.entry(lib).or_default().added += 1;
        }
    }
    counts
}

/// Per-commit library LOC counts of a whole history, aligned with
/// `history.commits`.
#[derive(Debug, Clone, Default)]
pub struct HistoryUsage {
    pub commits: Vec<BTreeMap<String, LocCount>>,
}

impl HistoryUsage {
    pub fn at(&self, index: usize) -> Option<&BTreeMap<String, LocCount>> {
        self.commits.get(index)
    }

    pub fn loc(&self, index: usize, library: &str) -> LocCount {
        self.commits
            .get(index)
            .and_then(|m| m.get(library))
            .copied()
            .unwrap_or_default()
    }
}

/// Replays a history in order, tracking bindings per file path.
pub fn replay_history(history: &OrderedHistory) -> HistoryUsage {
    let mut files: HashMap<&str, FileBindingState> = HashMap::new();
    let commits = history
        .commits
        .iter()
        .map(|commit| {
            let mut totals: BTreeMap<String, LocCount> = BTreeMap::new();
            for delta in &commit.deltas {
                let state = files.entry(delta.path.as_str()).or_default();
                for (lib, c) in count_loc(delta, state) {
                    let t = totals.entry(lib).or_default();
                    t.added += c.added;
                    t.deleted += c.deleted;
                }
            }
            totals
        })
        .collect();
    HistoryUsage { commits }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(lib: &str, names: &[&str]) -> ImportBinding {
        ImportBinding::new(lib, names.iter().copied())
    }

    fn delta(added: &[&str], deleted: &[&str]) -> FileDelta {
        FileDelta {
            path: "m.py".into(),
            added_lines: added.iter().map(|s| s.to_string()).collect(),
            deleted_lines: deleted.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn libs(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn simple_import() {
        assert_eq!(extract_imports("import os"), vec![b("os", &["os"])]);
    }

    #[test]
    fn from_import() {
        assert_eq!(
            extract_imports("from collections import OrderedDict"),
            vec![b("collections", &["OrderedDict"])]
        );
    }

    #[test]
    fn aliased_list() {
        assert_eq!(
            extract_imports("import numpy as np, scipy"),
            vec![b("numpy", &["np"]), b("scipy", &["scipy"])]
        );
    }

    #[test]
    fn grammar_variants() {
        assert_eq!(extract_imports("    import os.path"), vec![b("os", &["os"])]);
        assert_eq!(extract_imports("import os.path as osp"), vec![b("os", &["osp"])]);
        assert_eq!(
            extract_imports("from Foo.bar import baz as q, r"),
            vec![b("foo", &["q", "r"])]
        );
        assert_eq!(extract_imports("from x import *"), vec![b("x", &[WILDCARD])]);
        assert_eq!(extract_imports("from a import (b, c)"), vec![b("a", &["b", "c"])]);
        assert_eq!(extract_imports("from a import (b,"), vec![b("a", &["b"])]);
        assert_eq!(extract_imports("import os  # for paths"), vec![b("os", &["os"])]);
        assert_eq!(
            extract_imports("import os; import sys"),
            vec![b("os", &["os"]), b("sys", &["sys"])]
        );
    }

    #[test]
    fn non_imports() {
        for line in [
            "# import os",
            "from . import x",
            "from .pkg import y",
            "importlib.reload(m)",
            "x = 'import os'",
            "import",
            "from a import",
            "import 3d",
            "",
        ] {
            assert!(extract_imports(line).is_empty(), "{line:?}");
        }
    }

    #[test]
    fn indicator_rule() {
        let idx = BindingIndex::from_bindings(&[b("numpy", &["np"])]);
        assert_eq!(line_references("x = np.zeros(3)", &idx), libs(&["numpy"]));
        assert!(line_references("print(np)", &idx).is_empty());
        assert!(line_references("x = snp.zeros(3)", &idx).is_empty());
        assert!(line_references("x = np_.zeros(3)", &idx).is_empty());
        assert_eq!(line_references("np(1)", &idx), libs(&["numpy"]));
        assert_eq!(line_references("s = 'np.x'", &idx), libs(&["numpy"]));
    }

    #[test]
    fn import_line_references_itself() {
        assert_eq!(line_references("import os", &BindingIndex::default()), libs(&["os"]));
    }

    #[test]
    fn wildcard_never_matches_tokens() {
        let idx = BindingIndex::from_bindings(&[b("x", &[WILDCARD])]);
        assert!(line_references("*.foo()", &idx).is_empty());
    }

    #[test]
    fn count_loc_examples() {
        let mut state = FileBindingState::default();
        let counts = count_loc(&delta(&["import os", "os.getcwd()"], &[]), &mut state);
        assert_eq!(counts["os"], LocCount { added: 2, deleted: 0 });

        let mut state = FileBindingState::default();
        state.apply(&delta(&["import numpy as np"], &[]));
        let counts = count_loc(&delta(&[], &["np.array(x)"]), &mut state);
        assert_eq!(counts["numpy"], LocCount { added: 0, deleted: 1 });

        assert!(count_loc(&delta(&[], &[]), &mut FileBindingState::default()).is_empty());
    }

    #[test]
    fn multi_library_line_counts_for_each() {
        let mut state = FileBindingState::default();
        let counts = count_loc(
            &delta(&["import numpy as np", "import os", "np.save(os.path.join(a))"], &[]),
            &mut state,
        );
        assert_eq!(counts["numpy"].added, 2);
        assert_eq!(counts["os"].added, 2);
    }

    #[test]
    fn deleting_import_releases_binding() {
        let mut state = FileBindingState::default();
        count_loc(&delta(&["import os"], &[]), &mut state);
        // The deleted import is judged before removal, the added usage after.
        let counts = count_loc(&delta(&["os.getcwd()"], &["import os"]), &mut state);
        assert_eq!(counts["os"], LocCount { added: 0, deleted: 1 });
        assert!(state.bindings().next().is_none());
    }

    #[test]
    fn duplicate_imports_are_counted() {
        let mut state = FileBindingState::default();
        state.apply(&delta(&["import os", "import os"], &[]));
        state.apply(&delta(&[], &["import os"]));
        assert!(state.contains(&b("os", &["os"])));
        state.apply(&delta(&[], &["import os"]));
        assert!(!state.contains(&b("os", &["os"])));
    }

    #[test]
    fn classification() {
        let v = Vocabulary::bundled();
        assert_eq!(v.classify("os"), LibraryClass::Builtin);
        assert_eq!(v.classify("pandas"), LibraryClass::PyPI);
        assert_eq!(v.classify("my_unheard_of_module"), LibraryClass::Local);
        let both = libs(&["x"]);
        assert_eq!(classify_library("x", &both, &both), LibraryClass::Builtin);
    }

    #[test]
    fn token_list_parsing() {
        assert_eq!(
            parse_token_list("# header\nOs\n\nnumpy # arrays\n"),
            libs(&["os", "numpy"])
        );
    }
}
