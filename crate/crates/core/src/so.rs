//! Stack Overflow question index.
//!
//! Streams a Stack Exchange `Posts.xml` dump, keeps Python questions, and
//! records for each library the creation times of the questions that mention
//! it. A question mentions a library when the library is one of its tags,
//! when a code span imports it, or when a code span uses it as a whole token
//! followed by `.`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;

use chrono::NaiveDateTime;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::imports::{imported_libraries, parse_token_list, tokens_followed_by, LibraryClass};
use crate::stats::{loglog_fit, LogLogFit};

pub const DEFAULT_PYTHON_TAGS: &str = include_str!("../data/python_tags.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostRecord {
    pub post_id: u64,
    pub creation_time: i64,
    pub tags: BTreeSet<String>,
    pub body: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedPosts {
    pub posts: Vec<PostRecord>,
    /// Rows that could not be read.
    pub malformed: u64,
}

pub fn default_python_tags() -> BTreeSet<String> {
    parse_token_list(DEFAULT_PYTHON_TAGS)
}

/// Splits `<a><b>` or `|a|b|` tag strings.
pub fn parse_tags(raw: &str) -> BTreeSet<String> {
    raw.split(['<', '>', '|'])
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Parses a dump timestamp such as `2008-07-31T21:42:52.667` as UTC.
pub fn parse_creation_date(raw: &str) -> Option<i64> {
    NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S%.f")
        .ok()
        .map(|dt| dt.and_utc().timestamp())
}

enum Row {
    Keep(PostRecord),
    Drop,
    Malformed,
}

fn read_row(e: &BytesStart<'_>, python_tags: &BTreeSet<String>) -> Row {
    let mut id = None;
    let mut post_type = None;
    let mut created = None;
    let mut tags = None;
    let mut body = None;
    for attr in e.attributes() {
        let Ok(attr) = attr else { return Row::Malformed };
        let Ok(value) = attr.unescape_value() else {
            return Row::Malformed;
        };
        match attr.key.as_ref() {
            b"Id" => id = Some(value.into_owned()),
            b"PostTypeId" => post_type = Some(value.into_owned()),
            b"CreationDate" => created = Some(value.into_owned()),
            b"Tags" => tags = Some(value.into_owned()),
            b"Body" => body = Some(value.into_owned()),
            _ => {}
        }
    }
    let Some(post_type) = post_type else {
        return Row::Malformed;
    };
    if post_type != "1" {
        return Row::Drop;
    }
    let (Some(id), Some(created)) = (id, created) else {
        return Row::Malformed;
    };
    let (Ok(post_id), Some(creation_time)) = (id.parse(), parse_creation_date(&created)) else {
        return Row::Malformed;
    };
    let tags = parse_tags(tags.as_deref().unwrap_or(""));
    if tags.is_disjoint(python_tags) {
        return Row::Drop;
    }
    Row::Keep(PostRecord {
        post_id,
        creation_time,
        tags,
        body: body.unwrap_or_default(),
    })
}

/// Reads question rows tagged with any of `python_tags`. Answers and other
/// post types are dropped; unreadable rows are counted and skipped.
pub fn parse_posts_dump<R: BufRead>(input: R, python_tags: &BTreeSet<String>) -> Result<ParsedPosts> {
    let mut reader = Reader::from_reader(input);
    let mut buf = Vec::new();
    let mut out = ParsedPosts::default();
    loop {
        match reader.read_event_into(&mut buf) {
            Ok(Event::Empty(e)) | Ok(Event::Start(e)) if e.name().as_ref() == b"row" => {
                match read_row(&e, python_tags) {
                    Row::Keep(p) => out.posts.push(p),
                    Row::Drop => {}
                    Row::Malformed => out.malformed += 1,
                }
            }
            Ok(Event::Eof) => break,
            Ok(_) => {}
            Err(err) => {
                return Err(Error::Invalid(format!(
                    "posts dump at byte {}: {err}",
                    reader.error_position()
                )))
            }
        }
        buf.clear();
    }
    if out.malformed > 0 {
        log::warn!("skipped {} malformed post rows", out.malformed);
    }
    Ok(out)
}

/// Contents of `<code>` elements in an HTML post body, entity-decoded.
pub fn code_spans(body: &str) -> Vec<String> {
    let mut spans = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find("<code") {
        let after = &rest[open + 5..];
        let Some(gt) = after.find('>') else { break };
        let inner = &after[gt + 1..];
        let end = inner.find("</code>").unwrap_or(inner.len());
        let raw = &inner[..end];
        let text = quick_xml::escape::unescape(raw)
            .map(|c| c.into_owned())
            .unwrap_or_else(|_| raw.to_string());
        spans.push(text);
        rest = &inner[end..];
    }
    spans
}

/// Vocabulary libraries mentioned by a post.
pub fn extract_mentions(post: &PostRecord, vocabulary: &BTreeSet<String>) -> BTreeSet<String> {
    let mut found: BTreeSet<String> = post.tags.intersection(vocabulary).cloned().collect();
    for span in code_spans(&post.body) {
        for line in span.lines() {
            for lib in imported_libraries(line) {
                if vocabulary.contains(&lib) {
                    found.insert(lib);
                }
            }
            for token in tokens_followed_by(line, b".") {
                let lower = token.to_lowercase();
                if vocabulary.contains(&lower) {
                    found.insert(lower);
                }
            }
        }
    }
    found
}

/// Creation times of mentioning questions per library, ascending.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MentionIndex {
    times: BTreeMap<String, Vec<i64>>,
}

impl MentionIndex {
    pub fn build(posts: &[PostRecord], vocabulary: &BTreeSet<String>) -> Self {
        let mut times: BTreeMap<String, Vec<i64>> = BTreeMap::new();
        for post in posts {
            // One entry per (library, post): mentions come back as a set.
            for lib in extract_mentions(post, vocabulary) {
                times.entry(lib).or_default().push(post.creation_time);
            }
        }
        for v in times.values_mut() {
            v.sort_unstable();
        }
        MentionIndex { times }
    }

    /// Mentioning posts created strictly before `t`.
    pub fn posts_before(&self, library: &str, t: i64) -> u64 {
        self.times
            .get(library)
            .map_or(0, |v| v.partition_point(|&c| c < t) as u64)
    }

    pub fn total(&self, library: &str) -> u64 {
        self.times.get(library).map_or(0, |v| v.len() as u64)
    }

    pub fn first_post_time(&self, library: &str) -> Option<i64> {
        self.times.get(library).and_then(|v| v.first().copied())
    }

    pub fn libraries(&self) -> impl Iterator<Item = &str> {
        self.times.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SoBin {
    Zero,
    UnderHundred,
    UnderThousand,
    ThousandPlus,
}

impl SoBin {
    pub const ALL: [SoBin; 4] = [
        SoBin::Zero,
        SoBin::UnderHundred,
        SoBin::UnderThousand,
        SoBin::ThousandPlus,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SoBin::Zero => "0",
            SoBin::UnderHundred => "[1,100)",
            SoBin::UnderThousand => "[100,1000)",
            SoBin::ThousandPlus => "[1000,∞)",
        }
    }
}

impl fmt::Display for SoBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn so_bin(count: u64) -> SoBin {
    match count {
        0 => SoBin::Zero,
        1..=99 => SoBin::UnderHundred,
        100..=999 => SoBin::UnderThousand,
        _ => SoBin::ThousandPlus,
    }
}

/// Corpus popularity of one library.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LibraryPopularity {
    pub library: String,
    pub class: LibraryClass,
    /// Distinct authors whose commits reference the library.
    pub users: u64,
    /// Mean, over the library's adoption events, of the questions that
    /// existed at adoption time.
    pub posts: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassFit {
    pub class: LibraryClass,
    pub fit: Option<LogLogFit>,
}

/// Minimum posts and users for a library to enter a fit.
pub const FIT_FLOOR: f64 = 10.0;

/// Per-class log-log fit of users against posts over libraries with at
/// least `floor` of each. Classes with fewer than three such libraries get
/// no fit.
pub fn correlate_users_posts(libraries: &[LibraryPopularity], floor: f64) -> Vec<ClassFit> {
    LibraryClass::ALL
        .iter()
        .map(|&class| {
            let points: Vec<(f64, f64)> = libraries
                .iter()
                .filter(|l| l.class == class && l.posts >= floor && l.users as f64 >= floor)
                .map(|l| (l.posts, l.users as f64))
                .collect();
            ClassFit {
                class,
                fit: loglog_fit(&points).ok(),
            }
        })
        .collect()
}
