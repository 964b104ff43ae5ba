//! Procedural corpora: parsing, title normalization, quality filtering and
//! summary statistics.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::embeddings::tokenize;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub title: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub images: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One How-To project. Steps are kept in authored order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Procedure {
    pub id: String,
    pub category: String,
    pub title: String,
    pub split: Split,
    pub steps: Vec<Step>,
}

impl Procedure {
    pub fn image_count(&self) -> usize {
        self.steps.iter().map(|s| s.images.len()).sum()
    }
}

/// Parses a line-delimited corpus. Blank lines are skipped, unknown fields
/// ignored, and ids must be unique.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Vec<Procedure>> {
    let procs: Vec<Procedure> = crate::jsonl::read_records(reader)?;
    let mut seen = HashSet::new();
    for p in &procs {
        if !seen.insert(p.id.as_str()) {
            return Err(Error::DuplicateId(p.id.clone()));
        }
    }
    Ok(procs)
}

pub fn read_corpus(path: &std::path::Path) -> Result<Vec<Procedure>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(std::io::BufReader::new(f))
}

pub fn write_corpus(path: &std::path::Path, procs: &[Procedure]) -> Result<()> {
    crate::jsonl::write_file(path, procs)
}

/// Lowercases, drops non-ASCII characters, collapses whitespace and strips
/// leading step-number indicators such as `Step 3:`, `3.`, `12)` or `4 -`.
///
/// A numeral only counts as an indicator when it is followed by a separator,
/// whitespace or the end of the title, so `2x4 board` is left alone.
pub fn normalize_title(raw: &str) -> String {
    let ascii: String = raw.chars().filter(char::is_ascii).collect();
    let mut s = ascii
        .to_ascii_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    while let Some(rest) = strip_numbering(&s) {
        s = rest.to_string();
    }
    s
}

fn strip_numbering(s: &str) -> Option<&str> {
    let mut rest = s;
    if let Some(r) = rest.strip_prefix("step") {
        rest = r.trim_start();
    }
    let digits = rest.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    rest = &rest[digits..];
    let after_ws = rest.trim_start();
    let had_ws = after_ws.len() != rest.len();
    rest = after_ws;
    if let Some(r) = rest.strip_prefix([':', '.', ')', '-']) {
        return Some(r.trim_start());
    }
    if had_ws || rest.is_empty() {
        Some(rest)
    } else {
        None
    }
}

/// Returns true when a title still carries a leading step-number indicator
/// or is otherwise not in normalized form.
pub fn has_numbering(title: &str) -> bool {
    strip_numbering(title).is_some()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_steps: usize,
    pub max_steps: usize,
    pub min_ascii_ratio: f64,
    pub require_text: bool,
    pub require_images: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_steps: 3,
            max_steps: 25,
            min_ascii_ratio: 0.9,
            require_text: true,
            require_images: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_steps < 1 || self.min_steps > self.max_steps {
            return Err(Error::Config(format!(
                "need 1 <= min_steps <= max_steps, got {} and {}",
                self.min_steps, self.max_steps
            )));
        }
        if !(0.0..=1.0).contains(&self.min_ascii_ratio) {
            return Err(Error::Config(format!(
                "min_ascii_ratio must lie in [0, 1], got {}",
                self.min_ascii_ratio
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    StepCount,
    NoText,
    NoImages,
    AsciiRatio,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::StepCount => "step_count",
            RejectReason::NoText => "no_text",
            RejectReason::NoImages => "no_images",
            RejectReason::AsciiRatio => "ascii_ratio",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<Procedure>,
    pub rejections: Vec<(String, RejectReason)>,
}

/// Fraction of ASCII characters over every text field of the procedure.
/// Empty text counts as fully ASCII.
pub fn ascii_ratio(p: &Procedure) -> f64 {
    let fields = std::iter::once(p.title.as_str())
        .chain(p.steps.iter().flat_map(|s| [s.title.as_str(), s.text.as_str()]));
    let (mut ascii, mut total) = (0usize, 0usize);
    for field in fields {
        for c in field.chars() {
            total += 1;
            if c.is_ascii() {
                ascii += 1;
            }
        }
    }
    if total == 0 {
        1.0
    } else {
        ascii as f64 / total as f64
    }
}

fn rejection(p: &Procedure, cfg: &FilterConfig) -> Option<RejectReason> {
    let n = p.steps.len();
    if n < cfg.min_steps || n > cfg.max_steps {
        return Some(RejectReason::StepCount);
    }
    if cfg.require_text && p.steps.iter().any(|s| s.text.trim().is_empty()) {
        return Some(RejectReason::NoText);
    }
    if cfg.require_images && p.image_count() == 0 {
        return Some(RejectReason::NoImages);
    }
    if ascii_ratio(p) < cfg.min_ascii_ratio {
        return Some(RejectReason::AsciiRatio);
    }
    None
}

/// Splits procedures into those passing every enabled predicate and a list
/// of `(id, reason)` rejections, reporting the first failing predicate.
pub fn filter_corpus(procs: Vec<Procedure>, cfg: &FilterConfig) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for p in procs {
        match rejection(&p, cfg) {
            None => out.kept.push(p),
            Some(reason) => out.rejections.push((p.id, reason)),
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsRow {
    pub n_projects: usize,
    pub avg_steps: f64,
    pub avg_tokens_titles: f64,
    pub avg_tokens_descriptions: f64,
    pub avg_images: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub all: StatsRow,
    pub per_split: BTreeMap<Split, StatsRow>,
}

fn stats_row<'a>(procs: impl Iterator<Item = &'a Procedure>) -> StatsRow {
    let (mut n, mut steps, mut title_tokens, mut desc_tokens, mut images) = (0, 0, 0, 0, 0);
    for p in procs {
        n += 1;
        steps += p.steps.len();
        images += p.image_count();
        for s in &p.steps {
            title_tokens += tokenize(&s.title).len();
            desc_tokens += tokenize(&s.text).len();
        }
    }
    let per_step = |x: usize| if steps == 0 { 0.0 } else { x as f64 / steps as f64 };
    StatsRow {
        n_projects: n,
        avg_steps: if n == 0 { 0.0 } else { steps as f64 / n as f64 },
        avg_tokens_titles: per_step(title_tokens),
        avg_tokens_descriptions: per_step(desc_tokens),
        avg_images: if n == 0 { 0.0 } else { images as f64 / n as f64 },
    }
}

/// Per-split and overall statistics. Token averages are per step; step and
/// image averages are per procedure.
pub fn corpus_stats(procs: &[Procedure]) -> Result<CorpusStats> {
    if procs.is_empty() {
        return Err(Error::Empty("corpus_stats needs at least one procedure"));
    }
    let mut per_split = BTreeMap::new();
    for split in [Split::Train, Split::Val] {
        if procs.iter().any(|p| p.split == split) {
            per_split.insert(split, stats_row(procs.iter().filter(|p| p.split == split)));
        }
    }
    Ok(CorpusStats {
        all: stats_row(procs.iter()),
        per_split,
    })
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<6} {:>9} {:>9} {:>12} {:>12} {:>9}",
            "split", "projects", "steps", "title tok", "desc tok", "images"
        )?;
        let mut row = |name: &str, r: &StatsRow| {
            writeln!(
                f,
                "{:<6} {:>9} {:>9.2} {:>12.2} {:>12.2} {:>9.2}",
                name, r.n_projects, r.avg_steps, r.avg_tokens_titles, r.avg_tokens_descriptions, r.avg_images
            )
        };
        for (split, r) in &self.per_split {
            row(split.as_str(), r)?;
        }
        row("all", &self.all)
    }
}
