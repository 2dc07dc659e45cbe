//! Query-log parsing and the clicked-URL universe.
//!
//! Input logs are tab-separated with columns AnonID, Query, QueryTime,
//! ItemRank, ClickURL. Rows without a click carry only the first three
//! columns (or empty rank/url columns). Files may be gzip-compressed and may
//! be concatenations that repeat the header row.

use std::collections::{BTreeMap, HashSet};
use std::io::{self, BufRead, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use url::Url;

use crate::textio;

/// Timestamp layout used by the log files, second resolution.
pub const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogRecord {
    pub user_id: String,
    pub query_text: String,
    pub query_time: NaiveDateTime,
    pub item_rank: Option<u32>,
    pub click_url: Option<String>,
}

impl LogRecord {
    pub fn has_click(&self) -> bool {
        self.click_url.is_some()
    }
}

/// One parsed line: a record, or a marker for a line that is deliberately
/// skipped rather than an error (header rows, blank separators).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ParsedLine {
    Record(LogRecord),
    Header,
    Blank,
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
pub enum LineError {
    #[error("expected 3 or 5 tab-separated fields, found {0}")]
    FieldCount(usize),
    #[error("unparseable timestamp {0:?}")]
    Timestamp(String),
    #[error("item rank {0:?} is not a positive integer")]
    Rank(String),
    #[error("item rank and click URL must be present together")]
    HalfClick,
}

/// Parses one log line. Header and blank lines yield a skip marker; all
/// structural problems are per-line errors so a caller can keep streaming.
pub fn parse_log_line(line: &str) -> Result<ParsedLine, LineError> {
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.trim().is_empty() {
        return Ok(ParsedLine::Blank);
    }
    let fields: Vec<&str> = line.split('\t').collect();
    if fields[0].trim() == "AnonID" {
        return Ok(ParsedLine::Header);
    }
    if fields.len() != 3 && fields.len() != 5 {
        return Err(LineError::FieldCount(fields.len()));
    }
    let query_time = NaiveDateTime::parse_from_str(fields[2].trim(), TIME_FORMAT)
        .map_err(|_| LineError::Timestamp(fields[2].to_string()))?;
    let (item_rank, click_url) = if fields.len() == 5 {
        let rank_field = fields[3].trim();
        let url_field = fields[4].trim();
        match (rank_field.is_empty(), url_field.is_empty()) {
            (true, true) => (None, None),
            (false, false) => {
                let rank: u32 = rank_field
                    .parse()
                    .ok()
                    .filter(|&r| r > 0)
                    .ok_or_else(|| LineError::Rank(rank_field.to_string()))?;
                (Some(rank), Some(url_field.to_string()))
            }
            _ => return Err(LineError::HalfClick),
        }
    } else {
        (None, None)
    };
    Ok(ParsedLine::Record(LogRecord {
        user_id: fields[0].to_string(),
        query_text: fields[1].to_string(),
        query_time,
        item_rank,
        click_url,
    }))
}

/// Serializes a record in the input file layout. `parse_log_line` on the
/// output reproduces the record exactly.
pub fn format_log_line(r: &LogRecord) -> String {
    match (&r.item_rank, &r.click_url) {
        (Some(rank), Some(url)) => format!(
            "{}\t{}\t{}\t{}\t{}",
            r.user_id,
            r.query_text,
            r.query_time.format(TIME_FORMAT),
            rank,
            url
        ),
        _ => format!(
            "{}\t{}\t{}",
            r.user_id,
            r.query_text,
            r.query_time.format(TIME_FORMAT)
        ),
    }
}

#[derive(Debug, Default, Clone)]
pub struct LogReadStats {
    pub records: u64,
    pub headers: u64,
    pub blanks: u64,
    pub malformed: u64,
    /// First few malformed lines as (line number, message) pairs.
    pub malformed_samples: Vec<(u64, String)>,
}

const MALFORMED_SAMPLE_CAP: usize = 10;

impl LogReadStats {
    fn absorb(&mut self, other: &LogReadStats) {
        self.records += other.records;
        self.headers += other.headers;
        self.blanks += other.blanks;
        self.malformed += other.malformed;
        for s in &other.malformed_samples {
            if self.malformed_samples.len() < MALFORMED_SAMPLE_CAP {
                self.malformed_samples.push(s.clone());
            }
        }
    }
}

/// Streams records to `sink`, skipping headers and blanks and counting (not
/// propagating) malformed lines.
pub fn read_log<R: BufRead, F: FnMut(LogRecord)>(reader: R, mut sink: F) -> io::Result<LogReadStats> {
    let mut stats = LogReadStats::default();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        match parse_log_line(&line) {
            Ok(ParsedLine::Record(r)) => {
                stats.records += 1;
                sink(r);
            }
            Ok(ParsedLine::Header) => stats.headers += 1,
            Ok(ParsedLine::Blank) => stats.blanks += 1,
            Err(e) => {
                stats.malformed += 1;
                if stats.malformed_samples.len() < MALFORMED_SAMPLE_CAP {
                    stats.malformed_samples.push((idx as u64 + 1, e.to_string()));
                }
            }
        }
    }
    Ok(stats)
}

/// Reads one log file, gzip or plain.
pub fn read_log_file<F: FnMut(LogRecord)>(path: &Path, sink: F) -> io::Result<LogReadStats> {
    read_log(textio::open_maybe_gzip(path)?, sink)
}

/// Reads several log files in the given order into one stats total.
pub fn read_log_files<F: FnMut(LogRecord)>(paths: &[impl AsRef<Path>], mut sink: F) -> io::Result<LogReadStats> {
    let mut total = LogReadStats::default();
    for p in paths {
        let stats = read_log_file(p.as_ref(), &mut sink)?;
        total.absorb(&stats);
    }
    Ok(total)
}

#[derive(Debug, thiserror::Error)]
#[error("cannot parse URL {input:?}: {source}")]
pub struct UrlParseError {
    pub input: String,
    #[source]
    source: url::ParseError,
}

/// Normalizes a URL for identity comparisons: scheme and host lowercased,
/// fragment removed, and a bare trailing "/" on an otherwise empty path
/// dropped. Percent-encoding is left as found. Idempotent.
///
/// Deliberately conservative: "www." prefixes and the http/https distinction
/// are preserved, because the archive is keyed by the literal URL.
pub fn canonicalize_url(raw: &str) -> Result<String, UrlParseError> {
    let trimmed = raw.trim();
    let mut parsed = Url::parse(trimmed).map_err(|source| UrlParseError {
        input: raw.to_string(),
        source,
    })?;
    parsed.set_fragment(None);
    let bare_root = parsed.path() == "/" && parsed.query().is_none();
    let mut out = String::from(parsed);
    if bare_root && out.ends_with('/') {
        out.pop();
    }
    Ok(out)
}

/// True when the URL points at a site root: empty or "/" path and no query
/// string. A query string disqualifies because it requests specific content.
pub fn is_homepage(url: &str) -> bool {
    match Url::parse(url) {
        Ok(u) => (u.path().is_empty() || u.path() == "/") && u.query().is_none(),
        Err(_) => false,
    }
}

/// The set of unique canonical clicked URLs with their click counts.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct UrlUniverse {
    counts: BTreeMap<String, u64>,
}

impl UrlUniverse {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one observation of an already-canonical URL.
    pub fn add_canonical(&mut self, url: String) {
        *self.counts.entry(url).or_insert(0) += 1;
    }

    /// Canonicalizes and adds the record's click, if any. Returns whether a
    /// click was added; unparseable click URLs are the caller's to count.
    pub fn add_record(&mut self, r: &LogRecord) -> Result<bool, UrlParseError> {
        match &r.click_url {
            None => Ok(false),
            Some(raw) => {
                self.add_canonical(canonicalize_url(raw)?);
                Ok(true)
            }
        }
    }

    /// Commutative multiset union, for merging per-shard universes.
    pub fn merge(&mut self, other: UrlUniverse) {
        for (url, count) in other.counts {
            *self.counts.entry(url).or_insert(0) += count;
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn click_count(&self, url: &str) -> Option<u64> {
        self.counts.get(url).copied()
    }

    pub fn total_clicks(&self) -> u64 {
        self.counts.values().sum()
    }

    /// URLs in bytewise ascending order.
    pub fn urls(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(u, &c)| (u.as_str(), c))
    }

    pub fn stats(&self) -> UniverseStats {
        let unique_count = self.counts.len() as u64;
        let mut single = 0u64;
        let mut homepages = 0u64;
        let mut schemes: BTreeMap<String, u64> = BTreeMap::new();
        for (url, &count) in &self.counts {
            if count == 1 {
                single += 1;
            }
            if is_homepage(url) {
                homepages += 1;
            }
            let scheme = Url::parse(url)
                .map(|u| u.scheme().to_string())
                .unwrap_or_else(|_| "unparseable".to_string());
            *schemes.entry(scheme).or_insert(0) += 1;
        }
        let denom = unique_count.max(1) as f64;
        UniverseStats {
            unique_count,
            single_click_fraction: if unique_count == 0 { 0.0 } else { single as f64 / denom },
            homepage_fraction: if unique_count == 0 { 0.0 } else { homepages as f64 / denom },
            scheme_histogram: schemes,
        }
    }

    /// Writes `canonical_url \t click_count` lines, URL bytewise ascending.
    pub fn write_report<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (url, count) in &self.counts {
            writeln!(w, "{url}\t{count}")?;
        }
        Ok(())
    }

    pub fn read_report<R: BufRead>(r: R) -> Result<Self, UniverseReadError> {
        let mut counts = BTreeMap::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line.map_err(UniverseReadError::Io)?;
            if line.is_empty() {
                continue;
            }
            let lineno = idx as u64 + 1;
            let (url, count) = line
                .split_once('\t')
                .ok_or(UniverseReadError::FieldCount { line: lineno })?;
            let count: u64 = count
                .parse()
                .map_err(|_| UniverseReadError::BadCount { line: lineno })?;
            if counts.insert(url.to_string(), count).is_some() {
                return Err(UniverseReadError::DuplicateUrl { line: lineno });
            }
        }
        Ok(UrlUniverse { counts })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UniverseStats {
    pub unique_count: u64,
    pub single_click_fraction: f64,
    pub homepage_fraction: f64,
    pub scheme_histogram: BTreeMap<String, u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum UniverseReadError {
    #[error("i/o error reading universe report: {0}")]
    Io(io::Error),
    #[error("line {line}: expected url \\t count")]
    FieldCount { line: u64 },
    #[error("line {line}: click count is not an integer")]
    BadCount { line: u64 },
    #[error("line {line}: duplicate URL")]
    DuplicateUrl { line: u64 },
}

/// Counts distinct raw (uncanonicalized) clicked URL strings alongside a
/// universe build, for comparing against counts computed without any
/// normalization.
#[derive(Debug, Default)]
pub struct RawClickCounter {
    seen: HashSet<String>,
}

impl RawClickCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, r: &LogRecord) {
        if let Some(u) = &r.click_url {
            if !self.seen.contains(u) {
                self.seen.insert(u.clone());
            }
        }
    }

    pub fn distinct(&self) -> u64 {
        self.seen.len() as u64
    }
}
