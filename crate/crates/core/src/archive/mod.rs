//! Web-archive client: snapshot resolution through the availability API,
//! polite resumable fetching, and the doc_id→snapshot mapping file that
//! makes a corpus version reconstructible.

pub mod client;
pub mod fetcher;
pub mod journal;
pub mod mock;
pub mod spool;

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::time::Duration;

use md5::{Digest, Md5};

use crate::textio;

pub use client::{ArchiveClient, ClientError};
pub use fetcher::{
    build_mapping, fetch_plan, load_crawl_state, map_plan, resume_plan, run_fetch_phase,
    run_map_phase, CrawlLimits, CrawlPaths, CrawlState, FetchReport, HostGate, MapReport,
    MappingBuild,
};
pub use journal::{Disposition, Journal, JournalEntry, SnapshotRow};
pub use spool::{read_spool, SpoolEntry, SpoolWriter};

/// Hex digits of the MD5 digest used for a doc id; the full digest is 32.
pub const DOC_ID_LEN: usize = 12;

#[derive(Debug, thiserror::Error)]
pub enum ArchiveError {
    #[error("duplicate doc_id {doc_id} for urls: {}", urls.join(", "))]
    DuplicateDocId { doc_id: String, urls: Vec<String> },
    #[error("{path} line {line}: {problem}")]
    Malformed { path: String, line: usize, problem: String },
    #[error("journal {path} is corrupt at line {line}: {problem}")]
    CorruptJournal { path: String, line: usize, problem: String },
    #[error("spool {path} is corrupt at byte {offset}: {problem}")]
    CorruptSpool { path: String, offset: u64, problem: String },
    #[error("archive client: {0}")]
    Client(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

fn md5_hex(url: &str) -> String {
    let digest = Md5::digest(url.as_bytes());
    let mut out = String::with_capacity(32);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// First 12 lowercase hex digits of the MD5 of the URL bytes. Stable across
/// runs and platforms; use [`assign_doc_ids`] when a whole universe needs
/// collision-checked ids.
pub fn assign_doc_id(url: &str) -> String {
    let mut hex = md5_hex(url);
    hex.truncate(DOC_ID_LEN);
    hex
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionGroup {
    pub prefix: String,
    pub urls: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocIdAssignment {
    /// url → doc_id.
    pub ids: BTreeMap<String, String>,
    pub collisions: Vec<CollisionGroup>,
}

/// Assigns ids to a whole URL set with a pairwise collision audit. URLs
/// whose 12-digit prefixes collide get the full 32-digit digest instead, so
/// ids stay unique without widening everyone's keys.
pub fn assign_doc_ids<I, S>(urls: I) -> DocIdAssignment
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let mut by_prefix: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for url in urls {
        let url = url.into();
        let prefix = assign_doc_id(&url);
        let group = by_prefix.entry(prefix).or_default();
        if !group.contains(&url) {
            group.push(url);
        }
    }
    let mut assignment = DocIdAssignment::default();
    for (prefix, mut group) in by_prefix {
        if group.len() == 1 {
            assignment.ids.insert(group.pop().expect("non-empty"), prefix);
        } else {
            group.sort();
            for url in &group {
                assignment.ids.insert(url.clone(), md5_hex(url));
            }
            assignment.collisions.push(CollisionGroup { prefix, urls: group });
        }
    }
    assignment
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub archive_url: String,
    /// 14-digit YYYYMMDDhhmmss.
    pub timestamp: String,
    pub http_status: u16,
    pub available: bool,
}

impl Snapshot {
    /// Whether the snapshot may enter the mapping: marked available, the
    /// archived capture returned 200 (redirect captures record an
    /// interstitial, not the page), and the timestamp is a real instant.
    pub fn is_acceptable(&self) -> bool {
        self.available && self.http_status == 200 && valid_timestamp(&self.timestamp)
    }
}

pub fn valid_timestamp(ts: &str) -> bool {
    ts.len() == 14
        && ts.bytes().all(|b| b.is_ascii_digit())
        && chrono::NaiveDateTime::parse_from_str(ts, "%Y%m%d%H%M%S").is_ok()
}

/// Rewrites an archive replay URL into its raw-content form by inserting
/// `id_` after the timestamp, which skips the injected banner markup.
pub fn raw_content_url(archive_url: &str) -> String {
    if let Some(web) = archive_url.find("/web/") {
        let ts_start = web + "/web/".len();
        let rest = &archive_url[ts_start..];
        if rest.len() > 14
            && rest.as_bytes()[..14].iter().all(|b| b.is_ascii_digit())
            && rest.as_bytes()[14] == b'/'
        {
            let cut = ts_start + 14;
            return format!("{}id_{}", &archive_url[..cut], &archive_url[cut..]);
        }
    }
    archive_url.to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchPolicy {
    /// 14-digit timestamp the availability lookup targets.
    pub target_timestamp: String,
    pub max_concurrency: usize,
    pub min_request_interval: Duration,
    pub max_retries: u32,
    pub backoff_base: Duration,
    pub request_timeout: Duration,
    /// Seeds the backoff jitter so reruns sleep identically.
    pub jitter_seed: u64,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        FetchPolicy {
            target_timestamp: "20060301000000".to_string(),
            max_concurrency: 4,
            min_request_interval: Duration::from_millis(500),
            max_retries: 3,
            backoff_base: Duration::from_millis(1000),
            request_timeout: Duration::from_secs(30),
            jitter_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ArchiveMapping {
    pub doc_id: String,
    pub original_url: String,
    pub timestamp: String,
    pub archive_url: String,
}

/// Writes the mapping file: gzip-compressed, tab-separated
/// `doc_id \t original_url \t timestamp \t archive_url`, sorted by doc_id.
/// Deterministic byte-for-byte, so repeated runs over the same rows are
/// identical files.
pub fn write_mapping(path: &Path, rows: &[ArchiveMapping]) -> Result<u64, ArchiveError> {
    let mut sorted: Vec<&ArchiveMapping> = rows.iter().collect();
    sorted.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    for pair in sorted.windows(2) {
        if pair[0].doc_id == pair[1].doc_id {
            return Err(ArchiveError::DuplicateDocId {
                doc_id: pair[0].doc_id.clone(),
                urls: vec![pair[0].original_url.clone(), pair[1].original_url.clone()],
            });
        }
    }
    let mut w = textio::deterministic_gzip_writer(path)?;
    for row in &sorted {
        writeln!(w, "{}\t{}\t{}\t{}", row.doc_id, row.original_url, row.timestamp, row.archive_url)?;
    }
    textio::finish_gzip(w)?;
    Ok(sorted.len() as u64)
}

pub fn read_mapping(path: &Path) -> Result<Vec<ArchiveMapping>, ArchiveError> {
    let reader = textio::open_maybe_gzip(path)?;
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(ArchiveError::Malformed {
                path: path.display().to_string(),
                line: idx + 1,
                problem: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        if !valid_timestamp(fields[2]) {
            return Err(ArchiveError::Malformed {
                path: path.display().to_string(),
                line: idx + 1,
                problem: format!("bad timestamp {:?}", fields[2]),
            });
        }
        rows.push(ArchiveMapping {
            doc_id: fields[0].to_string(),
            original_url: fields[1].to_string(),
            timestamp: fields[2].to_string(),
            archive_url: fields[3].to_string(),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doc_ids_are_stable_md5_prefixes() {
        let id = assign_doc_id("http://example.com/");
        assert!(id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()));
        assert_eq!(id, assign_doc_id("http://example.com/"));
        assert_ne!(id, assign_doc_id("http://example.org/"));
        // Frozen against python hashlib.md5.
        assert_eq!(id, "a6bf1757fff0");
        assert_eq!(assign_doc_id("http://www.vinopolis.com/"), "ad1e9307430c");
    }

    #[test]
    fn collision_audit_widens_only_colliding_urls() {
        let plain = assign_doc_ids(["http://a.example/", "http://b.example/"]);
        assert!(plain.collisions.is_empty());
        assert!(plain.ids.values().all(|id| id.len() == 12));

        let dup = assign_doc_ids(["http://a.example/", "http://a.example/"]);
        assert_eq!(dup.ids.len(), 1);
        assert!(dup.collisions.is_empty());

        // A genuine 48-bit prefix collision, found by brute-force search
        // over urls of this shape; both hash to 809e4b29dc2a.
        let collide_a = "http://collide-7abaee.test/";
        let collide_b = "http://collide-1334c84.test/";
        let audited = assign_doc_ids([collide_a, collide_b, "http://a.example/"]);
        assert_eq!(audited.collisions.len(), 1);
        assert_eq!(audited.collisions[0].prefix, "809e4b29dc2a");
        assert_eq!(audited.ids[collide_a], "809e4b29dc2a22c1e9a45dac1533f5fc");
        assert_eq!(audited.ids[collide_b], "809e4b29dc2ac3054093021fa06677cb");
        assert_eq!(audited.ids["http://a.example/"].len(), 12);
    }

    #[test]
    fn snapshot_acceptance_rules() {
        let ok = Snapshot {
            archive_url: "http://archive.test/web/20060301000000/http://x.test/".into(),
            timestamp: "20060301000000".into(),
            http_status: 200,
            available: true,
        };
        assert!(ok.is_acceptable());
        assert!(!Snapshot { available: false, ..ok.clone() }.is_acceptable());
        assert!(!Snapshot { http_status: 302, ..ok.clone() }.is_acceptable());
        assert!(!Snapshot { timestamp: "20061301000000".into(), ..ok.clone() }.is_acceptable());
        assert!(!Snapshot { timestamp: "2006030100000".into(), ..ok }.is_acceptable());
    }

    #[test]
    fn raw_url_inserts_id_after_timestamp() {
        assert_eq!(
            raw_content_url("http://archive.test/web/20060301000000/http://x.test/a?b=1"),
            "http://archive.test/web/20060301000000id_/http://x.test/a?b=1"
        );
        // Not the replay shape: unchanged.
        assert_eq!(raw_content_url("http://x.test/web/short/"), "http://x.test/web/short/");
    }

    #[test]
    fn mapping_round_trips_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mapping.tsv.gz");
        let mut rows = vec![
            ArchiveMapping {
                doc_id: "bb".into(),
                original_url: "http://b.test/".into(),
                timestamp: "20060301000000".into(),
                archive_url: "http://archive.test/web/20060301000000/http://b.test/".into(),
            },
            ArchiveMapping {
                doc_id: "aa".into(),
                original_url: "http://a.test/".into(),
                timestamp: "20060215120000".into(),
                archive_url: "http://archive.test/web/20060215120000/http://a.test/".into(),
            },
            ArchiveMapping {
                doc_id: "cc".into(),
                original_url: "http://c.test/".into(),
                timestamp: "20060401000000".into(),
                archive_url: "http://archive.test/web/20060401000000/http://c.test/".into(),
            },
        ];
        assert_eq!(write_mapping(&path, &rows).unwrap(), 3);
        let back = read_mapping(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0].doc_id, "aa");
        rows.sort();
        assert_eq!(back, rows);

        let again = dir.path().join("mapping2.tsv.gz");
        // Same rows in a different order produce identical bytes.
        let shuffled: Vec<ArchiveMapping> = rows.iter().rev().cloned().collect();
        write_mapping(&again, &shuffled).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());

        // write(read(f)) reproduces f byte for byte.
        let rewrite = dir.path().join("mapping3.tsv.gz");
        write_mapping(&rewrite, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&rewrite).unwrap());
    }

    #[test]
    fn mapping_rejects_duplicates_and_bad_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mapping.tsv.gz");
        let rows = vec![
            ArchiveMapping {
                doc_id: "aa".into(),
                original_url: "http://a.test/".into(),
                timestamp: "20060301000000".into(),
                archive_url: "u1".into(),
            },
            ArchiveMapping {
                doc_id: "aa".into(),
                original_url: "http://other.test/".into(),
                timestamp: "20060301000000".into(),
                archive_url: "u2".into(),
            },
        ];
        let err = write_mapping(&path, &rows).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("http://a.test/") && msg.contains("http://other.test/"), "{msg}");

        std::fs::write(&path, textio::gzip_bytes(b"aa\tonly-two\n").unwrap()).unwrap();
        let err = read_mapping(&path).unwrap_err();
        assert!(matches!(err, ArchiveError::Malformed { line: 1, .. }), "{err}");
    }
}
