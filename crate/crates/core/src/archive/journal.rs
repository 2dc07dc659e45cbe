//! Crash-tolerant crawl bookkeeping. Both the journal and the snapshot
//! sidecar are append-only text logs where every line carries its own crc32,
//! so a torn write at the tail loses at most that line while corruption
//! anywhere else is a hard error. Opening a log for appending first
//! truncates any torn tail, so new lines never merge into a fragment.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::ArchiveError;

fn checksum(payload: &str) -> String {
    format!("{:08x}", crc32fast::hash(payload.as_bytes()))
}

/// Appends `payload \t crc32` and flushes; callers rely on the line being
/// durable before they take the next step.
fn append_checked(file: &mut File, payload: &str) -> io::Result<()> {
    debug_assert!(!payload.contains('\n'));
    file.write_all(format!("{payload}\t{}\n", checksum(payload)).as_bytes())?;
    file.flush()
}

struct LogScan {
    /// (file line number, payload) for each intact line.
    payloads: Vec<(usize, String)>,
    /// Byte length of the valid prefix; anything past it is a torn tail.
    valid_end: usize,
}

/// Walks the log. Only newline-terminated, checksum-valid lines count; a
/// bad or unterminated line is tolerated as a torn tail when nothing
/// follows it, and is corruption otherwise.
fn scan_checked(data: &[u8]) -> Result<LogScan, (usize, String)> {
    let mut scan = LogScan { payloads: Vec::new(), valid_end: 0 };
    let mut pending: Option<(usize, String)> = None;
    let mut pos = 0;
    let mut line_no = 0;
    while pos < data.len() {
        line_no += 1;
        let Some(rel) = data[pos..].iter().position(|&b| b == b'\n') else {
            if let Some(bad) = pending.take() {
                return Err(bad);
            }
            break;
        };
        let line = &data[pos..pos + rel];
        pos += rel + 1;
        if let Some(bad) = pending.take() {
            return Err(bad);
        }
        let parsed = std::str::from_utf8(line).ok().and_then(|l| l.rsplit_once('\t'));
        match parsed {
            Some((payload, sum)) if sum == checksum(payload) => {
                scan.payloads.push((line_no, payload.to_string()));
                scan.valid_end = pos;
            }
            Some((_, sum)) => {
                pending = Some((line_no, format!("checksum mismatch ({sum:?})")));
            }
            None => pending = Some((line_no, "missing checksum column".to_string())),
        }
    }
    Ok(scan)
}

fn scan_file(path: &Path) -> Result<(Vec<u8>, LogScan), ArchiveError> {
    let data = match std::fs::read(path) {
        Ok(d) => d,
        Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let scan = scan_checked(&data).map_err(|(line, problem)| ArchiveError::CorruptJournal {
        path: path.display().to_string(),
        line,
        problem,
    })?;
    Ok((data, scan))
}

fn read_checked(path: &Path) -> Result<Vec<(usize, String)>, ArchiveError> {
    Ok(scan_file(path)?.1.payloads)
}

/// Opens for appending, first dropping any torn tail left by a crash.
fn open_repaired(path: &Path) -> Result<File, ArchiveError> {
    let (data, scan) = scan_file(path)?;
    if scan.valid_end < data.len() {
        let file = OpenOptions::new().write(true).open(path)?;
        file.set_len(scan.valid_end as u64)?;
    }
    Ok(OpenOptions::new().create(true).append(true).open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Disposition {
    /// Availability resolved to an acceptable snapshot.
    Mapped,
    /// The archive holds no acceptable snapshot.
    NoSnapshot,
    /// Transient failures exhausted the retry budget; retry on resume.
    Deferred,
    /// Raw content stored in the spool.
    Fetched,
    /// Permanent failure; excluded from the corpus.
    Unrecoverable,
    /// Previously fetched, gone on re-validation.
    Deleted,
}

impl Disposition {
    pub fn as_str(self) -> &'static str {
        match self {
            Disposition::Mapped => "mapped",
            Disposition::NoSnapshot => "no-snapshot",
            Disposition::Deferred => "deferred",
            Disposition::Fetched => "fetched",
            Disposition::Unrecoverable => "unrecoverable",
            Disposition::Deleted => "deleted",
        }
    }

    /// Terminal work is never redone on resume.
    pub fn is_terminal(self) -> bool {
        matches!(self, Disposition::Fetched | Disposition::Unrecoverable | Disposition::NoSnapshot)
    }
}

impl FromStr for Disposition {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mapped" => Ok(Disposition::Mapped),
            "no-snapshot" => Ok(Disposition::NoSnapshot),
            "deferred" => Ok(Disposition::Deferred),
            "fetched" => Ok(Disposition::Fetched),
            "unrecoverable" => Ok(Disposition::Unrecoverable),
            "deleted" => Ok(Disposition::Deleted),
            other => Err(format!("unknown disposition {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalEntry {
    pub url: String,
    pub disposition: Disposition,
    pub attempts: u32,
}

/// Append-only journal of per-URL outcomes, one writer at a time. The latest
/// line for a URL wins.
pub struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    pub fn open(path: &Path) -> Result<Journal, ArchiveError> {
        let file = open_repaired(path)?;
        Ok(Journal { path: path.to_path_buf(), file })
    }

    pub fn append(&mut self, entry: &JournalEntry) -> io::Result<()> {
        let payload =
            format!("{}\t{}\t{}", entry.url, entry.disposition.as_str(), entry.attempts);
        append_checked(&mut self.file, &payload)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Replays a journal into latest-state-per-URL.
pub fn read_journal(path: &Path) -> Result<BTreeMap<String, JournalEntry>, ArchiveError> {
    let mut state = BTreeMap::new();
    for (line_no, payload) in read_checked(path)? {
        let fields: Vec<&str> = payload.split('\t').collect();
        let bad = |problem: String| ArchiveError::CorruptJournal {
            path: path.display().to_string(),
            line: line_no,
            problem,
        };
        if fields.len() != 3 {
            return Err(bad(format!("expected 3 payload fields, found {}", fields.len())));
        }
        let disposition = Disposition::from_str(fields[1]).map_err(bad)?;
        let attempts: u32 =
            fields[2].parse().map_err(|_| bad(format!("bad attempt count {:?}", fields[2])))?;
        state.insert(
            fields[0].to_string(),
            JournalEntry { url: fields[0].to_string(), disposition, attempts },
        );
    }
    Ok(state)
}

/// One resolved snapshot, recorded by the map phase so the fetch phase and
/// the mapping build never need to re-query availability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SnapshotRow {
    pub url: String,
    pub timestamp: String,
    pub archive_url: String,
}

/// Append-only sidecar of resolved snapshots, same checksum framing as the
/// journal.
pub struct SnapshotLog {
    path: PathBuf,
    file: File,
}

impl SnapshotLog {
    pub fn open(path: &Path) -> Result<SnapshotLog, ArchiveError> {
        let file = open_repaired(path)?;
        Ok(SnapshotLog { path: path.to_path_buf(), file })
    }

    pub fn append(&mut self, row: &SnapshotRow) -> io::Result<()> {
        let payload = format!("{}\t{}\t{}", row.url, row.timestamp, row.archive_url);
        append_checked(&mut self.file, &payload)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

pub fn read_snapshot_log(path: &Path) -> Result<BTreeMap<String, SnapshotRow>, ArchiveError> {
    let mut rows = BTreeMap::new();
    for (line_no, payload) in read_checked(path)? {
        let fields: Vec<&str> = payload.split('\t').collect();
        if fields.len() != 3 {
            return Err(ArchiveError::CorruptJournal {
                path: path.display().to_string(),
                line: line_no,
                problem: format!("expected 3 payload fields, found {}", fields.len()),
            });
        }
        rows.insert(
            fields[0].to_string(),
            SnapshotRow {
                url: fields[0].to_string(),
                timestamp: fields[1].to_string(),
                archive_url: fields[2].to_string(),
            },
        );
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(url: &str, disposition: Disposition, attempts: u32) -> JournalEntry {
        JournalEntry { url: url.to_string(), disposition, attempts }
    }

    #[test]
    fn journal_round_trip_last_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.log");
        {
            let mut journal = Journal::open(&path).unwrap();
            journal.append(&entry("http://a.test/", Disposition::Mapped, 1)).unwrap();
            journal.append(&entry("http://b.test/", Disposition::Deferred, 4)).unwrap();
            journal.append(&entry("http://a.test/", Disposition::Fetched, 1)).unwrap();
        }
        // Reopen appends rather than clobbering.
        {
            let mut journal = Journal::open(&path).unwrap();
            journal.append(&entry("http://b.test/", Disposition::Fetched, 2)).unwrap();
        }
        let state = read_journal(&path).unwrap();
        assert_eq!(state.len(), 2);
        assert_eq!(state["http://a.test/"].disposition, Disposition::Fetched);
        assert_eq!(state["http://b.test/"].attempts, 2);
    }

    #[test]
    fn truncated_tail_is_dropped_silently() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.log");
        {
            let mut journal = Journal::open(&path).unwrap();
            journal.append(&entry("http://a.test/", Disposition::Fetched, 1)).unwrap();
            journal.append(&entry("http://b.test/", Disposition::Fetched, 1)).unwrap();
        }
        let full = std::fs::read(&path).unwrap();
        // Chop bytes off the final line; every prefix must still read
        // cleanly and report only the first entry.
        let line_two = full.iter().position(|&b| b == b'\n').unwrap() + 1;
        for cut in 1..(full.len() - line_two) {
            std::fs::write(&path, &full[..full.len() - cut]).unwrap();
            let state = read_journal(&path).unwrap();
            assert_eq!(state.len(), 1, "cut {cut}");
            assert!(state.contains_key("http://a.test/"));
        }
    }

    #[test]
    fn appending_after_a_torn_tail_repairs_it_first() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.log");
        {
            let mut journal = Journal::open(&path).unwrap();
            journal.append(&entry("http://a.test/", Disposition::Fetched, 1)).unwrap();
            journal.append(&entry("http://b.test/", Disposition::Mapped, 1)).unwrap();
        }
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 5]).unwrap();
        {
            let mut journal = Journal::open(&path).unwrap();
            journal.append(&entry("http://c.test/", Disposition::Fetched, 2)).unwrap();
        }
        // The torn b.test line is gone, not merged with the new line.
        let state = read_journal(&path).unwrap();
        assert_eq!(state.len(), 2);
        assert_eq!(state["http://a.test/"].disposition, Disposition::Fetched);
        assert_eq!(state["http://c.test/"].attempts, 2);
        assert!(!state.contains_key("http://b.test/"));
    }

    #[test]
    fn unterminated_final_line_counts_as_torn() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.log");
        {
            let mut journal = Journal::open(&path).unwrap();
            journal.append(&entry("http://a.test/", Disposition::Fetched, 1)).unwrap();
            journal.append(&entry("http://b.test/", Disposition::Fetched, 1)).unwrap();
        }
        let full = std::fs::read(&path).unwrap();
        // Remove just the trailing newline: the line's bytes are intact but
        // the frame is not, and an append must not glue onto it.
        std::fs::write(&path, &full[..full.len() - 1]).unwrap();
        let state = read_journal(&path).unwrap();
        assert_eq!(state.len(), 1);
    }

    #[test]
    fn mid_file_corruption_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.log");
        {
            let mut journal = Journal::open(&path).unwrap();
            journal.append(&entry("http://a.test/", Disposition::Fetched, 1)).unwrap();
            journal.append(&entry("http://b.test/", Disposition::Fetched, 1)).unwrap();
        }
        let mut bytes = std::fs::read(&path).unwrap();
        // Flip a byte inside the first line's url.
        bytes[7] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        let err = read_journal(&path).unwrap_err();
        assert!(matches!(err, ArchiveError::CorruptJournal { line: 1, .. }), "{err}");
        // Opening for append refuses too, instead of truncating good data.
        assert!(Journal::open(&path).is_err());
    }

    #[test]
    fn missing_file_is_empty_state() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_journal(&dir.path().join("absent.log")).unwrap().is_empty());
    }

    #[test]
    fn snapshot_log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("snapshots.log");
        {
            let mut log = SnapshotLog::open(&path).unwrap();
            log.append(&SnapshotRow {
                url: "http://a.test/".into(),
                timestamp: "20060301000000".into(),
                archive_url: "http://archive.test/web/20060301000000/http://a.test/".into(),
            })
            .unwrap();
            log.append(&SnapshotRow {
                url: "http://a.test/".into(),
                timestamp: "20060302000000".into(),
                archive_url: "http://archive.test/web/20060302000000/http://a.test/".into(),
            })
            .unwrap();
        }
        let rows = read_snapshot_log(&path).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows["http://a.test/"].timestamp, "20060302000000");
    }

    #[test]
    fn rejects_unknown_dispositions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("journal.log");
        let bad = "http://a.test/\texploded\t1";
        let good = "http://b.test/\tfetched\t1";
        // Both lines carry valid checksums; the first is semantically bad.
        let mut contents = format!("{bad}\t{}\n", checksum(bad));
        contents.push_str(&format!("{good}\t{}\n", checksum(good)));
        std::fs::write(&path, contents).unwrap();
        assert!(read_journal(&path).is_err());
    }
}
