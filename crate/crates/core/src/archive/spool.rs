//! Raw content spool: fetched payloads, gzip-compressed, in an append-only
//! file. Each record is a plain-text header line followed by exactly the
//! compressed byte count it declares, so the reader never has to scan for
//! boundaries. The fetcher flushes a record before journaling it as
//! fetched, which makes a torn final record equivalent to the fetch never
//! having happened; opening the spool for appending truncates such a tail.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use super::ArchiveError;
use crate::textio;

struct Frame {
    doc_id: String,
    url: String,
    content_type: String,
    compressed: Range<usize>,
}

/// Walks record frames without decompressing. Returns the frames plus the
/// byte length of the complete prefix; a record cut short at the tail is
/// simply not part of it, while structural damage is an error.
fn scan_frames(data: &[u8]) -> Result<(Vec<Frame>, usize), (u64, String)> {
    let mut frames = Vec::new();
    let mut pos = 0usize;
    while pos < data.len() {
        let record_start = pos;
        let Some(rel) = data[pos..].iter().position(|&b| b == b'\n') else {
            // Torn header line.
            break;
        };
        let header = &data[pos..pos + rel];
        let after_header = pos + rel + 1;
        let parsed = std::str::from_utf8(header)
            .ok()
            .map(|h| h.split('\t').collect::<Vec<&str>>())
            .filter(|f| f.len() == 4)
            .and_then(|f| {
                f[3].parse::<u64>()
                    .ok()
                    .map(|len| (f[0].to_string(), f[1].to_string(), f[2].to_string(), len))
            });
        // A terminated header line was written whole; failing to parse one
        // is damage, not truncation.
        let Some((doc_id, url, content_type, comp_len)) = parsed else {
            return Err((record_start as u64, "bad record header".to_string()));
        };
        let end = after_header as u64 + comp_len + 1;
        if end > data.len() as u64 {
            // Torn payload: the declared bytes never made it to disk.
            break;
        }
        let end = end as usize;
        if data[end - 1] != b'\n' {
            return Err((record_start as u64, "record trailer is not a newline".to_string()));
        }
        frames.push(Frame { doc_id, url, content_type, compressed: after_header..end - 1 });
        pos = end;
    }
    Ok((frames, pos))
}

fn read_all(path: &Path) -> Result<Vec<u8>, ArchiveError> {
    match std::fs::read(path) {
        Ok(d) => Ok(d),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e.into()),
    }
}

fn corrupt(path: &Path, offset: u64, problem: String) -> ArchiveError {
    ArchiveError::CorruptSpool { path: path.display().to_string(), offset, problem }
}

pub struct SpoolWriter {
    path: PathBuf,
    file: File,
}

impl SpoolWriter {
    /// Opens for appending; a torn final record from a crash is truncated
    /// away first so the next record starts on a clean boundary.
    pub fn open(path: &Path) -> Result<SpoolWriter, ArchiveError> {
        let data = read_all(path)?;
        let (_, valid_end) =
            scan_frames(&data).map_err(|(offset, problem)| corrupt(path, offset, problem))?;
        if valid_end < data.len() {
            let file = OpenOptions::new().write(true).open(path)?;
            file.set_len(valid_end as u64)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(SpoolWriter { path: path.to_path_buf(), file })
    }

    /// Appends one record and flushes it to the OS. `content_type` of `None`
    /// is stored as `-`.
    pub fn append(
        &mut self,
        doc_id: &str,
        url: &str,
        content_type: Option<&str>,
        payload: &[u8],
    ) -> io::Result<()> {
        let compressed = textio::gzip_bytes(payload)?;
        let ct = content_type.unwrap_or("-");
        debug_assert!(!ct.contains('\t') && !ct.contains('\n'));
        let header = format!("{doc_id}\t{url}\t{ct}\t{}\n", compressed.len());
        self.file.write_all(header.as_bytes())?;
        self.file.write_all(&compressed)?;
        self.file.write_all(b"\n")?;
        self.file.flush()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpoolEntry {
    pub doc_id: String,
    pub url: String,
    pub content_type: Option<String>,
    pub body: Vec<u8>,
}

/// Reads the whole spool into latest-record-per-URL. Re-fetches append a
/// fresh record, so the last one wins. The key is the URL rather than the
/// doc id because the recorded doc id is only a hint: ids assigned in
/// different fetch batches can share a prefix that a later global audit
/// would widen, while the URL is the record's true identity.
pub fn read_spool(path: &Path) -> Result<BTreeMap<String, SpoolEntry>, ArchiveError> {
    let data = read_all(path)?;
    let (frames, _) =
        scan_frames(&data).map_err(|(offset, problem)| corrupt(path, offset, problem))?;
    let mut entries = BTreeMap::new();
    for frame in frames {
        let body = textio::gunzip_bytes(&data[frame.compressed.clone()]).map_err(|e| {
            corrupt(path, frame.compressed.start as u64, format!("payload does not decompress: {e}"))
        })?;
        entries.insert(
            frame.url.clone(),
            SpoolEntry {
                doc_id: frame.doc_id,
                url: frame.url,
                content_type: (frame.content_type != "-").then_some(frame.content_type),
                body,
            },
        );
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_last_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spool.bin");
        {
            let mut spool = SpoolWriter::open(&path).unwrap();
            spool
                .append("aaa", "http://a.test/", Some("text/html"), b"<html>first</html>")
                .unwrap();
            spool.append("bbb", "http://b.test/", None, b"plain body \xff\x00 bytes").unwrap();
            spool
                .append("aaa", "http://a.test/", Some("text/html"), b"<html>second</html>")
                .unwrap();
        }
        let entries = read_spool(&path).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries["http://a.test/"].body, b"<html>second</html>");
        assert_eq!(entries["http://a.test/"].content_type.as_deref(), Some("text/html"));
        assert_eq!(entries["http://b.test/"].content_type, None);
        assert_eq!(entries["http://b.test/"].body, b"plain body \xff\x00 bytes");
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spool.bin");
        {
            let mut spool = SpoolWriter::open(&path).unwrap();
            spool.append("aaa", "http://a.test/", None, b"kept").unwrap();
            spool.append("bbb", "http://b.test/", None, b"torn away").unwrap();
        }
        let full = std::fs::read(&path).unwrap();
        let keep_end = {
            // End of the first record: its trailer newline.
            let header_end = full.iter().position(|&b| b == b'\n').unwrap() + 1;
            let comp_len: usize = std::str::from_utf8(&full[..header_end - 1])
                .unwrap()
                .rsplit('\t')
                .next()
                .unwrap()
                .parse()
                .unwrap();
            header_end + comp_len + 1
        };
        for cut in keep_end..full.len() {
            std::fs::write(&path, &full[..cut]).unwrap();
            let entries = read_spool(&path).unwrap();
            assert_eq!(entries.len(), 1, "cut at {cut}");
            assert_eq!(entries["http://a.test/"].body, b"kept");
        }
    }

    #[test]
    fn appending_after_a_torn_tail_repairs_it_first() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spool.bin");
        {
            let mut spool = SpoolWriter::open(&path).unwrap();
            spool.append("aaa", "http://a.test/", None, b"kept").unwrap();
            spool.append("bbb", "http://b.test/", None, b"torn").unwrap();
        }
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() - 3]).unwrap();
        {
            let mut spool = SpoolWriter::open(&path).unwrap();
            spool.append("ccc", "http://c.test/", None, b"fresh").unwrap();
        }
        let entries = read_spool(&path).unwrap();
        assert_eq!(entries.len(), 2);
        assert_eq!(entries["http://a.test/"].body, b"kept");
        assert_eq!(entries["http://c.test/"].body, b"fresh");
        assert!(!entries.contains_key("http://b.test/"));
    }

    #[test]
    fn empty_and_missing_spools_read_empty() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_spool(&dir.path().join("absent.bin")).unwrap().is_empty());
        let path = dir.path().join("empty.bin");
        std::fs::write(&path, b"").unwrap();
        assert!(read_spool(&path).unwrap().is_empty());
    }

    #[test]
    fn mid_file_garbage_is_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("spool.bin");
        {
            let mut spool = SpoolWriter::open(&path).unwrap();
            spool.append("aaa", "http://a.test/", None, b"ok").unwrap();
        }
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.extend_from_slice(b"this is not a spool header\n");
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_spool(&path).is_err());
        // Opening for append refuses rather than truncating a complete line
        // it cannot interpret.
        assert!(SpoolWriter::open(&path).is_err());
    }
}
