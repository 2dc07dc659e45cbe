//! Compressed document store: a sequence of gzip members, each holding a
//! fixed number of record lines, plus a plain-text offset sidecar for random
//! access by doc id. Writes are deterministic, so two builds from the same
//! records are byte-identical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use flate2::read::{GzDecoder, MultiGzDecoder};

use super::DocumentRecord;
use crate::textio;

const RECORDS_PER_BLOCK: usize = 128;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("records must arrive sorted by doc id; {0:?} is out of order")]
    Unsorted(String),
    #[error("duplicate doc id {0:?}")]
    Duplicate(String),
    #[error("store record {context}: {problem}")]
    Corrupt { context: String, problem: String },
    #[error("missing index sidecar {0}; rebuild the store")]
    MissingSidecar(PathBuf),
}

/// The sidecar holding `doc_id \t block_offset \t slot` lines.
pub fn index_path(store_path: &Path) -> PathBuf {
    let mut name = store_path.file_name().unwrap_or_default().to_os_string();
    name.push(".idx");
    store_path.with_file_name(name)
}

fn format_record(d: &DocumentRecord) -> Result<String, StoreError> {
    for (field, label) in [(&d.doc_id, "doc id"), (&d.url, "url"), (&d.timestamp, "timestamp")] {
        if field.contains(['\t', '\n', '\r']) {
            return Err(StoreError::Corrupt {
                context: d.doc_id.clone(),
                problem: format!("{label} contains control characters"),
            });
        }
    }
    let lang = d.language.as_deref().unwrap_or("-");
    Ok(format!(
        "{}\t{}\t{}\t{}\t{}\t{}\n",
        d.doc_id,
        d.url,
        d.timestamp,
        lang,
        textio::escape_field(&d.title),
        textio::escape_field(&d.body),
    ))
}

fn parse_record(line: &str, context: &str) -> Result<DocumentRecord, StoreError> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 6 {
        return Err(StoreError::Corrupt {
            context: context.to_string(),
            problem: format!("expected 6 fields, found {}", fields.len()),
        });
    }
    let unescape = |s: &str| -> Result<String, StoreError> {
        Ok(textio::unescape_field(s)
            .map_err(|e| StoreError::Corrupt { context: context.to_string(), problem: e.to_string() })?
            .into_owned())
    };
    Ok(DocumentRecord {
        doc_id: fields[0].to_string(),
        url: fields[1].to_string(),
        timestamp: fields[2].to_string(),
        language: if fields[3] == "-" { None } else { Some(fields[3].to_string()) },
        title: unescape(fields[4])?,
        body: unescape(fields[5])?,
    })
}

/// Writes the store and its sidecar. Records must be unique and sorted by
/// doc id ascending. Returns the number of records written.
pub fn write_store(path: &Path, docs: impl IntoIterator<Item = DocumentRecord>) -> Result<u64, StoreError> {
    let mut file = File::create(path)?;
    let mut sidecar_lines = String::new();
    let mut block: Vec<u8> = Vec::new();
    let mut block_offset: u64 = 0;
    let mut slot: u32 = 0;
    let mut last_id: Option<String> = None;
    let mut written: u64 = 0;

    let flush_block = |file: &mut File, block: &mut Vec<u8>, offset: &mut u64| -> Result<(), StoreError> {
        if block.is_empty() {
            return Ok(());
        }
        let compressed = textio::gzip_bytes(block)?;
        file.write_all(&compressed)?;
        *offset += compressed.len() as u64;
        block.clear();
        Ok(())
    };

    for doc in docs {
        match &last_id {
            Some(prev) if *prev == doc.doc_id => return Err(StoreError::Duplicate(doc.doc_id)),
            Some(prev) if *prev > doc.doc_id => return Err(StoreError::Unsorted(doc.doc_id)),
            _ => {}
        }
        last_id = Some(doc.doc_id.clone());
        sidecar_lines.push_str(&format!("{}\t{}\t{}\n", doc.doc_id, block_offset, slot));
        block.extend_from_slice(format_record(&doc)?.as_bytes());
        written += 1;
        slot += 1;
        if slot as usize == RECORDS_PER_BLOCK {
            flush_block(&mut file, &mut block, &mut block_offset)?;
            slot = 0;
        }
    }
    flush_block(&mut file, &mut block, &mut block_offset)?;
    file.flush()?;
    std::fs::write(index_path(path), sidecar_lines)?;
    Ok(written)
}

/// Read access to a store: random lookup by doc id via the sidecar, and a
/// full scan in doc-id order.
pub struct DocStore {
    path: PathBuf,
    file: Mutex<File>,
    index: BTreeMap<String, (u64, u32)>,
}

impl DocStore {
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let sidecar = index_path(path);
        if !sidecar.exists() {
            return Err(StoreError::MissingSidecar(sidecar));
        }
        let mut index = BTreeMap::new();
        for (idx, line) in BufReader::new(File::open(&sidecar)?).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let context = format!("{}:{}", sidecar.display(), idx + 1);
            let mut parts = line.split('\t');
            let (Some(id), Some(off), Some(slot), None) =
                (parts.next(), parts.next(), parts.next(), parts.next())
            else {
                return Err(StoreError::Corrupt { context, problem: "expected 3 fields".into() });
            };
            let off: u64 = off
                .parse()
                .map_err(|_| StoreError::Corrupt { context: context.clone(), problem: "bad offset".into() })?;
            let slot: u32 = slot
                .parse()
                .map_err(|_| StoreError::Corrupt { context: context.clone(), problem: "bad slot".into() })?;
            if index.insert(id.to_string(), (off, slot)).is_some() {
                return Err(StoreError::Corrupt { context, problem: "duplicate doc id".into() });
            }
        }
        let file = File::open(path)?;
        Ok(DocStore { path: path.to_path_buf(), file: Mutex::new(file), index })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn contains(&self, doc_id: &str) -> bool {
        self.index.contains_key(doc_id)
    }

    /// Doc ids in store order (bytewise ascending).
    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }

    /// Fetches one record. `Ok(None)` means the id is not in the store,
    /// which is distinct from every I/O or corruption error.
    pub fn get(&self, doc_id: &str) -> Result<Option<DocumentRecord>, StoreError> {
        let Some(&(offset, slot)) = self.index.get(doc_id) else {
            return Ok(None);
        };
        let mut block = String::new();
        {
            let mut file = self.file.lock().expect("store file lock poisoned");
            file.seek(SeekFrom::Start(offset))?;
            // GzDecoder stops at the end of the first gzip member, i.e. this block.
            GzDecoder::new(&mut *file).read_to_string(&mut block).map_err(|e| StoreError::Corrupt {
                context: format!("{} @{offset}", self.path.display()),
                problem: e.to_string(),
            })?;
        }
        let context = format!("{doc_id} @{offset}+{slot}");
        let line = block
            .lines()
            .nth(slot as usize)
            .ok_or_else(|| StoreError::Corrupt { context: context.clone(), problem: "slot out of range".into() })?;
        let record = parse_record(line, &context)?;
        if record.doc_id != doc_id {
            return Err(StoreError::Corrupt { context, problem: "index points at wrong record".into() });
        }
        Ok(Some(record))
    }

    /// Streams every record in doc-id order.
    pub fn scan(&self) -> Result<StoreScan, StoreError> {
        let file = File::open(&self.path)?;
        Ok(StoreScan {
            lines: BufReader::new(MultiGzDecoder::new(BufReader::new(file))).lines(),
            read: 0,
        })
    }
}

pub struct StoreScan {
    lines: io::Lines<BufReader<MultiGzDecoder<BufReader<File>>>>,
    read: u64,
}

impl Iterator for StoreScan {
    type Item = Result<DocumentRecord, StoreError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.lines.next()? {
                Err(e) => return Some(Err(e.into())),
                Ok(line) if line.is_empty() => continue,
                Ok(line) => {
                    self.read += 1;
                    let context = format!("record {}", self.read);
                    return Some(parse_record(&line, &context));
                }
            }
        }
    }
}

/// One row of the interoperability export.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportRow {
    pub doc_id: String,
    pub title: String,
    pub url: String,
}

/// Writes the `doc_id \t title \t url` export for downstream tools.
pub fn write_export<W: Write>(mut w: W, rows: impl IntoIterator<Item = ExportRow>) -> io::Result<()> {
    for row in rows {
        writeln!(w, "{}\t{}\t{}", row.doc_id, textio::escape_field(&row.title), row.url)?;
    }
    Ok(())
}

/// Reads an export file produced by [`write_export`] (or by a compatible
/// external tool). Returns rows keyed by doc id.
pub fn read_export<R: BufRead>(r: R) -> Result<Vec<ExportRow>, StoreError> {
    let mut rows = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let context = format!("export line {}", idx + 1);
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(StoreError::Corrupt {
                context,
                problem: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        let title = textio::unescape_field(fields[1])
            .map_err(|e| StoreError::Corrupt { context: context.clone(), problem: e.to_string() })?
            .into_owned();
        rows.push(ExportRow {
            doc_id: fields[0].to_string(),
            title,
            url: fields[2].to_string(),
        });
    }
    Ok(rows)
}
