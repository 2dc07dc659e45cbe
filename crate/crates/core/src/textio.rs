//! Shared text and file helpers: gzip-aware line readers, deterministic gzip
//! writers, tab-field escaping, and significant-digit float formatting.

use std::borrow::Cow;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;
use flate2::{Compression, GzBuilder};

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Compression level for every gzip artifact this tool writes. Fixed so that
/// repeated runs over the same inputs produce byte-identical files.
const GZIP_LEVEL: u32 = 6;

/// Opens a text file for buffered reading, transparently decompressing when
/// the content starts with the gzip magic bytes. Concatenated gzip members
/// are all read.
pub fn open_maybe_gzip(path: &Path) -> io::Result<Box<dyn BufRead + Send>> {
    let mut file = File::open(path)?;
    let mut head = [0u8; 2];
    let mut filled = 0;
    while filled < head.len() {
        let n = file.read(&mut head[filled..])?;
        if n == 0 {
            break;
        }
        filled += n;
    }
    let rejoined = io::Cursor::new(head[..filled].to_vec()).chain(file);
    if filled == 2 && head == GZIP_MAGIC {
        Ok(Box::new(BufReader::new(MultiGzDecoder::new(rejoined))))
    } else {
        Ok(Box::new(BufReader::new(rejoined)))
    }
}

/// A gzip writer with a zeroed header timestamp, so output bytes depend only
/// on the written content. Call [`finish_gzip`] when done; dropping the
/// writer without it may truncate the stream.
pub fn deterministic_gzip_writer(path: &Path) -> io::Result<BufWriter<GzEncoder<File>>> {
    let file = File::create(path)?;
    let enc = GzBuilder::new().mtime(0).write(file, Compression::new(GZIP_LEVEL));
    Ok(BufWriter::new(enc))
}

/// Flushes and finalizes a writer produced by [`deterministic_gzip_writer`].
pub fn finish_gzip(w: BufWriter<GzEncoder<File>>) -> io::Result<()> {
    let enc = w.into_inner().map_err(|e| e.into_error())?;
    let mut file = enc.finish()?;
    file.flush()
}

/// Compresses a byte slice into a standalone gzip member with a zeroed
/// header timestamp.
pub fn gzip_bytes(data: &[u8]) -> io::Result<Vec<u8>> {
    let mut enc = GzBuilder::new().mtime(0).write(Vec::new(), Compression::new(GZIP_LEVEL));
    enc.write_all(data)?;
    enc.finish()
}

/// Decompresses a single gzip member produced by [`gzip_bytes`], verifying
/// the embedded checksum.
pub fn gunzip_bytes(data: &[u8]) -> io::Result<Vec<u8>> {
    let mut dec = flate2::read::GzDecoder::new(data);
    let mut out = Vec::new();
    dec.read_to_end(&mut out)?;
    Ok(out)
}

/// Escapes backslash, tab, newline, and carriage return so arbitrary text
/// can occupy a single field of a tab-separated line.
pub fn escape_field(s: &str) -> Cow<'_, str> {
    if !s.bytes().any(|b| matches!(b, b'\t' | b'\n' | b'\r' | b'\\')) {
        return Cow::Borrowed(s);
    }
    let mut out = String::with_capacity(s.len() + 4);
    for c in s.chars() {
        match c {
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\\' => out.push_str("\\\\"),
            other => out.push(other),
        }
    }
    Cow::Owned(out)
}

/// Reverses [`escape_field`].
pub fn unescape_field(s: &str) -> Result<Cow<'_, str>, UnescapeError> {
    if !s.contains('\\') {
        return Ok(Cow::Borrowed(s));
    }
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            found => return Err(UnescapeError { found }),
        }
    }
    Ok(Cow::Owned(out))
}

#[derive(Debug, PartialEq, Eq, thiserror::Error)]
#[error("invalid escape sequence \\{}", found.map(|c| c.to_string()).unwrap_or_else(|| "<end of field>".into()))]
pub struct UnescapeError {
    found: Option<char>,
}

/// Formats a finite float with the given number of significant digits, in
/// plain decimal notation. Reformatting the parsed output is stable.
pub fn fmt_sig(x: f64, sig: u32) -> String {
    assert!(sig >= 1, "need at least one significant digit");
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return format!("{:.*}", (sig - 1) as usize, 0.0);
    }
    let mut exp = x.abs().log10().floor() as i32;
    // Rounding at this precision can carry into the next decade
    // (e.g. 9.99999 rounded to 3 digits is 10.0).
    let scale = 10f64.powi(sig as i32 - 1 - exp);
    if (x.abs() * scale).round() >= 10f64.powi(sig as i32) {
        exp += 1;
    }
    let decimals = sig as i32 - 1 - exp;
    if decimals >= 0 {
        format!("{:.*}", decimals as usize, x)
    } else {
        let q = 10f64.powi(-decimals);
        format!("{:.0}", (x / q).round() * q)
    }
}
