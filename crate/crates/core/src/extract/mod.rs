//! Document text extraction: HTML to title/body, tokenization, and the
//! compressed document store.

mod html;
mod store;

pub use html::{charset_from_content_type, decode_html_bytes, extract_text, Extracted};
pub use store::{index_path, read_export, write_export, write_store, DocStore, ExportRow, StoreError};

/// One extracted document. `title` and `body` are whitespace-collapsed plain
/// text with no markup. `language` is filled in by the language-id pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub url: String,
    pub title: String,
    pub body: String,
    /// Snapshot instant, 14 digits YYYYMMDDhhmmss.
    pub timestamp: String,
    /// Two-letter language code, when classified.
    pub language: Option<String>,
}

/// Splits on every non-alphanumeric character and case-folds. "Alphanumeric"
/// means ASCII [a-z0-9]; anything else, including non-ASCII letters, acts as
/// a separator. Never emits empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_ascii_alphanumeric() {
            current.push(c.to_ascii_lowercase());
        } else if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

/// Tokenizes the full URL string (scheme, host, path, query) under the same
/// splitting rule, so "http://www.jaguar.com" becomes [http, www, jaguar, com].
pub fn tokenize_url(url: &str) -> Vec<String> {
    tokenize(url)
}

/// The token sequence a ranker sees for a document: the title, optionally
/// followed by the tokenized URL.
pub fn document_text(d: &DocumentRecord, include_url: bool) -> Vec<String> {
    let mut tokens = tokenize(&d.title);
    if include_url {
        tokens.extend(tokenize_url(&d.url));
    }
    tokens
}

/// Distribution summary for token counts: median and interquartile range by
/// the nearest-rank rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LengthSummary {
    pub count: u64,
    pub median: u64,
    pub quartile_low: u64,
    pub quartile_high: u64,
}

pub fn length_summary(lengths: &mut [u64]) -> Option<LengthSummary> {
    if lengths.is_empty() {
        return None;
    }
    lengths.sort_unstable();
    let nearest_rank = |p: f64| -> u64 {
        let idx = (p * lengths.len() as f64).ceil() as usize;
        lengths[idx.clamp(1, lengths.len()) - 1]
    };
    Some(LengthSummary {
        count: lengths.len() as u64,
        median: nearest_rank(0.50),
        quartile_low: nearest_rank(0.25),
        quartile_high: nearest_rank(0.75),
    })
}
