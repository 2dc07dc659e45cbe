//! Tolerant HTML text extraction.
//!
//! A small hand-rolled scanner rather than a full DOM: archived pages from
//! the mid-2000s are full of unclosed tags, stray brackets, and mislabeled
//! charsets, and all we need is the title text and the visible body text.
//! Content inside script, style, noscript, template, textarea, xmp, and
//! iframe elements is discarded, as are comments, doctypes, and processing
//! instructions. Block-level tags become single-space boundaries.

use encoding_rs::{Encoding, WINDOWS_1252};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Extracted {
    pub title: String,
    pub body: String,
}

/// Elements whose raw content is never visible text. `title` is handled
/// separately: its content is captured the first time, discarded after.
const DISCARD_CONTENT_TAGS: &[&str] = &["iframe", "noscript", "script", "style", "template", "textarea", "xmp"];

/// Tags that end a word even without intervening whitespace.
const BLOCK_TAGS: &[&str] = &[
    "address", "article", "aside", "blockquote", "br", "caption", "center", "dd", "dir", "div",
    "dl", "dt", "fieldset", "figcaption", "figure", "footer", "form", "h1", "h2", "h3", "h4",
    "h5", "h6", "header", "hr", "li", "main", "menu", "nav", "ol", "option", "p", "pre",
    "section", "select", "summary", "table", "tbody", "td", "tfoot", "th", "thead", "tr", "ul",
];

fn is_block_tag(name: &str) -> bool {
    BLOCK_TAGS.binary_search(&name).is_ok()
}

fn discards_content(name: &str) -> bool {
    DISCARD_CONTENT_TAGS.binary_search(&name).is_ok()
}

/// Extracts the charset parameter from an HTTP Content-Type value, e.g.
/// "text/html; charset=ISO-8859-1".
pub fn charset_from_content_type(content_type: &str) -> Option<String> {
    for part in content_type.split(';').skip(1) {
        let part = part.trim();
        if let Some(value) = part
            .strip_prefix("charset=")
            .or_else(|| part.strip_prefix("CHARSET="))
            .or_else(|| part.strip_prefix("Charset="))
        {
            let value = value.trim().trim_matches(|c| c == '"' || c == '\'').trim();
            if !value.is_empty() {
                return Some(value.to_string());
            }
        }
    }
    None
}

/// Decodes page bytes to text. Resolution order: the caller's hint (usually
/// from HTTP metadata), a charset= declaration in the first kilobyte, a
/// byte-order mark, a strict UTF-8 attempt, then a permissive 8-bit decode.
/// Pages of that era are frequently mislabeled, so nothing here is fatal.
pub fn decode_html_bytes(bytes: &[u8], charset_hint: Option<&str>) -> String {
    if let Some(hint) = charset_hint {
        if let Some(enc) = Encoding::for_label(hint.trim().as_bytes()) {
            return enc.decode(bytes).0.into_owned();
        }
    }
    if let Some(enc) = sniff_meta_charset(&bytes[..bytes.len().min(1024)]) {
        return enc.decode(bytes).0.into_owned();
    }
    if let Some((enc, _)) = Encoding::for_bom(bytes) {
        return enc.decode(bytes).0.into_owned();
    }
    match std::str::from_utf8(bytes) {
        Ok(s) => s.to_owned(),
        Err(_) => WINDOWS_1252.decode_without_bom_handling(bytes).0.into_owned(),
    }
}

/// Looks for `charset=LABEL` in the head bytes, covering both
/// `<meta charset="...">` and the http-equiv Content-Type form. A plain byte
/// scan is enough: every declarable label is ASCII.
fn sniff_meta_charset(head: &[u8]) -> Option<&'static Encoding> {
    let lower: Vec<u8> = head.iter().map(|b| b.to_ascii_lowercase()).collect();
    let needle = b"charset";
    let mut start = 0;
    while let Some(pos) = find_bytes(&lower[start..], needle) {
        let mut i = start + pos + needle.len();
        while i < lower.len() && (lower[i] == b' ' || lower[i] == b'\t') {
            i += 1;
        }
        if i < lower.len() && lower[i] == b'=' {
            i += 1;
            while i < lower.len() && matches!(lower[i], b' ' | b'\t' | b'"' | b'\'') {
                i += 1;
            }
            let label_start = i;
            while i < lower.len() && (lower[i].is_ascii_alphanumeric() || matches!(lower[i], b'-' | b'_' | b'.' | b':')) {
                i += 1;
            }
            if i > label_start {
                if let Some(enc) = Encoding::for_label(&lower[label_start..i]) {
                    return Some(enc);
                }
            }
        }
        start += pos + needle.len();
    }
    None
}

fn find_bytes(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Extracts the first title and the visible body text from page bytes.
/// Tolerant by construction: unclosed tags, bare brackets, and truncated
/// input all produce best-effort text rather than errors.
pub fn extract_text(bytes: &[u8], charset_hint: Option<&str>) -> Extracted {
    extract_from_str(&decode_html_bytes(bytes, charset_hint))
}

pub fn extract_from_str(html: &str) -> Extracted {
    let chars: Vec<char> = html.chars().collect();
    let mut i = 0;
    let mut title: Option<String> = None;
    let mut body = TextAccumulator::new();
    while i < chars.len() {
        if chars[i] != '<' {
            if chars[i] == '&' {
                let (decoded, next) = decode_entity(&chars, i);
                body.push_decoded(&decoded);
                i = next;
            } else {
                body.push_char(chars[i]);
                i += 1;
            }
            continue;
        }
        // '<' — decide whether this opens markup or is literal text.
        match chars.get(i + 1) {
            Some('!') => {
                if starts_with_at(&chars, i, "<!--") {
                    i = skip_comment(&chars, i + 4);
                } else {
                    i = skip_past(&chars, i + 2, '>');
                }
            }
            Some('?') => i = skip_past(&chars, i + 2, '>'),
            Some('/') => {
                let (name, after_name) = read_tag_name(&chars, i + 2);
                i = skip_tag_rest(&chars, after_name).0;
                if is_block_tag(&name) {
                    body.boundary();
                }
            }
            Some(c) if c.is_ascii_alphabetic() => {
                let (name, after_name) = read_tag_name(&chars, i + 1);
                let (after_tag, self_closing) = skip_tag_rest(&chars, after_name);
                i = after_tag;
                if is_block_tag(&name) {
                    body.boundary();
                }
                if self_closing {
                    continue;
                }
                if name == "title" {
                    let (raw, next) = capture_raw_content(&chars, i, &name);
                    if title.is_none() {
                        title = Some(decode_and_collapse(raw));
                    }
                    i = next;
                } else if discards_content(&name) {
                    let (_, next) = capture_raw_content(&chars, i, &name);
                    i = next;
                }
            }
            // Literal '<' (comparisons, stray brackets, end of input).
            _ => {
                body.push_char('<');
                i += 1;
            }
        }
    }
    Extracted {
        title: title.unwrap_or_default(),
        body: body.finish(),
    }
}

fn starts_with_at(chars: &[char], at: usize, pat: &str) -> bool {
    let mut i = at;
    for p in pat.chars() {
        if chars.get(i) != Some(&p) {
            return false;
        }
        i += 1;
    }
    true
}

fn skip_comment(chars: &[char], mut i: usize) -> usize {
    while i < chars.len() {
        if chars[i] == '-' && starts_with_at(chars, i, "-->") {
            return i + 3;
        }
        i += 1;
    }
    chars.len()
}

fn skip_past(chars: &[char], mut i: usize, stop: char) -> usize {
    while i < chars.len() {
        if chars[i] == stop {
            return i + 1;
        }
        i += 1;
    }
    chars.len()
}

fn read_tag_name(chars: &[char], mut i: usize) -> (String, usize) {
    let mut name = String::new();
    while i < chars.len() {
        let c = chars[i];
        if c.is_ascii_alphanumeric() {
            name.push(c.to_ascii_lowercase());
            i += 1;
        } else {
            break;
        }
    }
    (name, i)
}

/// Advances past the attribute region to just after '>', honoring quoted
/// attribute values that may contain '>'. Returns the next position and
/// whether the tag ended with "/>".
fn skip_tag_rest(chars: &[char], mut i: usize) -> (usize, bool) {
    let mut self_closing = false;
    while i < chars.len() {
        match chars[i] {
            '>' => return (i + 1, self_closing),
            '"' => {
                i = skip_past(chars, i + 1, '"');
                self_closing = false;
            }
            '\'' => {
                i = skip_past(chars, i + 1, '\'');
                self_closing = false;
            }
            '/' => {
                self_closing = true;
                i += 1;
            }
            _ => {
                if !chars[i].is_whitespace() {
                    self_closing = false;
                }
                i += 1;
            }
        }
    }
    (chars.len(), self_closing)
}

/// Captures everything up to the matching case-insensitive close tag,
/// or to end of input when the element is never closed.
fn capture_raw_content<'a>(chars: &'a [char], start: usize, name: &str) -> (&'a [char], usize) {
    let mut i = start;
    while i < chars.len() {
        if chars[i] == '<' && chars.get(i + 1) == Some(&'/') {
            let (candidate, after) = read_tag_name(chars, i + 2);
            if candidate == name {
                let boundary_ok = match chars.get(after) {
                    None => true,
                    Some(&c) => c == '>' || c == '/' || c.is_whitespace(),
                };
                if boundary_ok {
                    let end = skip_tag_rest(chars, after).0;
                    return (&chars[start..i], end);
                }
            }
        }
        i += 1;
    }
    (&chars[start..], chars.len())
}

fn decode_and_collapse(raw: &[char]) -> String {
    let mut acc = TextAccumulator::new();
    let mut i = 0;
    while i < raw.len() {
        if raw[i] == '&' {
            let (decoded, next) = decode_entity(raw, i);
            acc.push_decoded(&decoded);
            i = next;
        } else {
            acc.push_char(raw[i]);
            i += 1;
        }
    }
    acc.finish()
}

/// Whitespace-collapsing text sink. Block boundaries and whitespace runs both
/// become a single space; output never starts or ends with a space.
struct TextAccumulator {
    buf: String,
    pending_space: bool,
}

impl TextAccumulator {
    fn new() -> Self {
        TextAccumulator { buf: String::new(), pending_space: false }
    }

    fn push_char(&mut self, c: char) {
        if c.is_whitespace() {
            self.boundary();
            return;
        }
        if self.pending_space {
            self.buf.push(' ');
            self.pending_space = false;
        }
        self.buf.push(c);
    }

    fn push_decoded(&mut self, s: &str) {
        for c in s.chars() {
            self.push_char(c);
        }
    }

    fn boundary(&mut self) {
        if !self.buf.is_empty() {
            self.pending_space = true;
        }
    }

    fn finish(self) -> String {
        self.buf
    }
}

/// Decodes the entity starting at `chars[at] == '&'`. Returns the decoded
/// text and the next scan position. Unknown or unterminated entities come
/// back verbatim as "&" with the scan advancing a single character, which is
/// what browsers of the era effectively did.
fn decode_entity(chars: &[char], at: usize) -> (String, usize) {
    const LONGEST: usize = 32;
    let mut end = at + 1;
    let limit = (at + 1 + LONGEST).min(chars.len());
    while end < limit && chars[end] != ';' {
        end += 1;
    }
    if end >= chars.len() || chars[end] != ';' || end == at + 1 {
        return ("&".to_string(), at + 1);
    }
    let name: String = chars[at + 1..end].iter().collect();
    let decoded = if let Some(num) = name.strip_prefix('#') {
        let code = if let Some(hex) = num.strip_prefix('x').or_else(|| num.strip_prefix('X')) {
            u32::from_str_radix(hex, 16).ok()
        } else {
            num.parse::<u32>().ok()
        };
        code.and_then(char::from_u32).map(String::from)
    } else {
        named_entity(&name).map(str::to_string)
    };
    match decoded {
        Some(text) => (text, end + 1),
        None => ("&".to_string(), at + 1),
    }
}

/// The named entities that actually show up in mid-2000s pages. Unlisted
/// names fall through as literal text.
fn named_entity(name: &str) -> Option<&'static str> {
    Some(match name {
        "amp" => "&",
        "lt" => "<",
        "gt" => ">",
        "quot" => "\"",
        "apos" => "'",
        "nbsp" => "\u{a0}",
        "copy" => "©",
        "reg" => "®",
        "trade" => "™",
        "hellip" => "…",
        "mdash" => "—",
        "ndash" => "–",
        "lsquo" => "‘",
        "rsquo" => "’",
        "ldquo" => "“",
        "rdquo" => "”",
        "laquo" => "«",
        "raquo" => "»",
        "middot" => "·",
        "bull" => "•",
        "deg" => "°",
        "plusmn" => "±",
        "frac12" => "½",
        "frac14" => "¼",
        "times" => "×",
        "divide" => "÷",
        "cent" => "¢",
        "pound" => "£",
        "euro" => "€",
        "yen" => "¥",
        "sect" => "§",
        "para" => "¶",
        "szlig" => "ß",
        "agrave" => "à",
        "aacute" => "á",
        "acirc" => "â",
        "atilde" => "ã",
        "auml" => "ä",
        "aring" => "å",
        "aelig" => "æ",
        "ccedil" => "ç",
        "egrave" => "è",
        "eacute" => "é",
        "ecirc" => "ê",
        "euml" => "ë",
        "igrave" => "ì",
        "iacute" => "í",
        "icirc" => "î",
        "iuml" => "ï",
        "ntilde" => "ñ",
        "ograve" => "ò",
        "oacute" => "ó",
        "ocirc" => "ô",
        "otilde" => "õ",
        "ouml" => "ö",
        "oslash" => "ø",
        "ugrave" => "ù",
        "uacute" => "ú",
        "ucirc" => "û",
        "uuml" => "ü",
        "yacute" => "ý",
        "yuml" => "ÿ",
        "Agrave" => "À",
        "Aacute" => "Á",
        "Auml" => "Ä",
        "Ccedil" => "Ç",
        "Eacute" => "É",
        "Egrave" => "È",
        "Ntilde" => "Ñ",
        "Ouml" => "Ö",
        "Uuml" => "Ü",
        _ => return None,
    })
}
