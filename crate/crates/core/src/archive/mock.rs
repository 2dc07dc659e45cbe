//! In-process archive server for offline tests and the bundled fixture.
//! Speaks just enough HTTP for the two endpoints the client uses, logs
//! every request with its arrival time (the politeness audit reads this),
//! and can inject failures per URL.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use chrono::NaiveDateTime;

use super::ArchiveError;
use crate::extract::charset_from_content_type;
use crate::textio;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MockSnapshot {
    pub timestamp: String,
    /// Status of the archived capture as reported by availability.
    pub status: u16,
    pub available: bool,
    pub content_type: String,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageSpec {
    pub url: String,
    pub snapshots: Vec<MockSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RequestKind {
    Availability,
    Fetch,
}

#[derive(Debug, Clone)]
pub struct LoggedRequest {
    pub at: Instant,
    pub kind: RequestKind,
    /// The original page URL the request concerns.
    pub url: String,
}

/// One-shot failure behaviors, consumed in injection order.
#[derive(Debug, Clone)]
pub enum Failure {
    Status(u16),
    DropConnection,
    Delay(Duration),
}

struct Shared {
    pages: HashMap<String, PageSpec>,
    failures: Mutex<HashMap<(RequestKind, String), VecDeque<Failure>>>,
    closest_override: Mutex<HashMap<String, String>>,
    requests: Mutex<Vec<LoggedRequest>>,
}

pub struct MockArchive {
    addr: SocketAddr,
    shared: Arc<Shared>,
    shutdown: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockArchive {
    pub fn start(pages: Vec<PageSpec>) -> std::io::Result<MockArchive> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Shared {
            pages: pages.into_iter().map(|p| (p.url.clone(), p)).collect(),
            failures: Mutex::new(HashMap::new()),
            closest_override: Mutex::new(HashMap::new()),
            requests: Mutex::new(Vec::new()),
        });
        let shutdown = Arc::new(AtomicBool::new(false));
        let accept_shared = Arc::clone(&shared);
        let accept_shutdown = Arc::clone(&shutdown);
        let handle = std::thread::spawn(move || {
            for conn in listener.incoming() {
                if accept_shutdown.load(Ordering::SeqCst) {
                    break;
                }
                let Ok(stream) = conn else { continue };
                let conn_shared = Arc::clone(&accept_shared);
                std::thread::spawn(move || handle_connection(stream, &conn_shared));
            }
        });
        Ok(MockArchive { addr, shared, shutdown, handle: Some(handle) })
    }

    pub fn endpoint(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Requests seen so far, in arrival-time order.
    pub fn requests(&self) -> Vec<LoggedRequest> {
        let mut log = self.shared.requests.lock().expect("request log").clone();
        log.sort_by_key(|r| r.at);
        log
    }

    /// Queues a failure for the next matching request; repeated calls stack.
    pub fn inject_failure(&self, kind: RequestKind, url: &str, failure: Failure) {
        self.shared
            .failures
            .lock()
            .expect("failure table")
            .entry((kind, url.to_string()))
            .or_default()
            .push_back(failure);
    }

    /// Forces availability for `url` to answer with the snapshot at exactly
    /// `timestamp`, regardless of the requested target.
    pub fn set_closest_override(&self, url: &str, timestamp: &str) {
        self.shared
            .closest_override
            .lock()
            .expect("override table")
            .insert(url.to_string(), timestamp.to_string());
    }
}

impl Drop for MockArchive {
    fn drop(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        // Unblock the accept loop.
        let _ = TcpStream::connect(self.addr);
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
    }
}

fn handle_connection(stream: TcpStream, shared: &Shared) {
    let _ = serve(stream, shared);
}

fn serve(mut stream: TcpStream, shared: &Shared) -> std::io::Result<()> {
    stream.set_read_timeout(Some(Duration::from_secs(5)))?;
    let target = {
        let mut reader = BufReader::new(&mut stream);
        let mut request_line = String::new();
        reader.read_line(&mut request_line)?;
        let mut header = String::new();
        while reader.read_line(&mut header)? > 2 {
            header.clear();
        }
        let mut parts = request_line.split_whitespace();
        match (parts.next(), parts.next()) {
            (Some("GET"), Some(path)) => path.to_string(),
            _ => {
                return respond(&mut stream, 400, "Bad Request", "text/plain", b"bad request");
            }
        }
    };

    if let Some(query) = target.strip_prefix("/wayback/available?") {
        let mut url = String::new();
        let mut timestamp = String::new();
        for (key, value) in url::form_urlencoded::parse(query.as_bytes()) {
            match key.as_ref() {
                "url" => url = value.into_owned(),
                "timestamp" => timestamp = value.into_owned(),
                _ => {}
            }
        }
        log_request(shared, RequestKind::Availability, &url);
        if let Some(done) = apply_failure(shared, RequestKind::Availability, &url, &mut stream)? {
            return done;
        }
        let closest = shared.pages.get(&url).and_then(|page| {
            let forced = shared.closest_override.lock().expect("override table").get(&url).cloned();
            match forced {
                Some(ts) => page.snapshots.iter().find(|s| s.timestamp == ts),
                None => closest_snapshot(&page.snapshots, &timestamp),
            }
        });
        let body = match closest {
            Some(snap) => serde_json::json!({
                "url": url,
                "archived_snapshots": {
                    "closest": {
                        "status": snap.status.to_string(),
                        "available": snap.available,
                        "url": format!("http://{}/web/{}/{}", local_host_header(&stream), snap.timestamp, url),
                        "timestamp": snap.timestamp,
                    }
                }
            }),
            None => serde_json::json!({ "url": url, "archived_snapshots": {} }),
        };
        return respond(&mut stream, 200, "OK", "application/json", body.to_string().as_bytes());
    }

    if let Some(rest) = target.strip_prefix("/web/") {
        if rest.len() > 14 && rest.as_bytes()[..14].iter().all(|b| b.is_ascii_digit()) {
            let timestamp = &rest[..14];
            let tail = rest[14..].strip_prefix("id_").unwrap_or(&rest[14..]);
            if let Some(url) = tail.strip_prefix('/') {
                log_request(shared, RequestKind::Fetch, url);
                if let Some(done) = apply_failure(shared, RequestKind::Fetch, url, &mut stream)? {
                    return done;
                }
                let snap = shared
                    .pages
                    .get(url)
                    .and_then(|p| p.snapshots.iter().find(|s| s.timestamp == timestamp));
                return match snap {
                    Some(snap) => {
                        let bytes = encode_body(snap);
                        respond(&mut stream, 200, "OK", &snap.content_type, &bytes)
                    }
                    None => respond(&mut stream, 404, "Not Found", "text/plain", b"no capture"),
                };
            }
        }
    }

    respond(&mut stream, 404, "Not Found", "text/plain", b"unknown route")
}

fn log_request(shared: &Shared, kind: RequestKind, url: &str) {
    shared.requests.lock().expect("request log").push(LoggedRequest {
        at: Instant::now(),
        kind,
        url: url.to_string(),
    });
}

/// Runs the next queued failure, if any. `Ok(Some(r))` means the response
/// was already decided; `Ok(None)` means serve normally.
fn apply_failure(
    shared: &Shared,
    kind: RequestKind,
    url: &str,
    stream: &mut TcpStream,
) -> std::io::Result<Option<std::io::Result<()>>> {
    let failure = {
        let mut table = shared.failures.lock().expect("failure table");
        table.get_mut(&(kind, url.to_string())).and_then(VecDeque::pop_front)
    };
    match failure {
        None => Ok(None),
        Some(Failure::Delay(d)) => {
            std::thread::sleep(d);
            Ok(None)
        }
        Some(Failure::Status(code)) => {
            Ok(Some(respond(stream, code, "Injected", "text/plain", b"injected failure")))
        }
        Some(Failure::DropConnection) => {
            let _ = stream.shutdown(std::net::Shutdown::Both);
            Ok(Some(Ok(())))
        }
    }
}

/// The snapshot whose timestamp is nearest the target in absolute seconds;
/// ties go to the earlier capture.
fn closest_snapshot<'a>(snapshots: &'a [MockSnapshot], target: &str) -> Option<&'a MockSnapshot> {
    let target = parse_ts(target)?;
    snapshots
        .iter()
        .filter_map(|s| parse_ts(&s.timestamp).map(|ts| (s, ts)))
        .min_by_key(|(s, ts)| ((*ts - target).num_seconds().abs(), s.timestamp.clone()))
        .map(|(s, _)| s)
}

fn parse_ts(ts: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(ts, "%Y%m%d%H%M%S").ok()
}

fn encode_body(snap: &MockSnapshot) -> Vec<u8> {
    let charset = charset_from_content_type(&snap.content_type);
    let encoding = charset
        .as_deref()
        .and_then(|label| encoding_rs::Encoding::for_label(label.as_bytes()))
        .unwrap_or(encoding_rs::UTF_8);
    encoding.encode(&snap.body).0.into_owned()
}

fn local_host_header(stream: &TcpStream) -> String {
    stream
        .local_addr()
        .map(|a| a.to_string())
        .unwrap_or_else(|_| "127.0.0.1:0".to_string())
}

fn respond(
    stream: &mut TcpStream,
    code: u16,
    reason: &str,
    content_type: &str,
    body: &[u8],
) -> std::io::Result<()> {
    let head = format!(
        "HTTP/1.1 {code} {reason}\r\nContent-Type: {content_type}\r\nContent-Length: {}\r\nConnection: close\r\n\r\n",
        body.len()
    );
    stream.write_all(head.as_bytes())?;
    stream.write_all(body)?;
    stream.flush()
}

/// Reads a page table: one snapshot per line,
/// `url \t timestamp \t status \t available \t content_type \t body`
/// with the body field escaped.
pub fn load_pages_tsv(path: &Path) -> Result<Vec<PageSpec>, ArchiveError> {
    let reader = textio::open_maybe_gzip(path)?;
    let mut by_url: BTreeMap<String, PageSpec> = BTreeMap::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |problem: String| ArchiveError::Malformed {
            path: path.display().to_string(),
            line: idx + 1,
            problem,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 6 {
            return Err(bad(format!("expected 6 fields, found {}", fields.len())));
        }
        let status: u16 =
            fields[2].parse().map_err(|_| bad(format!("bad status {:?}", fields[2])))?;
        let available = match fields[3] {
            "true" => true,
            "false" => false,
            other => return Err(bad(format!("bad availability flag {other:?}"))),
        };
        let body = textio::unescape_field(fields[5]).map_err(|e| bad(e.to_string()))?.into_owned();
        by_url
            .entry(fields[0].to_string())
            .or_insert_with(|| PageSpec { url: fields[0].to_string(), snapshots: Vec::new() })
            .snapshots
            .push(MockSnapshot {
                timestamp: fields[1].to_string(),
                status,
                available,
                content_type: fields[4].to_string(),
                body,
            });
    }
    Ok(by_url.into_values().collect())
}

pub fn write_pages_tsv<W: Write>(mut w: W, pages: &[PageSpec]) -> std::io::Result<()> {
    for page in pages {
        for snap in &page.snapshots {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                page.url,
                snap.timestamp,
                snap.status,
                snap.available,
                snap.content_type,
                textio::escape_field(&snap.body)
            )?;
        }
    }
    Ok(())
}
