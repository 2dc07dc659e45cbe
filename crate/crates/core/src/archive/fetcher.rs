//! Crawl orchestration: a per-host politeness gate, deterministic jittered
//! backoff, and the two resumable phases (availability mapping, content
//! fetching) that append to the journal as they go. The mapping file is a
//! pure function of journal plus snapshot log, so any interleaving of runs,
//! kills, and resumes that reaches completion produces identical bytes.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use md5::{Digest, Md5};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::client::{ArchiveClient, ClientError};
use super::journal::{
    read_journal, read_snapshot_log, Disposition, Journal, JournalEntry, SnapshotLog, SnapshotRow,
};
use super::spool::SpoolWriter;
use super::{assign_doc_ids, write_mapping, ArchiveError, ArchiveMapping, CollisionGroup, FetchPolicy};

/// Spaces request start times per host: every `wait_turn` for the same key
/// is granted a slot at least `interval` after the previous one.
pub struct HostGate {
    interval: Duration,
    slots: Mutex<HashMap<String, Instant>>,
}

impl HostGate {
    pub fn new(interval: Duration) -> HostGate {
        HostGate { interval, slots: Mutex::new(HashMap::new()) }
    }

    pub fn wait_turn(&self, key: &str) {
        let slot = {
            let mut slots = self.slots.lock().expect("host gate");
            let now = Instant::now();
            let slot = match slots.get(key) {
                Some(prev) => (*prev + self.interval).max(now),
                None => now,
            };
            slots.insert(key.to_string(), slot);
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

/// `host:port` of a URL, the gate's key.
pub fn host_key(raw: &str) -> String {
    match url::Url::parse(raw) {
        Ok(u) => {
            let host = u.host_str().unwrap_or("").to_string();
            match u.port_or_known_default() {
                Some(p) => format!("{host}:{p}"),
                None => host,
            }
        }
        Err(_) => raw.to_string(),
    }
}

/// Delay before retry number `attempt + 1` after `attempt` failures:
/// base × 2^(attempt−1) × u with u drawn from [0.5, 1.5). The jitter is a
/// pure function of (seed, url, attempt), so a rerun sleeps the same
/// schedule.
pub fn backoff_delay(policy: &FetchPolicy, url: &str, attempt: u32) -> Duration {
    debug_assert!(attempt >= 1);
    let digest = Md5::digest(format!("{}:{url}:{attempt}", policy.jitter_seed).as_bytes());
    let seed = u64::from_le_bytes(digest[..8].try_into().expect("md5 is 16 bytes"));
    let unit: f64 = ChaCha8Rng::seed_from_u64(seed).random();
    let doubling = (1u64 << (attempt - 1).min(16)) as f64;
    policy.backoff_base.mul_f64(doubling * (0.5 + unit))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrawlPaths {
    pub journal: PathBuf,
    pub snapshots: PathBuf,
    pub spool: PathBuf,
}

impl CrawlPaths {
    pub fn in_dir(dir: &Path) -> CrawlPaths {
        CrawlPaths {
            journal: dir.join("crawl-journal.log"),
            snapshots: dir.join("snapshots.log"),
            spool: dir.join("content.spool"),
        }
    }
}

#[derive(Debug, Default)]
pub struct CrawlState {
    pub journal: BTreeMap<String, JournalEntry>,
    pub snapshots: BTreeMap<String, SnapshotRow>,
}

pub fn load_crawl_state(paths: &CrawlPaths) -> Result<CrawlState, ArchiveError> {
    Ok(CrawlState {
        journal: read_journal(&paths.journal)?,
        snapshots: read_snapshot_log(&paths.snapshots)?,
    })
}

/// Exactly the universe URLs with no terminal disposition; completed work
/// never reappears.
pub fn resume_plan(universe: &BTreeSet<String>, state: &CrawlState) -> Vec<String> {
    universe
        .iter()
        .filter(|url| !state.journal.get(*url).is_some_and(|e| e.disposition.is_terminal()))
        .cloned()
        .collect()
}

/// URLs still needing an availability lookup: non-terminal and without a
/// resolved snapshot.
pub fn map_plan(universe: &BTreeSet<String>, state: &CrawlState) -> Vec<String> {
    resume_plan(universe, state)
        .into_iter()
        .filter(|url| !state.snapshots.contains_key(url))
        .collect()
}

/// URLs with a resolved snapshot whose content is still outstanding.
pub fn fetch_plan(state: &CrawlState) -> Vec<String> {
    state
        .snapshots
        .keys()
        .filter(|url| !state.journal.get(*url).is_some_and(|e| e.disposition.is_terminal()))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CrawlLimits {
    /// Stop after this many journal writes; used to rehearse kills.
    pub max_actions: Option<u64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MapReport {
    pub planned: u64,
    pub mapped: u64,
    pub no_snapshot: u64,
    pub deferred: u64,
    pub unrecoverable: u64,
    pub stopped_early: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FetchReport {
    pub planned: u64,
    pub fetched: u64,
    pub deferred: u64,
    pub unrecoverable: u64,
    pub stopped_early: bool,
}

enum AttemptOutcome<T> {
    Done(T, u32),
    Deferred(u32),
    Unrecoverable(u32),
}

/// Runs `call` under the politeness gate with retries: transient failures
/// back off and retry until the budget of max_retries+1 attempts is spent.
fn with_retries<T>(
    policy: &FetchPolicy,
    gate: &HostGate,
    gate_key: &str,
    url: &str,
    call: impl Fn() -> Result<T, ClientError>,
) -> AttemptOutcome<T> {
    let budget = policy.max_retries + 1;
    for attempt in 1..=budget {
        gate.wait_turn(gate_key);
        match call() {
            Ok(value) => return AttemptOutcome::Done(value, attempt),
            Err(ClientError::Permanent(_)) => return AttemptOutcome::Unrecoverable(attempt),
            Err(ClientError::Transient(_)) => {
                if attempt < budget {
                    std::thread::sleep(backoff_delay(policy, url, attempt));
                }
            }
        }
    }
    AttemptOutcome::Deferred(budget)
}

struct Shift<'a> {
    queue: Mutex<VecDeque<String>>,
    stop: AtomicBool,
    error: Mutex<Option<ArchiveError>>,
    actions: Mutex<u64>,
    limits: &'a CrawlLimits,
}

impl<'a> Shift<'a> {
    fn new(plan: Vec<String>, limits: &'a CrawlLimits) -> Shift<'a> {
        Shift {
            queue: Mutex::new(plan.into()),
            stop: AtomicBool::new(false),
            error: Mutex::new(None),
            actions: Mutex::new(0),
            limits,
        }
    }

    fn next(&self) -> Option<String> {
        if self.stop.load(Ordering::SeqCst) {
            return None;
        }
        self.queue.lock().expect("work queue").pop_front()
    }

    fn fail(&self, err: ArchiveError) {
        let mut slot = self.error.lock().expect("error slot");
        if slot.is_none() {
            *slot = Some(err);
        }
        self.stop.store(true, Ordering::SeqCst);
    }

    fn count_action(&self) {
        let mut actions = self.actions.lock().expect("action counter");
        *actions += 1;
        if self.limits.max_actions.is_some_and(|max| *actions >= max) {
            self.stop.store(true, Ordering::SeqCst);
        }
    }

    fn finish(self) -> Result<bool, ArchiveError> {
        if let Some(err) = self.error.into_inner().expect("error slot") {
            return Err(err);
        }
        let drained = self.queue.into_inner().expect("work queue").is_empty();
        Ok(!drained)
    }
}

fn run_workers<'env>(shift: &Shift<'env>, concurrency: usize, work: impl Fn(&str) + Sync) {
    let workers = concurrency.max(1);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                while let Some(url) = shift.next() {
                    work(&url);
                }
            });
        }
    });
}

/// Phase one: resolve snapshots for every planned URL and journal the
/// outcome. Snapshots that are unavailable or whose archived capture is not
/// a 200 are recorded as no-snapshot and never reach the mapping.
pub fn run_map_phase(
    client: &ArchiveClient,
    policy: &FetchPolicy,
    universe: &BTreeSet<String>,
    paths: &CrawlPaths,
    limits: &CrawlLimits,
) -> Result<MapReport, ArchiveError> {
    let state = load_crawl_state(paths)?;
    let plan = map_plan(universe, &state);
    let planned = plan.len() as u64;

    let gate = HostGate::new(policy.min_request_interval);
    let gate_key = host_key(client.endpoint());
    let writers = Mutex::new((
        Journal::open(&paths.journal)?,
        SnapshotLog::open(&paths.snapshots)?,
    ));
    let tallies = Mutex::new(MapReport::default());
    let shift = Shift::new(plan, limits);

    run_workers(&shift, policy.max_concurrency, |url| {
        let outcome = with_retries(policy, &gate, &gate_key, url, || {
            client.query_availability(url, &policy.target_timestamp)
        });
        let (row, disposition, attempts) = match outcome {
            AttemptOutcome::Done(Some(snap), attempts) if snap.is_acceptable() => {
                let row = SnapshotRow {
                    url: url.to_string(),
                    timestamp: snap.timestamp.clone(),
                    archive_url: snap.archive_url.clone(),
                };
                (Some(row), Disposition::Mapped, attempts)
            }
            AttemptOutcome::Done(_, attempts) => (None, Disposition::NoSnapshot, attempts),
            AttemptOutcome::Deferred(attempts) => (None, Disposition::Deferred, attempts),
            AttemptOutcome::Unrecoverable(attempts) => {
                (None, Disposition::Unrecoverable, attempts)
            }
        };
        let write = || -> Result<(), ArchiveError> {
            let mut writers = writers.lock().expect("journal writers");
            // The snapshot row goes first: a journal line claiming "mapped"
            // must never exist without its row.
            if let Some(row) = &row {
                writers.1.append(row)?;
            }
            writers.0.append(&JournalEntry {
                url: url.to_string(),
                disposition,
                attempts,
            })?;
            Ok(())
        };
        if let Err(err) = write() {
            shift.fail(err);
            return;
        }
        {
            let mut tallies = tallies.lock().expect("map tallies");
            match disposition {
                Disposition::Mapped => tallies.mapped += 1,
                Disposition::NoSnapshot => tallies.no_snapshot += 1,
                Disposition::Deferred => tallies.deferred += 1,
                _ => tallies.unrecoverable += 1,
            }
        }
        shift.count_action();
    });

    let stopped_early = shift.finish()?;
    let mut report = tallies.into_inner().expect("map tallies");
    report.planned = planned;
    report.stopped_early = stopped_early;
    Ok(report)
}

/// Phase two: download the raw content for every mapped URL into the spool.
/// The spool record is flushed before the journal marks the URL fetched, so
/// a crash between the two just refetches on resume.
pub fn run_fetch_phase(
    client: &ArchiveClient,
    policy: &FetchPolicy,
    paths: &CrawlPaths,
    limits: &CrawlLimits,
) -> Result<FetchReport, ArchiveError> {
    let state = load_crawl_state(paths)?;
    let plan = fetch_plan(&state);
    let planned = plan.len() as u64;

    let gate = HostGate::new(policy.min_request_interval);
    let ids = assign_doc_ids(plan.iter().map(String::as_str));
    let spool = Mutex::new(SpoolWriter::open(&paths.spool)?);
    let journal = Mutex::new(Journal::open(&paths.journal)?);
    let tallies = Mutex::new(FetchReport::default());
    let snapshots = &state.snapshots;
    let shift = Shift::new(plan, limits);

    run_workers(&shift, policy.max_concurrency, |url| {
        let row = &snapshots[url];
        let gate_key = host_key(&row.archive_url);
        let outcome = with_retries(policy, &gate, &gate_key, url, || {
            client.fetch_raw(&row.archive_url)
        });
        let (disposition, attempts) = match outcome {
            AttemptOutcome::Done((bytes, content_type), attempts) => {
                let stored = spool.lock().expect("spool").append(
                    &ids.ids[url],
                    url,
                    content_type.as_deref(),
                    &bytes,
                );
                if let Err(err) = stored {
                    shift.fail(err.into());
                    return;
                }
                (Disposition::Fetched, attempts)
            }
            AttemptOutcome::Deferred(attempts) => (Disposition::Deferred, attempts),
            AttemptOutcome::Unrecoverable(attempts) => (Disposition::Unrecoverable, attempts),
        };
        let written = journal.lock().expect("journal").append(&JournalEntry {
            url: url.to_string(),
            disposition,
            attempts,
        });
        if let Err(err) = written {
            shift.fail(err.into());
            return;
        }
        {
            let mut tallies = tallies.lock().expect("fetch tallies");
            match disposition {
                Disposition::Fetched => tallies.fetched += 1,
                Disposition::Deferred => tallies.deferred += 1,
                _ => tallies.unrecoverable += 1,
            }
        }
        shift.count_action();
    });

    let stopped_early = shift.finish()?;
    let mut report = tallies.into_inner().expect("fetch tallies");
    report.planned = planned;
    report.stopped_early = stopped_early;
    Ok(report)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MappingBuild {
    pub rows: u64,
    pub collisions: Vec<CollisionGroup>,
}

/// Deterministic post-pass: every URL the journal marks fetched joins its
/// snapshot row, gets an audited doc id, and lands in the sorted mapping
/// file. Depends only on journal and snapshot log contents, never on the
/// order work happened in.
pub fn build_mapping(paths: &CrawlPaths, mapping_path: &Path) -> Result<MappingBuild, ArchiveError> {
    let state = load_crawl_state(paths)?;
    let fetched: Vec<&str> = state
        .journal
        .values()
        .filter(|e| e.disposition == Disposition::Fetched)
        .map(|e| e.url.as_str())
        .collect();
    for url in &fetched {
        if !state.snapshots.contains_key(*url) {
            return Err(ArchiveError::CorruptJournal {
                path: paths.snapshots.display().to_string(),
                line: 0,
                problem: format!("fetched url {url:?} has no snapshot row"),
            });
        }
    }
    let assignment = assign_doc_ids(fetched.iter().copied());
    let rows: Vec<ArchiveMapping> = assignment
        .ids
        .iter()
        .map(|(url, doc_id)| {
            let row = &state.snapshots[url];
            ArchiveMapping {
                doc_id: doc_id.clone(),
                original_url: url.clone(),
                timestamp: row.timestamp.clone(),
                archive_url: row.archive_url.clone(),
            }
        })
        .collect();
    let written = write_mapping(mapping_path, &rows)?;
    Ok(MappingBuild { rows: written, collisions: assignment.collisions })
}

#[cfg(test)]
mod tests {
    use super::super::mock::{Failure, MockArchive, MockSnapshot, PageSpec, RequestKind};
    use super::super::read_mapping;
    use super::*;

    fn page(url: &str, ts: &str, body: &str) -> PageSpec {
        PageSpec {
            url: url.to_string(),
            snapshots: vec![MockSnapshot {
                timestamp: ts.to_string(),
                status: 200,
                available: true,
                content_type: "text/html".to_string(),
                body: body.to_string(),
            }],
        }
    }

    fn quick_policy() -> FetchPolicy {
        FetchPolicy {
            max_concurrency: 1,
            min_request_interval: Duration::from_millis(2),
            max_retries: 3,
            backoff_base: Duration::from_millis(2),
            request_timeout: Duration::from_secs(5),
            ..FetchPolicy::default()
        }
    }

    fn universe(urls: &[&str]) -> BTreeSet<String> {
        urls.iter().map(|u| u.to_string()).collect()
    }

    #[test]
    fn backoff_is_deterministic_and_bounded() {
        let policy = FetchPolicy { backoff_base: Duration::from_millis(100), ..Default::default() };
        for attempt in 1..=4 {
            let a = backoff_delay(&policy, "http://x.test/", attempt);
            let b = backoff_delay(&policy, "http://x.test/", attempt);
            assert_eq!(a, b);
            let nominal = 100.0 * f64::from(1u32 << (attempt - 1));
            let ms = a.as_secs_f64() * 1000.0;
            assert!(ms >= nominal * 0.5 && ms < nominal * 1.5, "attempt {attempt}: {ms}ms");
        }
        let other_url = backoff_delay(&policy, "http://y.test/", 1);
        let other_seed = backoff_delay(
            &FetchPolicy { jitter_seed: 9, ..policy.clone() },
            "http://x.test/",
            1,
        );
        let base = backoff_delay(&policy, "http://x.test/", 1);
        assert!(other_url != base || other_seed != base);
    }

    #[test]
    fn host_gate_spaces_slots() {
        let gate = HostGate::new(Duration::from_millis(30));
        let start = Instant::now();
        for _ in 0..3 {
            gate.wait_turn("a.test:80");
        }
        assert!(start.elapsed() >= Duration::from_millis(60));
        // Independent hosts do not wait on each other.
        let other = Instant::now();
        gate.wait_turn("b.test:80");
        assert!(other.elapsed() < Duration::from_millis(25));
    }

    #[test]
    fn host_key_normalizes_ports() {
        assert_eq!(host_key("http://a.test/x"), "a.test:80");
        assert_eq!(host_key("https://a.test/x"), "a.test:443");
        assert_eq!(host_key("http://a.test:8080/x"), "a.test:8080");
    }

    #[test]
    fn plans_partition_by_disposition() {
        let dir = tempfile::tempdir().unwrap();
        let paths = CrawlPaths::in_dir(dir.path());
        {
            let mut journal = Journal::open(&paths.journal).unwrap();
            let mut log = SnapshotLog::open(&paths.snapshots).unwrap();
            let entry = |url: &str, d: Disposition| JournalEntry {
                url: url.to_string(),
                disposition: d,
                attempts: 1,
            };
            let row = |url: &str| SnapshotRow {
                url: url.to_string(),
                timestamp: "20060301000000".to_string(),
                archive_url: format!("http://archive.test/web/20060301000000/{url}"),
            };
            journal.append(&entry("http://fetched.test/", Disposition::Fetched)).unwrap();
            log.append(&row("http://fetched.test/")).unwrap();
            journal.append(&entry("http://none.test/", Disposition::NoSnapshot)).unwrap();
            journal.append(&entry("http://dead.test/", Disposition::Unrecoverable)).unwrap();
            journal.append(&entry("http://mapped.test/", Disposition::Mapped)).unwrap();
            log.append(&row("http://mapped.test/")).unwrap();
            journal.append(&entry("http://retry-map.test/", Disposition::Deferred)).unwrap();
            journal.append(&entry("http://retry-fetch.test/", Disposition::Deferred)).unwrap();
            log.append(&row("http://retry-fetch.test/")).unwrap();
        }
        let state = load_crawl_state(&paths).unwrap();
        let all = universe(&[
            "http://fetched.test/",
            "http://none.test/",
            "http://dead.test/",
            "http://mapped.test/",
            "http://retry-map.test/",
            "http://retry-fetch.test/",
            "http://fresh.test/",
        ]);

        let resume = resume_plan(&all, &state);
        assert_eq!(
            resume,
            vec![
                "http://fresh.test/",
                "http://mapped.test/",
                "http://retry-fetch.test/",
                "http://retry-map.test/"
            ]
        );
        assert_eq!(map_plan(&all, &state), vec!["http://fresh.test/", "http://retry-map.test/"]);
        assert_eq!(
            fetch_plan(&state),
            vec!["http://mapped.test/", "http://retry-fetch.test/"]
        );
    }

    #[test]
    fn crawl_end_to_end_against_mock() {
        let server = MockArchive::start(vec![
            page("http://one.test/", "20060220000000", "<html>one</html>"),
            page("http://two.test/", "20060310000000", "<html>two</html>"),
            // Unavailable capture: mapped nowhere.
            PageSpec {
                url: "http://gone.test/".to_string(),
                snapshots: vec![MockSnapshot {
                    timestamp: "20060301000000".to_string(),
                    status: 200,
                    available: false,
                    content_type: "text/html".to_string(),
                    body: String::new(),
                }],
            },
            // Redirect capture: rejected by the acceptance rule.
            PageSpec {
                url: "http://moved.test/".to_string(),
                snapshots: vec![MockSnapshot {
                    timestamp: "20060301000000".to_string(),
                    status: 302,
                    available: true,
                    content_type: "text/html".to_string(),
                    body: String::new(),
                }],
            },
        ]);
        let server = server.unwrap();
        let client = ArchiveClient::new(&server.endpoint(), Duration::from_secs(5)).unwrap();
        let policy = quick_policy();
        let dir = tempfile::tempdir().unwrap();
        let paths = CrawlPaths::in_dir(dir.path());
        let all = universe(&[
            "http://one.test/",
            "http://two.test/",
            "http://gone.test/",
            "http://moved.test/",
            "http://missing.test/",
        ]);

        let map = run_map_phase(&client, &policy, &all, &paths, &CrawlLimits::default()).unwrap();
        assert_eq!(map.planned, 5);
        assert_eq!(map.mapped, 2);
        assert_eq!(map.no_snapshot, 3);
        assert!(!map.stopped_early);

        let fetch = run_fetch_phase(&client, &policy, &paths, &CrawlLimits::default()).unwrap();
        assert_eq!(fetch.planned, 2);
        assert_eq!(fetch.fetched, 2);

        // Idempotent: everything is terminal now.
        let again = run_map_phase(&client, &policy, &all, &paths, &CrawlLimits::default()).unwrap();
        assert_eq!(again.planned, 0);
        let again = run_fetch_phase(&client, &policy, &paths, &CrawlLimits::default()).unwrap();
        assert_eq!(again.planned, 0);

        let mapping_path = dir.path().join("mapping.tsv.gz");
        let build = build_mapping(&paths, &mapping_path).unwrap();
        assert_eq!(build.rows, 2);
        assert!(build.collisions.is_empty());
        let rows = read_mapping(&mapping_path).unwrap();
        let urls: Vec<&str> = rows.iter().map(|r| r.original_url.as_str()).collect();
        assert_eq!(urls.len(), 2);
        assert!(urls.contains(&"http://one.test/") && urls.contains(&"http://two.test/"));

        let spooled = super::super::read_spool(&paths.spool).unwrap();
        assert_eq!(spooled.len(), 2);
        let one = spooled.values().find(|e| e.url == "http://one.test/").unwrap();
        assert_eq!(one.body, b"<html>one</html>");
    }

    #[test]
    fn retries_and_permanent_failures_follow_policy() {
        let server = MockArchive::start(vec![
            page("http://flaky.test/", "20060301000000", "ok"),
            page("http://hopeless.test/", "20060301000000", "ok"),
            page("http://forbidden.test/", "20060301000000", "ok"),
        ])
        .unwrap();
        let client = ArchiveClient::new(&server.endpoint(), Duration::from_secs(5)).unwrap();
        let policy = quick_policy();
        let dir = tempfile::tempdir().unwrap();
        let paths = CrawlPaths::in_dir(dir.path());

        // Two transient failures then success: mapped on the third attempt.
        server.inject_failure(RequestKind::Availability, "http://flaky.test/", Failure::Status(503));
        server.inject_failure(
            RequestKind::Availability,
            "http://flaky.test/",
            Failure::DropConnection,
        );
        // Budget exhausted: four transient failures beat max_retries=3.
        for _ in 0..4 {
            server.inject_failure(
                RequestKind::Availability,
                "http://hopeless.test/",
                Failure::Status(500),
            );
        }
        // Permanent: one 403 and the URL is abandoned immediately.
        server.inject_failure(
            RequestKind::Availability,
            "http://forbidden.test/",
            Failure::Status(403),
        );

        let all = universe(&[
            "http://flaky.test/",
            "http://hopeless.test/",
            "http://forbidden.test/",
        ]);
        let report = run_map_phase(&client, &policy, &all, &paths, &CrawlLimits::default()).unwrap();
        assert_eq!(report.mapped, 1);
        assert_eq!(report.deferred, 1);
        assert_eq!(report.unrecoverable, 1);

        let state = load_crawl_state(&paths).unwrap();
        assert_eq!(state.journal["http://flaky.test/"].attempts, 3);
        assert_eq!(state.journal["http://flaky.test/"].disposition, Disposition::Mapped);
        assert_eq!(state.journal["http://hopeless.test/"].attempts, 4);
        assert_eq!(state.journal["http://hopeless.test/"].disposition, Disposition::Deferred);
        assert_eq!(state.journal["http://forbidden.test/"].attempts, 1);
        assert_eq!(
            state.journal["http://forbidden.test/"].disposition,
            Disposition::Unrecoverable
        );

        let hits = |url: &str| {
            server.requests().iter().filter(|r| r.url == url).count()
        };
        assert_eq!(hits("http://flaky.test/"), 3);
        assert_eq!(hits("http://hopeless.test/"), 4);
        assert_eq!(hits("http://forbidden.test/"), 1);

        // The deferred URL reappears on resume and completes.
        let resumed =
            run_map_phase(&client, &policy, &all, &paths, &CrawlLimits::default()).unwrap();
        assert_eq!(resumed.planned, 1);
        assert_eq!(resumed.mapped, 1);
    }

    #[test]
    fn politeness_interval_holds_in_request_log() {
        let pages: Vec<PageSpec> = (0..5)
            .map(|i| page(&format!("http://p{i}.test/"), "20060301000000", "x"))
            .collect();
        let urls = universe(
            &pages.iter().map(|p| p.url.as_str()).collect::<Vec<&str>>(),
        );
        let server = MockArchive::start(pages).unwrap();
        let client = ArchiveClient::new(&server.endpoint(), Duration::from_secs(5)).unwrap();
        let interval = Duration::from_millis(60);
        let policy = FetchPolicy {
            max_concurrency: 2,
            min_request_interval: interval,
            max_retries: 0,
            backoff_base: Duration::from_millis(1),
            request_timeout: Duration::from_secs(5),
            ..FetchPolicy::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let paths = CrawlPaths::in_dir(dir.path());
        run_map_phase(&client, &policy, &urls, &paths, &CrawlLimits::default()).unwrap();

        let log = server.requests();
        assert_eq!(log.len(), 5);
        // All five go to the one endpoint host; arrivals must be spaced by
        // the interval, less a little scheduling noise.
        for pair in log.windows(2) {
            let gap = pair[1].at - pair[0].at;
            assert!(
                gap >= interval - Duration::from_millis(15),
                "requests {:?} and {:?} only {gap:?} apart",
                pair[0].url,
                pair[1].url
            );
        }
    }

    #[test]
    fn interrupted_and_clean_runs_build_identical_mappings() {
        let pages: Vec<PageSpec> = (0..8)
            .map(|i| {
                page(&format!("http://k{i}.test/"), "20060225000000", &format!("<html>{i}</html>"))
            })
            .collect();
        let all: BTreeSet<String> = pages.iter().map(|p| p.url.clone()).collect();
        let policy = quick_policy();
        // One server throughout: the mapping embeds its archive URLs, so
        // byte comparison only makes sense against the same endpoint.
        let server = MockArchive::start(pages).unwrap();
        let client = ArchiveClient::new(&server.endpoint(), Duration::from_secs(5)).unwrap();

        let run = |limits_schedule: &[Option<u64>]| -> Vec<u8> {
            let dir = tempfile::tempdir().unwrap();
            let paths = CrawlPaths::in_dir(dir.path());
            // Alternate map and fetch passes under each action cap until
            // nothing is left, mimicking kills at arbitrary points.
            for cap in limits_schedule {
                let limits = CrawlLimits { max_actions: *cap };
                run_map_phase(&client, &policy, &all, &paths, &limits).unwrap();
                run_fetch_phase(&client, &policy, &paths, &limits).unwrap();
            }
            loop {
                let m = run_map_phase(&client, &policy, &all, &paths, &CrawlLimits::default())
                    .unwrap();
                let f =
                    run_fetch_phase(&client, &policy, &paths, &CrawlLimits::default()).unwrap();
                if m.planned == 0 && f.planned == 0 {
                    break;
                }
            }
            let mapping = dir.path().join("mapping.tsv.gz");
            build_mapping(&paths, &mapping).unwrap();
            std::fs::read(&mapping).unwrap()
        };

        let clean = run(&[]);
        let choppy = run(&[Some(1), Some(2), Some(1), Some(3)]);
        assert_eq!(clean, choppy);

        // A torn journal tail behaves like the line was never written.
        let dir = tempfile::tempdir().unwrap();
        let paths = CrawlPaths::in_dir(dir.path());
        run_map_phase(&client, &policy, &all, &paths, &CrawlLimits { max_actions: Some(4) })
            .unwrap();
        let bytes = std::fs::read(&paths.journal).unwrap();
        std::fs::write(&paths.journal, &bytes[..bytes.len() - 7]).unwrap();
        loop {
            let m =
                run_map_phase(&client, &policy, &all, &paths, &CrawlLimits::default()).unwrap();
            let f = run_fetch_phase(&client, &policy, &paths, &CrawlLimits::default()).unwrap();
            if m.planned == 0 && f.planned == 0 {
                break;
            }
        }
        let mapping = dir.path().join("mapping.tsv.gz");
        build_mapping(&paths, &mapping).unwrap();
        assert_eq!(std::fs::read(&mapping).unwrap(), clean);
    }
}
