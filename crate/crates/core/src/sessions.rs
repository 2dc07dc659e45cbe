//! Session segmentation and the session search dataset: inactivity-gap
//! splitting per user, duplicate-query merging, minimum-length filtering,
//! date-based train/dev/test assignment, and candidate-pool generation for
//! the re-ranking experiments.

use std::collections::{BTreeSet, HashSet};
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use chrono::{NaiveDate, NaiveDateTime, TimeDelta};

use crate::eval::{Bm25Params, CandidateSet, InvertedIndex, QrelEntry};
use crate::textio;

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("records for user {user:?} are not sorted by time (at {at})")]
    UnsortedUser { user: String, at: NaiveDateTime },
    #[error("records for user {user:?} are not contiguous; group records per user first")]
    UngroupedUser { user: String },
    #[error("split ranges {0} and {1} overlap")]
    OverlappingRanges(String, String),
    #[error("session file line {line}: {problem}")]
    Malformed { line: usize, problem: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// One clicked result within a query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionClick {
    pub doc_id: String,
    pub item_rank: Option<u32>,
}

/// One log event after click resolution: a query and the documents the
/// click landed on (zero or more).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryEvent {
    pub user_id: String,
    pub query_text: String,
    pub query_time: NaiveDateTime,
    pub clicks: Vec<SessionClick>,
}

/// A query inside a session, with consecutive duplicates already merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionQuery {
    pub query_text: String,
    pub query_time: NaiveDateTime,
    pub clicks: Vec<SessionClick>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub session_id: String,
    pub user_id: String,
    pub queries: Vec<SessionQuery>,
    /// Assigned by [`split_by_date`]; `None` until then.
    pub split: Option<Split>,
}

impl Session {
    pub fn start_time(&self) -> NaiveDateTime {
        self.queries[0].query_time
    }

    pub fn distinct_query_count(&self) -> usize {
        self.queries.iter().map(|q| q.query_text.as_str()).collect::<BTreeSet<_>>().len()
    }
}

/// Segments per-user, time-ordered events into sessions. A new session
/// starts whenever the gap from the previous event of the same user reaches
/// `gap_threshold` (a gap of exactly the threshold starts a new session).
/// Consecutive events with identical query text within a session merge into
/// one query whose clicks are unioned by doc id (first occurrence's rank and
/// time win). Gap decisions use the raw event times, also between events
/// that end up merged.
pub fn segment(
    events: impl IntoIterator<Item = QueryEvent>,
    gap_threshold: TimeDelta,
) -> Result<Vec<Session>, SessionError> {
    let mut sessions: Vec<Session> = Vec::new();
    let mut current: Option<Session> = None;
    let mut finished_users: HashSet<String> = HashSet::new();
    let mut last_time: Option<NaiveDateTime> = None;
    let mut user_session_count: u64 = 0;

    for event in events {
        let same_user = current.as_ref().is_some_and(|s| s.user_id == event.user_id);
        if !same_user {
            if let Some(done) = current.take() {
                finished_users.insert(done.user_id.clone());
                sessions.push(done);
            }
            if finished_users.contains(&event.user_id) {
                return Err(SessionError::UngroupedUser { user: event.user_id });
            }
            user_session_count = 1;
            last_time = None;
        }
        if let Some(prev) = last_time {
            if event.query_time < prev {
                return Err(SessionError::UnsortedUser {
                    user: event.user_id,
                    at: event.query_time,
                });
            }
            if event.query_time - prev >= gap_threshold {
                let done = current.take().expect("session open while last_time set");
                user_session_count += 1;
                sessions.push(done);
            }
        }
        last_time = Some(event.query_time);

        match current.as_mut() {
            Some(session) => {
                let duplicate = session
                    .queries
                    .last()
                    .is_some_and(|q| q.query_text == event.query_text);
                if duplicate {
                    let query = session.queries.last_mut().expect("non-empty");
                    for click in event.clicks {
                        if !query.clicks.iter().any(|c| c.doc_id == click.doc_id) {
                            query.clicks.push(click);
                        }
                    }
                } else {
                    session.queries.push(SessionQuery {
                        query_text: event.query_text,
                        query_time: event.query_time,
                        clicks: event.clicks,
                    });
                }
            }
            None => {
                current = Some(Session {
                    session_id: format!("{}-{}", event.user_id, user_session_count),
                    user_id: event.user_id.clone(),
                    queries: vec![SessionQuery {
                        query_text: event.query_text,
                        query_time: event.query_time,
                        clicks: event.clicks,
                    }],
                    split: None,
                });
            }
        }
    }
    if let Some(done) = current.take() {
        sessions.push(done);
    }
    Ok(sessions)
}

/// Drops sessions with fewer than `min_queries` distinct query texts.
pub fn filter_sessions(sessions: Vec<Session>, min_queries: usize) -> Vec<Session> {
    sessions.into_iter().filter(|s| s.distinct_query_count() >= min_queries).collect()
}

/// Half-open date interval [start, end).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn contains(&self, at: NaiveDateTime) -> bool {
        let d = at.date();
        self.start <= d && d < self.end
    }

    fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    fn overlaps(&self, other: &DateRange) -> bool {
        !self.is_empty() && !other.is_empty() && self.start < other.end && other.start < self.end
    }
}

impl std::fmt::Display for DateRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: DateRange,
    pub dev: DateRange,
    pub test: DateRange,
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), SessionError> {
        let named = [("train", self.train), ("dev", self.dev), ("test", self.test)];
        for (i, (name_a, a)) in named.iter().enumerate() {
            for (name_b, b) in named.iter().skip(i + 1) {
                if a.overlaps(b) {
                    return Err(SessionError::OverlappingRanges(
                        format!("{name_a} {a}"),
                        format!("{name_b} {b}"),
                    ));
                }
            }
        }
        Ok(())
    }

    fn assign(&self, at: NaiveDateTime) -> Option<Split> {
        if self.train.contains(at) {
            Some(Split::Train)
        } else if self.dev.contains(at) {
            Some(Split::Dev)
        } else if self.test.contains(at) {
            Some(Split::Test)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitDataset {
    pub train: Vec<Session>,
    pub dev: Vec<Session>,
    pub test: Vec<Session>,
    /// Sessions starting outside every range.
    pub discarded: u64,
}

impl SplitDataset {
    pub fn split(&self, split: Split) -> &[Session] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

/// Assigns each session to the split containing its first query's
/// timestamp; a session never straddles splits.
pub fn split_by_date(sessions: Vec<Session>, spec: &SplitSpec) -> Result<SplitDataset, SessionError> {
    spec.validate()?;
    let mut dataset = SplitDataset::default();
    for mut session in sessions {
        match spec.assign(session.start_time()) {
            Some(split) => {
                session.split = Some(split);
                match split {
                    Split::Train => dataset.train.push(session),
                    Split::Dev => dataset.dev.push(session),
                    Split::Test => dataset.test.push(session),
                }
            }
            None => dataset.discarded += 1,
        }
    }
    Ok(dataset)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SplitStats {
    pub sessions: u64,
    pub queries: u64,
}

impl SplitStats {
    pub fn avg_queries(&self) -> f64 {
        if self.sessions == 0 {
            0.0
        } else {
            self.queries as f64 / self.sessions as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DatasetStats {
    pub train: SplitStats,
    pub dev: SplitStats,
    pub test: SplitStats,
    pub discarded_sessions: u64,
}

pub fn dataset_stats(dataset: &SplitDataset) -> DatasetStats {
    let count = |sessions: &[Session]| SplitStats {
        sessions: sessions.len() as u64,
        queries: sessions.iter().map(|s| s.queries.len() as u64).sum(),
    };
    DatasetStats {
        train: count(&dataset.train),
        dev: count(&dataset.dev),
        test: count(&dataset.test),
        discarded_sessions: dataset.discarded,
    }
}

/// Percentage change from `old` to `new`; `None` when there is no baseline.
pub fn percent_delta(new: f64, old: f64) -> Option<f64> {
    (old != 0.0).then(|| 100.0 * (new - old) / old)
}

/// Writes the session dataset, one query per line:
/// `session_id \t user_id \t split \t query_index \t query_text \t
/// epoch_seconds \t comma-joined clicked doc_ids`.
pub fn write_sessions<W: Write>(mut w: W, dataset: &SplitDataset) -> io::Result<()> {
    for split in [Split::Train, Split::Dev, Split::Test] {
        for session in dataset.split(split) {
            for (query_index, query) in session.queries.iter().enumerate() {
                let clicks: Vec<&str> = query.clicks.iter().map(|c| c.doc_id.as_str()).collect();
                writeln!(
                    w,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    session.session_id,
                    session.user_id,
                    split.as_str(),
                    query_index,
                    textio::escape_field(&query.query_text),
                    query.query_time.and_utc().timestamp(),
                    clicks.join(",")
                )?;
            }
        }
    }
    Ok(())
}

/// Reads a session dataset file back. Click ranks are not part of the file
/// format, so they come back as `None`.
pub fn read_sessions<R: BufRead>(r: R) -> Result<SplitDataset, SessionError> {
    let mut dataset = SplitDataset::default();
    let mut current: Option<Session> = None;
    let mut seen_sessions: HashSet<String> = HashSet::new();

    let push = |session: Session, dataset: &mut SplitDataset| {
        match session.split.expect("split always set by parser") {
            Split::Train => dataset.train.push(session),
            Split::Dev => dataset.dev.push(session),
            Split::Test => dataset.test.push(session),
        }
    };

    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let n = idx + 1;
        let malformed = |problem: String| SessionError::Malformed { line: n, problem };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(malformed(format!("expected 7 fields, found {}", fields.len())));
        }
        let split = Split::from_str(fields[2]).map_err(&malformed)?;
        let query_index: usize =
            fields[3].parse().map_err(|_| malformed(format!("bad query index {:?}", fields[3])))?;
        let query_text = textio::unescape_field(fields[4])
            .map_err(|e| malformed(e.to_string()))?
            .into_owned();
        let secs: i64 = fields[5]
            .parse()
            .map_err(|_| malformed(format!("bad epoch seconds {:?}", fields[5])))?;
        let query_time = chrono::DateTime::from_timestamp(secs, 0)
            .ok_or_else(|| malformed(format!("epoch seconds {secs} out of range")))?
            .naive_utc();
        let clicks: Vec<SessionClick> = fields[6]
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|doc_id| SessionClick { doc_id: doc_id.to_string(), item_rank: None })
            .collect();

        let same = current.as_ref().is_some_and(|s| s.session_id == fields[0]);
        if !same {
            if let Some(done) = current.take() {
                push(done, &mut dataset);
            }
            if !seen_sessions.insert(fields[0].to_string()) {
                return Err(malformed(format!("session {:?} is not contiguous", fields[0])));
            }
            if query_index != 0 {
                return Err(malformed(format!("session starts at query index {query_index}")));
            }
            current = Some(Session {
                session_id: fields[0].to_string(),
                user_id: fields[1].to_string(),
                queries: Vec::new(),
                split: Some(split),
            });
        }
        let session = current.as_mut().expect("session open");
        if session.user_id != fields[1] || session.split != Some(split) {
            return Err(malformed("user or split changes mid-session".into()));
        }
        if query_index != session.queries.len() {
            return Err(malformed(format!(
                "query index {query_index} out of sequence (expected {})",
                session.queries.len()
            )));
        }
        session.queries.push(SessionQuery { query_text, query_time, clicks });
    }
    if let Some(done) = current.take() {
        push(done, &mut dataset);
    }
    Ok(dataset)
}

/// One query's input to candidate building.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateQuery {
    pub query_id: String,
    pub tokens: Vec<String>,
    pub clicked_doc_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CandidateBuild {
    pub sets: Vec<CandidateSet>,
    pub qrels: Vec<QrelEntry>,
    /// Queries with no retrievable candidate and no click.
    pub skipped_queries: u64,
    /// Clicked doc ids dropped because the index does not contain them.
    pub unindexed_clicks: u64,
}

/// Builds each query's candidate pool: the top-`k` BM25 documents, plus the
/// clicked documents force-included and labeled relevant (grade 1).
pub fn build_candidates(
    queries: &[CandidateQuery],
    index: &InvertedIndex,
    params: &Bm25Params,
    k: usize,
) -> CandidateBuild {
    let mut build = CandidateBuild::default();
    for query in queries {
        let mut doc_ids: Vec<String> =
            index.search(&query.tokens, params, k).into_iter().map(|(id, _)| id).collect();
        let mut clicked: Vec<&str> = Vec::new();
        for doc_id in &query.clicked_doc_ids {
            if index.doc_index(doc_id).is_none() {
                build.unindexed_clicks += 1;
                continue;
            }
            if !clicked.contains(&doc_id.as_str()) {
                clicked.push(doc_id);
            }
            if !doc_ids.iter().any(|d| d == doc_id) {
                doc_ids.push(doc_id.clone());
            }
        }
        if doc_ids.is_empty() {
            build.skipped_queries += 1;
            continue;
        }
        for doc_id in &clicked {
            build.qrels.push(QrelEntry {
                query_id: query.query_id.clone(),
                doc_id: doc_id.to_string(),
                relevance: 1,
            });
        }
        build.sets.push(CandidateSet {
            query_id: query.query_id.clone(),
            tokens: query.tokens.clone(),
            doc_ids,
        });
    }
    build
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::bm25_score;

    fn at(s: &str) -> NaiveDateTime {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S").unwrap()
    }

    fn event(user: &str, text: &str, time: &str, clicks: &[&str]) -> QueryEvent {
        QueryEvent {
            user_id: user.to_string(),
            query_text: text.to_string(),
            query_time: at(time),
            clicks: clicks
                .iter()
                .map(|d| SessionClick { doc_id: d.to_string(), item_rank: Some(1) })
                .collect(),
        }
    }

    const THIRTY_MIN: TimeDelta = TimeDelta::minutes(30);

    #[test]
    fn gap_boundaries() {
        // 29m59s stays in the session, exactly 30m starts a new one.
        let near = segment(
            [
                event("u1", "first", "2006-03-01 10:00:00", &[]),
                event("u1", "second", "2006-03-01 10:29:59", &[]),
            ],
            THIRTY_MIN,
        )
        .unwrap();
        assert_eq!(near.len(), 1);
        assert_eq!(near[0].queries.len(), 2);

        let apart = segment(
            [
                event("u1", "first", "2006-03-01 10:00:00", &[]),
                event("u1", "second", "2006-03-01 10:30:00", &[]),
            ],
            THIRTY_MIN,
        )
        .unwrap();
        assert_eq!(apart.len(), 2);
        assert_eq!(apart[0].session_id, "u1-1");
        assert_eq!(apart[1].session_id, "u1-2");
    }

    #[test]
    fn duplicate_queries_merge_with_click_union() {
        let sessions = segment(
            [
                event("u1", "lottery", "2006-03-01 10:00:00", &["aaa"]),
                event("u1", "lottery", "2006-03-01 10:05:00", &[]),
                event("u1", "lottery", "2006-03-01 10:07:00", &["bbb", "aaa"]),
                event("u1", "weather", "2006-03-01 10:09:00", &[]),
                event("u1", "lottery", "2006-03-01 10:11:00", &["ccc"]),
            ],
            THIRTY_MIN,
        )
        .unwrap();
        assert_eq!(sessions.len(), 1);
        let queries = &sessions[0].queries;
        // Non-consecutive repeats stay separate.
        assert_eq!(queries.len(), 3);
        assert_eq!(queries[0].query_text, "lottery");
        assert_eq!(queries[0].query_time, at("2006-03-01 10:00:00"));
        let ids: Vec<&str> = queries[0].clicks.iter().map(|c| c.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["aaa", "bbb"]);
        assert_eq!(queries[2].clicks.len(), 1);
    }

    #[test]
    fn raw_gaps_decide_even_across_merged_duplicates() {
        // Each event is 20m after the previous; first two share text. The
        // third event's gap is measured from the second event, not from the
        // merged query's start.
        let sessions = segment(
            [
                event("u1", "same", "2006-03-01 10:00:00", &[]),
                event("u1", "same", "2006-03-01 10:20:00", &[]),
                event("u1", "next", "2006-03-01 10:40:00", &[]),
            ],
            THIRTY_MIN,
        )
        .unwrap();
        assert_eq!(sessions.len(), 1);
        assert_eq!(sessions[0].queries.len(), 2);
    }

    #[test]
    fn input_contract_enforced() {
        let unsorted = segment(
            [
                event("u1", "a", "2006-03-01 10:05:00", &[]),
                event("u1", "b", "2006-03-01 10:00:00", &[]),
            ],
            THIRTY_MIN,
        );
        assert!(matches!(unsorted, Err(SessionError::UnsortedUser { .. })));

        let ungrouped = segment(
            [
                event("u1", "a", "2006-03-01 10:00:00", &[]),
                event("u2", "b", "2006-03-01 10:00:00", &[]),
                event("u1", "c", "2006-03-01 10:05:00", &[]),
            ],
            THIRTY_MIN,
        );
        assert!(matches!(ungrouped, Err(SessionError::UngroupedUser { user }) if user == "u1"));
    }

    #[test]
    fn filtering_counts_distinct_texts() {
        let sessions = segment(
            [
                event("u1", "only", "2006-03-01 10:00:00", &[]),
                event("u2", "one", "2006-03-01 10:00:00", &[]),
                event("u2", "two", "2006-03-01 10:01:00", &[]),
                // u3 repeats the same text non-consecutively: 1 distinct.
                event("u3", "rep", "2006-03-01 10:00:00", &[]),
                event("u3", "rep", "2006-03-01 10:01:00", &[]),
            ],
            THIRTY_MIN,
        )
        .unwrap();
        let kept = filter_sessions(sessions, 2);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].user_id, "u2");
    }

    fn spec() -> SplitSpec {
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        SplitSpec {
            train: DateRange { start: d("2006-03-01"), end: d("2006-04-01") },
            dev: DateRange { start: d("2006-04-01"), end: d("2006-04-15") },
            test: DateRange { start: d("2006-04-15"), end: d("2006-05-01") },
        }
    }

    #[test]
    fn split_assignment_and_discards() {
        let sessions = segment(
            [
                event("u1", "a", "2006-03-15 10:00:00", &[]),
                event("u2", "b", "2006-04-01 00:00:00", &[]), // half-open: dev
                event("u3", "c", "2006-04-20 10:00:00", &[]),
                event("u4", "d", "2006-06-01 10:00:00", &[]), // outside
            ],
            THIRTY_MIN,
        )
        .unwrap();
        let dataset = split_by_date(sessions, &spec()).unwrap();
        assert_eq!(dataset.train.len(), 1);
        assert_eq!(dataset.dev.len(), 1);
        assert_eq!(dataset.test.len(), 1);
        assert_eq!(dataset.discarded, 1);
        assert_eq!(dataset.dev[0].user_id, "u2");
        assert_eq!(dataset.dev[0].split, Some(Split::Dev));

        let stats = dataset_stats(&dataset);
        assert_eq!(stats.train.sessions, 1);
        assert_eq!(stats.train.queries, 1);
        assert_eq!(stats.discarded_sessions, 1);
        assert_eq!(stats.dev.avg_queries(), 1.0);
    }

    #[test]
    fn overlapping_spec_rejected() {
        let d = |s: &str| NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap();
        let bad = SplitSpec {
            train: DateRange { start: d("2006-03-01"), end: d("2006-04-02") },
            dev: DateRange { start: d("2006-04-01"), end: d("2006-04-15") },
            test: DateRange { start: d("2006-04-15"), end: d("2006-05-01") },
        };
        assert!(matches!(
            split_by_date(Vec::new(), &bad),
            Err(SessionError::OverlappingRanges(..))
        ));
    }

    #[test]
    fn percent_delta_arithmetic() {
        assert_eq!(percent_delta(142.0, 100.0), Some(42.0));
        assert_eq!(percent_delta(100.0, 100.0), Some(0.0));
        assert_eq!(percent_delta(5.0, 0.0), None);
    }

    #[test]
    fn session_file_round_trip() {
        let sessions = segment(
            [
                event("u1", "tab\there", "2006-03-02 10:00:00", &["aaa", "bbb"]),
                event("u1", "second query", "2006-03-02 10:10:00", &[]),
                event("u2", "dev side", "2006-04-02 09:00:00", &["ccc"]),
                event("u2", "more", "2006-04-02 09:05:00", &[]),
            ],
            THIRTY_MIN,
        )
        .unwrap();
        let dataset = split_by_date(sessions, &spec()).unwrap();
        let mut buf = Vec::new();
        write_sessions(&mut buf, &dataset).unwrap();

        let back = read_sessions(buf.as_slice()).unwrap();
        // Ranks are not part of the file format; everything else survives.
        assert_eq!(back.train.len(), 1);
        assert_eq!(back.dev.len(), 1);
        assert_eq!(back.train[0].session_id, "u1-1");
        assert_eq!(back.train[0].queries[0].query_text, "tab\there");
        assert_eq!(back.train[0].queries[0].query_time, at("2006-03-02 10:00:00"));
        let ids: Vec<&str> =
            back.train[0].queries[0].clicks.iter().map(|c| c.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["aaa", "bbb"]);

        // Writing the parsed dataset again is byte-identical.
        let mut again = Vec::new();
        write_sessions(&mut again, &back).unwrap();
        assert_eq!(again, buf);
    }

    #[test]
    fn session_file_rejects_corruption() {
        let bad = "s1\tu1\ttrain\t0\tq\tnot_a_number\t\n";
        assert!(matches!(
            read_sessions(bad.as_bytes()),
            Err(SessionError::Malformed { line: 1, .. })
        ));
        let gap = "s1\tu1\ttrain\t0\tq\t100\t\ns1\tu1\ttrain\t2\tq2\t200\t\n";
        assert!(matches!(read_sessions(gap.as_bytes()), Err(SessionError::Malformed { line: 2, .. })));
        let split_flip = "s1\tu1\ttrain\t0\tq\t100\t\ns1\tu1\tdev\t1\tq2\t200\t\n";
        assert!(read_sessions(split_flip.as_bytes()).is_err());
    }

    fn toks(words: &str) -> Vec<String> {
        words.split_whitespace().map(str::to_string).collect()
    }

    fn five_doc_index() -> InvertedIndex {
        InvertedIndex::build([
            ("d1", toks("jaguar car")),
            ("d2", toks("jaguar jaguar speed")),
            ("d3", toks("lion")),
            ("d4", toks("jaguar zoo animal")),
            ("d5", toks("car dealer")),
        ])
        .unwrap()
    }

    #[test]
    fn candidates_are_topk_union_clicked() {
        let index = five_doc_index();
        let params = Bm25Params::default();
        let queries = vec![CandidateQuery {
            query_id: "q1".into(),
            tokens: toks("jaguar"),
            clicked_doc_ids: vec!["d5".into()],
        }];
        let build = build_candidates(&queries, &index, &params, 3);
        assert_eq!(build.sets.len(), 1);

        // Brute-force the top 3 over all five documents.
        let mut all: Vec<(String, f64)> = ["d1", "d2", "d3", "d4", "d5"]
            .iter()
            .map(|d| (d.to_string(), bm25_score(&toks("jaguar"), d, &index, &params).unwrap()))
            .collect();
        all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| b.0.cmp(&a.0)));
        let expect_top: Vec<String> =
            all.iter().take(3).filter(|(_, s)| *s > 0.0).map(|(d, _)| d.clone()).collect();

        let got = &build.sets[0].doc_ids;
        for top in &expect_top {
            assert!(got.contains(top), "top-k doc {top} missing from {got:?}");
        }
        // The clicked doc was outside the top 3 but is forced in.
        assert!(!expect_top.contains(&"d5".to_string()));
        assert!(got.contains(&"d5".to_string()));
        assert_eq!(got.len(), 4);
        assert_eq!(build.qrels.len(), 1);
        assert_eq!(build.qrels[0].doc_id, "d5");
        assert_eq!(build.qrels[0].relevance, 1);
    }

    #[test]
    fn candidate_edge_cases() {
        let index = five_doc_index();
        let params = Bm25Params::default();

        // k=1 and the clicked doc is the top hit: pool of exactly one.
        let build = build_candidates(
            &[CandidateQuery {
                query_id: "q".into(),
                tokens: toks("jaguar"),
                clicked_doc_ids: vec!["d2".into()],
            }],
            &index,
            &params,
            1,
        );
        assert_eq!(build.sets[0].doc_ids, vec!["d2".to_string()]);

        // No matching terms and no clicks: skipped and counted.
        let build = build_candidates(
            &[CandidateQuery { query_id: "q".into(), tokens: toks("zebra"), clicked_doc_ids: vec![] }],
            &index,
            &params,
            5,
        );
        assert!(build.sets.is_empty());
        assert_eq!(build.skipped_queries, 1);

        // No matching terms but a click: the click alone forms the pool.
        let build = build_candidates(
            &[CandidateQuery {
                query_id: "q".into(),
                tokens: toks("zebra"),
                clicked_doc_ids: vec!["d3".into()],
            }],
            &index,
            &params,
            5,
        );
        assert_eq!(build.sets[0].doc_ids, vec!["d3".to_string()]);

        // Clicked doc missing from the index is dropped and counted.
        let build = build_candidates(
            &[CandidateQuery {
                query_id: "q".into(),
                tokens: toks("jaguar"),
                clicked_doc_ids: vec!["ghost".into()],
            }],
            &index,
            &params,
            2,
        );
        assert_eq!(build.unindexed_clicks, 1);
        assert!(build.qrels.is_empty());
        assert_eq!(build.sets[0].doc_ids.len(), 2);
    }
}
