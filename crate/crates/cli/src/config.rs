use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use retrocorpus_core::archive::valid_timestamp;
use retrocorpus_core::sessions::{DateRange, Split, SplitSpec};
use sha2::{Digest, Sha256};

/// Effective pipeline configuration: the key=value file with defaults filled
/// in and command-line overrides already applied. Relative paths in the file
/// are resolved against the file's own directory, so a config can travel
/// with its fixture.
#[derive(Debug, Clone)]
pub struct Config {
    pub workdir: PathBuf,
    pub logs: Vec<PathBuf>,
    pub archive_endpoint: String,
    pub target_timestamp: String,
    pub min_request_interval_ms: u64,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub request_timeout_ms: u64,
    pub max_concurrency: usize,
    pub crawl_max_actions: Option<u64>,
    pub gap_minutes: i64,
    pub min_queries: usize,
    pub splits: Option<SplitSpec>,
    pub eval_split: Split,
    pub bm25_k1: f64,
    pub bm25_b: f64,
    pub candidate_k: usize,
    pub include_url: bool,
    pub seed: u64,
    pub jobs: usize,
    pub diff_other: Option<PathBuf>,
    pub diff_label_a: String,
    pub diff_label_b: String,
    pub diff_universe: Option<u64>,
    pub diff_review_threshold: f64,
    pub diff_review_count: usize,
    pub archive_pages: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            workdir: PathBuf::new(),
            logs: Vec::new(),
            archive_endpoint: "https://archive.org".to_string(),
            target_timestamp: "20060301000000".to_string(),
            min_request_interval_ms: 500,
            max_retries: 3,
            backoff_base_ms: 1000,
            request_timeout_ms: 30_000,
            max_concurrency: 4,
            crawl_max_actions: None,
            gap_minutes: 30,
            min_queries: 2,
            splits: None,
            eval_split: Split::Test,
            bm25_k1: 1.2,
            bm25_b: 0.75,
            candidate_k: 50,
            include_url: false,
            seed: 0,
            jobs: 0,
            diff_other: None,
            diff_label_a: "current".to_string(),
            diff_label_b: "other".to_string(),
            diff_universe: None,
            diff_review_threshold: 0.5,
            diff_review_count: 20,
            archive_pages: None,
        }
    }
}

pub fn load(path: &Path) -> Result<Config, String> {
    let text = fs::read_to_string(path)
        .map_err(|e| format!("cannot read config file {}: {e}", path.display()))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse(&text, base).map_err(|e| format!("{}: {e}", path.display()))
}

fn parse(text: &str, base: &Path) -> Result<Config, String> {
    let mut cfg = Config::default();
    let mut seen: Vec<String> = Vec::new();
    let mut split_dates: [Option<NaiveDate>; 6] = [None; 6];
    const SPLIT_KEYS: [&str; 6] =
        ["train_start", "train_end", "dev_start", "dev_end", "test_start", "test_end"];

    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let lineno = idx + 1;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {lineno}: expected key = value"))?;
        let key = key.trim();
        let value = value.trim();
        if seen.iter().any(|k| k == key) {
            return Err(format!("line {lineno}: duplicate key `{key}`"));
        }
        seen.push(key.to_string());

        let resolve = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let int = |v: &str| -> Result<u64, String> {
            v.parse().map_err(|_| format!("line {lineno}: `{key}` expects an integer, got {v:?}"))
        };
        let float = |v: &str| -> Result<f64, String> {
            v.parse().map_err(|_| format!("line {lineno}: `{key}` expects a number, got {v:?}"))
        };
        let flag = |v: &str| -> Result<bool, String> {
            match v {
                "true" => Ok(true),
                "false" => Ok(false),
                other => Err(format!("line {lineno}: `{key}` expects true or false, got {other:?}")),
            }
        };
        let date = |v: &str| -> Result<NaiveDate, String> {
            NaiveDate::parse_from_str(v, "%Y-%m-%d")
                .map_err(|_| format!("line {lineno}: `{key}` expects YYYY-MM-DD, got {v:?}"))
        };

        if let Some(slot) = SPLIT_KEYS.iter().position(|k| *k == key) {
            split_dates[slot] = Some(date(value)?);
            continue;
        }
        match key {
            "workdir" => cfg.workdir = resolve(value),
            "logs" => {
                cfg.logs = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(resolve)
                    .collect();
            }
            "archive_endpoint" => cfg.archive_endpoint = value.to_string(),
            "target_timestamp" => {
                if !valid_timestamp(value) {
                    return Err(format!(
                        "line {lineno}: `target_timestamp` expects 14 digits YYYYMMDDhhmmss"
                    ));
                }
                cfg.target_timestamp = value.to_string();
            }
            "min_request_interval_ms" => cfg.min_request_interval_ms = int(value)?,
            "max_retries" => cfg.max_retries = int(value)? as u32,
            "backoff_base_ms" => cfg.backoff_base_ms = int(value)?,
            "request_timeout_ms" => cfg.request_timeout_ms = int(value)?,
            "max_concurrency" => cfg.max_concurrency = int(value)?.max(1) as usize,
            "crawl_max_actions" => cfg.crawl_max_actions = Some(int(value)?),
            "gap_minutes" => cfg.gap_minutes = int(value)? as i64,
            "min_queries" => cfg.min_queries = int(value)? as usize,
            "eval_split" => {
                cfg.eval_split =
                    value.parse().map_err(|e: String| format!("line {lineno}: {e}"))?;
            }
            "bm25_k1" => cfg.bm25_k1 = float(value)?,
            "bm25_b" => cfg.bm25_b = float(value)?,
            "candidate_k" => cfg.candidate_k = int(value)?.max(1) as usize,
            "include_url" => cfg.include_url = flag(value)?,
            "seed" => cfg.seed = int(value)?,
            "jobs" => cfg.jobs = int(value)? as usize,
            "diff_other" => cfg.diff_other = Some(resolve(value)),
            "diff_label_a" => cfg.diff_label_a = value.to_string(),
            "diff_label_b" => cfg.diff_label_b = value.to_string(),
            "diff_universe" => cfg.diff_universe = Some(int(value)?),
            "diff_review_threshold" => cfg.diff_review_threshold = float(value)?,
            "diff_review_count" => cfg.diff_review_count = int(value)? as usize,
            "archive_pages" => cfg.archive_pages = Some(resolve(value)),
            other => return Err(format!("line {lineno}: unknown key `{other}`")),
        }
    }

    if cfg.workdir.as_os_str().is_empty() {
        return Err("missing required key `workdir`".to_string());
    }
    let set = split_dates.iter().filter(|d| d.is_some()).count();
    if set == 6 {
        cfg.splits = Some(SplitSpec {
            train: DateRange { start: split_dates[0].unwrap(), end: split_dates[1].unwrap() },
            dev: DateRange { start: split_dates[2].unwrap(), end: split_dates[3].unwrap() },
            test: DateRange { start: split_dates[4].unwrap(), end: split_dates[5].unwrap() },
        });
    } else if set > 0 {
        let missing: Vec<&str> = SPLIT_KEYS
            .iter()
            .zip(&split_dates)
            .filter(|(_, d)| d.is_none())
            .map(|(k, _)| *k)
            .collect();
        return Err(format!("split dates are all-or-nothing; missing {}", missing.join(", ")));
    }
    Ok(cfg)
}

impl Config {
    /// Canonical one-line-per-key rendering of the effective configuration.
    /// Unset optional keys are omitted; everything else appears in a fixed
    /// order with defaults materialized, so the hash pins the exact settings
    /// a run used regardless of how the file spelled them.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let path = |p: &PathBuf| p.to_string_lossy().into_owned();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("workdir", path(&self.workdir));
        put("logs", self.logs.iter().map(path).collect::<Vec<_>>().join(","));
        put("archive_endpoint", self.archive_endpoint.clone());
        put("target_timestamp", self.target_timestamp.clone());
        put("min_request_interval_ms", self.min_request_interval_ms.to_string());
        put("max_retries", self.max_retries.to_string());
        put("backoff_base_ms", self.backoff_base_ms.to_string());
        put("request_timeout_ms", self.request_timeout_ms.to_string());
        put("max_concurrency", self.max_concurrency.to_string());
        if let Some(n) = self.crawl_max_actions {
            put("crawl_max_actions", n.to_string());
        }
        put("gap_minutes", self.gap_minutes.to_string());
        put("min_queries", self.min_queries.to_string());
        if let Some(s) = &self.splits {
            put("train_start", s.train.start.to_string());
            put("train_end", s.train.end.to_string());
            put("dev_start", s.dev.start.to_string());
            put("dev_end", s.dev.end.to_string());
            put("test_start", s.test.start.to_string());
            put("test_end", s.test.end.to_string());
        }
        put("eval_split", self.eval_split.as_str().to_string());
        put("bm25_k1", format!("{}", self.bm25_k1));
        put("bm25_b", format!("{}", self.bm25_b));
        put("candidate_k", self.candidate_k.to_string());
        put("include_url", self.include_url.to_string());
        put("seed", self.seed.to_string());
        put("jobs", self.jobs.to_string());
        if let Some(p) = &self.diff_other {
            put("diff_other", path(p));
        }
        put("diff_label_a", self.diff_label_a.clone());
        put("diff_label_b", self.diff_label_b.clone());
        if let Some(n) = self.diff_universe {
            put("diff_universe", n.to_string());
        }
        put("diff_review_threshold", format!("{}", self.diff_review_threshold));
        put("diff_review_count", self.diff_review_count.to_string());
        if let Some(p) = &self.archive_pages {
            put("archive_pages", path(p));
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of the canonical rendering.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in &digest[..8] {
            let _ = write!(hex, "{byte:02x}");
        }
        hex
    }
}
