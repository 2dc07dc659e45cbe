use std::fmt;
use std::path::PathBuf;

use crate::config::Config;
use crate::stamps;

mod corpus;
mod crawl;
mod diffstage;
mod ingest;
mod ranking;
mod serve;
mod sessionstage;

/// Stage failure, carrying the process exit code: 1 usage, 2 data, 3 the
/// archive kept failing and the crawl is incomplete.
#[derive(Debug)]
pub enum StageError {
    Usage(String),
    Data(String),
    Network(String),
}

impl StageError {
    pub fn exit_code(&self) -> u8 {
        match self {
            StageError::Usage(_) => 1,
            StageError::Data(_) => 2,
            StageError::Network(_) => 3,
        }
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageError::Usage(msg) | StageError::Data(msg) | StageError::Network(msg) => {
                f.write_str(msg)
            }
        }
    }
}

pub fn data(err: impl fmt::Display) -> StageError {
    StageError::Data(err.to_string())
}

pub struct StageContext {
    pub config: Config,
    pub config_hash: String,
    pub dry_run: bool,
}

impl StageContext {
    fn work(&self, name: &str) -> PathBuf {
        self.config.workdir.join(name)
    }

    pub fn universe(&self) -> PathBuf {
        self.work("universe.tsv")
    }
    pub fn ingest_stats(&self) -> PathBuf {
        self.work("ingest-stats.tsv")
    }
    pub fn crawl_dir(&self) -> PathBuf {
        self.work("crawl")
    }
    pub fn mapping(&self) -> PathBuf {
        self.work("mapping.tsv.gz")
    }
    pub fn docstore(&self) -> PathBuf {
        self.work("docstore.gz")
    }
    pub fn extract_stats(&self) -> PathBuf {
        self.work("extract-stats.tsv")
    }
    pub fn langid_file(&self) -> PathBuf {
        self.work("langid.tsv")
    }
    pub fn language_report(&self) -> PathBuf {
        self.work("language-report.tsv")
    }
    pub fn export_file(&self) -> PathBuf {
        self.work("export.tsv")
    }
    pub fn diff_dir(&self) -> PathBuf {
        self.work("diff")
    }
    pub fn sessions_file(&self) -> PathBuf {
        self.work("sessions.tsv")
    }
    pub fn session_stats(&self) -> PathBuf {
        self.work("session-stats.tsv")
    }
    pub fn runs_dir(&self) -> PathBuf {
        self.work("runs")
    }
    pub fn eval_dir(&self) -> PathBuf {
        self.work("eval")
    }
    pub fn endpoint_file(&self) -> PathBuf {
        self.work("archive-endpoint.txt")
    }

    /// Ranking variant selected by `include_url`: the run tag and the index
    /// file move together so both variants can coexist in one workdir.
    pub fn run_tag(&self) -> &'static str {
        if self.config.include_url {
            "bm25-url"
        } else {
            "bm25"
        }
    }
    pub fn index_file(&self) -> PathBuf {
        if self.config.include_url {
            self.work("index-title-url.bin")
        } else {
            self.work("index-title.bin")
        }
    }
    pub fn run_file(&self, tag: &str) -> PathBuf {
        self.runs_dir().join(format!("run-{tag}.tsv"))
    }
    pub fn candidates_file(&self, tag: &str) -> PathBuf {
        self.runs_dir().join(format!("candidates-{tag}.tsv"))
    }
    pub fn qrels_file(&self) -> PathBuf {
        self.runs_dir().join("qrels.tsv")
    }
    pub fn eval_file(&self, tag: &str) -> PathBuf {
        self.eval_dir().join(format!("eval-{tag}.tsv"))
    }
    pub fn report_file(&self) -> PathBuf {
        self.eval_dir().join("report.tsv")
    }
    pub fn significance_file(&self) -> PathBuf {
        self.eval_dir().join("significance.tsv")
    }
    pub fn significance_letters(&self) -> PathBuf {
        self.eval_dir().join("significance-letters.txt")
    }

    fn stamp_file(&self, key: &str) -> PathBuf {
        self.work(".stamps").join(format!("{key}.stamp"))
    }
}

/// An upstream artifact a stage refuses to run without, and which stage
/// produces it.
pub struct Prereq {
    pub path: PathBuf,
    pub producer: &'static str,
    pub note: &'static str,
}

impl Prereq {
    fn new(path: PathBuf, producer: &'static str) -> Prereq {
        Prereq { path, producer, note: "" }
    }

    fn with_note(path: PathBuf, producer: &'static str, note: &'static str) -> Prereq {
        Prereq { path, producer, note }
    }
}

pub trait Stage {
    fn name(&self) -> &'static str;
    fn summary(&self) -> &'static str;
    fn prerequisites(&self, ctx: &StageContext) -> Vec<Prereq>;
    fn run(&self, ctx: &StageContext) -> Result<(), StageError>;
}

pub fn registry() -> Vec<Box<dyn Stage>> {
    vec![
        Box::new(ingest::Ingest),
        Box::new(crawl::Map),
        Box::new(crawl::Fetch),
        Box::new(corpus::Extract),
        Box::new(corpus::LangId),
        Box::new(corpus::Export),
        Box::new(diffstage::Diff),
        Box::new(sessionstage::Sessions),
        Box::new(ranking::Index),
        Box::new(ranking::Rerank),
        Box::new(ranking::Eval),
        Box::new(ranking::Significance),
        Box::new(serve::ServeArchive),
    ]
}

pub fn run_stage(name: &str, ctx: &StageContext) -> Result<(), StageError> {
    let stages = registry();
    let Some(stage) = stages.iter().find(|s| s.name() == name) else {
        let known: Vec<&str> = stages.iter().map(|s| s.name()).collect();
        return Err(StageError::Usage(format!(
            "unknown stage `{name}`; expected one of: {}",
            known.join(", ")
        )));
    };
    for prereq in stage.prerequisites(ctx) {
        if !prereq.path.exists() {
            return Err(StageError::Data(format!(
                "missing {}; run `{}` first{}",
                prereq.path.display(),
                prereq.producer,
                prereq.note
            )));
        }
    }
    stage.run(ctx)
}

/// Wraps a pure input→output stage with content-hash stamping: when the
/// recorded input hashes, config hash, and output hashes all still match,
/// the stage is a no-op. The build closure returns a one-line summary.
pub fn run_stamped(
    ctx: &StageContext,
    key: &str,
    inputs: &[PathBuf],
    outputs: &[PathBuf],
    build: impl FnOnce() -> Result<String, StageError>,
) -> Result<(), StageError> {
    let expected = stamps::expectation(inputs, &ctx.config_hash).map_err(data)?;
    let stamp = ctx.stamp_file(key);
    if stamps::is_current(&stamp, &expected, outputs) {
        println!("{key}: up to date");
        return Ok(());
    }
    if ctx.dry_run {
        let listed: Vec<String> = outputs.iter().map(|p| p.display().to_string()).collect();
        println!("{key}: would write {}", listed.join(", "));
        return Ok(());
    }
    let summary = build()?;
    for output in outputs {
        stamps::write_meta(output, key, &ctx.config_hash).map_err(data)?;
    }
    stamps::record(&stamp, &expected, outputs).map_err(data)?;
    println!("{key}: {summary}");
    Ok(())
}
