use std::fs::{self, File};
use std::io::BufWriter;
use std::path::PathBuf;

use retrocorpus_core::logs::{read_log_files, RawClickCounter, UrlUniverse};

use super::{data, run_stamped, Prereq, Stage, StageContext, StageError};

pub struct Ingest;

impl Stage for Ingest {
    fn name(&self) -> &'static str {
        "ingest"
    }

    fn summary(&self) -> &'static str {
        "parse the query logs into the clicked-URL universe"
    }

    fn prerequisites(&self, _ctx: &StageContext) -> Vec<Prereq> {
        Vec::new()
    }

    fn run(&self, ctx: &StageContext) -> Result<(), StageError> {
        let logs = check_logs(ctx)?;
        let outputs = [ctx.universe(), ctx.ingest_stats()];
        run_stamped(ctx, "ingest", &logs, &outputs, || {
            fs::create_dir_all(&ctx.config.workdir).map_err(data)?;
            let mut universe = UrlUniverse::new();
            let mut raw = RawClickCounter::new();
            let mut clicked = 0u64;
            let mut unparseable = 0u64;
            let read = read_log_files(&logs, |record| {
                raw.observe(&record);
                if record.has_click() {
                    clicked += 1;
                    if universe.add_record(&record).is_err() {
                        unparseable += 1;
                    }
                }
            })
            .map_err(data)?;

            let universe_file = File::create(ctx.universe()).map_err(data)?;
            universe.write_report(BufWriter::new(universe_file)).map_err(data)?;

            let stats = universe.stats();
            let mut out = String::new();
            out.push_str(&format!("records\t{}\n", read.records));
            out.push_str(&format!("header_lines\t{}\n", read.headers));
            out.push_str(&format!("blank_lines\t{}\n", read.blanks));
            out.push_str(&format!("malformed_lines\t{}\n", read.malformed));
            out.push_str(&format!("clicked_records\t{clicked}\n"));
            out.push_str(&format!("unparseable_click_urls\t{unparseable}\n"));
            out.push_str(&format!("unique_urls\t{}\n", stats.unique_count));
            out.push_str(&format!("raw_distinct_click_strings\t{}\n", raw.distinct()));
            out.push_str(&format!("single_click_fraction\t{:.6}\n", stats.single_click_fraction));
            out.push_str(&format!("homepage_fraction\t{:.6}\n", stats.homepage_fraction));
            for (scheme, count) in &stats.scheme_histogram {
                out.push_str(&format!("scheme_{scheme}\t{count}\n"));
            }
            fs::write(ctx.ingest_stats(), out).map_err(data)?;

            Ok(format!(
                "{} records, {} clicked, {} unique urls",
                read.records, clicked, stats.unique_count
            ))
        })
    }
}

/// Validates the configured log list; every stage that reads the raw logs
/// shares this check.
pub fn check_logs(ctx: &StageContext) -> Result<Vec<PathBuf>, StageError> {
    let logs = ctx.config.logs.clone();
    if logs.is_empty() {
        return Err(StageError::Data(
            "no query logs configured; set `logs` to a comma-separated list of files".to_string(),
        ));
    }
    for log in &logs {
        if !log.exists() {
            return Err(StageError::Data(format!(
                "log file {} not found; check the `logs` config key",
                log.display()
            )));
        }
    }
    Ok(logs)
}
