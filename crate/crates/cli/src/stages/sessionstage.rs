use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};

use chrono::TimeDelta;
use retrocorpus_core::archive::read_mapping;
use retrocorpus_core::logs::{canonicalize_url, read_log_files};
use retrocorpus_core::sessions::{
    dataset_stats, filter_sessions, segment, split_by_date, write_sessions, QueryEvent,
    SessionClick, Split, SplitSpec,
};

use super::ingest::check_logs;
use super::{data, run_stamped, Prereq, Stage, StageContext, StageError};

pub struct Sessions;

impl Stage for Sessions {
    fn name(&self) -> &'static str {
        "sessions"
    }

    fn summary(&self) -> &'static str {
        "segment the logs into sessions and split them by date"
    }

    fn prerequisites(&self, ctx: &StageContext) -> Vec<Prereq> {
        vec![Prereq::new(ctx.mapping(), "fetch")]
    }

    fn run(&self, ctx: &StageContext) -> Result<(), StageError> {
        let logs = check_logs(ctx)?;
        let spec = splits(ctx)?;
        let mut inputs = logs.clone();
        inputs.push(ctx.mapping());
        let outputs = [ctx.sessions_file(), ctx.session_stats()];
        run_stamped(ctx, "sessions", &inputs, &outputs, || {
            let cfg = &ctx.config;
            let doc_ids: HashMap<String, String> = read_mapping(&ctx.mapping())
                .map_err(data)?
                .into_iter()
                .map(|row| (row.original_url, row.doc_id))
                .collect();

            let mut events: Vec<QueryEvent> = Vec::new();
            let mut clicks_outside_corpus = 0u64;
            read_log_files(&logs, |record| {
                let mut clicks = Vec::new();
                if let Some(raw) = &record.click_url {
                    match canonicalize_url(raw).ok().and_then(|url| doc_ids.get(&url)) {
                        Some(doc_id) => clicks
                            .push(SessionClick { doc_id: doc_id.clone(), item_rank: record.item_rank }),
                        None => clicks_outside_corpus += 1,
                    }
                }
                events.push(QueryEvent {
                    user_id: record.user_id,
                    query_text: record.query_text,
                    query_time: record.query_time,
                    clicks,
                });
            })
            .map_err(data)?;

            events.sort_by(|a, b| {
                a.user_id.cmp(&b.user_id).then_with(|| a.query_time.cmp(&b.query_time))
            });
            let sessions =
                segment(events, TimeDelta::minutes(cfg.gap_minutes)).map_err(data)?;
            let segmented = sessions.len() as u64;
            let kept = filter_sessions(sessions, cfg.min_queries);
            let discarded_short = segmented - kept.len() as u64;
            let dataset = split_by_date(kept, &spec).map_err(data)?;

            let file = File::create(ctx.sessions_file()).map_err(data)?;
            let mut out = BufWriter::new(file);
            write_sessions(&mut out, &dataset).map_err(data)?;
            out.flush().map_err(data)?;

            let stats = dataset_stats(&dataset);
            let mut text = String::new();
            for (split, s) in
                [(Split::Train, stats.train), (Split::Dev, stats.dev), (Split::Test, stats.test)]
            {
                let name = split.as_str();
                let _ = writeln!(text, "{name}_sessions\t{}", s.sessions);
                let _ = writeln!(text, "{name}_queries\t{}", s.queries);
                let _ = writeln!(text, "{name}_avg_queries\t{:.4}", s.avg_queries());
            }
            let _ = writeln!(text, "segmented_sessions\t{segmented}");
            let _ = writeln!(text, "discarded_below_min_queries\t{discarded_short}");
            let _ = writeln!(text, "discarded_outside_splits\t{}", stats.discarded_sessions);
            let _ = writeln!(text, "clicks_outside_corpus\t{clicks_outside_corpus}");
            fs::write(ctx.session_stats(), text).map_err(data)?;

            let total = stats.train.sessions + stats.dev.sessions + stats.test.sessions;
            Ok(format!(
                "{total} sessions kept (train {}, dev {}, test {})",
                stats.train.sessions, stats.dev.sessions, stats.test.sessions
            ))
        })
    }
}

fn splits(ctx: &StageContext) -> Result<SplitSpec, StageError> {
    let spec = ctx.config.splits.ok_or_else(|| {
        StageError::Data(
            "sessions needs split date ranges; set train_start through test_end".to_string(),
        )
    })?;
    spec.validate().map_err(data)?;
    Ok(spec)
}
