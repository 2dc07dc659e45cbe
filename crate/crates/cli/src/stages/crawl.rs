use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufReader;
use std::time::Duration;

use retrocorpus_core::archive::{
    build_mapping, fetch_plan, load_crawl_state, map_plan, resume_plan, run_fetch_phase,
    run_map_phase, ArchiveClient, CrawlLimits, CrawlPaths, FetchPolicy,
};
use retrocorpus_core::logs::UrlUniverse;

use crate::stamps;

use super::{data, Prereq, Stage, StageContext, StageError};

fn policy(ctx: &StageContext) -> FetchPolicy {
    let cfg = &ctx.config;
    let concurrency = if cfg.jobs > 0 {
        cfg.max_concurrency.min(cfg.jobs)
    } else {
        cfg.max_concurrency
    };
    FetchPolicy {
        target_timestamp: cfg.target_timestamp.clone(),
        max_concurrency: concurrency,
        min_request_interval: Duration::from_millis(cfg.min_request_interval_ms),
        max_retries: cfg.max_retries,
        backoff_base: Duration::from_millis(cfg.backoff_base_ms),
        request_timeout: Duration::from_millis(cfg.request_timeout_ms),
        jitter_seed: cfg.seed,
    }
}

fn load_universe(ctx: &StageContext) -> Result<BTreeSet<String>, StageError> {
    let file = File::open(ctx.universe()).map_err(data)?;
    let universe = UrlUniverse::read_report(BufReader::new(file))
        .map_err(|e| data(format!("{}: {e}", ctx.universe().display())))?;
    Ok(universe.urls().map(str::to_string).collect())
}

fn crawl_paths(ctx: &StageContext) -> CrawlPaths {
    CrawlPaths::in_dir(&ctx.crawl_dir())
}

fn client(ctx: &StageContext) -> Result<ArchiveClient, StageError> {
    ArchiveClient::new(
        &ctx.config.archive_endpoint,
        Duration::from_millis(ctx.config.request_timeout_ms),
    )
    .map_err(data)
}

fn limits(ctx: &StageContext) -> CrawlLimits {
    CrawlLimits { max_actions: ctx.config.crawl_max_actions }
}

pub struct Map;

impl Stage for Map {
    fn name(&self) -> &'static str {
        "map"
    }

    fn summary(&self) -> &'static str {
        "resolve each universe URL to its closest archived snapshot"
    }

    fn prerequisites(&self, ctx: &StageContext) -> Vec<Prereq> {
        vec![Prereq::new(ctx.universe(), "ingest")]
    }

    fn run(&self, ctx: &StageContext) -> Result<(), StageError> {
        let universe = load_universe(ctx)?;
        let paths = crawl_paths(ctx);
        fs::create_dir_all(&ctx.crawl_dir()).map_err(data)?;
        let state = load_crawl_state(&paths).map_err(data)?;
        let plan = map_plan(&universe, &state);
        if ctx.dry_run {
            println!(
                "map: {} of {} urls need availability lookups against {}",
                plan.len(),
                universe.len(),
                ctx.config.archive_endpoint
            );
            return Ok(());
        }
        if plan.is_empty() {
            println!("map: all {} urls already resolved", universe.len());
            return Ok(());
        }
        let report =
            run_map_phase(&client(ctx)?, &policy(ctx), &universe, &paths, &limits(ctx))
                .map_err(data)?;
        println!(
            "map: {} planned, {} mapped, {} without a usable snapshot, {} deferred, {} unrecoverable",
            report.planned, report.mapped, report.no_snapshot, report.deferred, report.unrecoverable
        );
        if report.stopped_early {
            return Err(StageError::Network(
                "stopped at the crawl_max_actions budget; rerun `map` to continue".to_string(),
            ));
        }
        if report.deferred > 0 {
            return Err(StageError::Network(format!(
                "{} lookups still deferred after {} attempts each; rerun `map` when the archive recovers",
                report.deferred,
                ctx.config.max_retries + 1
            )));
        }
        Ok(())
    }
}

pub struct Fetch;

impl Stage for Fetch {
    fn name(&self) -> &'static str {
        "fetch"
    }

    fn summary(&self) -> &'static str {
        "download mapped snapshots politely and write the doc-id mapping"
    }

    fn prerequisites(&self, ctx: &StageContext) -> Vec<Prereq> {
        vec![
            Prereq::new(ctx.universe(), "ingest"),
            Prereq::new(crawl_paths(ctx).journal, "map"),
        ]
    }

    fn run(&self, ctx: &StageContext) -> Result<(), StageError> {
        let universe = load_universe(ctx)?;
        let paths = crawl_paths(ctx);
        let state = load_crawl_state(&paths).map_err(data)?;
        let plan = fetch_plan(&state);
        if ctx.dry_run {
            println!("fetch: {} snapshots to download", plan.len());
            println!("fetch: would rebuild {}", ctx.mapping().display());
            return Ok(());
        }
        if plan.is_empty() {
            println!("fetch: nothing left to download");
        } else {
            let report =
                run_fetch_phase(&client(ctx)?, &policy(ctx), &paths, &limits(ctx)).map_err(data)?;
            println!(
                "fetch: {} planned, {} fetched, {} deferred, {} unrecoverable",
                report.planned, report.fetched, report.deferred, report.unrecoverable
            );
            if report.stopped_early {
                return Err(StageError::Network(
                    "stopped at the crawl_max_actions budget; rerun `fetch` to continue"
                        .to_string(),
                ));
            }
            if report.deferred > 0 {
                return Err(StageError::Network(format!(
                    "{} downloads still deferred after {} attempts each; rerun `fetch` when the archive recovers",
                    report.deferred,
                    ctx.config.max_retries + 1
                )));
            }
        }

        let state = load_crawl_state(&paths).map_err(data)?;
        let pending = resume_plan(&universe, &state);
        if !pending.is_empty() {
            return Err(StageError::Network(format!(
                "{} urls still lack an availability decision; run `map` to finish the crawl",
                pending.len()
            )));
        }
        let build = build_mapping(&paths, &ctx.mapping()).map_err(data)?;
        stamps::write_meta(&ctx.mapping(), "fetch", &ctx.config_hash).map_err(data)?;
        let collisions = if build.collisions.is_empty() {
            String::new()
        } else {
            format!(" ({} doc-id prefix collisions widened)", build.collisions.len())
        };
        println!("fetch: mapping written with {} rows{}", build.rows, collisions);
        Ok(())
    }
}
