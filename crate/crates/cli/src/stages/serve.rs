use std::fs;
use std::thread;
use std::time::Duration;

use retrocorpus_core::archive::mock::{load_pages_tsv, MockArchive};

use super::{data, Prereq, Stage, StageContext, StageError};

/// Offline stand-in for the availability API and snapshot host, serving the
/// bundled fixture pages so the whole pipeline runs without network access.
pub struct ServeArchive;

impl Stage for ServeArchive {
    fn name(&self) -> &'static str {
        "serve-archive"
    }

    fn summary(&self) -> &'static str {
        "serve the fixture pages as a local archive endpoint"
    }

    fn prerequisites(&self, _ctx: &StageContext) -> Vec<Prereq> {
        Vec::new()
    }

    fn run(&self, ctx: &StageContext) -> Result<(), StageError> {
        let pages_path = ctx.config.archive_pages.clone().ok_or_else(|| {
            StageError::Data(
                "serve-archive needs the `archive_pages` config key pointing at a pages file"
                    .to_string(),
            )
        })?;
        if !pages_path.exists() {
            return Err(StageError::Data(format!(
                "pages file {} not found",
                pages_path.display()
            )));
        }
        let pages = load_pages_tsv(&pages_path).map_err(data)?;
        if ctx.dry_run {
            println!("serve-archive: would serve {} pages", pages.len());
            return Ok(());
        }
        let count = pages.len();
        let server = MockArchive::start(pages).map_err(data)?;
        fs::create_dir_all(&ctx.config.workdir).map_err(data)?;
        fs::write(ctx.endpoint_file(), format!("{}\n", server.endpoint())).map_err(data)?;
        println!("serve-archive: {} pages at {}", count, server.endpoint());
        println!(
            "serve-archive: endpoint written to {}; press ctrl-c to stop",
            ctx.endpoint_file().display()
        );
        loop {
            thread::sleep(Duration::from_secs(3600));
        }
    }
}
