use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};

use retrocorpus_core::archive::{read_mapping, read_spool, CrawlPaths};
use retrocorpus_core::extract::{
    charset_from_content_type, extract_text, index_path, length_summary, tokenize, write_export,
    write_store, DocStore, DocumentRecord, ExportRow,
};
use retrocorpus_core::langid::{builtin_profiles, classify, language_shares};

use super::{data, run_stamped, Prereq, Stage, StageContext, StageError};

pub struct Extract;

impl Stage for Extract {
    fn name(&self) -> &'static str {
        "extract"
    }

    fn summary(&self) -> &'static str {
        "decode fetched pages and extract title and body text"
    }

    fn prerequisites(&self, ctx: &StageContext) -> Vec<Prereq> {
        let paths = CrawlPaths::in_dir(&ctx.crawl_dir());
        vec![Prereq::new(ctx.mapping(), "fetch"), Prereq::new(paths.spool, "fetch")]
    }

    fn run(&self, ctx: &StageContext) -> Result<(), StageError> {
        let spool = CrawlPaths::in_dir(&ctx.crawl_dir()).spool;
        let inputs = [ctx.mapping(), spool.clone()];
        let outputs = [ctx.docstore(), index_path(&ctx.docstore()), ctx.extract_stats()];
        run_stamped(ctx, "extract", &inputs, &outputs, || {
            let rows = read_mapping(&ctx.mapping()).map_err(data)?;
            let spooled = read_spool(&spool).map_err(data)?;

            let mut docs = Vec::with_capacity(rows.len());
            let mut empty_titles = 0u64;
            let mut empty_bodies = 0u64;
            let mut title_lens = Vec::with_capacity(rows.len());
            let mut body_lens = Vec::with_capacity(rows.len());
            for row in rows {
                let entry = spooled.get(&row.original_url).ok_or_else(|| {
                    data(format!(
                        "no stored content for {}; the crawl directory is inconsistent, rerun `fetch`",
                        row.original_url
                    ))
                })?;
                let charset =
                    entry.content_type.as_deref().and_then(charset_from_content_type);
                let extracted = extract_text(&entry.body, charset.as_deref());
                if extracted.title.is_empty() {
                    empty_titles += 1;
                }
                if extracted.body.is_empty() {
                    empty_bodies += 1;
                }
                title_lens.push(tokenize(&extracted.title).len() as u64);
                body_lens.push(tokenize(&extracted.body).len() as u64);
                docs.push(DocumentRecord {
                    doc_id: row.doc_id,
                    url: row.original_url,
                    title: extracted.title,
                    body: extracted.body,
                    timestamp: row.timestamp,
                    language: None,
                });
            }
            docs.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
            let written = write_store(&ctx.docstore(), docs).map_err(data)?;

            let mut stats = String::new();
            let _ = writeln!(stats, "documents\t{written}");
            let _ = writeln!(stats, "empty_titles\t{empty_titles}");
            let _ = writeln!(stats, "empty_bodies\t{empty_bodies}");
            for (name, lens) in [("title", &mut title_lens), ("body", &mut body_lens)] {
                if let Some(summary) = length_summary(lens) {
                    let _ = writeln!(
                        stats,
                        "{name}_tokens_median\t{}\n{name}_tokens_q1\t{}\n{name}_tokens_q3\t{}",
                        summary.median, summary.quartile_low, summary.quartile_high
                    );
                }
            }
            fs::write(ctx.extract_stats(), stats).map_err(data)?;
            Ok(format!("{written} documents extracted"))
        })
    }
}

pub struct LangId;

impl Stage for LangId {
    fn name(&self) -> &'static str {
        "langid"
    }

    fn summary(&self) -> &'static str {
        "classify each document's language and report corpus shares"
    }

    fn prerequisites(&self, ctx: &StageContext) -> Vec<Prereq> {
        vec![Prereq::new(ctx.docstore(), "extract")]
    }

    fn run(&self, ctx: &StageContext) -> Result<(), StageError> {
        let inputs = [ctx.docstore(), index_path(&ctx.docstore())];
        let outputs = [ctx.langid_file(), ctx.language_report()];
        run_stamped(ctx, "langid", &inputs, &outputs, || {
            let store = DocStore::open(&ctx.docstore()).map_err(data)?;
            let profiles = builtin_profiles();
            let mut rows: Vec<(String, String, u64)> = Vec::with_capacity(store.len());
            for record in store.scan().map_err(data)? {
                let record = record.map_err(data)?;
                let text = format!("{} {}", record.title, record.body);
                let label = classify(&text, &profiles);
                rows.push((record.doc_id, label.lang, label.out_of_place_score));
            }

            let mut out = BufWriter::new(File::create(ctx.langid_file()).map_err(data)?);
            for (doc_id, lang, score) in &rows {
                writeln!(out, "{doc_id}\t{lang}\t{score}").map_err(data)?;
            }
            out.flush().map_err(data)?;

            let shares = language_shares(rows.iter().map(|(_, lang, _)| lang.as_str()));
            let mut report = String::new();
            for share in &shares {
                let _ =
                    writeln!(report, "{}\t{}\t{:.2}", share.lang, share.count, share.percent);
            }
            fs::write(ctx.language_report(), report).map_err(data)?;

            let top = shares
                .first()
                .map(|s| format!("{} {:.1}%", s.lang, s.percent))
                .unwrap_or_else(|| "none".to_string());
            Ok(format!("{} documents classified, top language {}", rows.len(), top))
        })
    }
}

pub struct Export;

impl Stage for Export {
    fn name(&self) -> &'static str {
        "export"
    }

    fn summary(&self) -> &'static str {
        "write the doc_id/title/url sheet other corpus versions diff against"
    }

    fn prerequisites(&self, ctx: &StageContext) -> Vec<Prereq> {
        vec![Prereq::new(ctx.docstore(), "extract")]
    }

    fn run(&self, ctx: &StageContext) -> Result<(), StageError> {
        let inputs = [ctx.docstore(), index_path(&ctx.docstore())];
        let outputs = [ctx.export_file()];
        run_stamped(ctx, "export", &inputs, &outputs, || {
            let store = DocStore::open(&ctx.docstore()).map_err(data)?;
            let mut rows = Vec::with_capacity(store.len());
            for record in store.scan().map_err(data)? {
                let record = record.map_err(data)?;
                rows.push(ExportRow { doc_id: record.doc_id, title: record.title, url: record.url });
            }
            let count = rows.len();
            let file = File::create(ctx.export_file()).map_err(data)?;
            let mut out = BufWriter::new(file);
            write_export(&mut out, rows).map_err(data)?;
            out.flush().map_err(data)?;
            Ok(format!("{count} rows exported"))
        })
    }
}
