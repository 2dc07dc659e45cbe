use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use retrocorpus_core::eval::{
    evaluate, read_qrels, read_run, rerank, significance_matrix, write_candidates, write_qrels,
    write_run, Bm25Params, InvertedIndex, RunEntry,
};
use retrocorpus_core::extract::{document_text, index_path, tokenize, DocStore};
use retrocorpus_core::sessions::{read_sessions, CandidateQuery};
use retrocorpus_core::sessions::build_candidates;
use retrocorpus_core::textio::fmt_sig;

use super::{data, run_stamped, Prereq, Stage, StageContext, StageError};

fn params(ctx: &StageContext) -> Bm25Params {
    Bm25Params { k1: ctx.config.bm25_k1, b: ctx.config.bm25_b }
}

pub struct Index;

impl Stage for Index {
    fn name(&self) -> &'static str {
        "index"
    }

    fn summary(&self) -> &'static str {
        "build the inverted index for the selected text variant"
    }

    fn prerequisites(&self, ctx: &StageContext) -> Vec<Prereq> {
        vec![Prereq::new(ctx.docstore(), "extract")]
    }

    fn run(&self, ctx: &StageContext) -> Result<(), StageError> {
        let inputs = [ctx.docstore(), index_path(&ctx.docstore())];
        let outputs = [ctx.index_file()];
        let key = if ctx.config.include_url { "index-title-url" } else { "index-title" };
        run_stamped(ctx, key, &inputs, &outputs, || {
            let store = DocStore::open(&ctx.docstore()).map_err(data)?;
            let mut docs = Vec::with_capacity(store.len());
            for record in store.scan().map_err(data)? {
                let record = record.map_err(data)?;
                let tokens = document_text(&record, ctx.config.include_url);
                docs.push((record.doc_id, tokens));
            }
            let index = InvertedIndex::build(docs).map_err(data)?;
            index.save(&ctx.index_file()).map_err(data)?;
            Ok(format!(
                "{} documents, {} terms, avg length {:.2}",
                index.doc_count(),
                index.term_count(),
                index.avg_doc_length()
            ))
        })
    }
}

pub struct Rerank;

impl Stage for Rerank {
    fn name(&self) -> &'static str {
        "rerank"
    }

    fn summary(&self) -> &'static str {
        "build candidate pools and score them into a run file"
    }

    fn prerequisites(&self, ctx: &StageContext) -> Vec<Prereq> {
        vec![
            Prereq::new(ctx.sessions_file(), "sessions"),
            Prereq::with_note(
                ctx.index_file(),
                "index",
                " (with the same --include-url setting)",
            ),
        ]
    }

    fn run(&self, ctx: &StageContext) -> Result<(), StageError> {
        let tag = ctx.run_tag();
        let inputs = [ctx.sessions_file(), ctx.index_file()];
        let outputs = [ctx.candidates_file(tag), ctx.qrels_file(), ctx.run_file(tag)];
        run_stamped(ctx, &format!("rerank-{tag}"), &inputs, &outputs, || {
            let cfg = &ctx.config;
            let file = File::open(ctx.sessions_file()).map_err(data)?;
            let dataset = read_sessions(BufReader::new(file))
                .map_err(|e| data(format!("{}: {e}", ctx.sessions_file().display())))?;
            let index = InvertedIndex::load(&ctx.index_file()).map_err(data)?;

            let mut queries = Vec::new();
            for session in dataset.split(cfg.eval_split) {
                for (query_index, query) in session.queries.iter().enumerate() {
                    queries.push(CandidateQuery {
                        query_id: format!("{}.{query_index}", session.session_id),
                        tokens: tokenize(&query.query_text),
                        clicked_doc_ids: query
                            .clicks
                            .iter()
                            .map(|c| c.doc_id.clone())
                            .collect(),
                    });
                }
            }
            let mut build = build_candidates(&queries, &index, &params(ctx), cfg.candidate_k);

            // A query can retrieve candidates yet have no surviving click
            // (no click at all, or none that maps into the index). Scoring it
            // would put an unjudged query in the run, which `eval` rejects.
            let judged: std::collections::BTreeSet<&str> =
                build.qrels.iter().map(|q| q.query_id.as_str()).collect();
            let before = build.sets.len();
            build.sets.retain(|set| judged.contains(set.query_id.as_str()));
            let unjudged = before - build.sets.len();

            fs::create_dir_all(ctx.runs_dir()).map_err(data)?;
            let mut out = BufWriter::new(File::create(ctx.candidates_file(tag)).map_err(data)?);
            write_candidates(&mut out, &build.sets).map_err(data)?;
            out.flush().map_err(data)?;
            let mut out = BufWriter::new(File::create(ctx.qrels_file()).map_err(data)?);
            write_qrels(&mut out, &build.qrels).map_err(data)?;
            out.flush().map_err(data)?;

            let mut entries: Vec<RunEntry> = Vec::new();
            for set in &build.sets {
                entries.extend(
                    rerank(&set.query_id, &set.tokens, &set.doc_ids, &index, &params(ctx), tag)
                        .map_err(data)?,
                );
            }
            let mut out = BufWriter::new(File::create(ctx.run_file(tag)).map_err(data)?);
            write_run(&mut out, &entries).map_err(data)?;
            out.flush().map_err(data)?;

            Ok(format!(
                "{} {} queries scored ({} without judgments, {} skipped empty, {} clicks not indexed)",
                build.sets.len(),
                cfg.eval_split.as_str(),
                unjudged,
                build.skipped_queries,
                build.unindexed_clicks
            ))
        })
    }
}

/// Parsed evaluation sheet: the `#` header carries the aggregates, the rows
/// carry per-query AP, RR, and P@1.
struct EvalSheet {
    tag: String,
    queries: u64,
    excluded: u64,
    map: f64,
    mrr: f64,
    p1: f64,
    per_query: BTreeMap<String, (f64, f64, f64)>,
}

fn read_eval_sheet(path: &Path) -> Result<EvalSheet, StageError> {
    let file = File::open(path).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let mut sheet = EvalSheet {
        tag: String::new(),
        queries: 0,
        excluded: 0,
        map: 0.0,
        mrr: 0.0,
        p1: 0.0,
        per_query: BTreeMap::new(),
    };
    let bad = |line: usize, what: &str| data(format!("{}:{line}: {what}", path.display()));
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(data)?;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            let (key, value) =
                rest.split_once(' ').ok_or_else(|| bad(idx + 1, "malformed header"))?;
            match key {
                "system" => sheet.tag = value.to_string(),
                "queries" => {
                    sheet.queries =
                        value.parse().map_err(|_| bad(idx + 1, "bad query count"))?;
                }
                "excluded" => {
                    sheet.excluded =
                        value.parse().map_err(|_| bad(idx + 1, "bad excluded count"))?;
                }
                "map" => sheet.map = value.parse().map_err(|_| bad(idx + 1, "bad map"))?,
                "mrr" => sheet.mrr = value.parse().map_err(|_| bad(idx + 1, "bad mrr"))?,
                "p1" => sheet.p1 = value.parse().map_err(|_| bad(idx + 1, "bad p1"))?,
                other => return Err(bad(idx + 1, &format!("unknown header {other:?}"))),
            }
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(idx + 1, "expected query, ap, rr, p1"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(idx + 1, "bad measure value"));
        sheet
            .per_query
            .insert(fields[0].to_string(), (num(fields[1])?, num(fields[2])?, num(fields[3])?));
    }
    if sheet.tag.is_empty() {
        return Err(data(format!("{}: missing `# system` header", path.display())));
    }
    Ok(sheet)
}

pub struct Eval;

impl Stage for Eval {
    fn name(&self) -> &'static str {
        "eval"
    }

    fn summary(&self) -> &'static str {
        "score the run against the qrels and refresh the measure report"
    }

    fn prerequisites(&self, ctx: &StageContext) -> Vec<Prereq> {
        vec![
            Prereq::new(ctx.run_file(ctx.run_tag()), "rerank"),
            Prereq::new(ctx.qrels_file(), "rerank"),
        ]
    }

    fn run(&self, ctx: &StageContext) -> Result<(), StageError> {
        let tag = ctx.run_tag();
        let inputs = [ctx.run_file(tag), ctx.qrels_file()];
        let outputs = [ctx.eval_file(tag)];
        run_stamped(ctx, &format!("eval-{tag}"), &inputs, &outputs, || {
            let run = read_run(BufReader::new(File::open(ctx.run_file(tag)).map_err(data)?))
                .map_err(data)?;
            let qrels =
                read_qrels(BufReader::new(File::open(ctx.qrels_file()).map_err(data)?))
                    .map_err(data)?;
            let result = evaluate(&run, &qrels).map_err(data)?;

            fs::create_dir_all(ctx.eval_dir()).map_err(data)?;
            let mut text = String::new();
            let _ = writeln!(text, "# system {tag}");
            let _ = writeln!(text, "# queries {}", result.per_query.len());
            let _ = writeln!(text, "# excluded {}", result.excluded_queries);
            let _ = writeln!(text, "# map {:.6}", result.aggregate.map);
            let _ = writeln!(text, "# mrr {:.6}", result.aggregate.mrr);
            let _ = writeln!(text, "# p1 {:.6}", result.aggregate.p1);
            for (query_id, m) in &result.per_query {
                let _ = writeln!(text, "{query_id}\t{:.6}\t{:.6}\t{:.6}", m.ap, m.rr, m.p1);
            }
            fs::write(ctx.eval_file(tag), text).map_err(data)?;

            Ok(format!(
                "{} queries: map {:.4}, mrr {:.4}, p@1 {:.4}",
                result.per_query.len(),
                result.aggregate.map,
                result.aggregate.mrr,
                result.aggregate.p1
            ))
        })?;

        if !ctx.dry_run {
            refresh_report(ctx)?;
        }
        Ok(())
    }
}

/// Rebuilds the cross-system measure table from every evaluation sheet
/// present, so evaluating the second variant upgrades the report in place.
fn refresh_report(ctx: &StageContext) -> Result<(), StageError> {
    let mut sheets = Vec::new();
    let entries = fs::read_dir(ctx.eval_dir()).map_err(data)?;
    let mut names: Vec<String> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("eval-") && n.ends_with(".tsv"))
        .collect();
    names.sort();
    for name in names {
        sheets.push(read_eval_sheet(&ctx.eval_dir().join(name))?);
    }
    let mut text = String::new();
    let _ = writeln!(text, "# system queries map mrr p1");
    for sheet in &sheets {
        let _ = writeln!(
            text,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            sheet.tag, sheet.queries, sheet.map, sheet.mrr, sheet.p1
        );
    }
    fs::write(ctx.report_file(), text).map_err(data)?;
    crate::stamps::write_meta(&ctx.report_file(), "eval", &ctx.config_hash).map_err(data)?;
    Ok(())
}

pub struct Significance;

impl Stage for Significance {
    fn name(&self) -> &'static str {
        "significance"
    }

    fn summary(&self) -> &'static str {
        "paired t-tests with Bonferroni correction across the run variants"
    }

    fn prerequisites(&self, ctx: &StageContext) -> Vec<Prereq> {
        vec![
            Prereq::with_note(ctx.eval_file("bm25"), "eval", ""),
            Prereq::with_note(
                ctx.eval_file("bm25-url"),
                "eval",
                " with --include-url",
            ),
        ]
    }

    fn run(&self, ctx: &StageContext) -> Result<(), StageError> {
        let inputs = [ctx.eval_file("bm25"), ctx.eval_file("bm25-url")];
        let outputs = [ctx.significance_file(), ctx.significance_letters()];
        run_stamped(ctx, "significance", &inputs, &outputs, || {
            let sheets: Vec<EvalSheet> =
                inputs.iter().map(|p| read_eval_sheet(p)).collect::<Result<_, _>>()?;

            let mut table_text = String::new();
            let mut letters_text = String::new();
            let _ = writeln!(
                table_text,
                "# measure system_a system_b t raw_p bonferroni_p significant"
            );
            let mut significant_total = 0u64;
            for (measure, pick) in [
                ("map", 0usize),
                ("mrr", 1usize),
                ("p1", 2usize),
            ] {
                let systems: Vec<(String, BTreeMap<String, f64>)> = sheets
                    .iter()
                    .map(|s| {
                        let values = s
                            .per_query
                            .iter()
                            .map(|(q, m)| (q.clone(), [m.0, m.1, m.2][pick]))
                            .collect();
                        (s.tag.clone(), values)
                    })
                    .collect();
                let table = significance_matrix(&systems, 0.05).map_err(data)?;
                for pair in &table.pairs {
                    let _ = writeln!(
                        table_text,
                        "{measure}\t{}\t{}\t{}\t{}\t{}\t{}",
                        table.systems[pair.a],
                        table.systems[pair.b],
                        fmt_sig(pair.t, 6),
                        fmt_sig(pair.raw_p, 6),
                        fmt_sig(pair.adjusted_p, 6),
                        if pair.significant { "yes" } else { "no" }
                    );
                    significant_total += pair.significant as u64;
                }

                let _ = writeln!(
                    letters_text,
                    "measure {measure} (alpha {}, bonferroni x{})",
                    table.alpha, table.multiplier
                );
                let ns = table.non_significant_letters();
                for (i, (tag, values)) in systems.iter().enumerate() {
                    let mean = if values.is_empty() {
                        0.0
                    } else {
                        values.values().sum::<f64>() / values.len() as f64
                    };
                    let indistinct = if ns[i].is_empty() { "-" } else { ns[i].as_str() };
                    let _ = writeln!(
                        letters_text,
                        "{}\t{tag}\t{mean:.6}\t{indistinct}",
                        table.letter(i)
                    );
                }
                let _ = writeln!(letters_text);
            }
            fs::write(ctx.significance_file(), table_text).map_err(data)?;
            fs::write(ctx.significance_letters(), letters_text).map_err(data)?;
            Ok(format!(
                "3 measures compared, {significant_total} significant pairs at alpha 0.05"
            ))
        })
    }
}
