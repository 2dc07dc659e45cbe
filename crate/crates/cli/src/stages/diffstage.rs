use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;

use retrocorpus_core::diff::{
    sample_divergent, set_report, write_review_sheet, CorpusKeySet, JaccardHistogram, TitlePair,
};
use retrocorpus_core::extract::{read_export, tokenize};
use retrocorpus_core::textio::open_maybe_gzip;

use super::{data, run_stamped, Prereq, Stage, StageContext, StageError};

pub struct Diff;

impl Stage for Diff {
    fn name(&self) -> &'static str {
        "diff"
    }

    fn summary(&self) -> &'static str {
        "compare this corpus version against another export"
    }

    fn prerequisites(&self, ctx: &StageContext) -> Vec<Prereq> {
        vec![Prereq::new(ctx.export_file(), "export")]
    }

    fn run(&self, ctx: &StageContext) -> Result<(), StageError> {
        let other_path = other_export(ctx)?;
        let dir = ctx.diff_dir();
        let outputs = [
            dir.join("set-report.tsv"),
            dir.join("jaccard-histogram.tsv"),
            dir.join("jaccard-summary.tsv"),
            dir.join("review-sample.tsv"),
        ];
        let inputs = [ctx.export_file(), other_path.clone()];
        run_stamped(ctx, "diff", &inputs, &outputs, || {
            let cfg = &ctx.config;
            let ours = read_export(BufReader::new(File::open(ctx.export_file()).map_err(data)?))
                .map_err(data)?;
            let theirs = read_export(open_maybe_gzip(&other_path).map_err(data)?)
                .map_err(|e| data(format!("{}: {e}", other_path.display())))?;

            let a = CorpusKeySet::from_keys(
                cfg.diff_label_a.as_str(),
                ours.iter().map(|r| r.doc_id.as_str()),
            );
            let b = CorpusKeySet::from_keys(
                cfg.diff_label_b.as_str(),
                theirs.iter().map(|r| r.doc_id.as_str()),
            );
            let shared = a.intersection(&b).count() as u64;
            let union = a.len() + b.len() - shared;
            let universe = cfg.diff_universe.unwrap_or(union);
            let report = set_report(&a, &b, universe).map_err(data)?;

            fs::create_dir_all(&dir).map_err(data)?;
            let mut out = BufWriter::new(File::create(&outputs[0]).map_err(data)?);
            report.write_tsv(&mut out).map_err(data)?;
            out.flush().map_err(data)?;

            let title_a: BTreeMap<&str, &str> =
                ours.iter().map(|r| (r.doc_id.as_str(), r.title.as_str())).collect();
            let title_b: BTreeMap<&str, &str> =
                theirs.iter().map(|r| (r.doc_id.as_str(), r.title.as_str())).collect();
            let mut histogram = JaccardHistogram::new();
            let mut pairs = Vec::with_capacity(shared as usize);
            for doc_id in a.intersection(&b) {
                let pair = TitlePair {
                    doc_id: doc_id.to_string(),
                    title_a: title_a[doc_id].to_string(),
                    title_b: title_b[doc_id].to_string(),
                };
                histogram.observe(&tokenize(&pair.title_a), &tokenize(&pair.title_b));
                pairs.push(pair);
            }
            let mut out = BufWriter::new(File::create(&outputs[1]).map_err(data)?);
            histogram.write_tsv(&mut out).map_err(data)?;
            out.flush().map_err(data)?;

            let summary = histogram.summary();
            let mut text = String::new();
            let _ = writeln!(text, "shared_docs\t{shared}");
            let _ = writeln!(text, "compared_pairs\t{}", summary.included_pairs);
            let _ = writeln!(text, "both_titles_empty\t{}", summary.both_empty);
            let _ = writeln!(text, "identical_fraction\t{:.4}", summary.perfect_fraction);
            let _ = writeln!(text, "le_quarter_fraction\t{:.4}", summary.le_025_fraction);
            let _ = writeln!(text, "zero_fraction\t{:.4}", summary.zero_fraction);
            fs::write(&outputs[2], text).map_err(data)?;

            let examples = sample_divergent(
                &pairs,
                cfg.diff_review_threshold,
                cfg.diff_review_count,
                cfg.seed,
            );
            let mut out = BufWriter::new(File::create(&outputs[3]).map_err(data)?);
            write_review_sheet(&mut out, &examples).map_err(data)?;
            out.flush().map_err(data)?;

            Ok(format!(
                "{} vs {} docs, {} shared, {:.1}% identical titles",
                a.len(),
                b.len(),
                shared,
                100.0 * summary.perfect_fraction
            ))
        })
    }
}

fn other_export(ctx: &StageContext) -> Result<PathBuf, StageError> {
    let path = ctx.config.diff_other.clone().ok_or_else(|| {
        StageError::Data(
            "diff needs the `diff_other` config key pointing at the other version's export"
                .to_string(),
        )
    })?;
    if !path.exists() {
        return Err(StageError::Data(format!(
            "diff_other file {} not found",
            path.display()
        )));
    }
    Ok(path)
}
