//! Run, qrels, and candidate file formats. Run and qrels follow the layout
//! the standard evaluation tools expect, so externally produced run files
//! (e.g. from neural rankers) drop straight in.

use std::io::{BufRead, Write};

use super::{EvalError, QrelEntry, RunEntry};
use crate::textio::fmt_sig;

/// Significant digits used when rendering scores.
pub const SCORE_DIGITS: u32 = 6;

/// `qid Q0 docid rank score tag`, space separated.
pub fn write_run<W: Write>(mut w: W, entries: &[RunEntry]) -> std::io::Result<()> {
    for e in entries {
        writeln!(
            w,
            "{} Q0 {} {} {} {}",
            e.query_id,
            e.doc_id,
            e.rank,
            fmt_sig(e.score, SCORE_DIGITS),
            e.tag
        )?;
    }
    Ok(())
}

pub fn read_run<R: BufRead>(r: R) -> Result<Vec<RunEntry>, EvalError> {
    let mut entries = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let n = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(EvalError::Malformed {
                line: n,
                problem: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let rank: u32 = fields[3]
            .parse()
            .map_err(|_| EvalError::Malformed { line: n, problem: format!("bad rank {:?}", fields[3]) })?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| EvalError::Malformed { line: n, problem: format!("bad score {:?}", fields[4]) })?;
        entries.push(RunEntry {
            query_id: fields[0].to_string(),
            doc_id: fields[2].to_string(),
            rank,
            score,
            tag: fields[5].to_string(),
        });
    }
    Ok(entries)
}

/// `qid 0 docid rel`, space separated.
pub fn write_qrels<W: Write>(mut w: W, entries: &[QrelEntry]) -> std::io::Result<()> {
    for e in entries {
        writeln!(w, "{} 0 {} {}", e.query_id, e.doc_id, e.relevance)?;
    }
    Ok(())
}

pub fn read_qrels<R: BufRead>(r: R) -> Result<Vec<QrelEntry>, EvalError> {
    let mut entries = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let n = idx + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(EvalError::Malformed {
                line: n,
                problem: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let relevance: u32 = fields[3].parse().map_err(|_| EvalError::Malformed {
            line: n,
            problem: format!("bad relevance {:?}", fields[3]),
        })?;
        entries.push(QrelEntry {
            query_id: fields[0].to_string(),
            doc_id: fields[2].to_string(),
            relevance,
        });
    }
    Ok(entries)
}

/// A query's re-ranking pool: its tokens and the candidate doc ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub query_id: String,
    pub tokens: Vec<String>,
    pub doc_ids: Vec<String>,
}

/// `query_id \t space-joined tokens \t comma-joined doc ids`. Tokens are
/// tokenizer output ([a-z0-9]+), so neither separator can collide.
pub fn write_candidates<W: Write>(mut w: W, sets: &[CandidateSet]) -> std::io::Result<()> {
    for s in sets {
        writeln!(w, "{}\t{}\t{}", s.query_id, s.tokens.join(" "), s.doc_ids.join(","))?;
    }
    Ok(())
}

pub fn read_candidates<R: BufRead>(r: R) -> Result<Vec<CandidateSet>, EvalError> {
    let mut sets = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let n = idx + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(EvalError::Malformed {
                line: n,
                problem: format!("expected 3 fields, found {}", fields.len()),
            });
        }
        sets.push(CandidateSet {
            query_id: fields[0].to_string(),
            tokens: fields[1].split_whitespace().map(str::to_string).collect(),
            doc_ids: fields[2]
                .split(',')
                .filter(|s| !s.is_empty())
                .map(str::to_string)
                .collect(),
        });
    }
    Ok(sets)
}
