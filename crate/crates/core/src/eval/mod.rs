//! BM25 re-ranking and retrieval evaluation: inverted index, scoring, run
//! and qrels IO, MAP/MRR/P@1 under reference tie-breaking, and paired
//! significance tests.

mod index;
mod stats;
mod trecio;

pub use index::InvertedIndex;
pub use stats::{
    ln_gamma, paired_ttest, regularized_incomplete_beta, significance_matrix, stable_mean,
    t_two_sided_p, PairComparison, SignificanceTable, TTest,
};
pub use trecio::{
    read_candidates, read_qrels, read_run, write_candidates, write_qrels, write_run,
    CandidateSet, SCORE_DIGITS,
};

use std::collections::{BTreeMap, BTreeSet, HashMap};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("duplicate doc id {0:?}")]
    DuplicateDoc(String),
    #[error("doc id {0:?} is not in the index")]
    UnknownDoc(String),
    #[error("run references queries absent from the qrels: {0:?}")]
    UnknownQueries(Vec<String>),
    #[error("duplicate qrels entry for query {query:?}, doc {doc:?}")]
    DuplicateQrel { query: String, doc: String },
    #[error("query {query:?} lists doc {doc:?} twice in the run")]
    DuplicateRunDoc { query: String, doc: String },
    #[error("per-query key sets differ (only in first: {only_a:?}, only in second: {only_b:?})")]
    KeyMismatch { only_a: Vec<String>, only_b: Vec<String> },
    #[error("paired test needs at least 2 shared queries, got {0}")]
    TooFewPairs(usize),
    #[error("significance matrix needs at least 2 systems, got {0}")]
    TooFewSystems(usize),
    #[error("line {line}: {problem}")]
    Malformed { line: usize, problem: String },
    #[error("index file corrupt: {0}")]
    CorruptIndex(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    /// The term-frequency saturation factor tf·(k1+1)/(tf + k1·(1−b+b·len/avg)).
    pub fn tf_component(&self, tf: u32, doc_len: f64, avg_len: f64) -> f64 {
        if tf == 0 {
            return 0.0;
        }
        let tf = tf as f64;
        let norm = if avg_len > 0.0 { doc_len / avg_len } else { 0.0 };
        tf * (self.k1 + 1.0) / (tf + self.k1 * (1.0 - self.b + self.b * norm))
    }
}

/// Smoothed idf, floored at zero: ln(1 + (N − df + 0.5)/(df + 0.5)). The
/// +1 inside the log keeps common terms (df > N/2) at a small positive
/// weight instead of a negative one, so adding a matching term can never
/// hurt a document.
pub fn idf(n_docs: u64, df: u64) -> f64 {
    if df == 0 || n_docs == 0 {
        return 0.0;
    }
    let n = n_docs as f64;
    let df = df as f64;
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln().max(0.0)
}

/// BM25 score of one document for a query, summed over the query's unique
/// terms. Terms absent from the index contribute zero.
pub fn bm25_score(
    query: &[String],
    doc_id: &str,
    index: &InvertedIndex,
    params: &Bm25Params,
) -> Result<f64, EvalError> {
    let doc_idx = index
        .doc_index(doc_id)
        .ok_or_else(|| EvalError::UnknownDoc(doc_id.to_string()))?;
    let unique: BTreeSet<&String> = query.iter().collect();
    let mut score = 0.0;
    for term in unique {
        let tf = index.tf(term, doc_idx);
        if tf == 0 {
            continue;
        }
        score += idf(index.doc_count(), index.df(term))
            * params.tf_component(tf, index.doc_length(doc_idx) as f64, index.avg_doc_length());
    }
    Ok(score)
}

/// One row of a run file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub query_id: String,
    pub doc_id: String,
    pub rank: u32,
    pub score: f64,
    pub tag: String,
}

/// One relevance judgment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QrelEntry {
    pub query_id: String,
    pub doc_id: String,
    pub relevance: u32,
}

/// Scores the candidates and orders them by (score descending, doc_id
/// descending bytewise), mirroring the reference evaluation tool's sort so
/// ranks and downstream measures agree with it. Duplicate candidate ids are
/// collapsed; candidates are a set.
pub fn rerank(
    query_id: &str,
    query: &[String],
    candidates: &[String],
    index: &InvertedIndex,
    params: &Bm25Params,
    tag: &str,
) -> Result<Vec<RunEntry>, EvalError> {
    let unique: BTreeSet<&String> = candidates.iter().collect();
    let mut scored = Vec::with_capacity(unique.len());
    for doc_id in unique {
        scored.push((doc_id.clone(), bm25_score(query, doc_id, index, params)?));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| b.0.cmp(&a.0)));
    Ok(scored
        .into_iter()
        .enumerate()
        .map(|(i, (doc_id, score))| RunEntry {
            query_id: query_id.to_string(),
            doc_id,
            rank: i as u32 + 1,
            score,
            tag: tag.to_string(),
        })
        .collect())
}

/// Per-query measure values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueryMeasures {
    pub ap: f64,
    pub rr: f64,
    pub p1: f64,
}

/// Aggregate means over the evaluated queries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateMeasures {
    pub map: f64,
    pub mrr: f64,
    pub p1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasureResult {
    /// Every qrels query with at least one relevant document, including
    /// queries the run never mentions (their measures are zero).
    pub per_query: BTreeMap<String, QueryMeasures>,
    pub aggregate: AggregateMeasures,
    /// Qrels queries with no relevant document, excluded from aggregation.
    pub excluded_queries: u64,
}

impl MeasureResult {
    pub fn per_query_values(&self, pick: impl Fn(&QueryMeasures) -> f64) -> BTreeMap<String, f64> {
        self.per_query.iter().map(|(q, m)| (q.clone(), pick(m))).collect()
    }
}

/// Computes AP, RR, and P@1 per query and their means. Input row order and
/// ranks are advisory: rows are re-sorted by (score desc, doc_id desc)
/// first, the same tie-breaking the reference tool applies, which is exactly
/// where naive reimplementations drift.
pub fn evaluate(run: &[RunEntry], qrels: &[QrelEntry]) -> Result<MeasureResult, EvalError> {
    let mut relevance: BTreeMap<&str, HashMap<&str, u32>> = BTreeMap::new();
    for q in qrels {
        let per_query = relevance.entry(&q.query_id).or_default();
        if per_query.insert(&q.doc_id, q.relevance).is_some() {
            return Err(EvalError::DuplicateQrel {
                query: q.query_id.clone(),
                doc: q.doc_id.clone(),
            });
        }
    }

    let mut rows: BTreeMap<&str, Vec<&RunEntry>> = BTreeMap::new();
    let mut unknown: BTreeSet<&str> = BTreeSet::new();
    for entry in run {
        if !relevance.contains_key(entry.query_id.as_str()) {
            unknown.insert(&entry.query_id);
            continue;
        }
        rows.entry(&entry.query_id).or_default().push(entry);
    }
    if !unknown.is_empty() {
        return Err(EvalError::UnknownQueries(unknown.into_iter().map(String::from).collect()));
    }

    let mut per_query = BTreeMap::new();
    let mut excluded = 0u64;
    for (query_id, judged) in &relevance {
        let total_relevant = judged.values().filter(|rel| **rel >= 1).count();
        if total_relevant == 0 {
            excluded += 1;
            continue;
        }
        let mut ranking: Vec<&RunEntry> = rows.remove(query_id).unwrap_or_default();
        ranking.sort_by(|a, b| {
            b.score.total_cmp(&a.score).then_with(|| b.doc_id.cmp(&a.doc_id))
        });
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for row in &ranking {
            if !seen.insert(&row.doc_id) {
                return Err(EvalError::DuplicateRunDoc {
                    query: query_id.to_string(),
                    doc: row.doc_id.clone(),
                });
            }
        }
        let is_relevant =
            |doc_id: &str| judged.get(doc_id).is_some_and(|rel| *rel >= 1);
        let mut hits = 0u64;
        let mut ap_sum = 0.0;
        let mut rr = 0.0;
        for (i, row) in ranking.iter().enumerate() {
            if is_relevant(&row.doc_id) {
                hits += 1;
                let rank = i as u64 + 1;
                ap_sum += hits as f64 / rank as f64;
                if rr == 0.0 {
                    rr = 1.0 / rank as f64;
                }
            }
        }
        let ap = ap_sum / total_relevant as f64;
        let p1 = match ranking.first() {
            Some(row) if is_relevant(&row.doc_id) => 1.0,
            _ => 0.0,
        };
        per_query.insert(query_id.to_string(), QueryMeasures { ap, rr, p1 });
    }

    let collect = |pick: fn(&QueryMeasures) -> f64| -> Vec<f64> {
        per_query.values().map(pick).collect()
    };
    let aggregate = AggregateMeasures {
        map: stable_mean(&collect(|m| m.ap)),
        mrr: stable_mean(&collect(|m| m.rr)),
        p1: stable_mean(&collect(|m| m.p1)),
    };
    Ok(MeasureResult { per_query, aggregate, excluded_queries: excluded })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &str) -> Vec<String> {
        words.split_whitespace().map(str::to_string).collect()
    }

    fn toy_index() -> InvertedIndex {
        InvertedIndex::build([
            ("d1", toks("jaguar car")),
            ("d2", toks("jaguar jaguar speed")),
            ("d3", toks("lion")),
        ])
        .unwrap()
    }

    #[test]
    fn toy_corpus_scores() {
        // Hand-derived: idf(jaguar) = ln(1 + 1.5/2.5) = 0.47000362924573563;
        // d1 has tf 1 at average length so the saturation factor is exactly
        // 1; d2 has tf 2, len 3 giving 4.4/3.65.
        let idx = toy_index();
        let p = Bm25Params::default();
        let q = toks("jaguar");
        let d1 = bm25_score(&q, "d1", &idx, &p).unwrap();
        let d2 = bm25_score(&q, "d2", &idx, &p).unwrap();
        let d3 = bm25_score(&q, "d3", &idx, &p).unwrap();
        assert!((d1 - 0.47000362924573563).abs() < 1e-12);
        assert!((d2 - 0.5665797174469143).abs() < 1e-12);
        assert_eq!(d3, 0.0);
        assert!(d2 > d1 && d1 > d3);

        assert!(matches!(
            bm25_score(&q, "nope", &idx, &p),
            Err(EvalError::UnknownDoc(id)) if id == "nope"
        ));
        assert_eq!(bm25_score(&toks("unseen terms"), "d1", &idx, &p).unwrap(), 0.0);
        // Repeated query terms count once.
        let twice = bm25_score(&toks("jaguar jaguar"), "d1", &idx, &p).unwrap();
        assert_eq!(twice, d1);
    }

    #[test]
    fn idf_is_positive_and_decreasing() {
        assert!((idf(3, 1) - 0.9808292530117263).abs() < 1e-12);
        assert!((idf(3, 2) - 0.47000362924573563).abs() < 1e-12);
        assert!(idf(3, 1) > idf(3, 2));
        assert!(idf(3, 3) > 0.0, "even a ubiquitous term keeps a positive weight");
        assert_eq!(idf(3, 0), 0.0);
        assert_eq!(idf(0, 0), 0.0);
    }

    #[test]
    fn rerank_orders_and_ties() {
        let idx = toy_index();
        let p = Bm25Params::default();
        let run = rerank("q1", &toks("jaguar"), &toks("d1 d2 d3"), &idx, &p, "bm25").unwrap();
        let order: Vec<&str> = run.iter().map(|e| e.doc_id.as_str()).collect();
        assert_eq!(order, vec!["d2", "d1", "d3"]);
        assert_eq!(run.iter().map(|e| e.rank).collect::<Vec<_>>(), vec![1, 2, 3]);

        // Equal scores: doc id descending decides.
        let tie_idx = InvertedIndex::build([("d1", toks("x y")), ("d2", toks("x y"))]).unwrap();
        let tied = rerank("q", &toks("x"), &toks("d1 d2"), &tie_idx, &p, "t").unwrap();
        assert_eq!(tied[0].doc_id, "d2");
        assert_eq!(tied[0].rank, 1);

        assert!(rerank("q", &toks("x"), &[], &idx, &p, "t").unwrap().is_empty());
        let single = rerank("q", &toks("zzz"), &toks("d3"), &idx, &p, "t").unwrap();
        assert_eq!((single[0].rank, single[0].score), (1, 0.0));
    }

    fn run_rows(rows: &[(&str, &str, f64)]) -> Vec<RunEntry> {
        rows.iter()
            .enumerate()
            .map(|(i, (q, d, s))| RunEntry {
                query_id: q.to_string(),
                doc_id: d.to_string(),
                rank: i as u32 + 1,
                score: *s,
                tag: "t".into(),
            })
            .collect()
    }

    fn qrel_rows(rows: &[(&str, &str, u32)]) -> Vec<QrelEntry> {
        rows.iter()
            .map(|(q, d, r)| QrelEntry {
                query_id: q.to_string(),
                doc_id: d.to_string(),
                relevance: *r,
            })
            .collect()
    }

    #[test]
    fn evaluate_definitional_example() {
        // Ranking [d1, d2, d3] with relevant {d1, d3}:
        // AP = (1/1 + 2/3)/2, RR = 1, P@1 = 1.
        let run = run_rows(&[("q1", "d1", 3.0), ("q1", "d2", 2.0), ("q1", "d3", 1.0)]);
        let qrels = qrel_rows(&[("q1", "d1", 1), ("q1", "d2", 0), ("q1", "d3", 1)]);
        let r = evaluate(&run, &qrels).unwrap();
        let q1 = r.per_query["q1"];
        assert!((q1.ap - 0.8333333333333333).abs() < 1e-12);
        assert_eq!(q1.rr, 1.0);
        assert_eq!(q1.p1, 1.0);
        assert_eq!(r.aggregate.map, q1.ap);
        assert_eq!(r.excluded_queries, 0);
    }

    #[test]
    fn evaluate_resorts_rows_and_ignores_input_ranks() {
        // Same rows as above but shuffled with hostile rank fields.
        let mut run = run_rows(&[("q1", "d3", 1.0), ("q1", "d1", 3.0), ("q1", "d2", 2.0)]);
        run[0].rank = 1;
        run[1].rank = 99;
        run[2].rank = 7;
        let qrels = qrel_rows(&[("q1", "d1", 1), ("q1", "d2", 0), ("q1", "d3", 1)]);
        let r = evaluate(&run, &qrels).unwrap();
        assert!((r.per_query["q1"].ap - 0.8333333333333333).abs() < 1e-12);
    }

    #[test]
    fn evaluate_tie_break_matches_rerank() {
        // Both docs score 1.0; d9 sorts above d1, and only d1 is relevant.
        let run = run_rows(&[("q1", "d1", 1.0), ("q1", "d9", 1.0)]);
        let qrels = qrel_rows(&[("q1", "d1", 1)]);
        let r = evaluate(&run, &qrels).unwrap();
        let q1 = r.per_query["q1"];
        assert_eq!(q1.p1, 0.0);
        assert_eq!(q1.rr, 0.5);
        assert_eq!(q1.ap, 0.5);
    }

    #[test]
    fn evaluate_handles_missing_and_zero_relevant_queries() {
        let run = run_rows(&[("q1", "d1", 1.0)]);
        let qrels = qrel_rows(&[
            ("q1", "d1", 1),
            ("q2", "d5", 1), // never retrieved
            ("q3", "d6", 0), // no relevant docs at all
        ]);
        let r = evaluate(&run, &qrels).unwrap();
        assert_eq!(r.per_query.len(), 2);
        let q2 = r.per_query["q2"];
        assert_eq!((q2.ap, q2.rr, q2.p1), (0.0, 0.0, 0.0));
        assert_eq!(r.excluded_queries, 1);
        assert!((r.aggregate.map - 0.5).abs() < 1e-12);
    }

    #[test]
    fn evaluate_unretrieved_relevant_penalizes_ap() {
        // Two relevant docs, only one retrieved at rank 1: AP = (1/1)/2.
        let run = run_rows(&[("q1", "d1", 1.0)]);
        let qrels = qrel_rows(&[("q1", "d1", 1), ("q1", "d2", 1)]);
        let r = evaluate(&run, &qrels).unwrap();
        assert!((r.per_query["q1"].ap - 0.5).abs() < 1e-12);
        assert_eq!(r.per_query["q1"].rr, 1.0);
    }

    #[test]
    fn evaluate_errors() {
        let run = run_rows(&[("mystery", "d1", 1.0)]);
        let qrels = qrel_rows(&[("q1", "d1", 1)]);
        match evaluate(&run, &qrels) {
            Err(EvalError::UnknownQueries(ids)) => assert_eq!(ids, vec!["mystery"]),
            other => panic!("expected unknown-query error, got {other:?}"),
        }

        let dup_run = run_rows(&[("q1", "d1", 1.0), ("q1", "d1", 0.5)]);
        assert!(matches!(
            evaluate(&dup_run, &qrels),
            Err(EvalError::DuplicateRunDoc { .. })
        ));

        let dup_qrels = qrel_rows(&[("q1", "d1", 1), ("q1", "d1", 0)]);
        let ok_run = run_rows(&[("q1", "d1", 1.0)]);
        assert!(matches!(
            evaluate(&ok_run, &dup_qrels),
            Err(EvalError::DuplicateQrel { .. })
        ));
    }

    #[test]
    fn single_relevant_queries_make_map_equal_mrr() {
        // With exactly one relevant doc per query, AP = RR for every query.
        let run = run_rows(&[
            ("q1", "d1", 0.9),
            ("q1", "d2", 0.8),
            ("q1", "d3", 0.7),
            ("q2", "d4", 0.9),
            ("q2", "d5", 0.2),
            ("q3", "d6", 0.4),
        ]);
        let qrels = qrel_rows(&[("q1", "d2", 1), ("q2", "d4", 1), ("q3", "d7", 1)]);
        let r = evaluate(&run, &qrels).unwrap();
        for (q, m) in &r.per_query {
            assert_eq!(m.ap, m.rr, "query {q}");
        }
        assert_eq!(r.aggregate.map, r.aggregate.mrr);
    }

    #[test]
    fn permuting_run_rows_never_changes_measures() {
        let rows = [
            ("q1", "da", 0.5),
            ("q1", "db", 0.5),
            ("q1", "dc", 0.25),
            ("q2", "da", 0.1),
            ("q2", "dz", 0.1),
        ];
        let qrels = qrel_rows(&[("q1", "da", 1), ("q1", "dc", 1), ("q2", "dz", 1)]);
        let baseline = evaluate(&run_rows(&rows), &qrels).unwrap();
        // Rotate through several permutations.
        let mut perm = rows;
        for _ in 0..rows.len() {
            perm.rotate_left(1);
            let r = evaluate(&run_rows(&perm), &qrels).unwrap();
            assert_eq!(r, baseline);
        }
    }
}
