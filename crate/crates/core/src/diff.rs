//! Corpus version comparison: key-set algebra between two corpus builds and
//! Jaccard similarity over title tokens for the documents they share.

use std::collections::BTreeSet;
use std::io::{self, BufRead, Write};

use rand::seq::index::sample as index_sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::extract::tokenize;

#[derive(Debug, thiserror::Error)]
pub enum DiffError {
    #[error("universe size {universe} is smaller than the union {union}")]
    UniverseTooSmall { universe: u64, union: u64 },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// A named set of corpus keys (doc ids or canonical URLs).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusKeySet {
    pub name: String,
    keys: BTreeSet<String>,
}

impl CorpusKeySet {
    pub fn new(name: impl Into<String>) -> Self {
        CorpusKeySet { name: name.into(), keys: BTreeSet::new() }
    }

    pub fn from_keys<I, S>(name: impl Into<String>, keys: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        CorpusKeySet { name: name.into(), keys: keys.into_iter().map(Into::into).collect() }
    }

    /// Loads keys from the first tab-separated column of each non-blank
    /// line, which covers both plain key lists and mapping/report files.
    pub fn read_keys<R: BufRead>(name: impl Into<String>, r: R) -> Result<Self, DiffError> {
        let mut set = CorpusKeySet::new(name);
        for line in r.lines() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let key = line.split('\t').next().unwrap_or("");
            set.keys.insert(key.to_string());
        }
        Ok(set)
    }

    pub fn insert(&mut self, key: impl Into<String>) -> bool {
        self.keys.insert(key.into())
    }

    pub fn contains(&self, key: &str) -> bool {
        self.keys.contains(key)
    }

    pub fn len(&self) -> u64 {
        self.keys.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.keys.iter().map(String::as_str)
    }

    /// Keys present here and in `other`, in sorted order.
    pub fn intersection<'a>(&'a self, other: &'a CorpusKeySet) -> impl Iterator<Item = &'a str> {
        self.keys.intersection(&other.keys).map(String::as_str)
    }
}

/// The six-count comparison between two corpus versions, with percentages
/// against a fixed universe (every URL in the log).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetReport {
    pub a_name: String,
    pub b_name: String,
    pub a: u64,
    pub b: u64,
    /// |B \ A|
    pub only_b: u64,
    /// |A \ B|
    pub only_a: u64,
    pub union: u64,
    pub intersection: u64,
    pub universe: u64,
}

impl SetReport {
    pub fn percent(&self, count: u64) -> f64 {
        100.0 * count as f64 / self.universe as f64
    }

    /// Rows in presentation order: A, B, B\A, A\B, union, intersection.
    pub fn rows(&self) -> Vec<(String, u64, f64)> {
        let (a, b) = (&self.a_name, &self.b_name);
        vec![
            (format!("|{a}|"), self.a, self.percent(self.a)),
            (format!("|{b}|"), self.b, self.percent(self.b)),
            (format!("|{b} \\ {a}|"), self.only_b, self.percent(self.only_b)),
            (format!("|{a} \\ {b}|"), self.only_a, self.percent(self.only_a)),
            (format!("|{a} ∪ {b}|"), self.union, self.percent(self.union)),
            (format!("|{a} ∩ {b}|"), self.intersection, self.percent(self.intersection)),
        ]
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (label, count, percent) in self.rows() {
            writeln!(w, "{label}\t{count}\t{percent:.1}")?;
        }
        Ok(())
    }
}

pub fn set_report(a: &CorpusKeySet, b: &CorpusKeySet, universe_size: u64) -> Result<SetReport, DiffError> {
    let intersection = a.keys.intersection(&b.keys).count() as u64;
    let union = a.len() + b.len() - intersection;
    // Cross-check the inclusion-exclusion count against a direct union walk.
    assert_eq!(union, a.keys.union(&b.keys).count() as u64, "set algebra identity violated");
    if universe_size < union {
        return Err(DiffError::UniverseTooSmall { universe: universe_size, union });
    }
    Ok(SetReport {
        a_name: a.name.clone(),
        b_name: b.name.clone(),
        a: a.len(),
        b: b.len(),
        only_b: b.len() - intersection,
        only_a: a.len() - intersection,
        union,
        intersection,
        universe: universe_size,
    })
}

/// Jaccard index over the token sets. Both-empty compares equal sets, so it
/// is 1.0; exactly one empty is 0.0.
pub fn title_jaccard<S: AsRef<str>>(a: &[S], b: &[S]) -> f64 {
    let a: BTreeSet<&str> = a.iter().map(AsRef::as_ref).collect();
    let b: BTreeSet<&str> = b.iter().map(AsRef::as_ref).collect();
    match (a.is_empty(), b.is_empty()) {
        (true, true) => 1.0,
        (true, false) | (false, true) => 0.0,
        (false, false) => {
            let inter = a.intersection(&b).count();
            let union = a.len() + b.len() - inter;
            inter as f64 / union as f64
        }
    }
}

pub const JACCARD_BUCKETS: usize = 20;

/// Fixed-bucket histogram of Jaccard values with exact counters for the
/// values the summary needs, so the summary never depends on bucket edges.
/// Buckets are right-closed: bucket i covers (i/20, (i+1)/20]. An exact zero
/// sits on no bucket and is counted on its own; both-empty pairs are
/// excluded entirely and only tallied.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JaccardHistogram {
    pub buckets: [u64; JACCARD_BUCKETS],
    pub exact_zero: u64,
    /// Also counted in the final bucket.
    pub exact_one: u64,
    /// Pairs with J ≤ 0.25, including exact zeros.
    pub le_quarter: u64,
    pub both_empty: u64,
}

/// Bucket index for a positive Jaccard value.
fn bucket_for(j: f64) -> usize {
    debug_assert!(j > 0.0 && j <= 1.0);
    (((j * JACCARD_BUCKETS as f64).ceil() as usize).saturating_sub(1)).min(JACCARD_BUCKETS - 1)
}

impl JaccardHistogram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Observes one title pair and returns its Jaccard value. The exact
    /// counters use integer comparisons on the set sizes, so boundary values
    /// like 1/4 are classified without floating-point wobble.
    pub fn observe<S: AsRef<str>>(&mut self, a: &[S], b: &[S]) -> f64 {
        let a: BTreeSet<&str> = a.iter().map(AsRef::as_ref).collect();
        let b: BTreeSet<&str> = b.iter().map(AsRef::as_ref).collect();
        if a.is_empty() && b.is_empty() {
            self.both_empty += 1;
            return 1.0;
        }
        let inter = a.intersection(&b).count() as u64;
        let union = (a.len() + b.len()) as u64 - inter;
        let j = inter as f64 / union as f64;
        if inter == 0 {
            self.exact_zero += 1;
        } else {
            self.buckets[bucket_for(j)] += 1;
        }
        if inter == union {
            self.exact_one += 1;
        }
        if 4 * inter <= union {
            self.le_quarter += 1;
        }
        j
    }

    /// Pairs represented in the histogram (everything except both-empty).
    pub fn included_pairs(&self) -> u64 {
        self.buckets.iter().sum::<u64>() + self.exact_zero
    }

    pub fn merge(&mut self, other: &JaccardHistogram) {
        for (mine, theirs) in self.buckets.iter_mut().zip(other.buckets) {
            *mine += theirs;
        }
        self.exact_zero += other.exact_zero;
        self.exact_one += other.exact_one;
        self.le_quarter += other.le_quarter;
        self.both_empty += other.both_empty;
    }

    pub fn summary(&self) -> JaccardSummary {
        let n = self.included_pairs();
        let frac = |count: u64| if n == 0 { 0.0 } else { count as f64 / n as f64 };
        JaccardSummary {
            included_pairs: n,
            both_empty: self.both_empty,
            perfect_fraction: frac(self.exact_one),
            le_025_fraction: frac(self.le_quarter),
            zero_fraction: frac(self.exact_zero),
        }
    }

    /// Plot-friendly export: one `low \t high \t count` row per bucket, with
    /// a degenerate [0, 0] row first for the exact zeros.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "0.00\t0.00\t{}", self.exact_zero)?;
        for (i, count) in self.buckets.iter().enumerate() {
            let low = i as f64 / JACCARD_BUCKETS as f64;
            let high = (i + 1) as f64 / JACCARD_BUCKETS as f64;
            writeln!(w, "{low:.2}\t{high:.2}\t{count}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JaccardSummary {
    pub included_pairs: u64,
    pub both_empty: u64,
    pub perfect_fraction: f64,
    pub le_025_fraction: f64,
    pub zero_fraction: f64,
}

/// A shared document's titles in the two corpus versions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TitlePair {
    pub doc_id: String,
    pub title_a: String,
    pub title_b: String,
}

/// One row of the manual-review sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergentExample {
    pub doc_id: String,
    pub title_a: String,
    pub title_b: String,
    pub jaccard: f64,
}

/// Draws a seeded uniform sample (without replacement) of up to `k` pairs
/// whose title Jaccard is at or below `threshold`. The result is ordered by
/// position in `pairs`, so a fixed seed reproduces the same sheet.
pub fn sample_divergent(pairs: &[TitlePair], threshold: f64, k: usize, seed: u64) -> Vec<DivergentExample> {
    let matching: Vec<(usize, f64)> = pairs
        .iter()
        .enumerate()
        .filter_map(|(idx, pair)| {
            let j = title_jaccard(&tokenize(&pair.title_a), &tokenize(&pair.title_b));
            (j <= threshold).then_some((idx, j))
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = k.min(matching.len());
    let mut chosen: Vec<usize> = index_sample(&mut rng, matching.len(), take).into_iter().collect();
    chosen.sort_unstable();
    chosen
        .into_iter()
        .map(|i| {
            let (idx, j) = matching[i];
            let pair = &pairs[idx];
            DivergentExample {
                doc_id: pair.doc_id.clone(),
                title_a: pair.title_a.clone(),
                title_b: pair.title_b.clone(),
                jaccard: j,
            }
        })
        .collect()
}

pub fn write_review_sheet<W: Write>(mut w: W, examples: &[DivergentExample]) -> io::Result<()> {
    for e in examples {
        writeln!(
            w,
            "{}\t{}\t{}\t{:.4}",
            e.doc_id,
            crate::textio::escape_field(&e.title_a),
            crate::textio::escape_field(&e.title_b),
            e.jaccard
        )?;
    }
    Ok(())
}
