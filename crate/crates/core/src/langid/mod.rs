//! Rank-order character n-gram language identification in the style of
//! Cavnar & Trenkle. A profile is the top 400 n-grams (n=1..4) of a training
//! sample ranked by frequency; classification picks the profile with the
//! smallest total rank displacement ("out-of-place" distance).
//!
//! Nine profiles are bundled, trained from the seed texts committed next to
//! this module. `examples/gen_profiles.rs` regenerates the TSVs.

use std::collections::HashMap;
use std::io::{self, BufRead, Write};

/// Grams kept per profile, and the penalty for a gram absent from a profile.
pub const PROFILE_SIZE: usize = 400;
/// Training samples shorter than this are rejected as unrepresentative.
pub const MIN_TRAIN_CHARS: usize = 1000;
/// Texts that normalize to fewer characters than this are not classified.
pub const MIN_CLASSIFY_CHARS: usize = 20;
/// Language code returned for texts too short to classify.
pub const UNDETERMINED: &str = "und";

/// Bundled training texts, one per supported language.
pub const BUILTIN_SEEDS: &[(&str, &str)] = &[
    ("de", include_str!("seeds/de.txt")),
    ("en", include_str!("seeds/en.txt")),
    ("es", include_str!("seeds/es.txt")),
    ("fr", include_str!("seeds/fr.txt")),
    ("it", include_str!("seeds/it.txt")),
    ("ja", include_str!("seeds/ja.txt")),
    ("nl", include_str!("seeds/nl.txt")),
    ("pt", include_str!("seeds/pt.txt")),
    ("ru", include_str!("seeds/ru.txt")),
];

const BUILTIN_PROFILES: &[(&str, &str)] = &[
    ("de", include_str!("profiles/de.tsv")),
    ("en", include_str!("profiles/en.tsv")),
    ("es", include_str!("profiles/es.tsv")),
    ("fr", include_str!("profiles/fr.tsv")),
    ("it", include_str!("profiles/it.tsv")),
    ("ja", include_str!("profiles/ja.tsv")),
    ("nl", include_str!("profiles/nl.tsv")),
    ("pt", include_str!("profiles/pt.tsv")),
    ("ru", include_str!("profiles/ru.tsv")),
];

#[derive(Debug, thiserror::Error)]
pub enum LangIdError {
    #[error("training sample has {len} characters, need at least {need}")]
    SampleTooShort { len: usize, need: usize },
    #[error("profile line {line}: {problem}")]
    BadProfile { line: usize, problem: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

/// A ranked n-gram profile for one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LanguageProfile {
    pub lang: String,
    ngram_ranks: HashMap<String, u32>,
}

impl LanguageProfile {
    pub fn rank(&self, gram: &str) -> Option<u32> {
        self.ngram_ranks.get(gram).copied()
    }

    pub fn len(&self) -> usize {
        self.ngram_ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ngram_ranks.is_empty()
    }

    /// Serializes as `gram \t rank` lines in rank order. Spaces inside grams
    /// are stored as underscores; an underscore can never occur in a gram
    /// because normalization keeps only alphabetic characters.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut grams: Vec<(&String, &u32)> = self.ngram_ranks.iter().collect();
        grams.sort_by_key(|(_, rank)| **rank);
        for (gram, rank) in grams {
            writeln!(w, "{}\t{}", gram.replace(' ', "_"), rank)?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(lang: &str, r: R) -> Result<Self, LangIdError> {
        let mut ngram_ranks = HashMap::new();
        let mut max_rank = 0u32;
        for (idx, line) in r.lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let n = idx + 1;
            let Some((gram, rank)) = line.split_once('\t') else {
                return Err(LangIdError::BadProfile { line: n, problem: "missing tab".into() });
            };
            let rank: u32 = rank
                .parse()
                .map_err(|_| LangIdError::BadProfile { line: n, problem: format!("bad rank {rank:?}") })?;
            if rank == 0 {
                return Err(LangIdError::BadProfile { line: n, problem: "rank 0".into() });
            }
            max_rank = max_rank.max(rank);
            if ngram_ranks.insert(gram.replace('_', " "), rank).is_some() {
                return Err(LangIdError::BadProfile { line: n, problem: format!("duplicate gram {gram:?}") });
            }
        }
        // Ranks must be a permutation of 1..=len; with no duplicates grams it
        // suffices that the max rank equals the count.
        if max_rank as usize != ngram_ranks.len() {
            return Err(LangIdError::BadProfile {
                line: 0,
                problem: format!("ranks do not cover 1..={} (max {max_rank})", ngram_ranks.len()),
            });
        }
        Ok(LanguageProfile { lang: lang.to_string(), ngram_ranks })
    }
}

/// Lowercased alphabetic words; every non-alphabetic character separates.
fn normalize_words(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for c in text.chars() {
        if c.is_alphabetic() {
            current.extend(c.to_lowercase());
        } else if !current.is_empty() {
            words.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}

/// Counts n-grams (n=1..4) over each word padded with one space on each
/// side, skipping grams that are entirely spaces.
fn gram_counts(words: &[String]) -> HashMap<String, u64> {
    let mut counts = HashMap::new();
    let mut padded: Vec<char> = Vec::new();
    for word in words {
        padded.clear();
        padded.push(' ');
        padded.extend(word.chars());
        padded.push(' ');
        for n in 1..=4usize {
            if padded.len() < n {
                continue;
            }
            for window in padded.windows(n) {
                if window.iter().all(|c| *c == ' ') {
                    continue;
                }
                *counts.entry(window.iter().collect::<String>()).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Grams of `text` in rank order (most frequent first, ties by gram
/// ascending), truncated to the profile size.
fn ranked_grams(text: &str) -> Vec<String> {
    let counts = gram_counts(&normalize_words(text));
    let mut order: Vec<(String, u64)> = counts.into_iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    order.truncate(PROFILE_SIZE);
    order.into_iter().map(|(gram, _)| gram).collect()
}

pub fn train_profile(sample_text: &str, lang: &str) -> Result<LanguageProfile, LangIdError> {
    let len = sample_text.chars().count();
    if len < MIN_TRAIN_CHARS {
        return Err(LangIdError::SampleTooShort { len, need: MIN_TRAIN_CHARS });
    }
    let ngram_ranks = ranked_grams(sample_text)
        .into_iter()
        .enumerate()
        .map(|(idx, gram)| (gram, idx as u32 + 1))
        .collect();
    Ok(LanguageProfile { lang: lang.to_string(), ngram_ranks })
}

/// The nine bundled profiles, sorted by language code.
pub fn builtin_profiles() -> Vec<LanguageProfile> {
    BUILTIN_PROFILES
        .iter()
        .map(|(lang, tsv)| {
            LanguageProfile::read_tsv(lang, tsv.as_bytes()).expect("bundled profile is well-formed")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub lang: String,
    pub out_of_place_score: u64,
}

fn out_of_place(text_grams: &[String], profile: &LanguageProfile) -> u64 {
    let mut total = 0u64;
    for (idx, gram) in text_grams.iter().enumerate() {
        let text_rank = idx as u32 + 1;
        total += match profile.rank(gram) {
            Some(rank) => text_rank.abs_diff(rank) as u64,
            None => PROFILE_SIZE as u64,
        };
    }
    total
}

/// Picks the profile with the smallest out-of-place distance, ties broken by
/// language code ascending, so the result does not depend on profile order.
/// Texts that normalize to fewer than [`MIN_CLASSIFY_CHARS`] characters get
/// [`UNDETERMINED`].
pub fn classify(text: &str, profiles: &[LanguageProfile]) -> Classification {
    assert!(!profiles.is_empty(), "classify needs at least one profile");
    let words = normalize_words(text);
    let normalized_len: usize =
        words.iter().map(|w| w.chars().count()).sum::<usize>() + words.len().saturating_sub(1);
    if normalized_len < MIN_CLASSIFY_CHARS {
        return Classification { lang: UNDETERMINED.to_string(), out_of_place_score: 0 };
    }
    let text_grams = ranked_grams(text);
    let mut best: Option<(u64, &str)> = None;
    for profile in profiles {
        let score = out_of_place(&text_grams, profile);
        let candidate = (score, profile.lang.as_str());
        if best.is_none_or(|b| candidate < b) {
            best = Some(candidate);
        }
    }
    let (score, lang) = best.expect("at least one profile");
    Classification { lang: lang.to_string(), out_of_place_score: score }
}

/// One row of the corpus language breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguageShare {
    pub lang: String,
    pub count: u64,
    pub percent: f64,
}

/// Tallies already-assigned language codes into percentage shares, largest
/// first (ties by code ascending). Percentages are over all inputs and sum
/// to 100 up to floating-point rounding.
pub fn language_shares<I, S>(codes: I) -> Vec<LanguageShare>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: HashMap<String, u64> = HashMap::new();
    let mut total = 0u64;
    for code in codes {
        *counts.entry(code.as_ref().to_string()).or_insert(0) += 1;
        total += 1;
    }
    let mut rows: Vec<LanguageShare> = counts
        .into_iter()
        .map(|(lang, count)| LanguageShare {
            lang,
            count,
            percent: 100.0 * count as f64 / total as f64,
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.lang.cmp(&b.lang)));
    rows
}

/// Classifies every text and reports the language breakdown.
pub fn corpus_language_report<I, S>(texts: I, profiles: &[LanguageProfile]) -> Vec<LanguageShare>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    language_shares(texts.into_iter().map(|t| classify(t.as_ref(), profiles).lang))
}
