//! Inverted index over tokenized document texts, with a small versioned
//! binary persistence format (magic "RCIX", little-endian, 64-bit counts).

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Bm25Params, EvalError};

const MAGIC: &[u8; 4] = b"RCIX";
const VERSION: u32 = 1;

/// Immutable after build; shared freely across scoring threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvertedIndex {
    /// Sorted unique doc ids; positions are the doc indices in postings.
    doc_ids: Vec<String>,
    doc_lengths: Vec<u64>,
    /// term → (doc index, term frequency), doc index ascending.
    postings: BTreeMap<String, Vec<(u32, u32)>>,
    total_tokens: u64,
}

impl InvertedIndex {
    pub fn build<I, S>(docs: I) -> Result<Self, EvalError>
    where
        I: IntoIterator<Item = (S, Vec<String>)>,
        S: Into<String>,
    {
        let mut collected: Vec<(String, Vec<String>)> =
            docs.into_iter().map(|(id, tokens)| (id.into(), tokens)).collect();
        collected.sort_by(|a, b| a.0.cmp(&b.0));
        for pair in collected.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(EvalError::DuplicateDoc(pair[1].0.clone()));
            }
        }
        let mut index = InvertedIndex {
            doc_ids: Vec::with_capacity(collected.len()),
            doc_lengths: Vec::with_capacity(collected.len()),
            postings: BTreeMap::new(),
            total_tokens: 0,
        };
        for (doc_id, tokens) in collected {
            let doc_idx = index.doc_ids.len() as u32;
            index.doc_ids.push(doc_id);
            index.doc_lengths.push(tokens.len() as u64);
            index.total_tokens += tokens.len() as u64;
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for token in tokens {
                *counts.entry(token).or_insert(0) += 1;
            }
            for (term, tf) in counts {
                index.postings.entry(term).or_default().push((doc_idx, tf));
            }
        }
        Ok(index)
    }

    /// Combines shard indexes into the index a single-pass build over all
    /// their documents would produce. Doc ids must be globally unique.
    pub fn merge<I>(shards: I) -> Result<Self, EvalError>
    where
        I: IntoIterator<Item = InvertedIndex>,
    {
        struct DocEntry {
            length: u64,
            tfs: Vec<(String, u32)>,
        }
        let mut docs: BTreeMap<String, DocEntry> = BTreeMap::new();
        for shard in shards {
            let mut per_doc: Vec<Vec<(String, u32)>> = vec![Vec::new(); shard.doc_ids.len()];
            for (term, posting) in &shard.postings {
                for (doc_idx, tf) in posting {
                    per_doc[*doc_idx as usize].push((term.clone(), *tf));
                }
            }
            for ((doc_id, length), tfs) in
                shard.doc_ids.into_iter().zip(shard.doc_lengths).zip(per_doc)
            {
                if docs.contains_key(&doc_id) {
                    return Err(EvalError::DuplicateDoc(doc_id));
                }
                docs.insert(doc_id, DocEntry { length, tfs });
            }
        }
        let mut index = InvertedIndex {
            doc_ids: Vec::with_capacity(docs.len()),
            doc_lengths: Vec::with_capacity(docs.len()),
            postings: BTreeMap::new(),
            total_tokens: 0,
        };
        for (doc_id, entry) in docs {
            let doc_idx = index.doc_ids.len() as u32;
            index.doc_ids.push(doc_id);
            index.doc_lengths.push(entry.length);
            index.total_tokens += entry.length;
            for (term, tf) in entry.tfs {
                index.postings.entry(term).or_default().push((doc_idx, tf));
            }
        }
        Ok(index)
    }

    pub fn doc_count(&self) -> u64 {
        self.doc_ids.len() as u64
    }

    pub fn term_count(&self) -> u64 {
        self.postings.len() as u64
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn avg_doc_length(&self) -> f64 {
        if self.doc_ids.is_empty() {
            0.0
        } else {
            self.total_tokens as f64 / self.doc_ids.len() as f64
        }
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids.binary_search_by(|id| id.as_str().cmp(doc_id)).ok()
    }

    pub fn doc_id(&self, doc_idx: usize) -> &str {
        &self.doc_ids[doc_idx]
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.doc_ids.iter().map(String::as_str)
    }

    pub fn doc_length(&self, doc_idx: usize) -> u64 {
        self.doc_lengths[doc_idx]
    }

    /// Document frequency of a term.
    pub fn df(&self, term: &str) -> u64 {
        self.postings.get(term).map_or(0, |p| p.len() as u64)
    }

    /// Term frequency of `term` in the document at `doc_idx`.
    pub fn tf(&self, term: &str, doc_idx: usize) -> u32 {
        let Some(posting) = self.postings.get(term) else { return 0 };
        posting
            .binary_search_by_key(&(doc_idx as u32), |(idx, _)| *idx)
            .map_or(0, |pos| posting[pos].1)
    }

    /// Scores every document containing at least one query term and returns
    /// the top `k` by (score descending, doc_id descending bytewise).
    pub fn search(&self, query: &[String], params: &Bm25Params, k: usize) -> Vec<(String, f64)> {
        let unique: std::collections::BTreeSet<&String> = query.iter().collect();
        let mut scores: HashMap<u32, f64> = HashMap::new();
        for term in unique {
            let Some(posting) = self.postings.get(term.as_str()) else { continue };
            let idf = super::idf(self.doc_count(), posting.len() as u64);
            for (doc_idx, tf) in posting {
                let len = self.doc_lengths[*doc_idx as usize] as f64;
                *scores.entry(*doc_idx).or_insert(0.0) +=
                    idf * params.tf_component(*tf, len, self.avg_doc_length());
            }
        }
        let mut scored: Vec<(u32, f64)> = scores.into_iter().collect();
        scored.sort_by(|a, b| {
            b.1.total_cmp(&a.1)
                .then_with(|| self.doc_ids[b.0 as usize].cmp(&self.doc_ids[a.0 as usize]))
        });
        scored.truncate(k);
        scored
            .into_iter()
            .map(|(doc_idx, score)| (self.doc_ids[doc_idx as usize].clone(), score))
            .collect()
    }

    fn check_invariants(&self) -> Result<(), EvalError> {
        let posting_total: u64 = self
            .postings
            .values()
            .flat_map(|p| p.iter().map(|(_, tf)| *tf as u64))
            .sum();
        let length_total: u64 = self.doc_lengths.iter().sum();
        if posting_total != length_total || length_total != self.total_tokens {
            return Err(EvalError::CorruptIndex(format!(
                "token totals disagree: postings {posting_total}, lengths {length_total}, header {}",
                self.total_tokens
            )));
        }
        if self.doc_ids.len() != self.doc_lengths.len() {
            return Err(EvalError::CorruptIndex("doc table length mismatch".into()));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), EvalError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.doc_ids.len() as u64).to_le_bytes())?;
        for (doc_id, length) in self.doc_ids.iter().zip(&self.doc_lengths) {
            write_str(&mut w, doc_id)?;
            w.write_all(&length.to_le_bytes())?;
        }
        w.write_all(&(self.postings.len() as u64).to_le_bytes())?;
        for (term, posting) in &self.postings {
            write_str(&mut w, term)?;
            w.write_all(&(posting.len() as u64).to_le_bytes())?;
            for (doc_idx, tf) in posting {
                w.write_all(&(*doc_idx as u64).to_le_bytes())?;
                w.write_all(&(*tf as u64).to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(EvalError::CorruptIndex(format!("bad magic {magic:?}")));
        }
        let mut version = [0u8; 4];
        r.read_exact(&mut version)?;
        let version = u32::from_le_bytes(version);
        if version != VERSION {
            return Err(EvalError::CorruptIndex(format!(
                "unsupported version {version}, expected {VERSION}"
            )));
        }
        let doc_count = read_u64(&mut r)? as usize;
        let mut doc_ids = Vec::with_capacity(doc_count.min(1 << 20));
        let mut doc_lengths = Vec::with_capacity(doc_count.min(1 << 20));
        let mut total_tokens = 0u64;
        for _ in 0..doc_count {
            doc_ids.push(read_str(&mut r)?);
            let length = read_u64(&mut r)?;
            doc_lengths.push(length);
            total_tokens += length;
        }
        let term_count = read_u64(&mut r)?;
        let mut postings = BTreeMap::new();
        for _ in 0..term_count {
            let term = read_str(&mut r)?;
            let len = read_u64(&mut r)? as usize;
            let mut posting = Vec::with_capacity(len.min(1 << 20));
            for _ in 0..len {
                let doc_idx = read_u64(&mut r)?;
                let tf = read_u64(&mut r)?;
                if doc_idx >= doc_count as u64 || tf > u32::MAX as u64 {
                    return Err(EvalError::CorruptIndex(format!(
                        "posting out of range for term {term:?}"
                    )));
                }
                posting.push((doc_idx as u32, tf as u32));
            }
            postings.insert(term, posting);
        }
        let index = InvertedIndex { doc_ids, doc_lengths, postings, total_tokens };
        index.check_invariants()?;
        Ok(index)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u64).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64, EvalError> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_str<R: Read>(r: &mut R) -> Result<String, EvalError> {
    let len = read_u64(r)? as usize;
    if len > 1 << 24 {
        return Err(EvalError::CorruptIndex(format!("implausible string length {len}")));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| EvalError::CorruptIndex(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &str) -> Vec<String> {
        words.split_whitespace().map(str::to_string).collect()
    }

    #[test]
    fn counting_example() {
        let idx = InvertedIndex::build([("d1", toks("a b")), ("d2", toks("b b"))]).unwrap();
        assert_eq!(idx.doc_count(), 2);
        assert_eq!(idx.df("a"), 1);
        assert_eq!(idx.df("b"), 2);
        assert_eq!(idx.df("zzz"), 0);
        assert_eq!(idx.tf("b", idx.doc_index("d2").unwrap()), 2);
        assert_eq!(idx.tf("a", idx.doc_index("d2").unwrap()), 0);
        assert_eq!(idx.avg_doc_length(), 2.0);
    }

    #[test]
    fn empty_stream() {
        let idx = InvertedIndex::build(Vec::<(String, Vec<String>)>::new()).unwrap();
        assert_eq!(idx.doc_count(), 0);
        assert_eq!(idx.avg_doc_length(), 0.0);
        assert!(idx.search(&toks("anything"), &Bm25Params::default(), 5).is_empty());
    }

    #[test]
    fn duplicate_doc_rejected() {
        let err = InvertedIndex::build([("d1", toks("a")), ("d1", toks("b"))]).unwrap_err();
        assert!(matches!(err, EvalError::DuplicateDoc(id) if id == "d1"));
        let shard_a = InvertedIndex::build([("d1", toks("a"))]).unwrap();
        let shard_b = InvertedIndex::build([("d1", toks("b"))]).unwrap();
        assert!(matches!(
            InvertedIndex::merge([shard_a, shard_b]),
            Err(EvalError::DuplicateDoc(_))
        ));
    }

    fn random_docs(seed: u64, n: usize) -> Vec<(String, Vec<String>)> {
        // Tiny LCG so the test needs no RNG dependency wiring.
        let mut state = seed;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 33) as usize
        };
        let vocab = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"];
        (0..n)
            .map(|i| {
                let len = next() % 12;
                let tokens = (0..len).map(|_| vocab[next() % vocab.len()].to_string()).collect();
                (format!("doc{i:04}"), tokens)
            })
            .collect()
    }

    #[test]
    fn sharded_build_equals_single_pass() {
        let docs = random_docs(42, 200);
        let single = InvertedIndex::build(docs.clone()).unwrap();
        let shards: Vec<InvertedIndex> = docs
            .chunks(37)
            .map(|chunk| InvertedIndex::build(chunk.to_vec()).unwrap())
            .collect();
        let merged = InvertedIndex::merge(shards).unwrap();
        assert_eq!(single, merged);
    }

    #[test]
    fn save_load_round_trip_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let idx = InvertedIndex::build(random_docs(7, 80)).unwrap();
        let p1 = dir.path().join("a.idx");
        let p2 = dir.path().join("b.idx");
        idx.save(&p1).unwrap();
        idx.save(&p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let back = InvertedIndex::load(&p1).unwrap();
        assert_eq!(back, idx);
    }

    #[test]
    fn load_rejects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let idx = InvertedIndex::build([("d1", toks("a b"))]).unwrap();
        let path = dir.path().join("good.idx");
        idx.save(&path).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        let bad_magic = dir.path().join("magic.idx");
        std::fs::write(&bad_magic, &bytes).unwrap();
        assert!(matches!(InvertedIndex::load(&bad_magic), Err(EvalError::CorruptIndex(_))));

        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 3);
        let truncated = dir.path().join("trunc.idx");
        std::fs::write(&truncated, &bytes).unwrap();
        assert!(InvertedIndex::load(&truncated).is_err());
    }

    #[test]
    fn search_orders_by_score_then_doc_id() {
        // Two docs with identical content tie exactly; higher doc id wins.
        let idx = InvertedIndex::build([
            ("d1", toks("jaguar car")),
            ("d2", toks("jaguar car")),
            ("d3", toks("lion")),
        ])
        .unwrap();
        let hits = idx.search(&toks("jaguar"), &Bm25Params::default(), 10);
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].0, "d2");
        assert_eq!(hits[1].0, "d1");
        assert_eq!(hits[0].1, hits[1].1);
        let top1 = idx.search(&toks("jaguar"), &Bm25Params::default(), 1);
        assert_eq!(top1.len(), 1);
    }
}
