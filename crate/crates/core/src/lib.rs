//! Core library for `retrocorpus`: rebuild a dated document corpus for a web
//! search query log from web-archive snapshots, then analyze and evaluate
//! ranking experiments over it.
//!
//! The pipeline modules, in the order the data flows through them:
//!
//! * [`logs`] — parse raw click logs and build the clicked-URL universe
//! * [`archive`] — resolve snapshots near a target date, fetch content
//!   politely and resumably, persist the id→snapshot mapping
//! * [`extract`] — HTML title/body extraction, tokenization, document store
//! * [`langid`] — character n-gram language identification
//! * [`diff`] — set algebra and title-token Jaccard analysis between two
//!   corpus versions
//! * [`sessions`] — session segmentation, filtering, date splits, candidate
//!   generation
//! * [`eval`] — inverted index, BM25 re-ranking, MAP/MRR/P@1 measurement,
//!   paired significance tests

pub mod archive;
pub mod diff;
pub mod eval;
pub mod extract;
pub mod langid;
pub mod logs;
pub mod sessions;
pub mod textio;
