//! Document trust scoring from extracted claims.
//!
//! The pipeline runs in stages, each reading and writing line-record files:
//!
//! 1. [`ingest`] loads the labelled corpus and assigns four-digit ids.
//! 2. [`claims`] extracts factual claims from each document.
//! 3. [`embed`] embeds claims and nominates the most similar cross-document
//!    pairs.
//! 4. [`claims`] classifies each nominated pair as supporting, refuting or
//!    unrelated.
//! 5. [`graph`] folds the relations into a signed document graph.
//! 6. [`solver`] propagates trust over the graph to a fixed point.
//! 7. [`rerank`] and [`eval`] use the scores to re-rank retrieval results.

pub mod claims;
pub mod embed;
pub mod error;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod model;
pub mod providers;
pub mod rerank;
pub mod solver;

pub use error::{Error, Result};
pub use model::{Claim, DocId, Document, Polarity, Relation, Seed, TrustConfig, TrustScores};
