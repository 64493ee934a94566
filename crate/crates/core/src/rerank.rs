//! Dense retrieval over document embeddings and trust-aware re-ranking.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::{embed_texts, EmbeddingIndex};
use crate::error::{Error, Result};
use crate::model::{DocId, Document, TrustScores};
use crate::providers::Provider;

pub const DEFAULT_PREFIX_CHARS: usize = 2000;
pub const DEFAULT_TOP_N: usize = 10;
pub const DEFAULT_LAMBDA: f64 = 0.5;
/// Trust assumed for documents the scorer never saw.
pub const NEUTRAL_TRUST: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankMode {
    /// Similarity only.
    Vanilla,
    /// Similarity blended with trust.
    Score,
}

impl RankMode {
    pub const ALL: [RankMode; 2] = [RankMode::Vanilla, RankMode::Score];

    pub fn as_str(self) -> &'static str {
        match self {
            RankMode::Vanilla => "vanilla",
            RankMode::Score => "score",
        }
    }
}

impl fmt::Display for RankMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RankMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vanilla" => Ok(RankMode::Vanilla),
            "score" => Ok(RankMode::Score),
            other => Err(Error::Validation(format!("unknown rank mode `{other}`"))),
        }
    }
}

/// Embeds the first `prefix_chars` characters of every document body.
pub fn embed_documents<P: Provider + ?Sized>(
    documents: &[Document],
    provider: &P,
    prefix_chars: usize,
    batch_size: usize,
) -> Result<EmbeddingIndex> {
    let ids = documents.iter().map(|d| d.id.to_string()).collect();
    let texts: Vec<String> = documents
        .iter()
        .map(|d| d.body.chars().take(prefix_chars).collect())
        .collect();
    embed_texts(ids, &texts, provider, batch_size)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieved {
    pub doc_id: DocId,
    pub similarity: f64,
}

/// The `top_n` documents closest to `query`, by descending cosine similarity
/// and then ascending id.
pub fn retrieve<P: Provider + ?Sized>(
    query: &str,
    index: &EmbeddingIndex,
    provider: &P,
    top_n: usize,
) -> Result<Vec<Retrieved>> {
    if index.is_empty() {
        return Err(Error::Contract("document index is empty".into()));
    }
    let query_vec = provider
        .embed(&[query.to_string()])?
        .into_iter()
        .next()
        .ok_or_else(|| {
            crate::providers::ProviderError::Protocol("no embedding for query".into())
        })?;
    if query_vec.len() != index.dim() {
        return Err(crate::providers::ProviderError::Protocol(format!(
            "query embedding has dimension {}, index has {}",
            query_vec.len(),
            index.dim()
        ))
        .into());
    }
    let mut results = index
        .ids()
        .iter()
        .zip(index.rows())
        .map(|(id, row)| {
            Ok(Retrieved {
                doc_id: DocId::parse(id)?,
                similarity: crate::embed::cosine(&query_vec, row)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    results.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    results.truncate(top_n);
    Ok(results)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub doc_id: DocId,
    pub similarity: f64,
    pub trust: f64,
    pub combined: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reranked {
    pub results: Vec<RankedResult>,
    /// Documents with no trust score, ranked as [`NEUTRAL_TRUST`].
    pub missing_trust: usize,
}

/// Cosine similarity mapped from [-1, 1] onto [0, 1].
pub fn normalized_similarity(similarity: f64) -> f64 {
    (similarity + 1.0) / 2.0
}

/// Blended ranking value: normalized similarity in vanilla mode, otherwise
/// `(1 − λ) · sim_norm + λ · trust`.
pub fn combined_score(similarity: f64, trust: f64, mode: RankMode, lambda: f64) -> f64 {
    let sim = normalized_similarity(similarity);
    match mode {
        RankMode::Vanilla => sim,
        RankMode::Score => (1.0 - lambda) * sim + lambda * trust,
    }
}

/// Re-sorts retrieval results by their combined value, ties by ascending id.
pub fn rerank(
    results: &[Retrieved],
    trust: &TrustScores,
    mode: RankMode,
    lambda: f64,
) -> Result<Reranked> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Contract(format!(
            "lambda must lie in [0, 1], got {lambda}"
        )));
    }
    let mut missing_trust = 0;
    let mut ranked: Vec<RankedResult> = results
        .iter()
        .map(|r| {
            let t = trust.get(&r.doc_id).unwrap_or_else(|| {
                missing_trust += 1;
                NEUTRAL_TRUST
            });
            RankedResult {
                doc_id: r.doc_id.clone(),
                similarity: r.similarity,
                trust: t,
                combined: combined_score(r.similarity, t, mode, lambda),
                rank: 0,
            }
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.combined
            .total_cmp(&a.combined)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
    });
    for (i, r) in ranked.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    if missing_trust > 0 {
        log::debug!("{missing_trust} results had no trust score; used {NEUTRAL_TRUST}");
    }
    Ok(Reranked {
        results: ranked,
        missing_trust,
    })
}

/// One line of query output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: String,
    pub rank: usize,
    pub doc_id: DocId,
    pub similarity: f64,
    pub trust: f64,
    pub combined: f64,
    pub mode: RankMode,
}

pub fn query_records(query: &str, ranked: &[RankedResult], mode: RankMode) -> Vec<QueryRecord> {
    ranked
        .iter()
        .map(|r| QueryRecord {
            query: query.to_string(),
            rank: r.rank,
            doc_id: r.doc_id.clone(),
            similarity: r.similarity,
            trust: r.trust,
            combined: r.combined,
            mode,
        })
        .collect()
}
