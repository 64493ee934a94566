//! Shared domain types: documents, claims, relations, solver configuration and
//! the trust scores it produces.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of decimal digits in a document id.
pub const DOC_ID_DIGITS: usize = 4;

/// Largest corpus that can be indexed with four-digit ids.
pub const MAX_DOCUMENTS: usize = 10_000;

/// Zero-padded four-digit document identifier, e.g. `0001`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DocId(String);

impl DocId {
    /// Id for the document at position `index` in corpus order.
    pub fn from_index(index: usize) -> Result<Self> {
        if index >= MAX_DOCUMENTS {
            return Err(Error::Validation(format!(
                "document index {index} exceeds the {DOC_ID_DIGITS}-digit id capacity of {MAX_DOCUMENTS}"
            )));
        }
        Ok(DocId(format!("{index:04}")))
    }

    /// Parses an id, rejecting anything that is not exactly four decimal digits.
    pub fn parse(raw: &str) -> Result<Self> {
        let id = DocId(raw.to_string());
        if id.is_well_formed() {
            Ok(id)
        } else {
            Err(Error::Validation(format!("malformed document id `{raw}`")))
        }
    }

    pub fn is_well_formed(&self) -> bool {
        self.0.len() == DOC_ID_DIGITS && self.0.bytes().all(|b| b.is_ascii_digit())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DocId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Prior label a document enters the propagation with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Seed {
    Trusted,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: DocId,
    pub title: String,
    pub body: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub published: Option<NaiveDate>,
    pub seed: Seed,
}

/// Collapses whitespace runs to single spaces and trims both ends. Case and
/// punctuation are left alone.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CorpusViolation {
    DuplicateId(DocId),
    EmptyBody(DocId),
    MalformedId(DocId),
}

impl fmt::Display for CorpusViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorpusViolation::DuplicateId(id) => write!(f, "duplicate document id {id}"),
            CorpusViolation::EmptyBody(id) => write!(f, "document {id} has an empty body"),
            CorpusViolation::MalformedId(id) => write!(f, "malformed document id `{id}`"),
        }
    }
}

/// Lists every invariant violation in `documents`; empty iff the corpus is valid.
pub fn validate_corpus(documents: &[Document]) -> Vec<CorpusViolation> {
    let mut seen = HashSet::new();
    let mut violations = Vec::new();
    for doc in documents {
        if !doc.id.is_well_formed() {
            violations.push(CorpusViolation::MalformedId(doc.id.clone()));
        }
        if !seen.insert(&doc.id) {
            violations.push(CorpusViolation::DuplicateId(doc.id.clone()));
        }
        if normalize_text(&doc.body).is_empty() {
            violations.push(CorpusViolation::EmptyBody(doc.id.clone()));
        }
    }
    violations
}

/// Like [`validate_corpus`] but fails on the first report entry.
pub fn ensure_valid_corpus(documents: &[Document]) -> Result<()> {
    let violations = validate_corpus(documents);
    if violations.is_empty() {
        return Ok(());
    }
    let listed: Vec<String> = violations.iter().map(ToString::to_string).collect();
    Err(Error::Validation(listed.join("; ")))
}

/// A standalone factual statement extracted from one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub claim_id: String,
    pub doc_id: DocId,
    pub ordinal: usize,
    pub text: String,
}

impl Claim {
    pub fn new(doc_id: DocId, ordinal: usize, text: impl Into<String>) -> Self {
        Claim {
            claim_id: format!("{doc_id}-{ordinal}"),
            doc_id,
            ordinal,
            text: text.into(),
        }
    }
}

/// Checks claim invariants against the corpus the claims were drawn from.
pub fn validate_claims(claims: &[Claim], documents: &[Document]) -> Result<()> {
    let known: HashSet<&DocId> = documents.iter().map(|d| &d.id).collect();
    let mut ids = HashSet::new();
    let mut positions = HashSet::new();
    for claim in claims {
        if !known.contains(&claim.doc_id) {
            return Err(Error::Data(format!(
                "claim {} references unknown document {}",
                claim.claim_id, claim.doc_id
            )));
        }
        if claim.text.trim().is_empty() {
            return Err(Error::Validation(format!(
                "claim {} has empty text",
                claim.claim_id
            )));
        }
        if !ids.insert(claim.claim_id.as_str()) {
            return Err(Error::Validation(format!(
                "duplicate claim id {}",
                claim.claim_id
            )));
        }
        if !positions.insert((&claim.doc_id, claim.ordinal)) {
            return Err(Error::Validation(format!(
                "document {} has two claims at ordinal {}",
                claim.doc_id, claim.ordinal
            )));
        }
    }
    Ok(())
}

/// Outcome of comparing two claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Polarity {
    Refutes,
    Unrelated,
    Supports,
}

impl Polarity {
    pub fn as_i8(self) -> i8 {
        match self {
            Polarity::Refutes => -1,
            Polarity::Unrelated => 0,
            Polarity::Supports => 1,
        }
    }
}

impl From<Polarity> for i8 {
    fn from(p: Polarity) -> i8 {
        p.as_i8()
    }
}

impl TryFrom<i8> for Polarity {
    type Error = String;

    fn try_from(value: i8) -> std::result::Result<Self, String> {
        match value {
            -1 => Ok(Polarity::Refutes),
            0 => Ok(Polarity::Unrelated),
            1 => Ok(Polarity::Supports),
            other => Err(format!("polarity must be -1, 0 or 1, got {other}")),
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_i8())
    }
}

/// A classified claim pair, carrying the cosine score that nominated it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub claim_a: String,
    pub claim_b: String,
    pub polarity: Polarity,
    pub similarity: f64,
}

/// Checks relation invariants: distinct endpoints, unique unordered pairs,
/// similarity within [-1, 1].
pub fn validate_relations(relations: &[Relation]) -> Result<()> {
    let mut pairs = HashSet::new();
    for r in relations {
        if r.claim_a == r.claim_b {
            return Err(Error::Validation(format!(
                "relation links claim {} to itself",
                r.claim_a
            )));
        }
        if !(-1.0..=1.0).contains(&r.similarity) {
            return Err(Error::Validation(format!(
                "relation {}/{} has similarity {} outside [-1, 1]",
                r.claim_a, r.claim_b, r.similarity
            )));
        }
        let key = if r.claim_a < r.claim_b {
            (r.claim_a.as_str(), r.claim_b.as_str())
        } else {
            (r.claim_b.as_str(), r.claim_a.as_str())
        };
        if !pairs.insert(key) {
            return Err(Error::Validation(format!(
                "claim pair {}/{} appears more than once",
                key.0, key.1
            )));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrustConfig {
    /// Damping factor between the seed anchor and neighbourhood influence.
    pub alpha: f64,
    /// Convergence threshold on the L∞ change between iterations.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub initial_unknown: f64,
    pub initial_trusted: f64,
}

impl Default for TrustConfig {
    fn default() -> Self {
        TrustConfig {
            alpha: 0.85,
            tolerance: 1e-6,
            max_iterations: 1000,
            initial_unknown: 0.5,
            initial_trusted: 1.0,
        }
    }
}

impl TrustConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Validation(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 {
            return Err(Error::Validation(format!(
                "tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Validation("max_iterations must be positive".into()));
        }
        let ordered = 0.0 <= self.initial_unknown
            && self.initial_unknown <= self.initial_trusted
            && self.initial_trusted <= 1.0;
        if !ordered {
            return Err(Error::Validation(format!(
                "initial scores must satisfy 0 <= unknown ({}) <= trusted ({}) <= 1",
                self.initial_unknown, self.initial_trusted
            )));
        }
        Ok(())
    }

    pub fn initial_score(&self, seed: Seed) -> f64 {
        match seed {
            Seed::Trusted => self.initial_trusted,
            Seed::Unknown => self.initial_unknown,
        }
    }
}

/// Final per-document trust scores with convergence metadata.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrustScores {
    pub scores: BTreeMap<DocId, f64>,
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
}

impl TrustScores {
    pub fn get(&self, id: &DocId) -> Option<f64> {
        self.scores.get(id).copied()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some((id, s)) = self.scores.iter().find(|(_, s)| !(0.0..=1.0).contains(*s)) {
            return Err(Error::Validation(format!(
                "score {s} for document {id} outside [0, 1]"
            )));
        }
        Ok(())
    }
}
