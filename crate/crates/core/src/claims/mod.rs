//! Claim extraction and pairwise relation classification over the chat
//! provider.

mod template;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::embed::CandidatePair;
use crate::error::{Error, Result};
use crate::model::{normalize_text, Claim, Document, Polarity, Relation};
use crate::providers::{map_bounded, Provider};

pub use template::{
    PromptTemplate, TemplateSet, ANSWER_PLACEHOLDERS, COMPARE_PLACEHOLDERS, EXTRACT_PLACEHOLDERS,
    JUDGE_PLACEHOLDERS,
};

/// Nominated-pair budget used when none is configured.
pub const DEFAULT_BUDGET: usize = 4036;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExtractOptions {
    pub max_claims: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions { max_claims: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extraction {
    pub claims: Vec<Claim>,
    /// The model listed more than `max_claims` claims and the tail was cut.
    pub truncated: bool,
}

/// Pulls the final numbered list out of a reply. Reasoning above the list may
/// itself contain numbered steps, so only the last run that starts at `1.`
/// and counts up without gaps is kept.
pub fn parse_numbered_list(reply: &str) -> Vec<String> {
    let mut best: Vec<String> = Vec::new();
    let mut current: Vec<String> = Vec::new();
    for line in reply.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        match numbered_item(trimmed) {
            Some((1, text)) => {
                if !current.is_empty() {
                    best = std::mem::take(&mut current);
                }
                current.push(text);
            }
            Some((n, text)) if !current.is_empty() && n == current.len() + 1 => current.push(text),
            _ => {
                if !current.is_empty() {
                    best = std::mem::take(&mut current);
                }
            }
        }
    }
    if !current.is_empty() {
        best = current;
    }
    best
}

fn numbered_item(line: &str) -> Option<(usize, String)> {
    let digits = line.bytes().take_while(u8::is_ascii_digit).count();
    if digits == 0 {
        return None;
    }
    let n: usize = line[..digits].parse().ok()?;
    let rest = line[digits..].strip_prefix(['.', ')'])?;
    if !rest.starts_with(char::is_whitespace) {
        return None;
    }
    let text = normalize_text(rest);
    (!text.is_empty()).then_some((n, text))
}

/// Asks the model for the claims in one document.
pub fn extract_claims<P: Provider + ?Sized>(
    document: &Document,
    template: &PromptTemplate,
    provider: &P,
    options: ExtractOptions,
) -> Result<Extraction> {
    if !document.id.is_well_formed() {
        return Err(Error::Validation(format!(
            "malformed document id `{}`",
            document.id
        )));
    }
    if normalize_text(&document.body).is_empty() {
        return Err(Error::Validation(format!(
            "document {} has an empty body",
            document.id
        )));
    }
    template.require(EXTRACT_PLACEHOLDERS)?;
    let published = document
        .published
        .map(|d| d.to_string())
        .unwrap_or_else(|| "unknown".into());
    let vars = HashMap::from([
        ("document", document.body.as_str()),
        ("title", document.title.as_str()),
        ("published", published.as_str()),
    ]);
    let reply = provider.chat(&template.system_prompt(), &template.render_user(&vars))?;
    let mut items = parse_numbered_list(&reply);
    let truncated = items.len() > options.max_claims;
    if truncated {
        log::warn!(
            "document {}: {} claims listed, keeping the first {}",
            document.id,
            items.len(),
            options.max_claims
        );
        items.truncate(options.max_claims);
    }
    if items.is_empty() {
        log::warn!("document {}: no parseable claims in reply", document.id);
    }
    let claims = items
        .into_iter()
        .enumerate()
        .map(|(ordinal, text)| Claim::new(document.id.clone(), ordinal, text))
        .collect();
    Ok(Extraction { claims, truncated })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractStats {
    pub documents: usize,
    pub claims: usize,
    /// Distinct claim texts across the whole corpus.
    pub unique_corpus: usize,
    /// Sum over documents of distinct claim texts within each document.
    pub unique_per_document: usize,
    pub empty_documents: usize,
    pub truncated_documents: usize,
}

/// Extracts claims from every document, in corpus order.
pub fn extract_corpus<P: Provider + ?Sized>(
    documents: &[Document],
    template: &PromptTemplate,
    provider: &P,
    options: ExtractOptions,
) -> Result<(Vec<Claim>, ExtractStats)> {
    let results = map_bounded(documents, provider.max_in_flight(), |_, doc| {
        extract_claims(doc, template, provider, options)
    });
    let mut stats = ExtractStats {
        documents: documents.len(),
        ..Default::default()
    };
    let mut claims = Vec::new();
    let mut corpus_texts = HashSet::new();
    for result in results {
        let extraction = result?;
        if extraction.claims.is_empty() {
            stats.empty_documents += 1;
        }
        if extraction.truncated {
            stats.truncated_documents += 1;
        }
        let doc_texts: HashSet<&str> = extraction.claims.iter().map(|c| c.text.as_str()).collect();
        stats.unique_per_document += doc_texts.len();
        corpus_texts.extend(extraction.claims.iter().map(|c| c.text.clone()));
        claims.extend(extraction.claims);
    }
    stats.claims = claims.len();
    stats.unique_corpus = corpus_texts.len();
    Ok((claims, stats))
}

/// Reads the verdict from a reply's final non-empty line, which must read
/// `ANSWER: 1`, `ANSWER: 0` or `ANSWER: -1`.
pub fn parse_verdict(reply: &str) -> Option<Polarity> {
    let last = reply.lines().rev().map(str::trim).find(|l| !l.is_empty())?;
    let last = last
        .trim_matches(|c| c == '*' || c == '`' || c == '_')
        .trim();
    let (key, value) = last.split_once(':')?;
    if !key.trim().eq_ignore_ascii_case("answer") {
        return None;
    }
    let value = value
        .trim()
        .trim_matches(|c| c == '*' || c == '`')
        .trim_end_matches('.');
    match value.replace('\u{2212}', "-").as_str() {
        "1" | "+1" => Some(Polarity::Supports),
        "0" => Some(Polarity::Unrelated),
        "-1" => Some(Polarity::Refutes),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClassifyOptions {
    /// Extra attempts after an unparseable verdict.
    pub max_reasks: usize,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { max_reasks: 2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Verdict {
    pub polarity: Polarity,
    /// Every attempt came back unparseable, so the verdict fell back to 0.
    pub parse_failed: bool,
}

/// Classifies a cross-document claim pair. Unparseable replies are re-asked
/// up to `max_reasks` times and then treated as unrelated.
pub fn classify_relation<P: Provider + ?Sized>(
    claim_a: &Claim,
    claim_b: &Claim,
    template: &PromptTemplate,
    provider: &P,
    options: ClassifyOptions,
) -> Result<Verdict> {
    if claim_a.doc_id == claim_b.doc_id {
        return Err(Error::Contract(format!(
            "claims {} and {} come from the same document",
            claim_a.claim_id, claim_b.claim_id
        )));
    }
    template.require(COMPARE_PLACEHOLDERS)?;
    let vars = HashMap::from([
        ("claim_a", claim_a.text.as_str()),
        ("claim_b", claim_b.text.as_str()),
    ]);
    let system = template.system_prompt();
    let user = template.render_user(&vars);
    for attempt in 0..=options.max_reasks {
        let reply = provider.chat(&system, &user)?;
        if let Some(polarity) = parse_verdict(&reply) {
            return Ok(Verdict {
                polarity,
                parse_failed: false,
            });
        }
        log::debug!(
            "{} vs {}: unparseable verdict on attempt {}",
            claim_a.claim_id,
            claim_b.claim_id,
            attempt + 1
        );
    }
    Ok(Verdict {
        polarity: Polarity::Unrelated,
        parse_failed: true,
    })
}

/// Polarity counts and failure counters for a classification batch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationStats {
    pub classified: usize,
    pub supports: usize,
    pub refutes: usize,
    pub unrelated: usize,
    pub parse_failures: usize,
    pub provider_errors: usize,
    pub invalid_pairs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    pub relations: Vec<Relation>,
    pub stats: RelationStats,
}

/// Classifies the first `budget` nominated pairs and keeps the non-neutral
/// verdicts. Failures on individual pairs count as unrelated; the batch
/// itself only fails on inputs that do not resolve.
pub fn classify_batch<P: Provider + ?Sized>(
    pairs: &[CandidatePair],
    claims: &[Claim],
    template: &PromptTemplate,
    provider: &P,
    budget: usize,
    options: ClassifyOptions,
) -> Result<BatchOutcome> {
    if pairs
        .windows(2)
        .any(|w| w[0].similarity.total_cmp(&w[1].similarity).is_lt())
    {
        return Err(Error::Contract(
            "candidate pairs must be sorted by similarity, descending".into(),
        ));
    }
    template.require(COMPARE_PLACEHOLDERS)?;
    let by_id: HashMap<&str, &Claim> = claims.iter().map(|c| (c.claim_id.as_str(), c)).collect();
    let selected = &pairs[..budget.min(pairs.len())];
    let resolved = selected
        .iter()
        .map(|p| {
            let a = by_id.get(p.claim_a.as_str()).copied();
            let b = by_id.get(p.claim_b.as_str()).copied();
            match (a, b) {
                (Some(a), Some(b)) => Ok((a, b)),
                _ => Err(Error::Data(format!(
                    "candidate pair {}/{} references an unknown claim",
                    p.claim_a, p.claim_b
                ))),
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let verdicts = map_bounded(&resolved, provider.max_in_flight(), |_, (a, b)| {
        classify_relation(a, b, template, provider, options)
    });

    let mut stats = RelationStats::default();
    let mut relations = Vec::new();
    for (pair, verdict) in selected.iter().zip(verdicts) {
        stats.classified += 1;
        let polarity = match verdict {
            Ok(v) => {
                stats.parse_failures += usize::from(v.parse_failed);
                v.polarity
            }
            Err(Error::Provider(e)) => {
                log::warn!("{}/{}: {e}", pair.claim_a, pair.claim_b);
                stats.provider_errors += 1;
                Polarity::Unrelated
            }
            Err(e) => {
                log::warn!("{}/{}: {e}", pair.claim_a, pair.claim_b);
                stats.invalid_pairs += 1;
                Polarity::Unrelated
            }
        };
        match polarity {
            Polarity::Supports => stats.supports += 1,
            Polarity::Refutes => stats.refutes += 1,
            Polarity::Unrelated => stats.unrelated += 1,
        }
        if polarity != Polarity::Unrelated {
            relations.push(Relation {
                claim_a: pair.claim_a.clone(),
                claim_b: pair.claim_b.clone(),
                polarity,
                similarity: pair.similarity,
            });
        }
    }
    Ok(BatchOutcome { relations, stats })
}
