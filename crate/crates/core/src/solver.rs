//! Damped fixed-point iteration for document trust.
//!
//! Each round every document's score is recomputed from the previous round's
//! vector (Jacobi style):
//!
//! ```text
//! P_d = Σ s_d' · w⁺(d', d) / W⁺_d      (0 when W⁺_d = 0)
//! N_d = Σ s_d' · w⁻(d', d) / W⁻_d      (0 when W⁻_d = 0)
//! s_d ← (1 − α) · s⁰_d + α · (P_d − N_d + 1) / 2
//! ```
//!
//! The map is an L∞ contraction with factor α, so the iteration converges to
//! a unique fixed point from any start. Seeds are anchored only through the
//! `(1 − α) · s⁰` term and are not clamped; an isolated trusted document
//! settles at `(1 − α) + α / 2`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{ordered_sum, DocumentGraph, SparseWeights};
use crate::ingest::write_records;
use crate::model::{Document, TrustConfig, TrustScores};

/// Starting vector: `initial_trusted` for trusted seeds, `initial_unknown`
/// for everything else.
pub fn initial_scores(documents: &[Document], config: &TrustConfig) -> Vec<f64> {
    documents
        .iter()
        .map(|d| config.initial_score(d.seed))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Influence {
    pub positive: f64,
    pub negative: f64,
}

impl Influence {
    /// Net influence `P − N`, in [-1, 1].
    pub fn net(&self) -> f64 {
        self.positive - self.negative
    }
}

fn weighted_mean(scores: &[f64], incoming: &[(usize, f64)], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    let numerator = ordered_sum(incoming.iter().map(|&(from, w)| scores[from] * w).collect());
    (numerator / total).clamp(0.0, 1.0)
}

fn column_mean(scores: &[f64], weights: &SparseWeights, totals: &[f64], d: usize) -> f64 {
    weighted_mean(scores, weights.column(d), totals[d])
}

/// Normalized supporting and contradicting influence on document `d`.
pub fn influence(scores: &[f64], graph: &DocumentGraph, d: usize) -> Influence {
    Influence {
        positive: column_mean(scores, graph.w_plus(), graph.sum_plus(), d),
        negative: column_mean(scores, graph.w_minus(), graph.sum_minus(), d),
    }
}

/// Maps net influence from [-1, 1] onto [0, 1].
pub fn squash(net: f64) -> f64 {
    (net + 1.0) / 2.0
}

/// One synchronous update of every document.
pub fn step(
    scores: &[f64],
    anchor: &[f64],
    graph: &DocumentGraph,
    config: &TrustConfig,
) -> Vec<f64> {
    debug_assert_eq!(scores.len(), graph.len());
    debug_assert_eq!(anchor.len(), graph.len());
    let alpha = config.alpha;
    (0..graph.len())
        .map(|d| {
            let f = squash(influence(scores, graph, d).net());
            ((1.0 - alpha) * anchor[d] + alpha * f).clamp(0.0, 1.0)
        })
        .collect()
}

/// Largest absolute per-document change.
pub fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// L∞ change after each round, starting with round 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub deltas: Vec<f64>,
    pub converged: bool,
}

#[derive(Serialize, Deserialize)]
struct DeltaRecord {
    iteration: usize,
    delta: f64,
}

impl IterationTrace {
    /// `(round, change)` pairs, rounds counted from 1.
    pub fn records(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.deltas.iter().enumerate().map(|(i, &d)| (i + 1, d))
    }

    /// Writes one `{iteration, delta}` record per round.
    pub fn save(&self, path: &Path) -> Result<()> {
        let records: Vec<DeltaRecord> = self
            .records()
            .map(|(iteration, delta)| DeltaRecord { iteration, delta })
            .collect();
        write_records(path, &records)
    }
}

/// Iterates from `start` until the L∞ change drops below the tolerance or
/// the iteration cap is hit. `anchor` is the s⁰ vector.
pub fn iterate(
    graph: &DocumentGraph,
    anchor: &[f64],
    start: &[f64],
    config: &TrustConfig,
) -> Result<(Vec<f64>, IterationTrace)> {
    config.validate()?;
    if anchor.len() != graph.len() || start.len() != graph.len() {
        return Err(Error::Contract(format!(
            "graph has {} documents but score vectors have {} and {} entries",
            graph.len(),
            anchor.len(),
            start.len()
        )));
    }
    if let Some(bad) = anchor
        .iter()
        .chain(start)
        .find(|s| !(0.0..=1.0).contains(*s))
    {
        return Err(Error::Contract(format!(
            "initial score {bad} outside [0, 1]"
        )));
    }
    let mut scores = start.to_vec();
    let mut trace = IterationTrace::default();
    for _ in 0..config.max_iterations {
        let next = step(&scores, anchor, graph, config);
        let delta = linf_distance(&next, &scores);
        scores = next;
        trace.deltas.push(delta);
        if delta < config.tolerance {
            trace.converged = true;
            break;
        }
    }
    Ok((scores, trace))
}

/// Scores every document of `graph`. `documents` must list the graph's
/// documents in the graph's index order.
pub fn claimrank(
    graph: &DocumentGraph,
    documents: &[Document],
    config: &TrustConfig,
) -> Result<(TrustScores, IterationTrace)> {
    let aligned = documents.len() == graph.len()
        && documents
            .iter()
            .zip(graph.doc_ids())
            .all(|(d, id)| &d.id == id);
    if !aligned {
        return Err(Error::Contract(
            "documents do not match the graph's index space".into(),
        ));
    }
    let anchor = initial_scores(documents, config);
    let (scores, trace) = iterate(graph, &anchor, &anchor, config)?;
    if !trace.converged {
        log::warn!(
            "no convergence after {} rounds (last change {:e})",
            trace.deltas.len(),
            trace.deltas.last().copied().unwrap_or(0.0)
        );
    }
    let result = TrustScores {
        scores: graph.doc_ids().iter().cloned().zip(scores).collect(),
        iterations: trace.deltas.len(),
        final_delta: trace.deltas.last().copied().unwrap_or(0.0),
        converged: trace.converged,
    };
    Ok((result, trace))
}
