//! Signed document graph built from claim-level relations.
//!
//! Entry `(from, to)` of each matrix is the weight document `from` exerts on
//! document `to`. Every relation installs its weight in both directions, so
//! both matrices are symmetric. Column sums give each document's total
//! incoming supporting and contradicting weight.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{read_records, write_records};
use crate::model::{Claim, DocId, Polarity, Relation};

/// Sums values in ascending order so the result does not depend on the order
/// the terms were produced in.
pub(crate) fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

/// Sparse non-negative matrix stored by column; only positive entries exist.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseWeights {
    columns: Vec<Vec<(usize, f64)>>,
}

impl SparseWeights {
    fn from_entries(n: usize, entries: &BTreeMap<(usize, usize), f64>) -> Self {
        let mut columns = vec![Vec::new(); n];
        // BTreeMap order is (from, to), so each column comes out sorted by row.
        for (&(from, to), &w) in entries {
            columns[to].push((from, w));
        }
        SparseWeights { columns }
    }

    /// Incoming `(from, weight)` entries of column `to`, sorted by `from`.
    pub fn column(&self, to: usize) -> &[(usize, f64)] {
        &self.columns[to]
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        let col = &self.columns[to];
        col.binary_search_by_key(&from, |&(r, _)| r)
            .map_or(0.0, |i| col[i].1)
    }

    /// Number of stored (directed) entries.
    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.nnz() == 0
    }

    /// All entries as `(from, to, weight)`, ordered by `to` then `from`.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(to, col)| col.iter().map(move |&(from, w)| (from, to, w)))
    }

    fn column_sums(&self) -> Vec<f64> {
        self.columns
            .iter()
            .map(|col| ordered_sum(col.iter().map(|&(_, w)| w).collect()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentGraph {
    doc_ids: Vec<DocId>,
    w_plus: SparseWeights,
    w_minus: SparseWeights,
    sum_plus: Vec<f64>,
    sum_minus: Vec<f64>,
}

impl DocumentGraph {
    /// Graph over `doc_ids` with no edges.
    pub fn empty(doc_ids: Vec<DocId>) -> Self {
        Self::from_maps(doc_ids, &BTreeMap::new(), &BTreeMap::new())
    }

    fn from_maps(
        doc_ids: Vec<DocId>,
        plus: &BTreeMap<(usize, usize), f64>,
        minus: &BTreeMap<(usize, usize), f64>,
    ) -> Self {
        let n = doc_ids.len();
        let w_plus = SparseWeights::from_entries(n, plus);
        let w_minus = SparseWeights::from_entries(n, minus);
        let sum_plus = w_plus.column_sums();
        let sum_minus = w_minus.column_sums();
        DocumentGraph {
            doc_ids,
            w_plus,
            w_minus,
            sum_plus,
            sum_minus,
        }
    }

    pub fn doc_ids(&self) -> &[DocId] {
        &self.doc_ids
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn w_plus(&self) -> &SparseWeights {
        &self.w_plus
    }

    pub fn w_minus(&self) -> &SparseWeights {
        &self.w_minus
    }

    /// Total supporting weight flowing into each document.
    pub fn sum_plus(&self) -> &[f64] {
        &self.sum_plus
    }

    /// Total contradicting weight flowing into each document.
    pub fn sum_minus(&self) -> &[f64] {
        &self.sum_minus
    }

    pub fn index_of(&self, id: &DocId) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == id)
    }

    /// Writes both matrices as `{from, to, weight, sign}` records.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut records = Vec::with_capacity(self.w_plus.nnz() + self.w_minus.nnz());
        for (sign, weights) in [
            (EdgeSign::Plus, &self.w_plus),
            (EdgeSign::Minus, &self.w_minus),
        ] {
            for (from, to, weight) in weights.entries() {
                records.push(EdgeRecord {
                    from: self.doc_ids[from].clone(),
                    to: self.doc_ids[to].clone(),
                    weight,
                    sign,
                });
            }
        }
        write_records(path, &records)
    }

    /// Reads an edge file over the index space `doc_ids`, rebuilding the
    /// column sums and checking symmetry.
    pub fn load(path: &Path, doc_ids: Vec<DocId>) -> Result<Self> {
        let records: Vec<EdgeRecord> = read_records(path)?;
        let index: HashMap<&DocId, usize> =
            doc_ids.iter().enumerate().map(|(i, d)| (d, i)).collect();
        let mut plus = BTreeMap::new();
        let mut minus = BTreeMap::new();
        for (line, r) in records.iter().enumerate() {
            let at = |msg: String| Error::parse(path, line + 1, msg);
            let (Some(&from), Some(&to)) = (index.get(&r.from), index.get(&r.to)) else {
                return Err(at(format!(
                    "edge {} -> {} names an unknown document",
                    r.from, r.to
                )));
            };
            if from == to {
                return Err(at(format!("self-loop on document {}", r.from)));
            }
            if !(r.weight > 0.0 && r.weight.is_finite()) {
                return Err(at(format!("edge weight {} is not positive", r.weight)));
            }
            let map = match r.sign {
                EdgeSign::Plus => &mut plus,
                EdgeSign::Minus => &mut minus,
            };
            if map.insert((from, to), r.weight).is_some() {
                return Err(at(format!("duplicate edge {} -> {}", r.from, r.to)));
            }
        }
        for (name, map) in [("supporting", &plus), ("contradicting", &minus)] {
            for (&(from, to), w) in map.iter() {
                if map.get(&(to, from)) != Some(w) {
                    return Err(Error::Data(format!(
                        "{}: {name} edge {} -> {} has no matching reverse edge",
                        path.display(),
                        doc_ids[from],
                        doc_ids[to]
                    )));
                }
            }
        }
        Ok(Self::from_maps(doc_ids, &plus, &minus))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeSign {
    #[serde(rename = "+")]
    Plus,
    #[serde(rename = "-", alias = "\u{2212}")]
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EdgeRecord {
    from: DocId,
    to: DocId,
    weight: f64,
    sign: EdgeSign,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub relations_used: usize,
    pub dropped_same_document: usize,
}

/// Aggregates relations into document-level weights: each relation adds 1 in
/// both directions between the two claims' documents.
pub fn build_graph(
    relations: &[Relation],
    claims: &[Claim],
    doc_ids: &[DocId],
) -> Result<(DocumentGraph, BuildReport)> {
    let doc_index: HashMap<&DocId, usize> =
        doc_ids.iter().enumerate().map(|(i, d)| (d, i)).collect();
    if doc_index.len() != doc_ids.len() {
        return Err(Error::Validation(
            "document id list contains duplicates".into(),
        ));
    }
    let claim_doc: HashMap<&str, &DocId> = claims
        .iter()
        .map(|c| (c.claim_id.as_str(), &c.doc_id))
        .collect();
    let resolve = |relation: &Relation, claim_id: &str| -> Result<usize> {
        let doc = claim_doc.get(claim_id).ok_or_else(|| {
            Error::Data(format!(
                "relation {}/{}: unknown claim {claim_id}",
                relation.claim_a, relation.claim_b
            ))
        })?;
        doc_index.get(doc).copied().ok_or_else(|| {
            Error::Data(format!(
                "relation {}/{}: claim {claim_id} belongs to unknown document {doc}",
                relation.claim_a, relation.claim_b
            ))
        })
    };

    let mut plus = BTreeMap::new();
    let mut minus = BTreeMap::new();
    let mut report = BuildReport::default();
    for relation in relations {
        let a = resolve(relation, &relation.claim_a)?;
        let b = resolve(relation, &relation.claim_b)?;
        let map = match relation.polarity {
            Polarity::Supports => &mut plus,
            Polarity::Refutes => &mut minus,
            Polarity::Unrelated => return Err(Error::Contract(format!(
                "relation {}/{} has polarity 0; only supporting or refuting relations form edges",
                relation.claim_a, relation.claim_b
            ))),
        };
        if a == b {
            report.dropped_same_document += 1;
            continue;
        }
        *map.entry((a, b)).or_insert(0.0) += 1.0;
        *map.entry((b, a)).or_insert(0.0) += 1.0;
        report.relations_used += 1;
    }
    Ok((
        DocumentGraph::from_maps(doc_ids.to_vec(), &plus, &minus),
        report,
    ))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub documents: usize,
    /// Undirected supporting edges (document pairs with positive weight).
    pub positive_edges: usize,
    pub negative_edges: usize,
    pub positive_weight: f64,
    pub negative_weight: f64,
    pub isolated_documents: usize,
    pub min_degree: usize,
    pub max_degree: usize,
    pub mean_degree: f64,
    pub median_degree: f64,
}

/// Summary counts and the distribution of distinct-neighbour degrees.
pub fn graph_stats(graph: &DocumentGraph) -> GraphStats {
    let n = graph.len();
    if n == 0 {
        return GraphStats::default();
    }
    let mut degrees: Vec<usize> = (0..n)
        .map(|d| {
            let mut neighbours: Vec<usize> = graph
                .w_plus
                .column(d)
                .iter()
                .chain(graph.w_minus.column(d))
                .map(|&(from, _)| from)
                .collect();
            neighbours.sort_unstable();
            neighbours.dedup();
            neighbours.len()
        })
        .collect();
    degrees.sort_unstable();
    let median = if n % 2 == 1 {
        degrees[n / 2] as f64
    } else {
        (degrees[n / 2 - 1] + degrees[n / 2]) as f64 / 2.0
    };
    GraphStats {
        documents: n,
        positive_edges: graph.w_plus.nnz() / 2,
        negative_edges: graph.w_minus.nnz() / 2,
        positive_weight: graph.sum_plus.iter().sum::<f64>() / 2.0,
        negative_weight: graph.sum_minus.iter().sum::<f64>() / 2.0,
        isolated_documents: degrees.iter().filter(|&&d| d == 0).count(),
        min_degree: degrees[0],
        max_degree: degrees[n - 1],
        mean_degree: degrees.iter().sum::<usize>() as f64 / n as f64,
        median_degree: median,
    }
}
