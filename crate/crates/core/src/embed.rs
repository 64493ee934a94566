//! Embedding index over claims (or documents) and global top-k nomination of
//! cross-document claim pairs by cosine similarity.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{read_records, write_records};
use crate::model::Claim;
use crate::providers::{map_bounded, Provider, ProviderError};

pub const DEFAULT_BATCH_SIZE: usize = 64;
pub const DEFAULT_TOP_K: usize = 4036;

const MAGIC: &[u8; 4] = b"CTEI";
const FORMAT_VERSION: u32 = 1;
const NORM_SLACK: f64 = 1e-6;

/// Dense row-major matrix of unit vectors with a parallel id list.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    dim: usize,
    ids: Vec<String>,
    data: Vec<f64>,
}

impl EmbeddingIndex {
    pub fn new(dim: usize, ids: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation(
                "embedding dimension must be positive".into(),
            ));
        }
        if ids.len() != rows.len() {
            return Err(Error::Validation(format!(
                "{} ids for {} rows",
                ids.len(),
                rows.len()
            )));
        }
        let mut data = Vec::with_capacity(dim * rows.len());
        for (id, row) in ids.iter().zip(&rows) {
            if row.len() != dim {
                return Err(Error::Validation(format!(
                    "row {id} has dimension {}, expected {dim}",
                    row.len()
                )));
            }
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > NORM_SLACK {
                return Err(Error::Validation(format!(
                    "row {id} has norm {norm}, expected unit length"
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(EmbeddingIndex { dim, ids, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    /// Writes the binary matrix to `path` and the id list to
    /// `<path>.ids.jsonl`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            w.write_all(MAGIC)?;
            w.write_all(&FORMAT_VERSION.to_le_bytes())?;
            w.write_all(&(self.dim as u32).to_le_bytes())?;
            w.write_all(&(self.len() as u64).to_le_bytes())?;
            for x in &self.data {
                w.write_all(&(*x as f32).to_le_bytes())?;
            }
            w.flush()
        };
        write().map_err(|e| Error::io(path, e))?;
        let ids: Vec<IdRecord> = self
            .ids
            .iter()
            .map(|id| IdRecord { id: id.clone() })
            .collect();
        write_records(&ids_path(path), &ids)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let truncated = |e: std::io::Error| Error::io(path, e);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(truncated)?;
        if &magic != MAGIC {
            return Err(Error::parse(path, 0, "not an embedding index (bad magic)"));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word).map_err(truncated)?;
        let version = u32::from_le_bytes(word);
        if version != FORMAT_VERSION {
            return Err(Error::parse(
                path,
                0,
                format!("unsupported index version {version}"),
            ));
        }
        r.read_exact(&mut word).map_err(truncated)?;
        let dim = u32::from_le_bytes(word) as usize;
        if dim == 0 {
            return Err(Error::parse(path, 0, "index dimension is zero"));
        }
        let mut count = [0u8; 8];
        r.read_exact(&mut count).map_err(truncated)?;
        let rows = u64::from_le_bytes(count) as usize;
        let mut raw = Vec::new();
        r.read_to_end(&mut raw).map_err(truncated)?;
        if raw.len() != rows * dim * 4 {
            return Err(Error::parse(
                path,
                0,
                format!(
                    "expected {} bytes of vectors, found {}",
                    rows * dim * 4,
                    raw.len()
                ),
            ));
        }
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        let ids: Vec<IdRecord> = read_records(&ids_path(path))?;
        if ids.len() != rows {
            return Err(Error::Data(format!(
                "{}: {} ids for {rows} rows",
                ids_path(path).display(),
                ids.len()
            )));
        }
        let rows = data.chunks_exact(dim).map(<[f64]>::to_vec).collect();
        Self::new(dim, ids.into_iter().map(|r| r.id).collect(), rows)
    }
}

#[derive(Serialize, Deserialize)]
struct IdRecord {
    id: String,
}

/// Location of the id sidecar for an index stored at `path`.
pub fn ids_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".ids.jsonl");
    PathBuf::from(os)
}

/// Embeds `texts` in batches of `batch_size`, dispatching up to the
/// provider's in-flight limit concurrently. Row `i` belongs to `ids[i]`.
pub fn embed_texts<P: Provider + ?Sized>(
    ids: Vec<String>,
    texts: &[String],
    provider: &P,
    batch_size: usize,
) -> Result<EmbeddingIndex> {
    if texts.is_empty() {
        return Err(Error::Contract("nothing to embed".into()));
    }
    if batch_size == 0 {
        return Err(Error::Contract("batch size must be positive".into()));
    }
    debug_assert_eq!(ids.len(), texts.len());
    let batches: Vec<&[String]> = texts.chunks(batch_size).collect();
    let results = map_bounded(&batches, provider.max_in_flight(), |_, batch| {
        provider.embed(batch)
    });
    let mut rows = Vec::with_capacity(texts.len());
    let mut dim = None;
    for (batch, result) in batches.iter().zip(results) {
        let vectors = result?;
        if vectors.len() != batch.len() {
            return Err(ProviderError::Protocol(format!(
                "sent {} texts, received {} vectors",
                batch.len(),
                vectors.len()
            ))
            .into());
        }
        for v in vectors {
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(ProviderError::Protocol(format!(
                        "embedding dimension changed between batches: {d} then {}",
                        v.len()
                    ))
                    .into())
                }
                _ => {}
            }
            rows.push(v);
        }
    }
    EmbeddingIndex::new(dim.unwrap_or(0), ids, rows).map_err(|e| match e {
        Error::Validation(msg) => ProviderError::Protocol(msg).into(),
        other => other,
    })
}

/// Embeds every claim; row `i` corresponds to `claims[i]`.
pub fn build_index<P: Provider + ?Sized>(
    claims: &[Claim],
    provider: &P,
    batch_size: usize,
) -> Result<EmbeddingIndex> {
    let ids = claims.iter().map(|c| c.claim_id.clone()).collect();
    let texts: Vec<String> = claims.iter().map(|c| c.text.clone()).collect();
    embed_texts(ids, &texts, provider, batch_size)
}

/// Cosine similarity of two unit vectors, clamped to [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(dot(a, b).clamp(-1.0, 1.0))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A nominated claim pair. `claim_a` sorts before `claim_b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub claim_a: String,
    pub claim_b: String,
    pub similarity: f64,
}

/// Ranking used for nomination: higher similarity first, then ascending
/// `(claim_a, claim_b)`.
pub fn pair_order(x: &CandidatePair, y: &CandidatePair) -> Ordering {
    y.similarity
        .total_cmp(&x.similarity)
        .then_with(|| (&x.claim_a, &x.claim_b).cmp(&(&y.claim_a, &y.claim_b)))
}

struct Entry<'a> {
    similarity: f64,
    a: &'a str,
    b: &'a str,
}

// Ordered so that the heap's maximum is the weakest pair kept so far.
impl Ord for Entry<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .similarity
            .total_cmp(&self.similarity)
            .then_with(|| (self.a, self.b).cmp(&(other.a, other.b)))
    }
}

impl PartialOrd for Entry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Entry<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry<'_> {}

/// Exact global top-k over all cross-document claim pairs, streaming every
/// pair through a bounded heap.
pub fn select_candidate_pairs(
    index: &EmbeddingIndex,
    claims: &[Claim],
    k: usize,
) -> Result<Vec<CandidatePair>> {
    if index.len() != claims.len() {
        return Err(Error::Contract(format!(
            "index has {} rows but {} claims were given",
            index.len(),
            claims.len()
        )));
    }
    if let Some((id, c)) = index
        .ids()
        .iter()
        .zip(claims)
        .find(|(id, c)| **id != c.claim_id)
    {
        return Err(Error::Contract(format!(
            "index row {id} does not match claim {}",
            c.claim_id
        )));
    }
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut heap: BinaryHeap<Entry> = BinaryHeap::with_capacity(k + 1);
    for i in 0..claims.len() {
        for j in (i + 1)..claims.len() {
            if claims[i].doc_id == claims[j].doc_id {
                continue;
            }
            let (a, b) = if claims[i].claim_id <= claims[j].claim_id {
                (claims[i].claim_id.as_str(), claims[j].claim_id.as_str())
            } else {
                (claims[j].claim_id.as_str(), claims[i].claim_id.as_str())
            };
            let entry = Entry {
                similarity: dot(index.row(i), index.row(j)).clamp(-1.0, 1.0),
                a,
                b,
            };
            if heap.len() < k {
                heap.push(entry);
            } else if heap.peek().is_some_and(|worst| entry < *worst) {
                heap.pop();
                heap.push(entry);
            }
        }
    }
    Ok(heap
        .into_sorted_vec()
        .into_iter()
        .map(|e| CandidatePair {
            claim_a: e.a.to_string(),
            claim_b: e.b.to_string(),
            similarity: e.similarity,
        })
        .collect())
}

/// Reorders `claims` to match an index whose rows may be in another order.
pub fn align_claims(index: &EmbeddingIndex, claims: &[Claim]) -> Result<Vec<Claim>> {
    let by_id: HashMap<&str, &Claim> = claims.iter().map(|c| (c.claim_id.as_str(), c)).collect();
    index
        .ids()
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|c| (*c).clone())
                .ok_or_else(|| Error::Data(format!("index row {id} has no matching claim")))
        })
        .collect()
}
