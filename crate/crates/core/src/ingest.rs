//! Corpus loading and the line-record files every pipeline stage reads and
//! writes.
//!
//! Each artifact is UTF-8 text with one JSON object per line, so intermediate
//! products diff and grep cleanly. Loaders report the 1-based line number of
//! the first record that fails to parse.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    normalize_text, Claim, DocId, Document, Relation, Seed, TrustScores, MAX_DOCUMENTS,
};

const REQUIRED_COLUMNS: [&str; 4] = ["title", "text", "subject", "date"];

/// Row filter applied while loading the raw corpus. Bounds are inclusive.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusFilter {
    pub date_from: Option<NaiveDate>,
    pub date_to: Option<NaiveDate>,
    pub subject: Option<String>,
}

impl CorpusFilter {
    pub fn validate(&self) -> Result<()> {
        if let (Some(from), Some(to)) = (self.date_from, self.date_to) {
            if from > to {
                return Err(Error::Validation(format!(
                    "date_from {from} is after date_to {to}"
                )));
            }
        }
        Ok(())
    }

    fn accepts(&self, subject: &str, date: NaiveDate) -> bool {
        if self.date_from.is_some_and(|from| date < from)
            || self.date_to.is_some_and(|to| date > to)
        {
            return false;
        }
        match &self.subject {
            Some(wanted) => subject.trim().eq_ignore_ascii_case(wanted.trim()),
            None => true,
        }
    }
}

/// Rows dropped while loading, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SkipReport {
    pub rows_read: usize,
    pub unparseable_date: usize,
    pub empty_body: usize,
    pub filtered_out: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedCorpus {
    pub documents: Vec<Document>,
    pub skipped: SkipReport,
}

/// Parses the dataset's `May 30, 2017` style (full or abbreviated month) and
/// ISO 8601 dates.
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let raw = raw.trim();
    ["%B %d, %Y", "%b %d, %Y", "%Y-%m-%d"]
        .iter()
        .find_map(|fmt| NaiveDate::parse_from_str(raw, fmt).ok())
}

/// Loads the trusted and unlabelled CSV files, trusted rows first, assigning
/// four-digit ids in input order to every row that survives the filter.
pub fn load_corpus(
    true_path: &Path,
    fake_path: &Path,
    filter: &CorpusFilter,
) -> Result<LoadedCorpus> {
    filter.validate()?;
    let mut documents = Vec::new();
    let mut skipped = SkipReport::default();
    for (path, seed) in [(true_path, Seed::Trusted), (fake_path, Seed::Unknown)] {
        read_csv(path, seed, filter, &mut documents, &mut skipped)?;
    }
    Ok(LoadedCorpus { documents, skipped })
}

fn read_csv(
    path: &Path,
    seed: Seed,
    filter: &CorpusFilter,
    out: &mut Vec<Document>,
    skipped: &mut SkipReport,
) -> Result<()> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let mut columns = [0usize; 4];
    for (slot, name) in columns.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Schema {
                path: path.to_path_buf(),
                column: name.to_string(),
            })?;
    }
    let [title_col, text_col, subject_col, date_col] = columns;

    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, row + 2, e.to_string()))?;
        skipped.rows_read += 1;
        let field = |i: usize| record.get(i).unwrap_or("");
        let Some(date) = parse_date(field(date_col)) else {
            log::debug!(
                "{}:{}: unparseable date {:?}",
                path.display(),
                row + 2,
                field(date_col)
            );
            skipped.unparseable_date += 1;
            continue;
        };
        if !filter.accepts(field(subject_col), date) {
            skipped.filtered_out += 1;
            continue;
        }
        let body = normalize_text(field(text_col));
        if body.is_empty() {
            skipped.empty_body += 1;
            continue;
        }
        if out.len() >= MAX_DOCUMENTS {
            return Err(Error::Validation(format!(
                "corpus exceeds {MAX_DOCUMENTS} documents; four-digit ids would overflow"
            )));
        }
        out.push(Document {
            id: DocId::from_index(out.len())?,
            title: normalize_text(field(title_col)),
            body,
            published: Some(date),
            seed,
        });
    }
    Ok(())
}

/// Writes one JSON object per line.
pub fn write_records<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for record in records {
        write_record(&mut w, record).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_record<T: Serialize, W: Write>(w: &mut W, record: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, record)?;
    w.write_all(b"\n")
}

/// Reads a line-record file; blank lines are ignored.
pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(record);
    }
    Ok(out)
}

pub fn save_documents(documents: &[Document], path: &Path) -> Result<()> {
    write_records(path, documents)
}

pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    let documents: Vec<Document> = read_records(path)?;
    crate::model::ensure_valid_corpus(&documents)?;
    Ok(documents)
}

pub fn save_claims(claims: &[Claim], path: &Path) -> Result<()> {
    write_records(path, claims)
}

pub fn load_claims(path: &Path) -> Result<Vec<Claim>> {
    read_records(path)
}

pub fn save_relations(relations: &[Relation], path: &Path) -> Result<()> {
    write_records(path, relations)
}

pub fn load_relations(path: &Path) -> Result<Vec<Relation>> {
    let relations: Vec<Relation> = read_records(path)?;
    crate::model::validate_relations(&relations)?;
    Ok(relations)
}

#[derive(Serialize, Deserialize)]
struct ScoresHeader {
    iterations: usize,
    final_delta: f64,
    converged: bool,
}

#[derive(Serialize, Deserialize)]
struct ScoreRecord {
    doc_id: DocId,
    score: f64,
}

/// Scores file: a header record with the convergence metadata, then one
/// `{doc_id, score}` record per document.
pub fn save_scores(scores: &TrustScores, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = ScoresHeader {
        iterations: scores.iterations,
        final_delta: scores.final_delta,
        converged: scores.converged,
    };
    let mut body = || -> std::io::Result<()> {
        write_record(&mut w, &header)?;
        for (doc_id, &score) in &scores.scores {
            write_record(
                &mut w,
                &ScoreRecord {
                    doc_id: doc_id.clone(),
                    score,
                },
            )?;
        }
        w.flush()
    };
    body().map_err(|e| Error::io(path, e))
}

pub fn load_scores(path: &Path) -> Result<TrustScores> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let header: ScoresHeader = loop {
        match lines.next() {
            None => return Err(Error::parse(path, 1, "missing scores header")),
            Some((i, line)) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                break serde_json::from_str(&line)
                    .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
            }
        }
    };
    let mut scores = TrustScores {
        iterations: header.iterations,
        final_delta: header.final_delta,
        converged: header.converged,
        ..Default::default()
    };
    for (i, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ScoreRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        if scores
            .scores
            .insert(record.doc_id.clone(), record.score)
            .is_some()
        {
            return Err(Error::parse(
                path,
                i + 1,
                format!("duplicate score for {}", record.doc_id),
            ));
        }
    }
    scores.validate()?;
    Ok(scores)
}

/// Formats a float the way Python's `repr` does: shortest round-trip digits,
/// scientific notation below 1e-4 or from 1e16 up, two-digit exponents.
pub fn python_float_repr(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let magnitude = x.abs();
    if x == 0.0 || (1e-4..1e16).contains(&magnitude) {
        let s = format!("{x}");
        if s.contains('.') {
            s
        } else {
            format!("{s}.0")
        }
    } else {
        let s = format!("{x:e}");
        let (mantissa, exponent) = s.split_once('e').expect("exponent form");
        let (sign, digits) = match exponent.strip_prefix('-') {
            Some(d) => ('-', d),
            None => ('+', exponent),
        };
        format!("{mantissa}e{sign}{digits:0>2}")
    }
}

/// Human-readable trace: the convergence line followed by one line per
/// document, e.g. `Document 0000 's score: 0.8696`.
pub fn render_scores_text(scores: &TrustScores) -> String {
    let mut out = String::new();
    let delta = python_float_repr(scores.final_delta);
    if scores.converged {
        let _ = writeln!(
            out,
            "Converged at round {}, quantity of change: {delta}",
            scores.iterations
        );
    } else {
        let _ = writeln!(
            out,
            "Stopped without converging at round {}, quantity of change: {delta}",
            scores.iterations
        );
    }
    for (doc_id, score) in &scores.scores {
        let _ = writeln!(out, "Document {doc_id} 's score: {score:.4}");
    }
    out
}
