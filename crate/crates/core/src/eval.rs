//! Vanilla-versus-score evaluation: answer each query from retrieved
//! context, then grade by substring match and by a judge model.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::claims::{PromptTemplate, ANSWER_PLACEHOLDERS, JUDGE_PLACEHOLDERS};
use crate::embed::EmbeddingIndex;
use crate::error::{Error, Result};
use crate::model::{normalize_text, DocId, Document, TrustScores};
use crate::providers::Provider;
use crate::rerank::{rerank, retrieve, RankMode, RankedResult};

/// Judge scores are kept in millionths so averages come from integer sums.
const SCORE_UNITS: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    pub query: String,
    pub expected: String,
}

impl EvalCase {
    pub fn validate(&self) -> Result<()> {
        if self.query.trim().is_empty() || self.expected.trim().is_empty() {
            return Err(Error::Validation(format!(
                "eval case needs a query and an expected answer: {self:?}"
            )));
        }
        Ok(())
    }
}

fn matches_expected(response: &str, expected: &str) -> bool {
    let response = normalize_text(response).to_lowercase();
    let expected = normalize_text(expected).to_lowercase();
    response.contains(&expected)
}

/// Number of responses that contain their case's expected string, compared
/// case-insensitively after whitespace collapsing.
pub fn count_matches(responses: &[String], cases: &[EvalCase]) -> Result<usize> {
    if responses.len() != cases.len() {
        return Err(Error::Contract(format!(
            "{} responses for {} cases",
            responses.len(),
            cases.len()
        )));
    }
    Ok(responses
        .iter()
        .zip(cases)
        .filter(|(r, c)| matches_expected(r, &c.expected))
        .count())
}

/// Fraction of matching responses; `None` when there are no cases.
pub fn substring_accuracy(responses: &[String], cases: &[EvalCase]) -> Result<Option<f64>> {
    let matched = count_matches(responses, cases)?;
    Ok((!cases.is_empty()).then(|| matched as f64 / cases.len() as f64))
}

/// Reads `SCORE: <x>` from the reply's final non-empty line; `x` must lie in
/// [0, 1].
pub fn parse_score(reply: &str) -> Option<f64> {
    let last = reply.lines().rev().map(str::trim).find(|l| !l.is_empty())?;
    let last = last.trim_matches(|c| c == '*' || c == '`').trim();
    let (key, value) = last.split_once(':')?;
    if !key.trim().eq_ignore_ascii_case("score") {
        return None;
    }
    let x: f64 = value
        .trim()
        .trim_matches(|c| c == '*' || c == '`')
        .parse()
        .ok()?;
    (0.0..=1.0).contains(&x).then_some(x)
}

fn to_units(score: f64) -> u64 {
    (score * SCORE_UNITS as f64).round() as u64
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JudgeOutcome {
    pub scores: Vec<f64>,
    pub parse_failures: usize,
    pub provider_errors: usize,
}

impl JudgeOutcome {
    /// Mean score computed from integer millionths; `None` when empty.
    pub fn mean(&self) -> Option<f64> {
        if self.scores.is_empty() {
            return None;
        }
        let total: u64 = self.scores.iter().map(|&s| to_units(s)).sum();
        Some(total as f64 / self.scores.len() as f64 / SCORE_UNITS as f64)
    }
}

/// Grades every response with the judge model. Failures score 0 and are
/// counted; the batch always completes.
pub fn judge_scores<P: Provider + ?Sized>(
    responses: &[String],
    cases: &[EvalCase],
    template: &PromptTemplate,
    provider: &P,
) -> Result<JudgeOutcome> {
    if responses.len() != cases.len() {
        return Err(Error::Contract(format!(
            "{} responses for {} cases",
            responses.len(),
            cases.len()
        )));
    }
    template.require(JUDGE_PLACEHOLDERS)?;
    let system = template.system_prompt();
    let mut outcome = JudgeOutcome::default();
    for (response, case) in responses.iter().zip(cases) {
        let vars = HashMap::from([
            ("query", case.query.as_str()),
            ("expected", case.expected.as_str()),
            ("response", response.as_str()),
        ]);
        let score = match provider.chat(&system, &template.render_user(&vars)) {
            Ok(reply) => parse_score(&reply).unwrap_or_else(|| {
                outcome.parse_failures += 1;
                0.0
            }),
            Err(e) => {
                log::warn!("judge call failed for {:?}: {e}", case.query);
                outcome.provider_errors += 1;
                0.0
            }
        };
        outcome.scores.push(score);
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub top_n: usize,
    pub lambda: f64,
    /// Reranked documents passed to the answer prompt.
    pub context_docs: usize,
    /// Characters of each context document's body included in the prompt.
    pub context_chars: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            top_n: crate::rerank::DEFAULT_TOP_N,
            lambda: crate::rerank::DEFAULT_LAMBDA,
            context_docs: 3,
            context_chars: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mode: RankMode,
    pub cases: usize,
    pub matched: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub substring_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge_mean: Option<f64>,
    pub judge_parse_failures: usize,
    pub judge_provider_errors: usize,
    pub answer_failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cases: usize,
    pub modes: Vec<ModeReport>,
}

/// Builds the answer prompt context: one tagged line per document.
pub fn answer_context(
    ranked: &[RankedResult],
    documents: &HashMap<&DocId, &Document>,
    chars: usize,
) -> String {
    ranked
        .iter()
        .filter_map(|r| {
            let doc = documents.get(&r.doc_id)?;
            let body: String = doc.body.chars().take(chars).collect();
            Some(format!("[{} trust={:.4}] {body}", r.doc_id, r.trust))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Runs every case through each mode: retrieve, rerank, answer from the top
/// documents, then grade. Per-case failures are counted, never fatal.
#[allow(clippy::too_many_arguments)]
pub fn run_eval<P: Provider + ?Sized>(
    cases: &[EvalCase],
    documents: &[Document],
    index: &EmbeddingIndex,
    trust: &TrustScores,
    modes: &[RankMode],
    provider: &P,
    answer_template: &PromptTemplate,
    judge_template: &PromptTemplate,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    for case in cases {
        case.validate()?;
    }
    if !(0.0..=1.0).contains(&settings.lambda) {
        return Err(Error::Contract(format!(
            "lambda must lie in [0, 1], got {}",
            settings.lambda
        )));
    }
    answer_template.require(ANSWER_PLACEHOLDERS)?;
    judge_template.require(JUDGE_PLACEHOLDERS)?;
    let by_id: HashMap<&DocId, &Document> = documents.iter().map(|d| (&d.id, d)).collect();
    let answer_system = answer_template.system_prompt();

    let retrieved: Vec<Option<_>> = cases
        .iter()
        .map(
            |case| match retrieve(&case.query, index, provider, settings.top_n) {
                Ok(hits) => Some(hits),
                Err(e) => {
                    log::warn!("retrieval failed for {:?}: {e}", case.query);
                    None
                }
            },
        )
        .collect();

    let mut reports = Vec::with_capacity(modes.len());
    for &mode in modes {
        let mut answer_failures = 0;
        let mut responses = Vec::with_capacity(cases.len());
        for (case, hits) in cases.iter().zip(&retrieved) {
            let Some(hits) = hits else {
                answer_failures += 1;
                responses.push(String::new());
                continue;
            };
            let ranked = rerank(hits, trust, mode, settings.lambda)?.results;
            let top = &ranked[..settings.context_docs.min(ranked.len())];
            let context = answer_context(top, &by_id, settings.context_chars);
            let vars = HashMap::from([
                ("context", context.as_str()),
                ("query", case.query.as_str()),
            ]);
            match provider.chat(&answer_system, &answer_template.render_user(&vars)) {
                Ok(answer) => responses.push(answer),
                Err(e) => {
                    log::warn!("answer generation failed for {:?}: {e}", case.query);
                    answer_failures += 1;
                    responses.push(String::new());
                }
            }
        }
        let matched = count_matches(&responses, cases)?;
        let judged = judge_scores(&responses, cases, judge_template, provider)?;
        reports.push(ModeReport {
            mode,
            cases: cases.len(),
            matched,
            substring_accuracy: (!cases.is_empty()).then(|| matched as f64 / cases.len() as f64),
            judge_mean: judged.mean(),
            judge_parse_failures: judged.parse_failures,
            judge_provider_errors: judged.provider_errors,
            answer_failures,
        });
    }
    Ok(EvalReport {
        cases: cases.len(),
        modes: reports,
    })
}

fn metric(value: Option<f64>) -> String {
    value.map_or_else(|| "n/a".to_string(), |v| format!("{v:.5}"))
}

/// Aligned text table with columns Mode, Substring Accuracy, LLM Avg Score.
pub fn render_table(report: &EvalReport) -> String {
    let header = ["Mode", "Substring Accuracy", "LLM Avg Score"];
    let rows: Vec<[String; 3]> = report
        .modes
        .iter()
        .map(|m| {
            [
                m.mode.to_string(),
                metric(m.substring_accuracy),
                metric(m.judge_mean),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: [&str; 3]| {
        let _ = writeln!(
            out,
            "{:<w0$}  {:<w1$}  {}",
            cells[0],
            cells[1],
            cells[2],
            w0 = widths[0],
            w1 = widths[1]
        );
    };
    line(header);
    for row in &rows {
        line([&row[0], &row[1], &row[2]]);
    }
    out
}

/// Deterministic query set over a corpus: for each of the first `n`
/// documents, ask about its title and expect the opening words of its body.
pub fn synthetic_cases(documents: &[Document], n: usize) -> Vec<EvalCase> {
    documents
        .iter()
        .filter_map(|doc| {
            let expected: Vec<&str> = doc
                .body
                .split_whitespace()
                .take(4)
                .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
                .filter(|w| !w.is_empty())
                .collect();
            if expected.is_empty() {
                return None;
            }
            let query = if doc.title.trim().is_empty() {
                format!("What does document {} report?", doc.id)
            } else {
                format!("What happened in the story \"{}\"?", doc.title.trim())
            };
            Some(EvalCase {
                query,
                expected: expected.join(" "),
            })
        })
        .take(n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::claims::TemplateSet;
    use crate::providers::{MockProvider, ProviderError};

    fn case(q: &str, e: &str) -> EvalCase {
        EvalCase {
            query: q.into(),
            expected: e.into(),
        }
    }

    #[test]
    fn accuracy_counts() {
        let cases = [
            case("q1", "Alice"),
            case("q2", "Bob"),
            case("q3", "New  York"),
        ];
        let responses = vec![
            "It was ALICE.".to_string(),
            "Carol".to_string(),
            "in new york city".to_string(),
        ];
        assert_eq!(count_matches(&responses, &cases).unwrap(), 2);
        assert_eq!(
            substring_accuracy(&responses, &cases).unwrap(),
            Some(2.0 / 3.0)
        );
        let exact: Vec<String> = cases.iter().map(|c| c.expected.clone()).collect();
        assert_eq!(substring_accuracy(&exact, &cases).unwrap(), Some(1.0));
        assert_eq!(substring_accuracy(&[], &[]).unwrap(), None);
        assert!(matches!(
            substring_accuracy(&exact[..1], &cases),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn score_line_grammar() {
        assert_eq!(parse_score("ok\nSCORE: 0.75"), Some(0.75));
        assert_eq!(parse_score("Score: 1"), Some(1.0));
        assert_eq!(parse_score("SCORE: 1.5"), None);
        assert_eq!(parse_score("SCORE: high"), None);
        assert_eq!(parse_score("SCORE: 0.5\nmore"), None);
    }

    #[test]
    fn judge_means() {
        let set = TemplateSet::bundled();
        let cases = vec![case("q", "e"); 3];
        let responses = vec!["r".to_string(); 3];
        let mock = MockProvider::scripted(vec!["SCORE: 1.0"; 3]);
        let out = judge_scores(&responses, &cases, &set.judge, &mock).unwrap();
        assert_eq!(out.mean(), Some(1.0));

        let mock = MockProvider::scripted(["SCORE: 0.2", "SCORE: 0.4", "SCORE: 0.6"]);
        let out = judge_scores(&responses, &cases, &set.judge, &mock).unwrap();
        assert_eq!(out.mean(), Some(0.4));
    }

    #[test]
    fn judge_failures_score_zero() {
        let set = TemplateSet::bundled();
        let cases = vec![case("q", "e"); 3];
        let responses = vec!["r".to_string(); 3];
        let mock = MockProvider::scripted_results([
            Ok("SCORE: 0.9".to_string()),
            Ok("no score here".to_string()),
            Err(ProviderError::Timeout),
        ]);
        let out = judge_scores(&responses, &cases, &set.judge, &mock).unwrap();
        assert_eq!(out.scores, [0.9, 0.0, 0.0]);
        assert_eq!((out.parse_failures, out.provider_errors), (1, 1));
    }

    #[test]
    fn table_layout() {
        let report = EvalReport {
            cases: 200,
            modes: vec![
                ModeReport {
                    mode: RankMode::Vanilla,
                    cases: 200,
                    matched: 3,
                    substring_accuracy: Some(0.015),
                    judge_mean: Some(0.36475),
                    judge_parse_failures: 0,
                    judge_provider_errors: 0,
                    answer_failures: 0,
                },
                ModeReport {
                    mode: RankMode::Score,
                    cases: 200,
                    matched: 3,
                    substring_accuracy: Some(0.015),
                    judge_mean: Some(0.4055),
                    judge_parse_failures: 0,
                    judge_provider_errors: 0,
                    answer_failures: 0,
                },
            ],
        };
        let table = render_table(&report);
        assert_eq!(
            table,
            "Mode     Substring Accuracy  LLM Avg Score\n\
             vanilla  0.01500             0.36475\n\
             score    0.01500             0.40550\n"
        );
    }

    #[test]
    fn synthetic_cases_are_valid() {
        let docs: Vec<Document> = (0..3)
            .map(|i| Document {
                id: DocId::from_index(i).unwrap(),
                title: format!("Story {i}"),
                body: format!("\"Senator Smith{i}\" said on Monday that taxes rise."),
                published: None,
                seed: crate::model::Seed::Unknown,
            })
            .collect();
        let cases = synthetic_cases(&docs, 2);
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].expected, "Senator Smith0 said on");
        cases.iter().for_each(|c| c.validate().unwrap());
    }
}
