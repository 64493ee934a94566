use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{l2_normalize, Provider, ProviderError};

/// How the mock answers chat requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockMode {
    /// Returns the user prompt unchanged.
    Echo,
    /// Pops the next reply from a fixed transcript.
    Scripted,
    /// Recognises the bundled prompt templates and answers each with a
    /// simple lexical rule. Anything unrecognised is echoed.
    Heuristic,
}

/// Deterministic offline provider.
///
/// Embeddings are a bag of hashed tokens: every lower-cased word maps to a
/// seeded pseudo-random vector, and a text embeds as the normalized sum of its
/// words. Identical texts get identical vectors and texts sharing vocabulary
/// score high on cosine similarity.
pub struct MockProvider {
    mode: MockMode,
    seed: u64,
    dim: usize,
    script: Mutex<VecDeque<Result<String, ProviderError>>>,
    fixed_embeddings: HashMap<String, Vec<f64>>,
    chat_calls: AtomicUsize,
    embed_batches: Mutex<Vec<usize>>,
}

impl MockProvider {
    pub const DEFAULT_DIM: usize = 64;

    fn with_mode(mode: MockMode, seed: u64) -> Self {
        MockProvider {
            mode,
            seed,
            dim: Self::DEFAULT_DIM,
            script: Mutex::new(VecDeque::new()),
            fixed_embeddings: HashMap::new(),
            chat_calls: AtomicUsize::new(0),
            embed_batches: Mutex::new(Vec::new()),
        }
    }

    pub fn echo() -> Self {
        Self::with_mode(MockMode::Echo, 0)
    }

    pub fn heuristic(seed: u64) -> Self {
        Self::with_mode(MockMode::Heuristic, seed)
    }

    pub fn scripted<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::scripted_results(replies.into_iter().map(|s| Ok(s.into())))
    }

    /// Transcript that may include failures, replayed in call order.
    pub fn scripted_results<I>(replies: I) -> Self
    where
        I: IntoIterator<Item = Result<String, ProviderError>>,
    {
        let mock = Self::with_mode(MockMode::Scripted, 0);
        mock.script.lock().unwrap().extend(replies);
        mock
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        self.dim = dim;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Pins the embedding of an exact text; it is normalized on return.
    pub fn with_embedding(mut self, text: impl Into<String>, vector: Vec<f64>) -> Self {
        self.fixed_embeddings.insert(text.into(), vector);
        self
    }

    pub fn mode(&self) -> MockMode {
        self.mode
    }

    pub fn chat_calls(&self) -> usize {
        self.chat_calls.load(Ordering::SeqCst)
    }

    /// Sizes of every embedding batch requested so far, in call order.
    pub fn embed_batches(&self) -> Vec<usize> {
        self.embed_batches.lock().unwrap().clone()
    }

    pub fn remaining_script(&self) -> usize {
        self.script.lock().unwrap().len()
    }

    fn hashed_embedding(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let tokens = tokens(text);
        if tokens.is_empty() {
            self.add_token_vector(&format!("\u{0}{text}"), &mut v);
        }
        for token in &tokens {
            self.add_token_vector(token, &mut v);
        }
        v
    }

    fn add_token_vector(&self, token: &str, acc: &mut [f64]) {
        for (block, chunk) in acc.chunks_mut(8).enumerate() {
            let mut hasher = Sha256::new();
            hasher.update(self.seed.to_le_bytes());
            hasher.update((block as u64).to_le_bytes());
            hasher.update(token.as_bytes());
            let digest = hasher.finalize();
            for (slot, bytes) in chunk.iter_mut().zip(digest.chunks_exact(4)) {
                let raw = u32::from_le_bytes(bytes.try_into().expect("4-byte chunk"));
                *slot += raw as f64 / u32::MAX as f64 * 2.0 - 1.0;
            }
        }
    }
}

impl Provider for MockProvider {
    fn chat(&self, _system: &str, user: &str) -> Result<String, ProviderError> {
        self.chat_calls.fetch_add(1, Ordering::SeqCst);
        match self.mode {
            MockMode::Echo => Ok(user.to_string()),
            MockMode::Scripted => self.script.lock().unwrap().pop_front().unwrap_or_else(|| {
                Err(ProviderError::Protocol("mock transcript exhausted".into()))
            }),
            MockMode::Heuristic => Ok(heuristic_reply(user)),
        }
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        self.embed_batches.lock().unwrap().push(texts.len());
        let mut vectors: Vec<Vec<f64>> = Vec::with_capacity(texts.len());
        for text in texts {
            let mut v = match self.fixed_embeddings.get(text) {
                Some(fixed) => fixed.clone(),
                None => self.hashed_embedding(text),
            };
            if let Some(first) = vectors.first().map(Vec::len).filter(|&d| d != v.len()) {
                return Err(ProviderError::Protocol(format!(
                    "embedding dimension mismatch within batch: {} vs {first}",
                    v.len()
                )));
            }
            l2_normalize(&mut v)?;
            vectors.push(v);
        }
        Ok(vectors)
    }

    fn max_in_flight(&self) -> usize {
        match self.mode {
            // A transcript is consumed in call order, so it must stay sequential.
            MockMode::Scripted => 1,
            MockMode::Echo | MockMode::Heuristic => 4,
        }
    }
}

const NEGATIONS: [&str; 8] = [
    "not", "no", "never", "denied", "denies", "false", "didn't", "won't",
];

fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn field_after<'a>(text: &'a str, label: &str) -> Option<&'a str> {
    let start = text.find(label)? + label.len();
    let rest = &text[start..];
    Some(rest.split('\n').next().unwrap_or(rest).trim())
}

fn heuristic_reply(user: &str) -> String {
    if let (Some(a), Some(b)) = (field_after(user, "Claim 1:"), field_after(user, "Claim 2:")) {
        return format!("Comparing the two claims.\nANSWER: {}", verdict(a, b));
    }
    if let (Some(expected), Some(start)) = (
        field_after(user, "Expected answer:"),
        user.find("Response:"),
    ) {
        let response = user[start + "Response:".len()..].trim();
        return format!(
            "Judging the response.\nSCORE: {:.2}",
            judge(expected, response)
        );
    }
    if let Some(start) = user.find("Context:") {
        let context = &user[start + "Context:".len()..];
        let first = context
            .lines()
            .map(str::trim)
            .find(|l| !l.is_empty() && !l.starts_with("Question:"))
            .unwrap_or("");
        let body = first.split_once("] ").map_or(first, |(_, body)| body);
        return body.chars().take(400).collect();
    }
    if let Some(start) = user.find("Document:\n") {
        let document = &user[start + "Document:\n".len()..];
        return sentences(document)
            .into_iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {s}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
    }
    user.to_string()
}

fn sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        let boundary =
            matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace());
        if boundary {
            push_sentence(&mut out, &current);
            current.clear();
        }
    }
    push_sentence(&mut out, &current);
    out
}

fn push_sentence(out: &mut Vec<String>, raw: &str) {
    let s = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if s.split(' ').count() >= 3 {
        out.push(s);
    }
}

fn verdict(a: &str, b: &str) -> i8 {
    let ta = tokens(a);
    let tb = tokens(b);
    let negated = |t: &[String]| t.iter().any(|w| NEGATIONS.contains(&w.as_str()));
    let numbers = |t: &[String]| -> HashSet<String> {
        t.iter()
            .filter(|w| w.chars().any(|c| c.is_ascii_digit()))
            .cloned()
            .collect()
    };
    let words = |t: &[String]| -> HashSet<String> {
        t.iter()
            .filter(|w| {
                w.len() > 2
                    && !NEGATIONS.contains(&w.as_str())
                    && !w.chars().any(|c| c.is_ascii_digit())
            })
            .cloned()
            .collect()
    };
    let (wa, wb) = (words(&ta), words(&tb));
    let union = wa.union(&wb).count();
    let overlap = if union == 0 {
        0.0
    } else {
        wa.intersection(&wb).count() as f64 / union as f64
    };
    let (na, nb) = (numbers(&ta), numbers(&tb));
    let numbers_conflict = !na.is_empty() && !nb.is_empty() && na.is_disjoint(&nb);
    if overlap >= 0.3 && (negated(&ta) != negated(&tb) || numbers_conflict) {
        -1
    } else if overlap >= 0.5 {
        1
    } else {
        0
    }
}

fn judge(expected: &str, response: &str) -> f64 {
    let norm = |s: &str| {
        s.split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .to_lowercase()
    };
    if norm(response).contains(&norm(expected)) {
        return 1.0;
    }
    let wanted = tokens(expected);
    if wanted.is_empty() {
        return 0.0;
    }
    let have: HashSet<String> = tokens(response).into_iter().collect();
    wanted.iter().filter(|t| have.contains(*t)).count() as f64 / wanted.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn echo_returns_user_prompt() {
        assert_eq!(
            MockProvider::echo().chat("sys", "hello there").unwrap(),
            "hello there"
        );
    }

    #[test]
    fn same_text_same_vector() {
        let mock = MockProvider::heuristic(7);
        let texts = vec![
            "Alpha beta.".to_string(),
            "Alpha beta.".to_string(),
            "gamma".to_string(),
        ];
        let v = mock.embed(&texts).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[0], v[1]);
        assert!(v.iter().all(|x| x.len() == MockProvider::DEFAULT_DIM));
        for x in &v {
            let norm = x.iter().map(|c| c * c).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn seed_changes_vectors() {
        let t = vec!["Alpha".to_string()];
        let a = MockProvider::heuristic(1).embed(&t).unwrap();
        let b = MockProvider::heuristic(2).embed(&t).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn scripted_replays_then_errors() {
        let mock = MockProvider::scripted(["one", "two"]);
        assert_eq!(mock.chat("", "").unwrap(), "one");
        assert_eq!(mock.chat("", "").unwrap(), "two");
        assert!(matches!(mock.chat("", ""), Err(ProviderError::Protocol(_))));
        assert_eq!(mock.max_in_flight(), 1);
    }

    #[test]
    fn heuristic_verdicts() {
        assert_eq!(
            verdict("The senate passed bill X.", "The senate passed bill X."),
            1
        );
        assert_eq!(
            verdict("Turnout was 60 percent.", "Turnout was 40 percent."),
            -1
        );
        assert_eq!(
            verdict(
                "The senate passed the bill.",
                "The senate did not pass the bill."
            ),
            -1
        );
        assert_eq!(verdict("Cats purr.", "Stocks fell sharply on Monday."), 0);
    }

    #[test]
    fn heuristic_extraction_numbers_sentences() {
        let reply = heuristic_reply(
            "Title: x\nDocument:\nAlice won the vote. Bob lost the race badly! Ok.",
        );
        assert_eq!(reply, "1. Alice won the vote.\n2. Bob lost the race badly!");
    }

    #[test]
    fn heuristic_judge_scores_substring() {
        let reply = heuristic_reply(
            "Question: q\nExpected answer: Alice\nResponse: It was alice, clearly.",
        );
        assert!(reply.ends_with("SCORE: 1.00"), "{reply}");
    }
}
