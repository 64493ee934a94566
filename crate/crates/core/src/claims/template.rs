//! Prompt templates stored as editable text assets.
//!
//! ```text
//! ---
//! name: compare_claims
//! example.input: Claim 1: ...\nClaim 2: ...
//! example.output: ...\nANSWER: 1
//! ---
//! [system]
//! ...
//! [user]
//! Claim 1: {claim_a}
//! Claim 2: {claim_b}
//! ```
//!
//! Front-matter values use `\n` for line breaks and `\\` for a backslash.
//! Every `example.input` opens a few-shot pair closed by the next
//! `example.output`.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub system: String,
    pub user_pattern: String,
    pub few_shot: Vec<(String, String)>,
}

impl PromptTemplate {
    pub fn parse(source: &str) -> Result<Self> {
        let bad = |msg: &str| Error::Validation(format!("prompt template: {msg}"));
        let mut lines = source.lines();
        if lines.next().map(str::trim) != Some("---") {
            return Err(bad("missing opening `---` front-matter line"));
        }
        let mut name = None;
        let mut few_shot = Vec::new();
        let mut pending_input: Option<String> = None;
        loop {
            let line = lines
                .next()
                .ok_or_else(|| bad("unterminated front matter"))?;
            if line.trim() == "---" {
                break;
            }
            if line.trim().is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once(':')
                .ok_or_else(|| bad(&format!("front-matter line without `key:` ({line})")))?;
            let value = unescape(value.trim());
            match key.trim() {
                "name" => name = Some(value),
                "example.input" => {
                    if pending_input.replace(value).is_some() {
                        return Err(bad("example.input without a matching example.output"));
                    }
                }
                "example.output" => {
                    let input = pending_input
                        .take()
                        .ok_or_else(|| bad("example.output without a preceding example.input"))?;
                    few_shot.push((input, value));
                }
                other => return Err(bad(&format!("unknown front-matter key `{other}`"))),
            }
        }
        if pending_input.is_some() {
            return Err(bad("example.input without a matching example.output"));
        }

        let mut system = Vec::new();
        let mut user = Vec::new();
        let mut section: Option<&mut Vec<&str>> = None;
        for line in lines {
            match line.trim_end() {
                "[system]" => section = Some(&mut system),
                "[user]" => section = Some(&mut user),
                _ => match section.as_deref_mut() {
                    Some(buf) => buf.push(line),
                    None if line.trim().is_empty() => {}
                    None => return Err(bad("text before the first [system] or [user] section")),
                },
            }
        }
        let user_pattern = user.join("\n").trim().to_string();
        if user_pattern.is_empty() {
            return Err(bad("empty [user] section"));
        }
        Ok(PromptTemplate {
            name: name.ok_or_else(|| bad("missing `name`"))?,
            system: system.join("\n").trim().to_string(),
            user_pattern,
            few_shot,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&source).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    /// Fails unless the user pattern mentions every `{placeholder}` in `names`.
    pub fn require(&self, names: &[&str]) -> Result<()> {
        for name in names {
            if !self.user_pattern.contains(&format!("{{{name}}}")) {
                return Err(Error::Validation(format!(
                    "template `{}` lacks required placeholder {{{name}}}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    /// System prompt with the few-shot examples appended.
    pub fn system_prompt(&self) -> String {
        let mut out = self.system.clone();
        if !self.few_shot.is_empty() {
            out.push_str("\n\nExamples:");
            for (input, output) in &self.few_shot {
                out.push_str("\n\nInput:\n");
                out.push_str(input);
                out.push_str("\nOutput:\n");
                out.push_str(output);
            }
        }
        out
    }

    /// Substitutes `{name}` placeholders in one pass, so placeholder-like text
    /// inside substituted values is left untouched. Unknown names stay verbatim.
    pub fn render_user(&self, vars: &HashMap<&str, &str>) -> String {
        let pattern = self.user_pattern.as_str();
        let mut out = String::with_capacity(pattern.len());
        let mut rest = pattern;
        while let Some(open) = rest.find('{') {
            out.push_str(&rest[..open]);
            let after = &rest[open + 1..];
            match after.find('}') {
                Some(close) if is_ident(&after[..close]) => {
                    let key = &after[..close];
                    match vars.get(key) {
                        Some(value) => out.push_str(value),
                        None => out.push_str(&rest[open..open + close + 2]),
                    }
                    rest = &after[close + 1..];
                }
                _ => {
                    out.push('{');
                    rest = after;
                }
            }
        }
        out.push_str(rest);
        out
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn unescape(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// The four prompts the pipeline uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub extract: PromptTemplate,
    pub compare: PromptTemplate,
    pub answer: PromptTemplate,
    pub judge: PromptTemplate,
}

pub const EXTRACT_PLACEHOLDERS: &[&str] = &["document"];
pub const COMPARE_PLACEHOLDERS: &[&str] = &["claim_a", "claim_b"];
pub const ANSWER_PLACEHOLDERS: &[&str] = &["context", "query"];
pub const JUDGE_PLACEHOLDERS: &[&str] = &["query", "expected", "response"];

const FILES: [(&str, &str); 4] = [
    (
        "extract_claims.txt",
        include_str!("../../assets/templates/extract_claims.txt"),
    ),
    (
        "compare_claims.txt",
        include_str!("../../assets/templates/compare_claims.txt"),
    ),
    (
        "answer.txt",
        include_str!("../../assets/templates/answer.txt"),
    ),
    (
        "judge.txt",
        include_str!("../../assets/templates/judge.txt"),
    ),
];

impl TemplateSet {
    /// The templates shipped with the crate.
    pub fn bundled() -> Self {
        let [extract, compare, answer, judge] =
            FILES.map(|(_, src)| PromptTemplate::parse(src).expect("bundled template parses"));
        TemplateSet {
            extract,
            compare,
            answer,
            judge,
        }
    }

    /// Reads templates from `dir`, falling back to the bundled copy for any
    /// file that is absent.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let [extract, compare, answer, judge] = FILES.map(|(file, src)| {
            let path = dir.join(file);
            if path.exists() {
                PromptTemplate::load(&path)
            } else {
                PromptTemplate::parse(src)
            }
        });
        let set = TemplateSet {
            extract: extract?,
            compare: compare?,
            answer: answer?,
            judge: judge?,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        self.extract.require(EXTRACT_PLACEHOLDERS)?;
        self.compare.require(COMPARE_PLACEHOLDERS)?;
        self.answer.require(ANSWER_PLACEHOLDERS)?;
        self.judge.require(JUDGE_PLACEHOLDERS)
    }

    /// Writes the bundled templates into `dir` for editing.
    pub fn write_bundled(dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (file, src) in FILES {
            let path = dir.join(file);
            std::fs::write(&path, src).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }
}
