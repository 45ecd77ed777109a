use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::AugmentError;

pub const DEFAULT_SYSTEM_TEXT: &str = "You are an expert software developer. Write a concise commit message for the given code diff. Output only the commit message.";

const DEFAULT_DIRECT_USER: &str = "Code diff:\n{query_diff}\n";

const DEFAULT_REACT_USER: &str = "Here is a similar code diff and its commit message as an example.\n\
\n\
Example code diff:\n\
{retrieved_diff}\n\
\n\
Example commit message:\n\
{retrieved_msg}\n\
\n\
Now write the commit message for this code diff.\n\
\n\
Code diff:\n\
{query_diff}\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TemplateKind {
    Direct,
    React,
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Direct => "direct",
            Self::React => "react",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placeholder {
    QueryDiff,
    RetrievedDiff,
    RetrievedMsg,
}

impl Placeholder {
    const ALL: [(&'static str, Placeholder); 3] = [
        ("{query_diff}", Placeholder::QueryDiff),
        ("{retrieved_diff}", Placeholder::RetrievedDiff),
        ("{retrieved_msg}", Placeholder::RetrievedMsg),
    ];
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(Placeholder),
}

/// A chat prompt template. The user text holds `{query_diff}` and, for the
/// exemplar-guided form, `{retrieved_diff}` and `{retrieved_msg}`, each
/// exactly once. Substitution is single-pass, so placeholder-like text
/// inside a diff is never expanded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    kind: TemplateKind,
    system_text: String,
    user_text: String,
    segments: Vec<Segment>,
}

fn parse_segments(text: &str) -> Vec<Segment> {
    let mut segments = Vec::new();
    let mut rest = text;
    while !rest.is_empty() {
        let next = Placeholder::ALL
            .iter()
            .filter_map(|(pat, ph)| rest.find(pat).map(|at| (at, *pat, *ph)))
            .min_by_key(|(at, _, _)| *at);
        match next {
            Some((at, pat, ph)) => {
                if at > 0 {
                    segments.push(Segment::Literal(rest[..at].to_string()));
                }
                segments.push(Segment::Slot(ph));
                rest = &rest[at + pat.len()..];
            }
            None => {
                segments.push(Segment::Literal(rest.to_string()));
                rest = "";
            }
        }
    }
    segments
}

impl PromptTemplate {
    pub fn new(kind: TemplateKind, system_text: impl Into<String>, user_text: impl Into<String>) -> Result<Self, AugmentError> {
        let user_text = user_text.into();
        let segments = parse_segments(&user_text);
        let count = |p: Placeholder| segments.iter().filter(|s| **s == Segment::Slot(p)).count();
        let expected: &[(Placeholder, usize)] = match kind {
            TemplateKind::React => &[(Placeholder::QueryDiff, 1), (Placeholder::RetrievedDiff, 1), (Placeholder::RetrievedMsg, 1)],
            TemplateKind::Direct => &[(Placeholder::QueryDiff, 1), (Placeholder::RetrievedDiff, 0), (Placeholder::RetrievedMsg, 0)],
        };
        for &(ph, n) in expected {
            let got = count(ph);
            if got != n {
                let name = Placeholder::ALL.iter().find(|(_, p)| *p == ph).expect("listed").0;
                return Err(AugmentError::InvalidTemplate {
                    name: kind.to_string(),
                    reason: format!("{name} appears {got} time(s), expected {n}"),
                });
            }
        }
        Ok(Self { kind, system_text: system_text.into(), user_text, segments })
    }

    pub fn direct() -> Self {
        Self::new(TemplateKind::Direct, DEFAULT_SYSTEM_TEXT, DEFAULT_DIRECT_USER).expect("built-in template is valid")
    }

    pub fn react() -> Self {
        Self::new(TemplateKind::React, DEFAULT_SYSTEM_TEXT, DEFAULT_REACT_USER).expect("built-in template is valid")
    }

    pub fn builtin(kind: TemplateKind) -> Self {
        match kind {
            TemplateKind::Direct => Self::direct(),
            TemplateKind::React => Self::react(),
        }
    }

    /// Loads `<kind>.system.txt` and `<kind>.user.txt` from `dir`; a missing
    /// file falls back to the built-in text.
    pub fn load(dir: &Path, kind: TemplateKind) -> Result<Self, AugmentError> {
        let builtin = Self::builtin(kind);
        let read = |suffix: &str, fallback: &str| -> Result<String, AugmentError> {
            let path = dir.join(format!("{kind}.{suffix}.txt"));
            match std::fs::read_to_string(&path) {
                Ok(text) => Ok(text),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(fallback.to_string()),
                Err(source) => Err(AugmentError::ReadTemplate { path: path.display().to_string(), source }),
            }
        };
        let system = read("system", &builtin.system_text)?;
        let user = read("user", &builtin.user_text)?;
        Self::new(kind, system.trim_end_matches('\n'), user)
    }

    pub fn kind(&self) -> TemplateKind {
        self.kind
    }

    pub fn system_text(&self) -> &str {
        &self.system_text
    }

    pub fn user_text(&self) -> &str {
        &self.user_text
    }

    pub(crate) fn render_user(&self, query_diff: &str, retrieved_diff: Option<&str>, retrieved_msg: Option<&str>) -> String {
        let mut out = String::with_capacity(self.user_text.len() + query_diff.len());
        for seg in &self.segments {
            match seg {
                Segment::Literal(s) => out.push_str(s),
                Segment::Slot(Placeholder::QueryDiff) => out.push_str(query_diff),
                Segment::Slot(Placeholder::RetrievedDiff) => out.push_str(retrieved_diff.unwrap_or_default()),
                Segment::Slot(Placeholder::RetrievedMsg) => out.push_str(retrieved_msg.unwrap_or_default()),
            }
        }
        out
    }
}
