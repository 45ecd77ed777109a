//! Input augmentation: joins a query diff with its retrieved exemplar.
//!
//! Fine-tuned sequence-to-sequence models take the special-token form
//! `[QUERY]<query diff>[DIFF]<retrieved diff>[MSG]<retrieved msg>`; chat
//! models take a system + user prompt rendered from a [`PromptTemplate`].

mod template;

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DiffMessagePair;
use crate::text::{count_tokens, prefix_end_for_tokens};

pub use template::{PromptTemplate, TemplateKind, DEFAULT_SYSTEM_TEXT};

pub const QUERY_MARKER: &str = "[QUERY]";
pub const DIFF_MARKER: &str = "[DIFF]";
pub const MSG_MARKER: &str = "[MSG]";
pub const TRUNCATION_MARKER: &str = "…[truncated]";

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("{field} contains the reserved marker {marker}")]
    MarkerCollision { field: &'static str, marker: &'static str },
    #[error("invalid template {name}: {reason}")]
    InvalidTemplate { name: String, reason: String },
    #[error("template {template} {reason}")]
    ExemplarMismatch { template: TemplateKind, reason: &'static str },
    #[error("prompt needs {needed} tokens even with every field truncated; budget is {budget}")]
    BudgetImpossible { needed: usize, budget: usize },
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("cannot read template {path}: {source}")]
    ReadTemplate { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub query_id: Option<String>,
    pub exemplar_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AugmentedInput {
    PlmConcat { plm_text: String, provenance: Provenance },
    LlmPrompt { messages: Vec<ChatMessage>, provenance: Provenance },
}

impl AugmentedInput {
    pub fn provenance(&self) -> &Provenance {
        match self {
            Self::PlmConcat { provenance, .. } | Self::LlmPrompt { provenance, .. } => provenance,
        }
    }

    pub fn with_query_id(mut self, id: impl Into<String>) -> Self {
        match &mut self {
            Self::PlmConcat { provenance, .. } | Self::LlmPrompt { provenance, .. } => {
                provenance.query_id = Some(id.into())
            }
        }
        self
    }

    pub fn messages(&self) -> Option<&[ChatMessage]> {
        match self {
            Self::LlmPrompt { messages, .. } => Some(messages),
            Self::PlmConcat { .. } => None,
        }
    }

    pub fn plm_text(&self) -> Option<&str> {
        match self {
            Self::PlmConcat { plm_text, .. } => Some(plm_text),
            Self::LlmPrompt { .. } => None,
        }
    }

    pub fn token_count(&self) -> usize {
        match self {
            Self::PlmConcat { plm_text, .. } => count_tokens(plm_text),
            Self::LlmPrompt { messages, .. } => messages.iter().map(|m| count_tokens(&m.content)).sum(),
        }
    }
}

fn check_markers(field: &'static str, text: &str) -> Result<(), AugmentError> {
    for marker in [QUERY_MARKER, DIFF_MARKER, MSG_MARKER] {
        if text.contains(marker) {
            return Err(AugmentError::MarkerCollision { field, marker });
        }
    }
    Ok(())
}

pub fn concat_plm(query_diff: &str, exemplar: &DiffMessagePair) -> Result<AugmentedInput, AugmentError> {
    check_markers("query diff", query_diff)?;
    check_markers("exemplar diff", &exemplar.diff_text)?;
    check_markers("exemplar message", &exemplar.message_text)?;
    let plm_text = [QUERY_MARKER, query_diff, DIFF_MARKER, &exemplar.diff_text, MSG_MARKER, &exemplar.message_text].concat();
    Ok(AugmentedInput::PlmConcat {
        plm_text,
        provenance: Provenance { query_id: None, exemplar_id: Some(exemplar.id.clone()) },
    })
}

/// Fields of a prompt that may be cut, in the order they are cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptField {
    RetrievedDiff,
    QueryDiff,
    RetrievedMsg,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenBudget {
    pub max_total: usize,
    pub truncation_order: Vec<PromptField>,
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self {
            max_total: 3500,
            truncation_order: vec![PromptField::RetrievedDiff, PromptField::QueryDiff, PromptField::RetrievedMsg],
        }
    }
}

/// Keeps the first `n` tokens of `text` and appends the truncation line.
fn truncate_field(text: &str, n: usize) -> String {
    let prefix = &text[..prefix_end_for_tokens(text, n)];
    if prefix.is_empty() {
        TRUNCATION_MARKER.to_string()
    } else {
        format!("{prefix}\n{TRUNCATION_MARKER}")
    }
}

struct Fields {
    query_diff: String,
    retrieved_diff: Option<String>,
    retrieved_msg: Option<String>,
}

impl Fields {
    fn slot(&mut self, field: PromptField) -> Option<&mut String> {
        match field {
            PromptField::QueryDiff => Some(&mut self.query_diff),
            PromptField::RetrievedDiff => self.retrieved_diff.as_mut(),
            PromptField::RetrievedMsg => self.retrieved_msg.as_mut(),
        }
    }
}

pub fn render_llm_prompt(
    query_diff: &str,
    exemplar: Option<&DiffMessagePair>,
    template: &PromptTemplate,
    budget: &TokenBudget,
) -> Result<AugmentedInput, AugmentError> {
    match (template.kind(), exemplar) {
        (TemplateKind::React, None) => {
            return Err(AugmentError::ExemplarMismatch { template: TemplateKind::React, reason: "requires an exemplar" })
        }
        (TemplateKind::Direct, Some(_)) => {
            return Err(AugmentError::ExemplarMismatch { template: TemplateKind::Direct, reason: "takes no exemplar" })
        }
        _ => {}
    }
    let mut fields = Fields {
        query_diff: query_diff.to_string(),
        retrieved_diff: exemplar.map(|e| e.diff_text.clone()),
        retrieved_msg: exemplar.map(|e| e.message_text.clone()),
    };
    let system_tokens = count_tokens(template.system_text());
    let cost = |f: &Fields| {
        system_tokens
            + count_tokens(&template.render_user(&f.query_diff, f.retrieved_diff.as_deref(), f.retrieved_msg.as_deref()))
    };

    for &field in &budget.truncation_order {
        if cost(&fields) <= budget.max_total {
            break;
        }
        let Some(original) = fields.slot(field).map(|s| s.clone()) else { continue };
        let available = count_tokens(&original);
        // Largest kept-token count that fits; cost grows with the count.
        let (mut lo, mut hi) = (0usize, available.saturating_sub(1));
        let fits = |n: usize, fields: &mut Fields| {
            *fields.slot(field).expect("slot present") = truncate_field(&original, n);
            cost(fields) <= budget.max_total
        };
        if !fits(0, &mut fields) {
            continue;
        }
        while lo < hi {
            let mid = lo + (hi - lo + 1) / 2;
            if fits(mid, &mut fields) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        *fields.slot(field).expect("slot present") = truncate_field(&original, lo);
    }
    let needed = cost(&fields);
    if needed > budget.max_total {
        return Err(AugmentError::BudgetImpossible { needed, budget: budget.max_total });
    }

    let user = template.render_user(&fields.query_diff, fields.retrieved_diff.as_deref(), fields.retrieved_msg.as_deref());
    Ok(AugmentedInput::LlmPrompt {
        messages: vec![
            ChatMessage { role: Role::System, content: template.system_text().to_string() },
            ChatMessage { role: Role::User, content: user },
        ],
        provenance: Provenance { query_id: None, exemplar_id: exemplar.map(|e| e.id.clone()) },
    })
}

#[derive(Serialize)]
struct FinetuneLine<'a> {
    input: &'a str,
    target: &'a str,
}

/// Writes one `{"input": <concatenation>, "target": <query message>}` line
/// per (query, exemplar) pair, in order.
pub fn write_finetune_dataset(
    pairs: &[(DiffMessagePair, DiffMessagePair)],
    mut out: impl Write,
) -> Result<usize, AugmentError> {
    let io = |source| AugmentError::Write { path: "<stream>".into(), source };
    for (query, exemplar) in pairs {
        let input = concat_plm(&query.diff_text, exemplar)?;
        let line = FinetuneLine { input: input.plm_text().expect("concat form"), target: &query.message_text };
        serde_json::to_writer(&mut out, &line).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)?;
    Ok(pairs.len())
}

pub fn export_finetune_dataset(
    pairs: &[(DiffMessagePair, DiffMessagePair)],
    out: &Path,
) -> Result<usize, AugmentError> {
    let file = fs::File::create(out).map_err(|source| AugmentError::Write { path: out.display().to_string(), source })?;
    write_finetune_dataset(pairs, BufWriter::new(file)).map_err(|e| match e {
        AugmentError::Write { source, .. } => AugmentError::Write { path: out.display().to_string(), source },
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pair(id: &str, diff: &str, msg: &str) -> DiffMessagePair {
        DiffMessagePair::new(id, diff, msg)
    }

    #[test]
    fn concat_format() {
        let got = concat_plm("q", &pair("e", "d", "m")).unwrap();
        assert_eq!(got.plm_text(), Some("[QUERY]q[DIFF]d[MSG]m"));
        assert_eq!(concat_plm("", &pair("e", "d", "m")).unwrap().plm_text(), Some("[QUERY][DIFF]d[MSG]m"));
        assert_eq!(got.provenance().exemplar_id.as_deref(), Some("e"));
    }

    #[test]
    fn concat_rejects_marker_collisions() {
        let err = concat_plm("see [MSG] here", &pair("e", "d", "m")).unwrap_err();
        assert!(matches!(err, AugmentError::MarkerCollision { field: "query diff", marker: "[MSG]" }));
        assert!(concat_plm("q", &pair("e", "[QUERY]", "m")).is_err());
    }

    #[test]
    fn react_prompt_substitutes_once() {
        let ex = pair("e", "- old_call()\n+ new_call()", "use new_call");
        let got = render_llm_prompt("+ fresh_line", Some(&ex), &PromptTemplate::react(), &TokenBudget::default()).unwrap();
        let msgs = got.messages().unwrap();
        assert_eq!(msgs.len(), 2);
        assert_eq!(msgs[0].role, Role::System);
        assert_eq!(msgs[0].content, DEFAULT_SYSTEM_TEXT);
        let user = &msgs[1].content;
        assert_eq!(user.matches("+ fresh_line").count(), 1);
        assert_eq!(user.matches("- old_call()\n+ new_call()").count(), 1);
        assert_eq!(user.matches("use new_call").count(), 1);
    }

    #[test]
    fn direct_prompt_has_no_exemplar() {
        let got = render_llm_prompt("+ x", None, &PromptTemplate::direct(), &TokenBudget::default()).unwrap();
        let text: String = got.messages().unwrap().iter().map(|m| m.content.as_str()).collect();
        assert!(text.contains("+ x"));
        assert!(!text.to_lowercase().contains("example"));
        assert!(render_llm_prompt("+ x", Some(&pair("e", "d", "m")), &PromptTemplate::direct(), &TokenBudget::default()).is_err());
        assert!(render_llm_prompt("+ x", None, &PromptTemplate::react(), &TokenBudget::default()).is_err());
    }

    #[test]
    fn long_exemplar_diff_is_cut_first() {
        let long = (0..10_000).map(|i| format!("t{i}")).collect::<Vec<_>>().join(" ");
        let ex = pair("e", &long, "keep this message");
        let budget = TokenBudget::default();
        let got = render_llm_prompt("+ query_line here", Some(&ex), &PromptTemplate::react(), &budget).unwrap();
        assert!(got.token_count() <= 3500);
        assert!(got.token_count() >= 3490, "budget should be used, got {}", got.token_count());
        let user = &got.messages().unwrap()[1].content;
        assert!(user.contains("+ query_line here"));
        assert!(user.contains("keep this message"));
        assert_eq!(user.matches(TRUNCATION_MARKER).count(), 1);
    }

    #[test]
    fn impossible_budget_errors() {
        let budget = TokenBudget { max_total: 3, ..Default::default() };
        let err = render_llm_prompt("q", None, &PromptTemplate::direct(), &budget).unwrap_err();
        assert!(matches!(err, AugmentError::BudgetImpossible { .. }));
    }

    #[test]
    fn finetune_export() {
        let pairs = vec![
            (pair("q1", "+ a", "fix a"), pair("e1", "+ b", "fix b")),
            (pair("q2", "+ c", "fix c"), pair("e2", "+ d", "fix d")),
            (pair("q3", "+ e", "fix e"), pair("e3", "+ f", "fix f")),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.jsonl");
        assert_eq!(export_finetune_dataset(&pairs, &path).unwrap(), 3);
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(lines.len(), 3);
        for (line, (q, _)) in lines.iter().zip(&pairs) {
            assert!(line["input"].as_str().unwrap().starts_with("[QUERY]"));
            assert_eq!(line["target"], q.message_text.as_str());
        }
        assert_eq!(lines[0]["input"], "[QUERY]+ a[DIFF]+ b[MSG]fix b");
    }

    proptest! {
        #[test]
        fn budget_is_never_exceeded(
            query in "[a-z +\\-\\n]{0,300}",
            ex_diff in "[a-z +\\-\\n]{0,600}",
            ex_msg in "[a-z ]{0,80}",
            max_total in 40usize..200,
        ) {
            let ex = pair("e", &ex_diff, &ex_msg);
            let budget = TokenBudget { max_total, ..Default::default() };
            match render_llm_prompt(&query, Some(&ex), &PromptTemplate::react(), &budget) {
                Ok(got) => prop_assert!(got.token_count() <= max_total),
                Err(AugmentError::BudgetImpossible { .. }) => {}
                Err(e) => prop_assert!(false, "unexpected error {e}"),
            }
        }

        #[test]
        fn rendering_is_deterministic(query in "\\PC{0,80}", d in "\\PC{0,80}", m in "\\PC{0,30}") {
            let ex = pair("e", &d, &m);
            let a = render_llm_prompt(&query, Some(&ex), &PromptTemplate::react(), &TokenBudget::default()).unwrap();
            let b = render_llm_prompt(&query, Some(&ex), &PromptTemplate::react(), &TokenBudget::default()).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
