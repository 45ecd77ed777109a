use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Corpus, CorpusError};
use crate::text::count_tokens;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Cap applied separately to the diff and the message token counts.
    pub max_tokens: usize,
    pub min_message_tokens: usize,
    /// Case-insensitive substrings matched against the author.
    pub bot_author_patterns: Vec<String>,
    pub drop_empty: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            max_tokens: 1000,
            min_message_tokens: 2,
            bot_author_patterns: vec!["bot".into(), "dependabot".into()],
            drop_empty: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.min_message_tokens < 1 {
            return Err(CorpusError::InvalidFilter("min_message_tokens must be at least 1".into()));
        }
        if self.max_tokens <= self.min_message_tokens {
            return Err(CorpusError::InvalidFilter(format!(
                "max_tokens ({}) must exceed min_message_tokens ({})",
                self.max_tokens, self.min_message_tokens
            )));
        }
        Ok(())
    }

    fn is_bot(&self, author: &str) -> bool {
        let author = author.to_lowercase();
        self.bot_author_patterns
            .iter()
            .any(|p| !p.is_empty() && author.contains(&p.to_lowercase()))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: usize,
    pub dropped_too_long: usize,
    pub dropped_too_short: usize,
    pub dropped_bot: usize,
    pub dropped_empty: usize,
}

impl FilterReport {
    pub fn dropped(&self) -> usize {
        self.dropped_too_long + self.dropped_too_short + self.dropped_bot + self.dropped_empty
    }
}

enum Verdict {
    Keep,
    Empty,
    TooLong,
    TooShort,
    Bot,
}

/// Keeps the entries passing every rule, in their original order. An entry
/// failing several rules is counted under the first one, checked in the order
/// empty, too long, too short, bot.
pub fn filter_corpus(
    corpus: &Corpus,
    cfg: &FilterConfig,
    authors: Option<&HashMap<String, String>>,
) -> (Corpus, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept = Vec::with_capacity(corpus.len());
    for entry in corpus {
        let verdict = if cfg.drop_empty
            && (entry.diff_text.trim().is_empty() || entry.message_text.trim().is_empty())
        {
            Verdict::Empty
        } else {
            let msg_tokens = count_tokens(&entry.message_text);
            if msg_tokens > cfg.max_tokens || count_tokens(&entry.diff_text) > cfg.max_tokens {
                Verdict::TooLong
            } else if msg_tokens < cfg.min_message_tokens {
                Verdict::TooShort
            } else if authors
                .and_then(|a| a.get(&entry.id))
                .is_some_and(|author| cfg.is_bot(author))
            {
                Verdict::Bot
            } else {
                Verdict::Keep
            }
        };
        match verdict {
            Verdict::Keep => {
                report.kept += 1;
                kept.push(entry.clone());
            }
            Verdict::Empty => report.dropped_empty += 1,
            Verdict::TooLong => report.dropped_too_long += 1,
            Verdict::TooShort => report.dropped_too_short += 1,
            Verdict::Bot => report.dropped_bot += 1,
        }
    }
    let filtered = Corpus::from_entries(kept).expect("subset of a corpus has unique ids");
    (filtered, report)
}
