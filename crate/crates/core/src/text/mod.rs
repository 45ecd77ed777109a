//! Deterministic tokenization shared by corpus filters, BM25, the local
//! embedder and every metric.
//!
//! A token is a maximal run of lowercase alphanumeric characters and
//! underscores. Everything else (whitespace, punctuation, diff markers such
//! as `+`, `-`, `@`) separates tokens and is discarded.

mod porter;

pub use porter::porter_stem;

/// Lowercased tokens of a text, in order of appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct TokenSequence {
    tokens: Vec<String>,
}

impl TokenSequence {
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    pub fn into_vec(self) -> Vec<String> {
        self.tokens
    }
}

impl From<Vec<String>> for TokenSequence {
    fn from(tokens: Vec<String>) -> Self {
        debug_assert!(tokens.iter().all(|t| !t.is_empty()));
        Self { tokens }
    }
}

impl<'a> IntoIterator for &'a TokenSequence {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.tokens.iter()
    }
}

#[inline]
fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Walks `text`, lowercasing each character before classifying it, and calls
/// `emit(token, end)` for every token where `end` is the byte offset in the
/// original text just past the character that completed the token.
fn scan(text: &str, mut emit: impl FnMut(String, usize)) {
    let mut current = String::new();
    let mut last_end = 0;
    for (offset, ch) in text.char_indices() {
        let end = offset + ch.len_utf8();
        for lower in ch.to_lowercase() {
            if is_token_char(lower) {
                current.push(lower);
                last_end = end;
            } else if !current.is_empty() {
                emit(std::mem::take(&mut current), last_end);
            }
        }
    }
    if !current.is_empty() {
        emit(current, last_end);
    }
}

pub fn tokenize(text: &str) -> TokenSequence {
    let mut tokens = Vec::new();
    scan(text, |tok, _| tokens.push(tok));
    TokenSequence { tokens }
}

pub fn count_tokens(text: &str) -> usize {
    let mut n = 0;
    scan(text, |_, _| n += 1);
    n
}

/// Byte offset in `text` where its first `n` tokens end. Returns `0` for
/// `n == 0` and `text.len()` when the text has `n` or fewer tokens.
pub fn prefix_end_for_tokens(text: &str, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    let mut seen = 0;
    let mut cut = None;
    scan(text, |_, end| {
        seen += 1;
        if seen == n && cut.is_none() {
            cut = Some(end);
        }
    });
    match cut {
        Some(end) if seen > n => end,
        _ => text.len(),
    }
}
