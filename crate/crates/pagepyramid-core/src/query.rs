//! Query expansion: the original question plus keyword and synonym variants.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::text;

/// Upper bound on keyword-variant tokens.
pub const MAX_KEYWORDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum QueryError {
    #[error("EmptyQuery: question is empty")]
    EmptyQuery,
    #[error("ServiceError: {0}")]
    Service(String),
}

/// The three texts retrieval runs against every index.
///
/// `original` is byte-identical to the caller's question; `keywords`
/// and `synonyms` are derived rewrites. All three are non-empty.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QueryBundle {
    pub original: String,
    pub keywords: String,
    pub synonyms: String,
}

/// Anything that rewrites a question into its three variants.
pub trait QueryExpander {
    fn expand(&self, question: &str) -> Result<QueryBundle, QueryError>;
}

/// Deterministic offline expander backed by shipped word lists.
///
/// Keywords: drop stopwords, keep at most [`MAX_KEYWORDS`] tokens chosen
/// by descending length (ties broken by first occurrence), emitted in
/// original order and casing. Synonyms: rewrite each non-stopword token
/// through the table in place, leaving separators and any unmatched
/// token untouched.
#[derive(Debug, Clone)]
pub struct LexicalExpander {
    stopwords: BTreeSet<String>,
    synonyms: BTreeMap<String, String>,
}

impl LexicalExpander {
    pub fn new(stopwords: BTreeSet<String>, synonyms: BTreeMap<String, String>) -> Self {
        Self {
            stopwords,
            synonyms,
        }
    }

    /// Expander over the word lists compiled into the crate.
    pub fn builtin() -> Self {
        Self::new(
            parse_stopwords(include_str!("../data/stopwords.txt")),
            parse_synonyms(include_str!("../data/synonyms.txt")),
        )
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(&token.to_lowercase())
    }

    pub fn synonym_for(&self, token: &str) -> Option<&str> {
        self.synonyms.get(&token.to_lowercase()).map(String::as_str)
    }

    fn keywords_of(&self, question: &str) -> String {
        let content: Vec<(usize, &str)> = text::raw_tokens(question)
            .into_iter()
            .enumerate()
            .filter(|(_, t)| !self.is_stopword(t))
            .collect();
        if content.is_empty() {
            // A question made only of stopwords still needs a usable
            // variant; fall back to the full question.
            return question.trim().to_owned();
        }
        let mut keep = content.clone();
        if keep.len() > MAX_KEYWORDS {
            let mut by_len = content;
            by_len.sort_by(|a, b| {
                let la = a.1.chars().count();
                let lb = b.1.chars().count();
                lb.cmp(&la).then(a.0.cmp(&b.0))
            });
            by_len.truncate(MAX_KEYWORDS);
            let kept: BTreeSet<usize> = by_len.into_iter().map(|(i, _)| i).collect();
            keep.retain(|(i, _)| kept.contains(i));
        }
        let words: Vec<&str> = keep.into_iter().map(|(_, t)| t).collect();
        words.join(" ")
    }

    fn synonyms_of(&self, question: &str) -> String {
        let mut out = String::with_capacity(question.len());
        let mut cursor = 0;
        for (start, end) in text::token_spans(question) {
            out.push_str(&question[cursor..start]);
            let token = &question[start..end];
            match (!self.is_stopword(token), self.synonym_for(token)) {
                (true, Some(replacement)) => out.push_str(replacement),
                _ => out.push_str(token),
            }
            cursor = end;
        }
        out.push_str(&question[cursor..]);
        out
    }
}

impl QueryExpander for LexicalExpander {
    fn expand(&self, question: &str) -> Result<QueryBundle, QueryError> {
        if question.trim().is_empty() {
            return Err(QueryError::EmptyQuery);
        }
        Ok(QueryBundle {
            original: question.to_owned(),
            keywords: self.keywords_of(question),
            synonyms: self.synonyms_of(question),
        })
    }
}

/// One lowercase word per line; blank lines and `#` comments ignored.
pub fn parse_stopwords(data: &str) -> BTreeSet<String> {
    data.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

/// Lines of the form `word -> synonym`; malformed lines are skipped.
pub fn parse_synonyms(data: &str) -> BTreeMap<String, String> {
    data.lines()
        .filter_map(|line| {
            let (from, to) = line.split_once("->")?;
            let from = from.trim().to_lowercase();
            let to = to.trim().to_string();
            if from.is_empty() || to.is_empty() {
                return None;
            }
            Some((from, to))
        })
        .collect()
}
