//! The labeled-block artifact format and the model prompt texts.
//!
//! Page analysis responses (and offline fixture pages) carry the four
//! artifact sets as plain text with labeled lines:
//!
//! ```text
//! SUMMARY: The page discusses ...
//! SECTION: Consolidated Statements of Income
//! FACT: Net sales were $34,229 million in 2022.
//! HOTSPOT: bold total row at the bottom of the table
//! ```
//!
//! `SUMMARY:` may span multiple lines; every other label opens one list
//! entry, and unlabeled lines continue the entry above them.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::model::{ModelError, PageArtifacts};

/// Instruction sent with each page image for artifact extraction.
pub const EXTRACTION_PROMPT: &str =
    "You are given one page of a document as an image. Describe it \
using only plain-text lines with these labels, one label per line:\n\
SUMMARY: 6-10 sentences describing the key topics and claims of the page (a single block).\n\
SECTION: one heading, caption, or figure title visible on the page (repeat the label per item).\n\
FACT: one atomic factual unit such as a number, entity, or short statement (repeat per item).\n\
HOTSPOT: one concise description of a visually salient region such as a chart peak, table \
header, or highlighted value (repeat per item).\n\
Output nothing except these labeled lines.";

/// Keyword-variant prompt sent to the language model.
pub const KEYWORDS_PROMPT: &str = "Extract the 3-5 most important keywords from this question.";

/// Synonym-variant prompt sent to the language model.
pub const SYNONYMS_PROMPT: &str =
    "Generate a semantically equivalent version of this question using synonyms and related phrases.";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("no SUMMARY block found in page analysis text")]
    MissingSummary,
    #[error("invalid artifacts: {0}")]
    Invalid(#[from] ModelError),
}

enum Label {
    Summary,
    Section,
    Fact,
    Hotspot,
}

fn split_label(line: &str) -> Option<(Label, &str)> {
    let trimmed = line.trim_start();
    for (tag, label) in [
        ("SUMMARY:", Label::Summary),
        ("SECTION:", Label::Section),
        ("FACT:", Label::Fact),
        ("HOTSPOT:", Label::Hotspot),
    ] {
        if let Some(rest) = trimmed.strip_prefix(tag) {
            return Some((label, rest));
        }
    }
    None
}

/// Parses labeled-block text into [`PageArtifacts`].
///
/// Blank and unlabeled leading lines are ignored; unlabeled lines after
/// a label continue that block. Fails if no `SUMMARY:` content exists.
pub fn parse_artifacts(text: &str) -> Result<PageArtifacts, ProtocolError> {
    let mut summary = String::new();
    let mut sections: Vec<String> = Vec::new();
    let mut facts: Vec<String> = Vec::new();
    let mut hotspots: Vec<String> = Vec::new();

    enum Cursor {
        None,
        Summary,
        Section,
        Fact,
        Hotspot,
    }
    let mut cursor = Cursor::None;

    let append = |cursor: &Cursor,
                  text: &str,
                  summary: &mut String,
                  sections: &mut Vec<String>,
                  facts: &mut Vec<String>,
                  hotspots: &mut Vec<String>| {
        let text = text.trim();
        if text.is_empty() {
            return;
        }
        let target = match cursor {
            Cursor::None => return,
            Cursor::Summary => {
                if !summary.is_empty() {
                    summary.push(' ');
                }
                summary.push_str(text);
                return;
            }
            Cursor::Section => sections,
            Cursor::Fact => facts,
            Cursor::Hotspot => hotspots,
        };
        match target.last_mut() {
            Some(last) => {
                last.push(' ');
                last.push_str(text);
            }
            None => target.push(text.to_string()),
        }
    };

    for line in text.lines() {
        match split_label(line) {
            Some((Label::Summary, rest)) => {
                cursor = Cursor::Summary;
                append(
                    &cursor,
                    rest,
                    &mut summary,
                    &mut sections,
                    &mut facts,
                    &mut hotspots,
                );
            }
            Some((Label::Section, rest)) => {
                sections.push(String::new());
                cursor = Cursor::Section;
                append(
                    &cursor,
                    rest,
                    &mut summary,
                    &mut sections,
                    &mut facts,
                    &mut hotspots,
                );
            }
            Some((Label::Fact, rest)) => {
                facts.push(String::new());
                cursor = Cursor::Fact;
                append(
                    &cursor,
                    rest,
                    &mut summary,
                    &mut sections,
                    &mut facts,
                    &mut hotspots,
                );
            }
            Some((Label::Hotspot, rest)) => {
                hotspots.push(String::new());
                cursor = Cursor::Hotspot;
                append(
                    &cursor,
                    rest,
                    &mut summary,
                    &mut sections,
                    &mut facts,
                    &mut hotspots,
                );
            }
            None => {
                append(
                    &cursor,
                    line,
                    &mut summary,
                    &mut sections,
                    &mut facts,
                    &mut hotspots,
                );
            }
        }
    }

    if summary.trim().is_empty() {
        return Err(ProtocolError::MissingSummary);
    }
    // A label line with no content on it and no continuation leaves an
    // empty entry behind; drop those instead of failing the page.
    let drop_blank = |v: Vec<String>| v.into_iter().filter(|s| !s.trim().is_empty()).collect();
    PageArtifacts::new(
        summary,
        drop_blank(sections),
        drop_blank(facts),
        drop_blank(hotspots),
    )
    .map_err(ProtocolError::Invalid)
}

/// Renders artifacts back into the labeled-block format. Inverse of
/// [`parse_artifacts`] for single-line entries.
pub fn render_artifacts(artifacts: &PageArtifacts) -> String {
    let mut out = String::new();
    out.push_str("SUMMARY: ");
    out.push_str(&artifacts.summary);
    out.push('\n');
    for s in &artifacts.sections {
        out.push_str("SECTION: ");
        out.push_str(s);
        out.push('\n');
    }
    for f in &artifacts.facts {
        out.push_str("FACT: ");
        out.push_str(f);
        out.push('\n');
    }
    for h in &artifacts.hotspots {
        out.push_str("HOTSPOT: ");
        out.push_str(h);
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn parses_counts_2_5_2() {
        let text = "SUMMARY: A balance sheet page.\n\
                    SECTION: Assets\nSECTION: Liabilities\n\
                    FACT: f1\nFACT: f2\nFACT: f3\nFACT: f4\nFACT: f5\n\
                    HOTSPOT: h1\nHOTSPOT: h2\n";
        let a = parse_artifacts(text).unwrap();
        assert_eq!(a.summary, "A balance sheet page.");
        assert_eq!(
            (a.sections.len(), a.facts.len(), a.hotspots.len()),
            (2, 5, 2)
        );
    }

    #[test]
    fn multiline_summary_and_continuations() {
        let text = "SUMMARY: First sentence.\nSecond sentence.\n\
                    FACT: a fact\nthat continues\n";
        let a = parse_artifacts(text).unwrap();
        assert_eq!(a.summary, "First sentence. Second sentence.");
        assert_eq!(a.facts, vec!["a fact that continues"]);
    }

    #[test]
    fn missing_summary_is_an_error() {
        assert_eq!(
            parse_artifacts("FACT: lonely\n").unwrap_err(),
            ProtocolError::MissingSummary
        );
        assert_eq!(
            parse_artifacts("").unwrap_err(),
            ProtocolError::MissingSummary
        );
    }

    #[test]
    fn blank_label_lines_are_dropped() {
        let a = parse_artifacts("SUMMARY: s\nSECTION:\nFACT: f\n").unwrap();
        assert!(a.sections.is_empty());
        assert_eq!(a.facts, vec!["f"]);
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(
            summary in "[a-zA-Z0-9 .,]{1,60}",
            sections in proptest::collection::vec("[a-zA-Z0-9 ]{1,20}", 0..4),
            facts in proptest::collection::vec("[a-zA-Z0-9 ]{1,20}", 0..6),
            hotspots in proptest::collection::vec("[a-zA-Z0-9 ]{1,20}", 0..4),
        ) {
            prop_assume!(!summary.trim().is_empty());
            prop_assume!(sections.iter().chain(&facts).chain(&hotspots).all(|s| !s.trim().is_empty()));
            let a = PageArtifacts::new(summary, sections, facts, hotspots).unwrap();
            let back = parse_artifacts(&render_artifacts(&a)).unwrap();
            prop_assert_eq!(a, back);
        }
    }
}
