//! Total parser for bullet-list fact responses.

use std::collections::BTreeSet;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FactFlag {
    NoCitation,
    OutOfRangeCitation,
    FromNumberedList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatFlag {
    NoBullets,
    NumberedItems,
    EmptyResponse,
    TrailingProse,
    /// A list item with nothing but citations, or nothing at all.
    EmptyItem,
    /// More than one `Answer:` line; only the first is kept.
    RepeatedAnswer,
}

/// One parsed fact with its citations.
///
/// `resolved_doc_ids`, `relevances` and `timestamps` are filled by
/// [`resolve_citations`](super::resolve_citations), one entry per valid
/// ordinal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedFact {
    pub text: String,
    pub cited_ordinals: Vec<usize>,
    #[serde(default)]
    pub resolved_doc_ids: Vec<String>,
    #[serde(default)]
    pub relevances: Vec<f64>,
    #[serde(default)]
    pub timestamps: Vec<i64>,
    #[serde(default)]
    pub flags: BTreeSet<FactFlag>,
}

impl ExtractedFact {
    /// Renders the fact as a `* text (Doc-i, Doc-j)` bullet line.
    pub fn to_bullet_line(&self) -> String {
        if self.cited_ordinals.is_empty() {
            return format!("* {}", self.text);
        }
        let cites: Vec<String> = self.cited_ordinals.iter().map(|o| format!("Doc-{o}")).collect();
        format!("* {} ({})", self.text, cites.join(", "))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParseReport {
    pub facts: Vec<ExtractedFact>,
    pub answer_line: Option<String>,
    pub format_flags: BTreeSet<FormatFlag>,
}

static NUMBERED: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\d{1,3}[.)]\s+").unwrap());
const DOC_REF: &str = r"doc(?:ument)?[\s\-_#]*\d+";
static CITATION_GROUP: LazyLock<Regex> = LazyLock::new(|| {
    let sep = r"\s*(?:,|;|&|\band\b)\s*";
    Regex::new(&format!(r"(?i)\(\s*({DOC_REF}(?:{sep}{DOC_REF})*)(?:\s*,?\s*\.{{2,3}})?\s*\)[\s.]*$")).unwrap()
});
static ORDINAL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)doc(?:ument)?[\s\-_#]*(\d+)").unwrap());

/// Splits trailing citation groups off an item; returns the remaining text
/// and the cited ordinals in order of appearance, or `None` without a group.
fn split_citations(item: &str) -> (&str, Option<Vec<usize>>) {
    let mut text = item.trim_end();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    while let Some(caps) = CITATION_GROUP.captures(text) {
        let whole = caps.get(0).expect("group 0");
        let ords = ORDINAL.captures_iter(&caps[1]).map(|c| c[1].parse::<usize>().unwrap_or(usize::MAX)).collect();
        groups.push(ords);
        text = text[..whole.start()].trim_end();
    }
    if groups.is_empty() {
        return (text, None);
    }
    let mut ordinals = Vec::new();
    for o in groups.into_iter().rev().flatten() {
        if !ordinals.contains(&o) {
            ordinals.push(o);
        }
    }
    (text, Some(ordinals))
}

fn parse_answer(line: &str) -> Option<&str> {
    let head = line.get(..7)?;
    head.eq_ignore_ascii_case("answer:").then(|| line[7..].trim())
}

/// Parses a model response into facts.
///
/// Never fails: lines starting with `*` (but not `**`) or a `1.`/`1)`
/// numbering are fact items; a line starting `Answer:` is captured
/// separately; every other deviation is recorded as a flag.
pub fn parse_response(response: &str, n_docs: usize) -> ParseReport {
    let mut report = ParseReport::default();
    if response.trim().is_empty() {
        report.format_flags.insert(FormatFlag::EmptyResponse);
        return report;
    }

    let mut seen_item = false;
    for raw in response.lines() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(answer) = parse_answer(line) {
            if report.answer_line.is_none() {
                report.answer_line = Some(answer.to_string());
            } else {
                report.format_flags.insert(FormatFlag::RepeatedAnswer);
            }
            continue;
        }
        let (body, numbered) = if line.starts_with('*') && !line.starts_with("**") {
            (&line[1..], false)
        } else if let Some(m) = NUMBERED.find(line) {
            (&line[m.end()..], true)
        } else {
            if seen_item {
                report.format_flags.insert(FormatFlag::TrailingProse);
            }
            continue;
        };
        seen_item = true;
        if numbered {
            report.format_flags.insert(FormatFlag::NumberedItems);
        }

        let (text, ordinals) = split_citations(body.trim());
        let text = text.trim();
        if text.is_empty() {
            report.format_flags.insert(FormatFlag::EmptyItem);
            continue;
        }
        let mut flags = BTreeSet::new();
        if numbered {
            flags.insert(FactFlag::FromNumberedList);
        }
        let cited_ordinals = ordinals.unwrap_or_else(|| {
            flags.insert(FactFlag::NoCitation);
            Vec::new()
        });
        if cited_ordinals.iter().any(|&o| o < 1 || o > n_docs) {
            flags.insert(FactFlag::OutOfRangeCitation);
        }
        report.facts.push(ExtractedFact {
            text: text.to_string(),
            cited_ordinals,
            resolved_doc_ids: Vec::new(),
            relevances: Vec::new(),
            timestamps: Vec::new(),
            flags,
        });
    }
    if report.facts.is_empty() {
        report.format_flags.insert(FormatFlag::NoBullets);
    }
    report
}
