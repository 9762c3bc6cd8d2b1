//! The fact-extraction prompt.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::rerank::RankedCluster;

pub const INSTRUCTION_HEADER: &str = "You are a fact extractor for disaster response organizations. Use the documents to answer the question based on a list of extracted facts as evidence.";

pub const RULES: [&str; 6] = [
    "The facts must be short.",
    "The format of one fact is text-snippet (source document).",
    "Provide the source documents for each fact with the format: (Doc-1, Doc-2, ..)",
    "Include fact-relevant entities such as locations, numbers, dates, etc.",
    "Only include facts which are focused on the question.",
    "The list items must start with * bullet points. Do not use numberings.",
];

/// The default template. `{demonstration}`, `{documents}` and `{query}` are
/// substituted once each.
pub const DEFAULT_TEMPLATE: &str = "You are a fact extractor for disaster response organizations. Use the documents to answer the question based on a list of extracted facts as evidence.

Please follow the instructions for the facts:
1. The facts must be short.
2. The format of one fact is text-snippet (source document).
3. Provide the source documents for each fact with the format: (Doc-1, Doc-2, ..)
4. Include fact-relevant entities such as locations, numbers, dates, etc.
5. Only include facts which are focused on the question.
6. The list items must start with * bullet points. Do not use numberings.

We provide you one example within `` marks: `{demonstration}`

Your task
Documents: {documents}
Question: {query}

Facts list:";

/// The bundled one-shot demonstration.
pub const DEFAULT_DEMONSTRATION: &str = "Your task
Documents: ...
Question: How many firefighters are active?

Facts list:
* 3,300 firefighters are active in fighting the Lilac Fire (Doc-5)
* 808 firefighters are battling the Skirball Fire in Los Angeles (Doc-7)
* 6,946 firefighters are on scene fighting the Thomas Fire in Ventura and Santa Barbara (Doc-8)

Answer: There are approximately 9,154 firefighters actively fighting fires in San Diego and neighboring counties.";

const PLACEHOLDERS: [&str; 3] = ["{demonstration}", "{documents}", "{query}"];

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template must contain `{placeholder}` exactly once (found {count})")]
    Placeholder { placeholder: &'static str, count: usize },
    #[error("reading template: {0}")]
    Io(#[from] io::Error),
}

/// A validated prompt template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self { text: DEFAULT_TEMPLATE.to_string() }
    }
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        for placeholder in PLACEHOLDERS {
            let count = text.matches(placeholder).count();
            if count != 1 {
                return Err(TemplateError::Placeholder { placeholder, count });
            }
        }
        Ok(Self { text })
    }

    pub fn from_file(path: &Path) -> Result<Self, TemplateError> {
        Self::new(fs::read_to_string(path)?)
    }

    /// Substitutes the placeholders in one left-to-right pass; substituted
    /// text is never rescanned.
    pub fn render(&self, demonstration: &str, documents: &str, query: &str) -> String {
        let mut out = String::with_capacity(self.text.len() + demonstration.len() + documents.len() + query.len());
        let mut rest = self.text.as_str();
        while let Some((pos, ph)) =
            PLACEHOLDERS.iter().filter_map(|ph| rest.find(ph).map(|p| (p, *ph))).min_by_key(|(p, _)| *p)
        {
            out.push_str(&rest[..pos]);
            out.push_str(match ph {
                "{demonstration}" => demonstration,
                "{documents}" => documents,
                _ => query,
            });
            rest = &rest[pos + ph.len()..];
        }
        out.push_str(rest);
        out
    }
}

/// The parts of one fact-extraction prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptSpec {
    pub instruction_header: String,
    pub rules: Vec<String>,
    pub demonstration: String,
    /// `("Doc-i", text)`, 1-based, in cluster order.
    pub documents: Vec<(String, String)>,
    pub question: String,
}

impl PromptSpec {
    pub fn new(cluster: &RankedCluster, demonstration: &str) -> Self {
        Self {
            instruction_header: INSTRUCTION_HEADER.to_string(),
            rules: RULES.iter().map(|r| r.to_string()).collect(),
            demonstration: demonstration.to_string(),
            documents: cluster
                .entries
                .iter()
                .enumerate()
                .map(|(i, e)| (format!("Doc-{}", i + 1), single_line(&e.text)))
                .collect(),
            question: cluster.query.query_text.clone(),
        }
    }

    /// One `Doc-i: text` line per document, starting on a fresh line.
    pub fn documents_block(&self) -> String {
        let mut s = String::new();
        for (label, text) in &self.documents {
            s.push('\n');
            s.push_str(label);
            s.push_str(": ");
            s.push_str(text);
        }
        s
    }

    pub fn render(&self, template: &PromptTemplate) -> String {
        template.render(&self.demonstration, &self.documents_block(), &self.question)
    }
}

fn single_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Builds the prompt for a cluster and renders it.
pub fn build_prompt(cluster: &RankedCluster, demonstration: &str, template: &PromptTemplate) -> (PromptSpec, String) {
    let spec = PromptSpec::new(cluster, demonstration);
    let rendered = spec.render(template);
    (spec, rendered)
}
