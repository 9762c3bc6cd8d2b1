//! On-disk records exchanged between stages.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::corpus::parse_lines;
use crate::factextract::ExtractedFact;
use crate::index::{QueryContext, ScoredDoc};
use crate::nuggets::{EventNugget, Summary};
use crate::order;

/// One line of the query file. Queries apply to every day of their event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRecord {
    #[serde(rename = "queryID")]
    pub query_id: String,
    #[serde(rename = "eventID")]
    pub event_id: String,
    #[serde(rename = "queryText")]
    pub query_text: String,
    #[serde(rename = "indicativeTerms", default)]
    pub indicative_terms: Vec<String>,
}

impl QueryRecord {
    pub fn for_day(&self, request_id: &str) -> QueryContext {
        QueryContext {
            query_id: self.query_id.clone(),
            event_id: self.event_id.clone(),
            request_id: request_id.to_string(),
            query_text: self.query_text.clone(),
            indicative_terms: self.indicative_terms.clone(),
        }
    }
}

/// First-stage candidates of one triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRecord {
    #[serde(flatten)]
    pub query: QueryContext,
    pub candidates: Vec<ScoredDoc>,
}

/// Resolved facts of one triple, with the cluster statistics needed to
/// price uncited nuggets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactsRecord {
    #[serde(flatten)]
    pub query: QueryContext,
    #[serde(rename = "minRelevance", with = "order::decimal6")]
    pub min_relevance: f64,
    #[serde(rename = "earliestTimestamp")]
    pub earliest_timestamp: i64,
    pub facts: Vec<ExtractedFact>,
}

/// One line of a submission file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionRecord {
    #[serde(rename = "runID")]
    pub run_id: String,
    #[serde(rename = "eventID")]
    pub event_id: String,
    #[serde(rename = "requestID")]
    pub request_id: String,
    #[serde(rename = "nuggetID")]
    pub nugget_id: String,
    #[serde(rename = "factText")]
    pub fact_text: String,
    #[serde(rename = "unixTimestamp")]
    pub timestamp: i64,
    #[serde(with = "order::decimal6")]
    pub importance: f64,
    pub sources: Vec<String>,
}

/// Strictly reads a line-delimited file: any malformed line is an error.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> io::Result<Vec<T>> {
    let file = File::open(path).map_err(|e| io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    let loaded = parse_lines::<T, _>(BufReader::new(file))?;
    if let Some(e) = loaded.errors.first() {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display())));
    }
    Ok(loaded.records)
}

/// Writes one JSON record per line through a temporary file and a rename.
pub fn write_jsonl<'a, T, I>(path: &Path, records: I) -> io::Result<()>
where
    T: Serialize + 'a,
    I: IntoIterator<Item = &'a T>,
{
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("tmp");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        for r in records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    fs::rename(tmp, path)
}

pub fn submission_records(run_id: &str, summaries: &[Summary]) -> Vec<SubmissionRecord> {
    summaries
        .iter()
        .flat_map(|s| s.nuggets.iter())
        .map(|n| SubmissionRecord {
            run_id: run_id.to_string(),
            event_id: n.event_id.clone(),
            request_id: n.request_id.clone(),
            nugget_id: n.nugget_id.clone(),
            fact_text: n.text.clone(),
            timestamp: n.timestamp,
            importance: n.importance,
            sources: n.source_doc_ids.clone(),
        })
        .collect()
}

/// Groups submission lines by request day, keeping file order.
pub fn summaries_from_submission(records: &[SubmissionRecord]) -> BTreeMap<(String, String), Vec<EventNugget>> {
    let mut out: BTreeMap<(String, String), Vec<EventNugget>> = BTreeMap::new();
    for r in records {
        out.entry((r.event_id.clone(), r.request_id.clone())).or_default().push(EventNugget {
            nugget_id: r.nugget_id.clone(),
            event_id: r.event_id.clone(),
            request_id: r.request_id.clone(),
            query_id: String::new(),
            text: r.fact_text.clone(),
            importance: r.importance,
            source_doc_ids: r.sources.clone(),
            timestamp: r.timestamp,
            uncited: r.sources.is_empty(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nugget(i: usize, imp: f64) -> EventNugget {
        EventNugget {
            nugget_id: format!("E-R-{i}"),
            event_id: "E".into(),
            request_id: "R".into(),
            query_id: "q".into(),
            text: format!("fact {i}"),
            importance: imp,
            source_doc_ids: vec![format!("d{i}")],
            timestamp: 100 + i as i64,
            uncited: false,
        }
    }

    #[test]
    fn submission_round_trip() {
        let s = Summary {
            event_id: "E".into(),
            request_id: "R".into(),
            nuggets: vec![nugget(1, 0.9), nugget(2, 0.123457)],
            cutoff_k: 32,
        };
        let recs = submission_records("run", std::slice::from_ref(&s));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub.jsonl");
        write_jsonl(&path, &recs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains(r#""importance":0.900000"#), "{text}");
        let back: Vec<SubmissionRecord> = read_jsonl(&path).unwrap();
        assert_eq!(back, recs);
        let grouped = summaries_from_submission(&back);
        let ns = &grouped[&("E".to_string(), "R".to_string())];
        assert_eq!(ns.len(), 2);
        assert_eq!(ns[1].importance, 0.123457);
        assert_eq!(ns[0].text, s.nuggets[0].text);
    }

    #[test]
    fn query_record_expands_per_day() {
        let q: QueryRecord =
            serde_json::from_str(r#"{"queryID":"q1","eventID":"E","queryText":"Where?","indicativeTerms":["a"]}"#)
                .unwrap();
        let ctx = q.for_day("E-r2");
        assert_eq!(ctx.request_id, "E-r2");
        assert_eq!(ctx.indicative_terms, ["a"]);
    }

    #[test]
    fn strict_read_rejects_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.jsonl");
        fs::write(&path, "{\"queryID\":\"q\",\"eventID\":\"E\",\"queryText\":\"t\"}\n{oops\n").unwrap();
        let err = read_jsonl::<QueryRecord>(&path).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }
}
