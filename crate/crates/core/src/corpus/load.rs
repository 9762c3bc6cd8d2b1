use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use serde::de::DeserializeOwned;

use super::{RequestDay, SourceType, StreamItem};

/// A record that could not be parsed. Line numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Records parsed from a line-delimited file plus the lines that failed.
#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub records: Vec<T>,
    pub errors: Vec<LineError>,
}

impl<T> Default for Loaded<T> {
    fn default() -> Self {
        Self { records: Vec::new(), errors: Vec::new() }
    }
}

/// Parses one JSON record per line. Blank lines are skipped; bad lines are
/// reported and parsing continues.
pub fn parse_lines<T: DeserializeOwned, R: BufRead>(reader: R) -> io::Result<Loaded<T>> {
    let mut out = Loaded::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(&line) {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.errors.push(LineError { line: i + 1, message: e.to_string() }),
        }
    }
    Ok(out)
}

/// Reads a stream-item file, optionally keeping only some source types.
///
/// Items come back in input order with `normalized_text` as found in the file
/// (empty for raw track data).
pub fn load_stream_items(path: &Path, sources: Option<&[SourceType]>) -> io::Result<Loaded<StreamItem>> {
    let mut loaded: Loaded<StreamItem> = parse_lines(BufReader::new(File::open(path)?))?;
    if let Some(keep) = sources {
        loaded.records.retain(|it| keep.contains(&it.source_type));
    }
    Ok(loaded)
}

pub fn load_request_days(path: &Path) -> io::Result<Loaded<RequestDay>> {
    let mut loaded: Loaded<RequestDay> = parse_lines(BufReader::new(File::open(path)?))?;
    let mut bad = Vec::new();
    loaded.records.retain(|d| {
        let ok = d.start_ts < d.end_ts;
        if !ok {
            bad.push(d.request_id.clone());
        }
        ok
    });
    for request in bad {
        loaded.errors.push(LineError { line: 0, message: format!("request `{request}` has start >= end") });
    }
    Ok(loaded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const GOOD: &str =
        r#"{"doc_id":"d1","event":"E1","requestID":"E1-r1","sourceType":"Twitter","unixTimestamp":10,"text":"a"}"#;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_good_lines() {
        let body = [GOOD, &GOOD.replace("d1", "d2"), &GOOD.replace("d1", "d3")].join("\n");
        let f = write(&body);
        let out = load_stream_items(f.path(), None).unwrap();
        assert_eq!(out.records.len(), 3);
        assert!(out.errors.is_empty());
        assert_eq!(out.records[2].doc_id, "d3");
        assert!(out.records[0].normalized_text.is_empty());
    }

    #[test]
    fn empty_file() {
        let f = write("");
        let out = load_stream_items(f.path(), None).unwrap();
        assert!(out.records.is_empty() && out.errors.is_empty());
    }

    #[test]
    fn truncated_line_reported_with_number() {
        let body = format!("{GOOD}\n{}\n{}", GOOD.replace("d1", "d2"), &GOOD[..40]);
        let f = write(&body);
        let out = load_stream_items(f.path(), None).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.errors.len(), 1);
        assert_eq!(out.errors[0].line, 3);
    }

    #[test]
    fn missing_field_is_a_line_error() {
        let f = write(&GOOD.replace(r#","text":"a""#, ""));
        let out = load_stream_items(f.path(), None).unwrap();
        assert!(out.records.is_empty());
        assert!(out.errors[0].message.contains("text"), "{}", out.errors[0].message);
    }

    #[test]
    fn source_filter() {
        let body = format!("{GOOD}\n{}", GOOD.replace("d1", "d2").replace("Twitter", "News"));
        let f = write(&body);
        let out = load_stream_items(f.path(), Some(&[SourceType::News])).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].doc_id, "d2");
    }
}
