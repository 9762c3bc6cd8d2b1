//! Loading, normalization, deduplication and partitioning of stream items.

mod load;
mod normalize;
mod segment;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use load::{load_request_days, load_stream_items, parse_lines, LineError, Loaded};
pub use normalize::{normalize_text, NormalizeRules, DEFAULT_EMOTICONS};
pub use segment::{segment_hashtag, Lexicon};

/// Origin of a stream item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SourceType {
    Twitter,
    Reddit,
    Facebook,
    News,
}

impl SourceType {
    pub const ALL: [SourceType; 4] = [Self::Twitter, Self::Reddit, Self::Facebook, Self::News];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Twitter => "Twitter",
            Self::Reddit => "Reddit",
            Self::Facebook => "Facebook",
            Self::News => "News",
        }
    }
}

impl fmt::Display for SourceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SourceType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "twitter" | "tweet" => Ok(Self::Twitter),
            "reddit" => Ok(Self::Reddit),
            "facebook" => Ok(Self::Facebook),
            "news" | "webnews" => Ok(Self::News),
            other => Err(format!("unknown source type `{other}`")),
        }
    }
}

impl Serialize for SourceType {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for SourceType {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One timestamped document chunk from one source stream.
///
/// Serialized with the field names of the stream-item file. `normalizedText`
/// is absent from raw input and filled in by [`normalize_items`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamItem {
    pub doc_id: String,
    #[serde(rename = "event")]
    pub event_id: String,
    #[serde(rename = "requestID")]
    pub request_id: String,
    #[serde(rename = "sourceType")]
    pub source_type: SourceType,
    #[serde(rename = "unixTimestamp")]
    pub timestamp: i64,
    #[serde(rename = "text")]
    pub raw_text: String,
    #[serde(rename = "normalizedText", default, skip_serializing_if = "String::is_empty")]
    pub normalized_text: String,
}

/// One day of one event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestDay {
    #[serde(rename = "eventID")]
    pub event_id: String,
    #[serde(rename = "requestID")]
    pub request_id: String,
    #[serde(rename = "startUnixTimestamp")]
    pub start_ts: i64,
    #[serde(rename = "endUnixTimestamp")]
    pub end_ts: i64,
}

impl RequestDay {
    /// Both ends inclusive.
    pub fn contains(&self, ts: i64) -> bool {
        self.start_ts <= ts && ts <= self.end_ts
    }
}

/// Key of a per-day collection.
pub type DayKey = (String, String);

/// Fills `normalized_text` on every item.
pub fn normalize_items(items: &mut [StreamItem], rules: &NormalizeRules) {
    for item in items {
        item.normalized_text = normalize_text(&item.raw_text, item.source_type, rules);
    }
}

/// Removes exact duplicates of normalized text within each event.
///
/// The survivor of a duplicate group is the earliest item, with `doc_id`
/// ascending breaking timestamp ties. Survivors keep their relative order.
pub fn deduplicate(items: Vec<StreamItem>) -> Vec<StreamItem> {
    let mut keeper: HashMap<(&str, &str), usize> = HashMap::new();
    for (i, item) in items.iter().enumerate() {
        let key = (item.event_id.as_str(), item.normalized_text.as_str());
        keeper
            .entry(key)
            .and_modify(|k| {
                let cur = &items[*k];
                if (item.timestamp, item.doc_id.as_str()) < (cur.timestamp, cur.doc_id.as_str()) {
                    *k = i;
                }
            })
            .or_insert(i);
    }
    let mut keep = vec![false; items.len()];
    for &i in keeper.values() {
        keep[i] = true;
    }
    items.into_iter().zip(keep).filter_map(|(item, k)| k.then_some(item)).collect()
}

/// Problems found while matching items to their request days.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WindowViolation {
    UnknownRequest { doc_id: String, request_id: String },
    OutsideWindow { doc_id: String, timestamp: i64 },
}

impl fmt::Display for WindowViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::UnknownRequest { doc_id, request_id } => {
                write!(f, "{doc_id}: request `{request_id}` not declared")
            }
            Self::OutsideWindow { doc_id, timestamp } => {
                write!(f, "{doc_id}: timestamp {timestamp} outside its request day")
            }
        }
    }
}

/// Drops items whose request is undeclared or whose timestamp falls outside
/// the declared interval.
pub fn check_request_windows(items: Vec<StreamItem>, days: &[RequestDay]) -> (Vec<StreamItem>, Vec<WindowViolation>) {
    let by_key: HashMap<(&str, &str), &RequestDay> =
        days.iter().map(|d| ((d.event_id.as_str(), d.request_id.as_str()), d)).collect();
    let mut kept = Vec::with_capacity(items.len());
    let mut violations = Vec::new();
    for item in items {
        match by_key.get(&(item.event_id.as_str(), item.request_id.as_str())) {
            None => violations.push(WindowViolation::UnknownRequest {
                doc_id: item.doc_id.clone(),
                request_id: item.request_id.clone(),
            }),
            Some(day) if !day.contains(item.timestamp) => violations
                .push(WindowViolation::OutsideWindow { doc_id: item.doc_id.clone(), timestamp: item.timestamp }),
            Some(_) => kept.push(item),
        }
    }
    (kept, violations)
}

/// Splits items into per-(event, request-day) collections, preserving order.
pub fn partition_by_day(items: Vec<StreamItem>) -> BTreeMap<DayKey, Vec<StreamItem>> {
    let mut out: BTreeMap<DayKey, Vec<StreamItem>> = BTreeMap::new();
    for item in items {
        out.entry((item.event_id.clone(), item.request_id.clone())).or_default().push(item);
    }
    out
}
