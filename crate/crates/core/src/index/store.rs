//! On-disk index cache, keyed by a hash of the indexed collection.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::InvertedIndex;
use crate::cache::content_hash_parts;
use crate::corpus::StreamItem;

pub const INDEX_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Stored {
    version: u32,
    content_hash: String,
    index: InvertedIndex,
}

/// Hash over everything [`InvertedIndex::build`] reads from the items.
pub fn collection_hash(items: &[StreamItem]) -> String {
    let mut parts: Vec<String> = Vec::with_capacity(items.len() * 3);
    for it in items {
        parts.push(it.doc_id.clone());
        parts.push(it.timestamp.to_string());
        parts.push(it.normalized_text.clone());
    }
    let refs: Vec<&str> = parts.iter().map(String::as_str).collect();
    content_hash_parts(&refs)
}

pub fn save_cached_index(path: &Path, items: &[StreamItem], index: &InvertedIndex) -> io::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let stored = Stored { version: INDEX_FORMAT_VERSION, content_hash: collection_hash(items), index: index.clone() };
    fs::write(path, serde_json::to_vec(&stored)?)
}

/// Returns the cached index when the file exists, has the current format
/// version and was built from exactly `items`.
pub fn load_cached_index(path: &Path, items: &[StreamItem]) -> Option<InvertedIndex> {
    let bytes = fs::read(path).ok()?;
    let stored: Stored = serde_json::from_slice(&bytes).ok()?;
    if stored.version != INDEX_FORMAT_VERSION || stored.content_hash != collection_hash(items) {
        return None;
    }
    let mut index = stored.index;
    index.rebuild_positions().ok()?;
    Some(index)
}
