//! Tweet normalization.

use std::sync::LazyLock;

use regex::Regex;

use super::segment::{segment_hashtag, Lexicon};
use super::SourceType;

/// ASCII emoticons removed when they stand alone as a whitespace token.
pub const DEFAULT_EMOTICONS: &[&str] = &[
    ":)", ":-)", ":(", ":-(", ":D", ":-D", ";)", ";-)", ":P", ":-P", ":p", ":-p", ":o", ":O", ":-o", ":-O", ":/",
    ":-/", ":\\", ":'(", ":'-(", ":|", ":-|", "<3", "</3", "xD", "XD", "^_^", "^^", "-_-", "o_O", "O_o", ":*", ":-*",
    ";(", ":S", ":s", "=)", "=(", "B)", "8)",
];

/// Emoji code-point ranges (inclusive) removed from tweets.
const EMOJI_RANGES: &[(u32, u32)] = &[
    (0x1F600, 0x1F64F), // emoticons
    (0x1F300, 0x1F5FF), // symbols & pictographs
    (0x1F680, 0x1F6FF), // transport & map
    (0x1F900, 0x1F9FF), // supplemental symbols & pictographs
    (0x1FA70, 0x1FAFF), // symbols & pictographs extended-A
    (0x1F1E6, 0x1F1FF), // regional indicators (flags)
    (0x2600, 0x27BF),   // misc symbols, dingbats
    (0xFE0F, 0xFE0F),   // variation selector-16
    (0x200D, 0x200D),   // zero-width joiner
];

static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://|\bwww\.|\bt\.co/|\bpic\.twitter\.com/)\S*").unwrap());
static MENTION: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(^|[^A-Za-z0-9_@])@[A-Za-z0-9_]+").unwrap());
static LEADING_MENTIONS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:@[A-Za-z0-9_]+:?\s+)+").unwrap());
static HASHTAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"#(\w+)").unwrap());

/// Configurable parts of tweet normalization.
#[derive(Debug, Clone)]
pub struct NormalizeRules {
    /// Leading retweet markers, tried in order; the first match is removed.
    pub retweet_prefixes: Vec<Regex>,
    pub emoticons: Vec<String>,
    pub lexicon: &'static Lexicon,
}

impl Default for NormalizeRules {
    fn default() -> Self {
        Self {
            retweet_prefixes: vec![Regex::new(r"^RT\s+@[A-Za-z0-9_]+:?\s*").unwrap(), Regex::new(r"^RT\s+").unwrap()],
            emoticons: DEFAULT_EMOTICONS.iter().map(|s| s.to_string()).collect(),
            lexicon: Lexicon::bundled(),
        }
    }
}

/// Normalizes raw text for indexing and display.
///
/// Tweets lose their retweet prefix, mentions, URLs, emoji and emoticons, and
/// hashtags are replaced by their segmentation. All sources get URL removal
/// and whitespace collapsing. The tweet rules are reapplied until nothing
/// changes, which makes the function idempotent (removing a mention can
/// expose a new leading `RT`, for example).
pub fn normalize_text(raw: &str, source: SourceType, rules: &NormalizeRules) -> String {
    if source != SourceType::Twitter {
        return collapse_ws(&URL.replace_all(raw, " "));
    }
    let mut cur = tweet_pass(raw, rules);
    for _ in 0..8 {
        let next = tweet_pass(&cur, rules);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

fn tweet_pass(text: &str, rules: &NormalizeRules) -> String {
    let mut s = LEADING_MENTIONS.replace(text.trim_start(), "").into_owned();
    if let Some(m) = rules.retweet_prefixes.iter().find_map(|re| re.find(&s)) {
        s.replace_range(..m.end(), "");
    }
    let s = MENTION.replace_all(&s, "$1 ");
    let s = URL.replace_all(&s, " ");
    let s: String = s.chars().map(|c| if is_emoji(c) { ' ' } else { c }).collect();
    let s = s.split_whitespace().filter(|tok| !rules.emoticons.iter().any(|e| e == tok)).collect::<Vec<_>>().join(" ");
    let s = HASHTAG.replace_all(&s, |caps: &regex::Captures<'_>| {
        format!(" {} ", segment_hashtag(&caps[1], rules.lexicon).join(" "))
    });
    collapse_ws(&s.replace('#', " "))
}

fn is_emoji(c: char) -> bool {
    let cp = c as u32;
    EMOJI_RANGES.iter().any(|&(lo, hi)| (lo..=hi).contains(&cp))
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
