//! Unigram word segmentation for hashtag bodies.

use std::collections::HashMap;
use std::sync::LazyLock;

const BUNDLED: &str = include_str!("../../data/unigrams_50k.tsv");

/// Token total of the corpus the bundled counts were taken from.
const BUNDLED_TOTAL: f64 = 1_024_908_267_229.0;

/// Longest in-vocabulary candidate considered at an arbitrary split point.
const MAX_WORD_CHARS: usize = 24;

static BUNDLED_LEXICON: LazyLock<Lexicon> = LazyLock::new(|| {
    let mut lex = Lexicon::from_tsv(BUNDLED);
    lex.total = BUNDLED_TOTAL;
    lex
});

/// Word-frequency table.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    counts: HashMap<String, f64>,
    total: f64,
}

impl Lexicon {
    /// The bundled 50k-entry English table.
    pub fn bundled() -> &'static Lexicon {
        &BUNDLED_LEXICON
    }

    /// Builds a table whose total is the sum of the given counts.
    pub fn from_counts<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let counts: HashMap<String, f64> = entries.into_iter().map(|(w, c)| (w.into().to_lowercase(), c)).collect();
        let total = counts.values().sum();
        Self { counts, total }
    }

    /// Parses `word<TAB>count` lines; malformed lines are skipped.
    pub fn from_tsv(text: &str) -> Self {
        Self::from_counts(text.lines().filter_map(|l| {
            let (w, c) = l.split_once('\t')?;
            Some((w, c.trim().parse::<f64>().ok()?))
        }))
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// log10 probability of `word`; unknown words get `log10(1 / (N * 10^len))`.
    pub fn log_prob(&self, word: &str) -> f64 {
        let total = self.total.max(1.0);
        match self.counts.get(word) {
            Some(&c) if c > 0.0 => (c / total).log10(),
            _ => -(total.log10() + word.chars().count() as f64),
        }
    }
}

/// Splits a hashtag body into lowercase words.
///
/// Dynamic programming over split points picks the segmentation with the
/// largest summed unigram log-probability. Candidate words are capped at
/// 24 characters, except that a span between two camel-case boundaries is
/// always a candidate. Every character of the input appears in the output
/// exactly once, in order.
pub fn segment_hashtag(tag_body: &str, lexicon: &Lexicon) -> Vec<String> {
    let (chars, camel) = lowercase_with_boundaries(tag_body);
    let n = chars.len();
    if n == 0 {
        return Vec::new();
    }
    let boundary_positions: Vec<usize> = (0..=n).filter(|&i| camel[i]).collect();

    let mut best = vec![f64::NEG_INFINITY; n + 1];
    let mut back = vec![0usize; n + 1];
    best[0] = 0.0;
    for end in 1..=n {
        let mut consider = |start: usize| {
            if best[start] == f64::NEG_INFINITY {
                return;
            }
            let word: String = chars[start..end].iter().collect();
            let score = best[start] + lexicon.log_prob(&word);
            if score > best[end] {
                best[end] = score;
                back[end] = start;
            }
        };
        for start in end.saturating_sub(MAX_WORD_CHARS)..end {
            consider(start);
        }
        if camel[end] {
            for &start in boundary_positions.iter().filter(|&&s| s + MAX_WORD_CHARS < end) {
                consider(start);
            }
        }
    }

    let mut words = Vec::new();
    let mut end = n;
    while end > 0 {
        let start = back[end];
        words.push(chars[start..end].iter().collect());
        end = start;
    }
    words.reverse();
    words
}

/// Lowercases and marks camel-case boundaries (`aB`, and `ABc` before the `B`).
/// `camel[i]` is true when a word may start at lowercased position `i`; both
/// ends are always boundaries.
fn lowercase_with_boundaries(s: &str) -> (Vec<char>, Vec<bool>) {
    let orig: Vec<char> = s.chars().collect();
    let mut chars = Vec::with_capacity(orig.len());
    let mut camel = Vec::with_capacity(orig.len() + 1);
    for (i, &c) in orig.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| orig[j]);
        let next = orig.get(i + 1).copied();
        let lower_to_upper = c.is_uppercase() && prev.is_some_and(|p| p.is_lowercase());
        let acronym_end =
            c.is_uppercase() && prev.is_some_and(|p| p.is_uppercase()) && next.is_some_and(|n| n.is_lowercase());
        let mut first = true;
        for lc in c.to_lowercase() {
            camel.push(i == 0 || (first && (lower_to_upper || acronym_end)));
            chars.push(lc);
            first = false;
        }
    }
    camel.push(true);
    (chars, camel)
}
