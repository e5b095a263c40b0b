//! Word-boundary alias and URL scanning.
//!
//! Offsets are in chars, not bytes. Case-insensitive comparison folds each
//! char to its first lowercase mapping so offsets stay aligned with the input.

use crate::catalog::DatasetRecord;
use crate::normalize::url_match_key;

fn fold(c: char) -> char {
    c.to_lowercase().next().unwrap_or(c)
}

fn is_word(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_url_char(c: char) -> bool {
    c.is_alphanumeric() || c == '-' || c == '_'
}

#[derive(Debug, Clone)]
struct Pattern {
    dataset: usize,
    chars: Vec<char>,
    case_sensitive: bool,
    url: bool,
}

/// A URL key may start the text, follow a non-URL char, or follow a `www.`
/// that itself starts a URL.
fn url_start_ok(folded: &[char], start: usize) -> bool {
    let free = |i: usize| i == 0 || !is_url_char(folded[i - 1]) && folded[i - 1] != '.';
    if free(start) {
        return true;
    }
    start >= 4 && folded[start - 4..start] == ['w', 'w', 'w', '.'] && free(start - 4)
}

/// One hit: dataset index into the registry, char span `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Hit {
    pub dataset: usize,
    pub start: usize,
    pub end: usize,
}

/// All aliases and URLs of a registry, ready for scanning.
#[derive(Debug, Clone)]
pub struct AliasMatcher {
    patterns: Vec<Pattern>,
}

impl AliasMatcher {
    pub fn new(registry: &[DatasetRecord]) -> Self {
        let mut patterns = Vec::new();
        for (i, ds) in registry.iter().enumerate() {
            for alias in &ds.aliases {
                let chars: Vec<char> = if alias.case_sensitive {
                    alias.text.chars().collect()
                } else {
                    alias.text.chars().map(fold).collect()
                };
                if !chars.is_empty() {
                    patterns.push(Pattern { dataset: i, chars, case_sensitive: alias.case_sensitive, url: false });
                }
            }
            for url in &ds.urls {
                let chars: Vec<char> = url_match_key(url).chars().collect();
                if !chars.is_empty() {
                    patterns.push(Pattern { dataset: i, chars, case_sensitive: false, url: true });
                }
            }
        }
        AliasMatcher { patterns }
    }

    /// Every hit in `text`, with hits nested inside a longer hit for the same
    /// dataset removed. Sorted by (dataset, start, end).
    pub fn find(&self, text: &str) -> Vec<Hit> {
        let raw: Vec<char> = text.chars().collect();
        let folded: Vec<char> = raw.iter().copied().map(fold).collect();
        let mut hits = Vec::new();
        for p in &self.patterns {
            let hay = if p.case_sensitive { &raw } else { &folded };
            let m = p.chars.len();
            if m > hay.len() {
                continue;
            }
            let first = p.chars[0];
            for start in 0..=hay.len() - m {
                if hay[start] != first || hay[start..start + m] != p.chars[..] {
                    continue;
                }
                let end = start + m;
                let before = start.checked_sub(1).map(|i| raw[i]);
                let after = raw.get(end).copied();
                let ok = if p.url {
                    url_start_ok(&folded, start) && after.is_none_or(|c| !is_url_char(c))
                } else {
                    (!is_word(p.chars[0]) || before.is_none_or(|c| !is_word(c)))
                        && (!is_word(p.chars[m - 1]) || after.is_none_or(|c| !is_word(c)))
                };
                if ok {
                    hits.push(Hit { dataset: p.dataset, start, end });
                }
            }
        }
        // longest first at equal start so containment pruning sees the outer hit first
        hits.sort_by(|a, b| (a.dataset, a.start, b.end).cmp(&(b.dataset, b.start, a.end)));
        let mut kept: Vec<Hit> = Vec::with_capacity(hits.len());
        for h in hits {
            let nested =
                kept.iter().rev().take_while(|k| k.dataset == h.dataset).any(|k| k.start <= h.start && h.end <= k.end);
            if !nested {
                kept.push(h);
            }
        }
        kept.sort();
        kept.dedup();
        kept
    }
}

/// Char-indexed slice.
pub fn char_slice(text: &str, start: usize, end: usize) -> String {
    text.chars().skip(start).take(end - start).collect()
}
