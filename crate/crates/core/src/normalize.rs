//! String normalization shared by the catalog, harvester and detector.
//!
//! Everything here is pure and allocation-light; the detector calls these
//! in tight loops over reference lists.

/// Prefixes stripped from DOIs before storage. Compared case-insensitively.
const DOI_PREFIXES: &[&str] =
    &["https://doi.org/", "http://doi.org/", "https://dx.doi.org/", "http://dx.doi.org/", "doi.org/", "doi:"];

/// Normalizes a DOI: trims, strips resolver prefixes and `doi:`, lowercases.
///
/// Returns `None` when the result does not look like a DOI (`10.<registrant>/<suffix>`).
pub fn normalize_doi(raw: &str) -> Option<String> {
    let mut s = raw.trim().to_lowercase();
    loop {
        let before = s.len();
        for prefix in DOI_PREFIXES {
            if let Some(rest) = s.strip_prefix(prefix) {
                s = rest.trim_start().to_string();
            }
        }
        if s.len() == before {
            break;
        }
    }
    if is_doi(&s) {
        Some(s)
    } else {
        None
    }
}

/// `10.` + registrant digits/dots + `/` + nonempty suffix, no whitespace.
pub fn is_doi(s: &str) -> bool {
    let Some(rest) = s.strip_prefix("10.") else {
        return false;
    };
    let Some((registrant, suffix)) = rest.split_once('/') else {
        return false;
    };
    !registrant.is_empty()
        && registrant.chars().all(|c| c.is_ascii_digit() || c == '.')
        && !suffix.is_empty()
        && !s.chars().any(char::is_whitespace)
}

/// Normalizes a URL for storage: trims, lowercases scheme and host, drops a
/// trailing slash. Strings that do not parse as URLs are lowercased and trimmed.
pub fn normalize_url(raw: &str) -> String {
    let trimmed = raw.trim();
    match url::Url::parse(trimmed) {
        Ok(parsed) if parsed.has_host() => {
            let mut out = format!("{}://{}", parsed.scheme(), parsed.host_str().unwrap_or_default().to_lowercase());
            if let Some(port) = parsed.port() {
                out.push_str(&format!(":{port}"));
            }
            out.push_str(parsed.path());
            if let Some(q) = parsed.query() {
                out.push('?');
                out.push_str(q);
            }
            while out.ends_with('/') {
                out.pop();
            }
            out
        }
        _ => {
            let mut out = trimmed.to_lowercase();
            while out.ends_with('/') {
                out.pop();
            }
            out
        }
    }
}

/// Reduces a URL to the `host/path` form used when scanning text:
/// no scheme, no `www.`, lowercase, no trailing slash.
pub fn url_match_key(raw: &str) -> String {
    let mut s = raw.trim().to_lowercase();
    for scheme in ["https://", "http://", "ftp://"] {
        if let Some(rest) = s.strip_prefix(scheme) {
            s = rest.to_string();
            break;
        }
    }
    if let Some(rest) = s.strip_prefix("www.") {
        s = rest.to_string();
    }
    while s.ends_with('/') {
        s.pop();
    }
    s
}

/// Collapses runs of whitespace into single spaces and trims.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Title normalization: lowercase, punctuation replaced by spaces,
/// whitespace collapsed.
pub fn normalize_title(s: &str) -> String {
    let mapped: String =
        s.chars().flat_map(char::to_lowercase).map(|c| if c.is_alphanumeric() { c } else { ' ' }).collect();
    collapse_whitespace(&mapped)
}

/// Levenshtein distance over chars, two-row DP.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - distance / max(len)`; two empty strings are identical.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - edit_distance(a, b) as f64 / longest as f64
}

/// Filesystem-safe identifier derived from an arbitrary key such as a DBLP key.
pub fn slug(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.trim().chars() {
        if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
            out.push(c);
        } else {
            out.push('_');
        }
    }
    out.trim_matches('.').to_string()
}
