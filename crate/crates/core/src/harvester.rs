//! Venue paper lists from DBLP and per-paper metadata from OpenAlex.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::catalog::{DatasetRecord, VenueRecord};
use crate::http::{HttpClient, HttpError};
use crate::normalize::{normalize_doi, normalize_title, slug};

pub const DBLP_SEARCH_URL: &str = "https://dblp.org/search/publ/api";
pub const OPENALEX_WORKS_URL: &str = "https://api.openalex.org/works";
/// Fields requested from OpenAlex; part of the cache key.
pub const OPENALEX_SELECT: &str =
    "id,doi,display_name,publication_year,abstract_inverted_index,referenced_works,open_access,best_oa_location";
const DBLP_PAGE: usize = 1000;

#[derive(Debug, Error)]
pub enum HarvestError {
    #[error("venue `{0}` has no publications on DBLP")]
    VenueNotFound(String),
    #[error("`{0}` is not in the index")]
    NotInIndex(String),
    #[error("title `{title}` matches {hits} indexed works")]
    AmbiguousTitleMatch { title: String, hits: usize },
    #[error("paper `{0}` has neither DOI nor title")]
    NoLookupKey(String),
    #[error("unexpected payload from {url}: {message}")]
    Payload { url: String, message: String },
    #[error(transparent)]
    Http(#[from] HttpError),
}

impl HarvestError {
    pub fn is_rate_limited(&self) -> bool {
        matches!(self, HarvestError::Http(HttpError::RateLimited { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbstractSource {
    Openalex,
    Fulltext,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FulltextStatus {
    Available,
    Scraped,
    #[default]
    Unavailable,
}

impl FulltextStatus {
    pub fn has_pdf(self) -> bool {
        matches!(self, FulltextStatus::Available | FulltextStatus::Scraped)
    }
}

/// Outcome of the OpenAlex lookup for a paper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexStatus {
    #[default]
    Pending,
    Found,
    NotInIndex,
    Ambiguous,
}

/// One venue paper and what is known about it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: String,
    pub venue_id: String,
    pub year: i32,
    pub title: String,
    pub doi: Option<String>,
    /// Publisher landing page (DBLP `ee`), used by scrapers.
    #[serde(default)]
    pub landing_url: Option<String>,
    #[serde(default)]
    pub index_status: IndexStatus,
    #[serde(default)]
    pub openalex_id: Option<String>,
    #[serde(default)]
    pub abstract_source: AbstractSource,
    #[serde(default)]
    pub abstract_text: Option<String>,
    #[serde(default)]
    pub referenced_work_ids: Option<Vec<String>>,
    #[serde(default)]
    pub oa_fulltext_url: Option<String>,
    #[serde(default)]
    pub fulltext_status: FulltextStatus,
}

impl PaperRecord {
    pub fn new(paper_id: String, venue_id: String, year: i32, title: String, doi: Option<String>) -> Self {
        PaperRecord {
            paper_id,
            venue_id,
            year,
            title,
            doi,
            landing_url: None,
            index_status: IndexStatus::Pending,
            openalex_id: None,
            abstract_source: AbstractSource::None,
            abstract_text: None,
            referenced_work_ids: None,
            oa_fulltext_url: None,
            fulltext_status: FulltextStatus::Unavailable,
        }
    }

    /// True when OpenAlex delivered a nonempty reference list.
    pub fn has_references(&self) -> bool {
        self.referenced_work_ids.as_ref().is_some_and(|r| !r.is_empty())
    }

    pub fn has_openalex_abstract(&self) -> bool {
        self.abstract_source == AbstractSource::Openalex
            && self.abstract_text.as_ref().is_some_and(|t| !t.trim().is_empty())
    }
}

/// OpenAlex's word → positions abstract encoding.
pub type InvertedAbstract = BTreeMap<String, Vec<usize>>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AbstractError {
    #[error("no word at position {0}")]
    GapInPositions(usize),
    #[error("position {0} is used twice")]
    DuplicatePosition(usize),
}

/// Places every word at its positions and joins with single spaces.
pub fn reconstruct_abstract(idx: &InvertedAbstract) -> Result<String, AbstractError> {
    let total: usize = idx.values().map(Vec::len).sum();
    let mut slots: Vec<Option<&str>> = vec![None; total];
    for (word, positions) in idx {
        for &p in positions {
            match slots.get_mut(p) {
                Some(Some(_)) => return Err(AbstractError::DuplicatePosition(p)),
                Some(slot) => *slot = Some(word.as_str()),
                // out of range: some lower slot stays empty and is reported below
                None => {}
            }
        }
    }
    let mut words = Vec::with_capacity(total);
    for (i, w) in slots.into_iter().enumerate() {
        words.push(w.ok_or(AbstractError::GapInPositions(i))?);
    }
    Ok(words.join(" "))
}

fn payload_err(url: &str, message: impl Into<String>) -> HarvestError {
    HarvestError::Payload { url: url.to_string(), message: message.into() }
}

fn parse_json(url: &str, bytes: &[u8]) -> Result<Value, HarvestError> {
    serde_json::from_slice(bytes).map_err(|e| payload_err(url, e.to_string()))
}

fn as_int(v: &Value) -> Option<i64> {
    v.as_i64().or_else(|| v.as_str().and_then(|s| s.trim().parse().ok()))
}

/// Lists one venue's publications within its year range.
pub fn fetch_venue_papers(client: &HttpClient, venue: &VenueRecord) -> Result<Vec<PaperRecord>, HarvestError> {
    let query = format!("stream:streams/{}:", venue.dblp_stream_key);
    let page = DBLP_PAGE.to_string();
    let mut offset = 0usize;
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    loop {
        let first = offset.to_string();
        let body =
            client.cached_get(DBLP_SEARCH_URL, &[("q", &query), ("h", &page), ("f", &first), ("format", "json")])?;
        let json = parse_json(DBLP_SEARCH_URL, &body)?;
        let hits = &json["result"]["hits"];
        let total = as_int(&hits["@total"]).ok_or_else(|| payload_err(DBLP_SEARCH_URL, "missing @total"))? as usize;
        if total == 0 {
            return Err(HarvestError::VenueNotFound(venue.venue_id.clone()));
        }
        let batch: Vec<&Value> = match &hits["hit"] {
            Value::Array(a) => a.iter().collect(),
            Value::Object(_) => vec![&hits["hit"]],
            _ => Vec::new(),
        };
        let sent = batch.len();
        for hit in batch {
            let info = &hit["info"];
            if info["type"].as_str() == Some("Editorship") {
                continue;
            }
            let Some(key) = info["key"].as_str() else { continue };
            let Some(year) = as_int(&info["year"]) else { continue };
            let year = year as i32;
            if !venue.contains_year(year) || !seen.insert(key.to_string()) {
                continue;
            }
            let title = info["title"].as_str().unwrap_or("").trim().trim_end_matches('.').to_string();
            let doi = info["doi"].as_str().and_then(normalize_doi);
            let mut paper = PaperRecord::new(slug(key), venue.venue_id.clone(), year, title, doi);
            paper.landing_url = match &info["ee"] {
                Value::String(s) => Some(s.clone()),
                Value::Array(a) => a
                    .iter()
                    .filter_map(Value::as_str)
                    .find(|s| !s.contains("doi.org"))
                    .or_else(|| a.first().and_then(Value::as_str))
                    .map(str::to_string),
                _ => None,
            };
            out.push(paper);
        }
        offset += sent;
        if sent == 0 || offset >= total {
            break;
        }
    }
    out.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
    Ok(out)
}

/// The subset of an OpenAlex work the pipeline uses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkSummary {
    pub openalex_id: String,
    pub abstract_text: Option<String>,
    pub referenced_work_ids: Option<Vec<String>>,
    pub oa_fulltext_url: Option<String>,
}

/// `https://openalex.org/W123` → `W123`.
pub fn short_work_id(id: &str) -> String {
    id.rsplit('/').next().unwrap_or(id).to_string()
}

fn parse_work(url: &str, work: &Value) -> Result<WorkSummary, HarvestError> {
    let id = work["id"].as_str().ok_or_else(|| payload_err(url, "work without id"))?;
    let abstract_text = match &work["abstract_inverted_index"] {
        Value::Object(map) if !map.is_empty() => {
            let mut idx = InvertedAbstract::new();
            for (word, positions) in map {
                let ps = positions
                    .as_array()
                    .ok_or_else(|| payload_err(url, "positions must be an array"))?
                    .iter()
                    .map(|p| p.as_u64().map(|p| p as usize))
                    .collect::<Option<Vec<_>>>()
                    .ok_or_else(|| payload_err(url, "positions must be integers"))?;
                idx.insert(word.clone(), ps);
            }
            match reconstruct_abstract(&idx) {
                Ok(text) if !text.trim().is_empty() => Some(text),
                Ok(_) => None,
                Err(e) => {
                    log::warn!("{id}: unusable inverted abstract ({e})");
                    None
                }
            }
        }
        _ => None,
    };
    let referenced_work_ids = work["referenced_works"].as_array().map(|refs| {
        let mut seen = HashSet::new();
        refs.iter().filter_map(Value::as_str).map(short_work_id).filter(|r| seen.insert(r.clone())).collect()
    });
    let oa_fulltext_url = work["best_oa_location"]["pdf_url"]
        .as_str()
        .or_else(|| work["open_access"]["oa_url"].as_str())
        .filter(|s| !s.is_empty())
        .map(str::to_string);
    Ok(WorkSummary { openalex_id: short_work_id(id), abstract_text, referenced_work_ids, oa_fulltext_url })
}

fn results(url: &str, body: &[u8]) -> Result<Vec<Value>, HarvestError> {
    let json = parse_json(url, body)?;
    match json.get("results") {
        Some(Value::Array(a)) => Ok(a.clone()),
        _ => Err(payload_err(url, "missing results array")),
    }
}

/// Looks up one work by DOI.
pub fn lookup_work_by_doi(client: &HttpClient, doi: &str) -> Result<WorkSummary, HarvestError> {
    let filter = format!("doi:{doi}");
    let body = client.cached_get(OPENALEX_WORKS_URL, &[("filter", &filter), ("select", OPENALEX_SELECT)])?;
    let works = results(OPENALEX_WORKS_URL, &body)?;
    match works.first() {
        Some(w) => parse_work(OPENALEX_WORKS_URL, w),
        None => Err(HarvestError::NotInIndex(doi.to_string())),
    }
}

/// Looks up one work by exact normalized title. More than one exact hit is
/// reported as ambiguous rather than resolved by score.
pub fn lookup_work_by_title(client: &HttpClient, title: &str) -> Result<WorkSummary, HarvestError> {
    let wanted = normalize_title(title);
    if wanted.is_empty() {
        return Err(HarvestError::NotInIndex(title.to_string()));
    }
    let filter = format!("title.search:{wanted}");
    let body = client
        .cached_get(OPENALEX_WORKS_URL, &[("filter", &filter), ("select", OPENALEX_SELECT), ("per-page", "25")])?;
    let works = results(OPENALEX_WORKS_URL, &body)?;
    let exact: Vec<&Value> = works
        .iter()
        .filter(|w| w["display_name"].as_str().map(normalize_title).as_deref() == Some(wanted.as_str()))
        .collect();
    match exact.len() {
        0 => Err(HarvestError::NotInIndex(title.to_string())),
        1 => parse_work(OPENALEX_WORKS_URL, exact[0]),
        hits => Err(HarvestError::AmbiguousTitleMatch { title: title.to_string(), hits }),
    }
}

/// Enriches a paper with OpenAlex metadata. Fields the index lacks stay `None`.
pub fn fetch_work_metadata(client: &HttpClient, paper: &PaperRecord) -> Result<PaperRecord, HarvestError> {
    let work = match (&paper.doi, paper.title.trim().is_empty()) {
        (Some(doi), _) => lookup_work_by_doi(client, doi)?,
        (None, false) => lookup_work_by_title(client, &paper.title)?,
        (None, true) => return Err(HarvestError::NoLookupKey(paper.paper_id.clone())),
    };
    let mut out = paper.clone();
    out.index_status = IndexStatus::Found;
    out.openalex_id = Some(work.openalex_id);
    out.abstract_source = if work.abstract_text.is_some() { AbstractSource::Openalex } else { AbstractSource::None };
    out.abstract_text = work.abstract_text;
    out.referenced_work_ids = work.referenced_work_ids;
    out.oa_fulltext_url = work.oa_fulltext_url;
    Ok(out)
}

/// Registry DOIs resolved to OpenAlex work IDs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetWorks {
    /// dataset_id → work IDs of its associated papers.
    pub resolved: BTreeMap<String, Vec<String>>,
    /// (dataset_id, DOI) pairs the index could not resolve.
    pub unresolved: Vec<(String, String)>,
}

pub fn resolve_dataset_works(client: &HttpClient, registry: &[DatasetRecord]) -> Result<DatasetWorks, HarvestError> {
    let mut out = DatasetWorks::default();
    for ds in registry {
        let mut ids = Vec::new();
        for doi in &ds.paper_dois {
            match lookup_work_by_doi(client, doi) {
                Ok(w) => {
                    if !ids.contains(&w.openalex_id) {
                        ids.push(w.openalex_id)
                    }
                }
                Err(HarvestError::NotInIndex(_)) => {
                    out.unresolved.push((ds.dataset_id.clone(), doi.clone()));
                }
                Err(e) => return Err(e),
            }
        }
        out.resolved.insert(ds.dataset_id.clone(), ids);
    }
    Ok(out)
}
