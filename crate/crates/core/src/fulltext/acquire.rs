//! PDF acquisition: open-access link first, per-venue scraper second.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::harvester::{FulltextStatus, PaperRecord};
use crate::http::{write_atomic, HttpClient};

#[derive(Debug, Error)]
pub enum ScrapeError {
    #[error("paper has no landing page")]
    NoLandingPage,
    #[error("no PDF link on {0}")]
    NoPdfLink(String),
    #[error("fetched content is not a PDF")]
    NotPdf,
    #[error("{0}")]
    Fetch(String),
}

/// Venue-specific fallback for papers whose open-access link fails.
pub trait Scraper: Send + Sync {
    fn name(&self) -> &str;
    fn scrape(&self, paper: &PaperRecord, http: &HttpClient) -> Result<Vec<u8>, ScrapeError>;
}

pub fn is_pdf(bytes: &[u8]) -> bool {
    bytes.starts_with(b"%PDF")
}

/// Follows a paper's landing page and downloads the first linked PDF.
/// Works for PMLR-style proceedings pages.
pub struct LandingPageScraper;

impl LandingPageScraper {
    fn pdf_link(page: &str, base: &url::Url) -> Option<url::Url> {
        let lower = page.to_ascii_lowercase();
        let mut from = 0;
        while let Some(i) = lower[from..].find("href=") {
            let start = from + i + 5;
            from = start;
            let quote = page[start..].chars().next()?;
            if quote != '"' && quote != '\'' {
                continue;
            }
            let rest = &page[start + 1..];
            let end = rest.find(quote)?;
            let href = &rest[..end];
            if href.to_ascii_lowercase().ends_with(".pdf") {
                return base.join(href).ok();
            }
        }
        None
    }
}

impl Scraper for LandingPageScraper {
    fn name(&self) -> &str {
        "landing-page"
    }

    fn scrape(&self, paper: &PaperRecord, http: &HttpClient) -> Result<Vec<u8>, ScrapeError> {
        let landing = paper.landing_url.as_deref().ok_or(ScrapeError::NoLandingPage)?;
        let base = url::Url::parse(landing).map_err(|e| ScrapeError::Fetch(e.to_string()))?;
        let page = http.cached_get(landing, &[]).map_err(|e| ScrapeError::Fetch(e.to_string()))?;
        let page = String::from_utf8_lossy(&page);
        let link = Self::pdf_link(&page, &base).ok_or_else(|| ScrapeError::NoPdfLink(landing.to_string()))?;
        let pdf = http.cached_get(link.as_str(), &[]).map_err(|e| ScrapeError::Fetch(e.to_string()))?;
        if is_pdf(&pdf) {
            Ok(pdf)
        } else {
            Err(ScrapeError::NotPdf)
        }
    }
}

/// Picks up PDFs that an external tool dropped in a directory as `<paper_id>.pdf`.
pub struct DirectoryScraper {
    pub dir: PathBuf,
}

impl Scraper for DirectoryScraper {
    fn name(&self) -> &str {
        "directory"
    }

    fn scrape(&self, paper: &PaperRecord, _: &HttpClient) -> Result<Vec<u8>, ScrapeError> {
        let path = self.dir.join(format!("{}.pdf", paper.paper_id));
        let bytes = std::fs::read(&path).map_err(|e| ScrapeError::Fetch(format!("{}: {e}", path.display())))?;
        if is_pdf(&bytes) {
            Ok(bytes)
        } else {
            Err(ScrapeError::NotPdf)
        }
    }
}

/// Where a stored PDF came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    OpenAccess,
    Scraped,
}

/// `pdfs/` directory. Open-access downloads land at `<id>.pdf`, scraper
/// output at `<id>.scraped.pdf` until [`dedupe_pdfs`] folds it into `<id>.pdf`.
#[derive(Debug, Clone)]
pub struct PdfStore {
    root: PathBuf,
}

const SCRAPED_SUFFIX: &str = ".scraped.pdf";

impl PdfStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        PdfStore { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, paper_id: &str) -> PathBuf {
        self.root.join(format!("{paper_id}.pdf"))
    }

    fn origin_path(&self, paper_id: &str, origin: Origin) -> PathBuf {
        match origin {
            Origin::OpenAccess => self.path(paper_id),
            Origin::Scraped => self.root.join(format!("{paper_id}{SCRAPED_SUFFIX}")),
        }
    }

    pub fn put(&self, paper_id: &str, origin: Origin, bytes: &[u8]) -> std::io::Result<PathBuf> {
        let path = self.origin_path(paper_id, origin);
        write_atomic(&path, bytes)?;
        Ok(path)
    }

    /// Any artifact for a paper, canonical or not yet deduplicated.
    pub fn has_artifact(&self, paper_id: &str) -> bool {
        self.path(paper_id).is_file() || self.origin_path(paper_id, Origin::Scraped).is_file()
    }

    /// paper_id → origins present on disk.
    pub fn inventory(&self) -> std::io::Result<BTreeMap<String, Vec<Origin>>> {
        let mut out: BTreeMap<String, Vec<Origin>> = BTreeMap::new();
        let entries = match std::fs::read_dir(&self.root) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(e),
        };
        for entry in entries {
            let name = entry?.file_name().to_string_lossy().into_owned();
            if let Some(id) = name.strip_suffix(SCRAPED_SUFFIX) {
                out.entry(id.to_string()).or_default().push(Origin::Scraped);
            } else if let Some(id) = name.strip_suffix(".pdf") {
                out.entry(id.to_string()).or_default().push(Origin::OpenAccess);
            }
        }
        for v in out.values_mut() {
            v.sort();
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AcquireOutcome {
    pub paper: PaperRecord,
    pub oa_error: Option<String>,
    pub scrape_error: Option<String>,
}

/// Tries the open-access link, then the venue's scraper. Never fails: a paper
/// with neither ends up `Unavailable`. With `always_scrape` the scraper also
/// runs after a successful download, leaving duplicates for [`dedupe_pdfs`].
pub fn acquire_pdf(
    paper: &PaperRecord,
    http: &HttpClient,
    scraper: Option<&dyn Scraper>,
    store: &PdfStore,
    always_scrape: bool,
) -> AcquireOutcome {
    let mut out = paper.clone();
    let mut oa_error = None;
    let mut scrape_error = None;
    out.fulltext_status = FulltextStatus::Unavailable;

    match &paper.oa_fulltext_url {
        Some(url) => match http.cached_get(url, &[]) {
            Ok(bytes) if is_pdf(&bytes) => match store.put(&paper.paper_id, Origin::OpenAccess, &bytes) {
                Ok(_) => out.fulltext_status = FulltextStatus::Available,
                Err(e) => oa_error = Some(e.to_string()),
            },
            Ok(_) => oa_error = Some("open-access link did not return a PDF".into()),
            Err(e) => oa_error = Some(e.to_string()),
        },
        None => oa_error = Some("no open-access link".into()),
    }

    if out.fulltext_status == FulltextStatus::Unavailable || always_scrape {
        match scraper {
            Some(s) => match s.scrape(paper, http) {
                Ok(bytes) => match store.put(&paper.paper_id, Origin::Scraped, &bytes) {
                    Ok(_) if out.fulltext_status == FulltextStatus::Unavailable => {
                        out.fulltext_status = FulltextStatus::Scraped
                    }
                    Ok(_) => {}
                    Err(e) => scrape_error = Some(e.to_string()),
                },
                Err(e) => scrape_error = Some(format!("{}: {e}", s.name())),
            },
            None if out.fulltext_status == FulltextStatus::Unavailable => {
                scrape_error = Some(format!("no scraper for venue `{}`", paper.venue_id))
            }
            None => {}
        }
    }
    AcquireOutcome { paper: out, oa_error, scrape_error }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DedupeReason {
    Identical,
    Preference,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DedupeAction {
    pub paper_id: String,
    pub dropped: Origin,
    pub reason: DedupeReason,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Leaves exactly one `<id>.pdf` per paper. Byte-identical pairs keep the
/// open-access copy; differing pairs keep `prefer`. Returns the drops and the
/// origin retained for every paper in the store.
pub fn dedupe_pdfs(store: &PdfStore, prefer: Origin) -> std::io::Result<(Vec<DedupeAction>, BTreeMap<String, Origin>)> {
    let mut report = Vec::new();
    let mut retained = BTreeMap::new();
    for (id, origins) in store.inventory()? {
        let oa = store.origin_path(&id, Origin::OpenAccess);
        let scraped = store.origin_path(&id, Origin::Scraped);
        match origins.as_slice() {
            [Origin::OpenAccess, Origin::Scraped] => {
                let same = sha256_hex(&std::fs::read(&oa)?) == sha256_hex(&std::fs::read(&scraped)?);
                let (keep, reason) = if same {
                    (Origin::OpenAccess, DedupeReason::Identical)
                } else {
                    (prefer, DedupeReason::Preference)
                };
                let dropped = match keep {
                    Origin::OpenAccess => {
                        std::fs::remove_file(&scraped)?;
                        Origin::Scraped
                    }
                    Origin::Scraped => {
                        std::fs::rename(&scraped, &oa)?;
                        Origin::OpenAccess
                    }
                };
                report.push(DedupeAction { paper_id: id.clone(), dropped, reason });
                retained.insert(id, keep);
            }
            [Origin::Scraped] => {
                std::fs::rename(&scraped, &oa)?;
                retained.insert(id, Origin::Scraped);
            }
            _ => {
                retained.insert(id, Origin::OpenAccess);
            }
        }
    }
    Ok((report, retained))
}
