//! Run configuration and the pipeline stages.
//!
//! Every stage reads its predecessor's artifact from the work directory and
//! writes one JSON artifact of its own, so stages can be re-run in isolation:
//!
//! | stage          | reads                         | writes                          |
//! |----------------|-------------------------------|---------------------------------|
//! | harvest        | registry, venues              | `harvest.json`                  |
//! | fetch-fulltext | `harvest.json`                | `fulltext.json`, `pdfs/`        |
//! | convert        | `fulltext.json`, `pdfs/`      | `converted.json`, `tei/`        |
//! | detect         | `converted.json`, `tei/`      | `detections.json`               |
//! | analyze        | `converted.json`, detections  | `analysis.json`                 |
//! | report         | `analysis.json`, detections   | `out/*.csv`, `out/manifest.json`|

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{
    aggregate_presence, assign_group, compare_citation_indexes, cumulative_series, year_range, AnalyzerError, Group,
    GroupAssignment, IndexComparison, PresenceSummary, YearSeries,
};
use crate::catalog::{load_dataset_registry, load_venue_list, CatalogError, DatasetRecord, VenueRecord};
use crate::detector::{
    resolve_presence, sort_detections, Detection, Detector, DetectorError, MatcherConfig, PresenceRecord,
};
use crate::fulltext::{
    acquire_pdf, dedupe_pdfs, parse_tei, CachedConverter, ConvertError, DedupeAction, DirectoryScraper, GrobidClient,
    LandingPageScraper, Origin, PdfStore, Scraper, TeiConverter,
};
use crate::harvester::{
    fetch_venue_papers, fetch_work_metadata, resolve_dataset_works, short_work_id, AbstractSource, DatasetWorks,
    FulltextStatus, HarvestError, IndexStatus, PaperRecord,
};
use crate::http::{write_atomic, CacheMode, HttpClient, HttpConfig, NoNetwork, ResponseCache, UreqTransport};
use crate::normalize::normalize_doi;
use crate::reporter::{emit_reports, InputDigest, ReportError, Reports, RunManifest};

pub const HARVEST_ARTIFACT: &str = "harvest.json";
pub const FULLTEXT_ARTIFACT: &str = "fulltext.json";
pub const CONVERTED_ARTIFACT: &str = "converted.json";
pub const DETECTIONS_ARTIFACT: &str = "detections.json";
pub const ANALYSIS_ARTIFACT: &str = "analysis.json";

/// Environment variable consulted for the OpenAlex contact address.
pub const MAILTO_ENV: &str = "DSPROBE_MAILTO";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config file not found: {0}")]
    ConfigMissing(PathBuf),
    #[error("invalid config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("{stage}: required input missing: {artifact}")]
    StageInputMissing { stage: &'static str, artifact: PathBuf },
    #[error("{path}: {message}")]
    Artifact { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Harvest(#[from] HarvestError),
    #[error("paper {paper_id}: {source}")]
    Convert { paper_id: String, source: ConvertError },
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Analyzer(#[from] AnalyzerError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl PipelineError {
    /// Stable machine-readable error name.
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::ConfigMissing(_) => "ConfigMissing",
            PipelineError::Config { .. } => "ConfigInvalid",
            PipelineError::StageInputMissing { .. } => "StageInputMissing",
            PipelineError::Artifact { .. } => "ArtifactInvalid",
            PipelineError::Io { .. } => "IoError",
            PipelineError::Catalog(_) => "CatalogError",
            PipelineError::Harvest(HarvestError::VenueNotFound(_)) => "VenueNotFound",
            PipelineError::Harvest(HarvestError::Http(_)) => "TransportError",
            PipelineError::Harvest(_) => "HarvestError",
            PipelineError::Convert { source: ConvertError::ServiceUnavailable(_), .. } => "ServiceUnavailable",
            PipelineError::Convert { .. } => "ConversionFailed",
            PipelineError::Detector(_) => "DetectorConfig",
            PipelineError::Analyzer(AnalyzerError::DanglingPaperRef { .. }) => "DanglingPaperRef",
            PipelineError::Report(_) => "IoError",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

/// How a venue's PDFs are scraped when the open-access link fails.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScraperConfig {
    LandingPage,
    Directory { dir: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FulltextConfig {
    /// Run the scraper even after a successful open-access download.
    pub always_scrape: bool,
    /// Copy kept when two differing PDFs exist for one paper.
    pub prefer: Origin,
}

impl Default for FulltextConfig {
    fn default() -> Self {
        FulltextConfig { always_scrape: false, prefer: Origin::Scraped }
    }
}

fn default_work() -> PathBuf {
    "work".into()
}
fn default_out() -> PathBuf {
    "out".into()
}
fn default_cache() -> PathBuf {
    "cache".into()
}
fn default_grobid() -> String {
    "http://localhost:8070".into()
}

/// Run configuration. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub datasets: PathBuf,
    pub venues: PathBuf,
    #[serde(default = "default_work")]
    pub work_dir: PathBuf,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default = "default_cache")]
    pub cache_dir: PathBuf,
    #[serde(default)]
    pub mailto: Option<String>,
    #[serde(default = "default_grobid")]
    pub grobid_url: String,
    #[serde(default)]
    pub workers: Option<usize>,
    /// Serve every request from `cache_dir`; no network access.
    #[serde(default)]
    pub replay: bool,
    #[serde(default)]
    pub http: HttpConfig,
    #[serde(default)]
    pub matcher: MatcherConfig,
    #[serde(default)]
    pub fulltext: FulltextConfig,
    /// venue_id → scraper.
    #[serde(default)]
    pub scrapers: BTreeMap<String, ScraperConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Config {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(PipelineError::ConfigMissing(path.to_path_buf()))
            }
            Err(e) => return Err(PipelineError::Io { path: path.to_path_buf(), source: e }),
        };
        let mut config =
            Self::parse(&text).map_err(|message| PipelineError::Config { path: path.to_path_buf(), message })?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let config: Config = toml::from_str(text).map_err(|e| e.to_string())?;
        if config.workers == Some(0) {
            return Err("workers must be at least 1".into());
        }
        Ok(config)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn work_path(&self, name: &str) -> PathBuf {
        self.resolve(&self.work_dir).join(name)
    }

    fn effective_mailto(&self) -> Option<String> {
        self.mailto.clone().or_else(|| std::env::var(MAILTO_ENV).ok().filter(|m| !m.is_empty()))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct HarvestArtifact {
    pub papers: Vec<PaperRecord>,
    pub dataset_works: DatasetWorks,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcquireFailure {
    pub paper_id: String,
    pub oa_error: Option<String>,
    pub scrape_error: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FulltextArtifact {
    pub papers: Vec<PaperRecord>,
    pub failures: Vec<AcquireFailure>,
    pub dedupe: Vec<DedupeAction>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversionFailure {
    pub paper_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConvertedArtifact {
    pub papers: Vec<PaperRecord>,
    pub failures: Vec<ConversionFailure>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DetectionsArtifact {
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AnalysisArtifact {
    pub years: Option<(i32, i32)>,
    pub groups: Vec<GroupAssignment>,
    pub presence: Vec<PresenceRecord>,
    pub summaries: Vec<PresenceSummary>,
    pub series: Vec<YearSeries>,
    pub counts: BTreeMap<String, usize>,
}

/// Per-stage result printed by the CLI.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StageSummary {
    pub stage: &'static str,
    pub counts: BTreeMap<String, usize>,
}

fn read_artifact<T: DeserializeOwned>(stage: &'static str, path: &Path) -> Result<T, PipelineError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(PipelineError::StageInputMissing { stage, artifact: path.to_path_buf() })
        }
        Err(e) => return Err(PipelineError::Io { path: path.to_path_buf(), source: e }),
    };
    serde_json::from_str(&text)
        .map_err(|e| PipelineError::Artifact { path: path.to_path_buf(), message: e.to_string() })
}

fn write_artifact<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut json = serde_json::to_vec_pretty(value)
        .map_err(|e| PipelineError::Artifact { path: path.to_path_buf(), message: e.to_string() })?;
    json.push(b'\n');
    write_atomic(path, &json).map_err(io_err(path))
}

pub struct Pipeline {
    config: Config,
    http: HttpClient,
    pool: rayon::ThreadPool,
}

impl Pipeline {
    pub fn new(config: Config) -> Result<Self, PipelineError> {
        let mut http_config = config.http.clone();
        http_config.mailto = config.effective_mailto();
        let cache = ResponseCache::new(config.resolve(&config.cache_dir));
        let http = if config.replay {
            HttpClient::new(Arc::new(NoNetwork), cache, http_config, CacheMode::Offline)
        } else {
            let ua = format!("dsprobe/{}", env!("CARGO_PKG_VERSION"));
            let transport = UreqTransport::new(ua, Duration::from_secs(120));
            HttpClient::new(Arc::new(transport), cache, http_config, CacheMode::ReadWrite)
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers.unwrap_or(0))
            .build()
            .map_err(|e| PipelineError::Config { path: config.base_dir.clone(), message: e.to_string() })?;
        Ok(Pipeline { config, http, pool })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    fn registry(&self) -> Result<Vec<DatasetRecord>, PipelineError> {
        Ok(load_dataset_registry(&self.config.resolve(&self.config.datasets))?)
    }

    fn venues(&self) -> Result<Vec<VenueRecord>, PipelineError> {
        Ok(load_venue_list(&self.config.resolve(&self.config.venues))?)
    }

    fn work_dir(&self) -> Result<PathBuf, PipelineError> {
        let dir = self.config.resolve(&self.config.work_dir);
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        Ok(dir)
    }

    /// Venue paper lists from DBLP, then OpenAlex metadata per paper and
    /// work IDs for every registry DOI.
    pub fn harvest(&self) -> Result<StageSummary, PipelineError> {
        let registry = self.registry()?;
        let venues = self.venues()?;
        let mut listed = Vec::new();
        for v in &venues {
            listed.extend(fetch_venue_papers(&self.http, v)?);
        }
        let mut seen = BTreeSet::new();
        listed.retain(|p: &PaperRecord| seen.insert(p.paper_id.clone()));
        listed.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));

        let results: Vec<Result<PaperRecord, HarvestError>> = self.pool.install(|| {
            listed
                .par_iter()
                .map(|p| match fetch_work_metadata(&self.http, p) {
                    Ok(found) => Ok(found),
                    Err(HarvestError::NotInIndex(_) | HarvestError::NoLookupKey(_)) => {
                        Ok(PaperRecord { index_status: IndexStatus::NotInIndex, ..p.clone() })
                    }
                    Err(HarvestError::AmbiguousTitleMatch { title, hits }) => {
                        log::warn!("{}: title `{title}` matches {hits} works", p.paper_id);
                        Ok(PaperRecord { index_status: IndexStatus::Ambiguous, ..p.clone() })
                    }
                    Err(e) => Err(e),
                })
                .collect()
        });
        let papers = results.into_iter().collect::<Result<Vec<_>, _>>()?;
        let dataset_works = resolve_dataset_works(&self.http, &registry)?;
        for (ds, doi) in &dataset_works.unresolved {
            log::warn!("dataset {ds}: DOI {doi} not found in OpenAlex");
        }

        let mut counts = BTreeMap::new();
        counts.insert("venues".into(), venues.len());
        counts.insert("papers".into(), papers.len());
        for (name, status) in [
            ("found", IndexStatus::Found),
            ("not_in_index", IndexStatus::NotInIndex),
            ("ambiguous", IndexStatus::Ambiguous),
        ] {
            counts.insert(name.into(), papers.iter().filter(|p| p.index_status == status).count());
        }
        counts.insert("unresolved_dataset_dois".into(), dataset_works.unresolved.len());
        let dir = self.work_dir()?;
        write_artifact(&dir.join(HARVEST_ARTIFACT), &HarvestArtifact { papers, dataset_works })?;
        Ok(StageSummary { stage: "harvest", counts })
    }

    fn scraper_for(&self, venue: &str) -> Option<Box<dyn Scraper>> {
        match self.config.scrapers.get(venue)? {
            ScraperConfig::LandingPage => Some(Box::new(LandingPageScraper)),
            ScraperConfig::Directory { dir } => Some(Box::new(DirectoryScraper { dir: self.config.resolve(dir) })),
        }
    }

    /// PDF acquisition (open access, then scraper) and deduplication.
    pub fn fetch_fulltext(&self) -> Result<StageSummary, PipelineError> {
        let dir = self.work_dir()?;
        let harvest: HarvestArtifact = read_artifact("fetch-fulltext", &dir.join(HARVEST_ARTIFACT))?;
        let store = PdfStore::new(dir.join("pdfs"));
        std::fs::create_dir_all(store.root()).map_err(io_err(store.root()))?;
        let scrapers: BTreeMap<String, Box<dyn Scraper>> = harvest
            .papers
            .iter()
            .map(|p| p.venue_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .filter_map(|v| self.scraper_for(&v).map(|s| (v, s)))
            .collect();
        let always = self.config.fulltext.always_scrape;
        let outcomes: Vec<_> = self.pool.install(|| {
            harvest
                .papers
                .par_iter()
                .map(|p| acquire_pdf(p, &self.http, scrapers.get(&p.venue_id).map(|s| s.as_ref()), &store, always))
                .collect()
        });
        let (dedupe, retained) = dedupe_pdfs(&store, self.config.fulltext.prefer).map_err(io_err(store.root()))?;

        let mut papers = Vec::with_capacity(outcomes.len());
        let mut failures = Vec::new();
        for o in outcomes {
            let mut p = o.paper;
            p.fulltext_status = match retained.get(&p.paper_id) {
                Some(Origin::OpenAccess) => FulltextStatus::Available,
                Some(Origin::Scraped) => FulltextStatus::Scraped,
                None => FulltextStatus::Unavailable,
            };
            if o.oa_error.is_some() && o.scrape_error.is_some() || !p.fulltext_status.has_pdf() {
                failures.push(AcquireFailure {
                    paper_id: p.paper_id.clone(),
                    oa_error: o.oa_error,
                    scrape_error: o.scrape_error,
                });
            }
            papers.push(p);
        }
        let mut counts = BTreeMap::new();
        counts.insert("papers".into(), papers.len());
        counts.insert(
            "available".into(),
            papers.iter().filter(|p| p.fulltext_status == FulltextStatus::Available).count(),
        );
        counts.insert("scraped".into(), papers.iter().filter(|p| p.fulltext_status == FulltextStatus::Scraped).count());
        counts.insert("unavailable".into(), papers.iter().filter(|p| !p.fulltext_status.has_pdf()).count());
        counts.insert("duplicates_removed".into(), dedupe.len());
        write_artifact(&dir.join(FULLTEXT_ARTIFACT), &FulltextArtifact { papers, failures, dedupe })?;
        Ok(StageSummary { stage: "fetch-fulltext", counts })
    }

    /// GROBID conversion of every stored PDF. A definitive conversion failure
    /// downgrades that paper to no full text; an unreachable service fails the stage.
    pub fn convert(&self) -> Result<StageSummary, PipelineError> {
        let dir = self.work_dir()?;
        let fulltext: FulltextArtifact = read_artifact("convert", &dir.join(FULLTEXT_ARTIFACT))?;
        let store = PdfStore::new(dir.join("pdfs"));
        let tei_dir = dir.join("tei");
        std::fs::create_dir_all(&tei_dir).map_err(io_err(&tei_dir))?;
        let grobid_cache = self.config.resolve(&self.config.cache_dir).join("grobid");
        std::fs::create_dir_all(&grobid_cache).map_err(io_err(&grobid_cache))?;
        let converter = CachedConverter::new(
            GrobidClient::new(&self.http, &self.config.grobid_url),
            grobid_cache,
            self.config.replay,
        );

        enum Outcome {
            Converted(PaperRecord),
            Failed(PaperRecord, String),
        }
        let results: Vec<Result<Outcome, PipelineError>> = self.pool.install(|| {
            fulltext
                .papers
                .par_iter()
                .map(|p| {
                    if !p.fulltext_status.has_pdf() {
                        return Ok(Outcome::Converted(p.clone()));
                    }
                    let pdf_path = store.path(&p.paper_id);
                    let pdf = std::fs::read(&pdf_path).map_err(|_| PipelineError::StageInputMissing {
                        stage: "convert",
                        artifact: pdf_path.clone(),
                    })?;
                    let tei = match converter.convert(&pdf) {
                        Ok(t) => t,
                        Err(ConvertError::ConversionFailed(reason)) => return Ok(Outcome::Failed(p.clone(), reason)),
                        Err(source) => return Err(PipelineError::Convert { paper_id: p.paper_id.clone(), source }),
                    };
                    let doc = match parse_tei(&p.paper_id, &tei) {
                        Ok(d) => d,
                        Err(e) => return Ok(Outcome::Failed(p.clone(), e.to_string())),
                    };
                    let path = tei_dir.join(format!("{}.tei.xml", p.paper_id));
                    write_atomic(&path, tei.as_bytes()).map_err(io_err(&path))?;
                    let mut out = p.clone();
                    if !out.has_openalex_abstract() && doc.abstract_text.is_some() {
                        out.abstract_source = AbstractSource::Fulltext;
                        out.abstract_text = doc.abstract_text;
                    }
                    Ok(Outcome::Converted(out))
                })
                .collect()
        });

        let mut papers = Vec::new();
        let mut failures = Vec::new();
        for r in results {
            match r? {
                Outcome::Converted(p) => papers.push(p),
                Outcome::Failed(mut p, reason) => {
                    log::warn!("{}: conversion failed: {reason}", p.paper_id);
                    let stale = tei_dir.join(format!("{}.tei.xml", p.paper_id));
                    let _ = std::fs::remove_file(stale);
                    p.fulltext_status = FulltextStatus::Unavailable;
                    failures.push(ConversionFailure { paper_id: p.paper_id.clone(), reason });
                    papers.push(p);
                }
            }
        }
        let mut counts = BTreeMap::new();
        counts.insert("converted".into(), papers.iter().filter(|p| p.fulltext_status.has_pdf()).count());
        counts.insert("failed".into(), failures.len());
        write_artifact(&dir.join(CONVERTED_ARTIFACT), &ConvertedArtifact { papers, failures })?;
        Ok(StageSummary { stage: "convert", counts })
    }

    /// Citation and mention detection over every paper.
    pub fn detect(&self) -> Result<StageSummary, PipelineError> {
        let dir = self.work_dir()?;
        let converted: ConvertedArtifact = read_artifact("detect", &dir.join(CONVERTED_ARTIFACT))?;
        let harvest: HarvestArtifact = read_artifact("detect", &dir.join(HARVEST_ARTIFACT))?;
        let registry = self.registry()?;
        let detector = Detector::new(&registry, self.config.matcher.clone())?;
        let tei_dir = dir.join("tei");

        let per_paper: Vec<Result<Vec<Detection>, PipelineError>> = self.pool.install(|| {
            converted
                .papers
                .par_iter()
                .map(|p| {
                    let doc = if p.fulltext_status.has_pdf() {
                        let path = tei_dir.join(format!("{}.tei.xml", p.paper_id));
                        let xml = std::fs::read_to_string(&path).map_err(|_| PipelineError::StageInputMissing {
                            stage: "detect",
                            artifact: path.clone(),
                        })?;
                        let doc = parse_tei(&p.paper_id, &xml)
                            .map_err(|e| PipelineError::Artifact { path: path.clone(), message: e.to_string() })?;
                        Some(doc)
                    } else {
                        None
                    };
                    Ok(detector.detect_paper(p, doc.as_ref(), &harvest.dataset_works))
                })
                .collect()
        });
        let mut detections = Vec::new();
        for r in per_paper {
            detections.extend(r?);
        }
        detections.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
        let mut grouped: Vec<Detection> = Vec::with_capacity(detections.len());
        for chunk in detections.chunk_by_mut(|a, b| a.paper_id == b.paper_id) {
            sort_detections(chunk);
            grouped.extend_from_slice(chunk);
        }
        let mut counts = BTreeMap::new();
        counts.insert("detections".into(), grouped.len());
        counts.insert("citations".into(), grouped.iter().filter(|d| d.kind.is_citation()).count());
        counts.insert("mentions".into(), grouped.iter().filter(|d| !d.kind.is_citation()).count());
        write_artifact(&dir.join(DETECTIONS_ARTIFACT), &DetectionsArtifact { detections: grouped })?;
        Ok(StageSummary { stage: "detect", counts })
    }

    /// Group assignment, presence resolution and aggregation.
    pub fn analyze(&self) -> Result<StageSummary, PipelineError> {
        let dir = self.work_dir()?;
        let converted: ConvertedArtifact = read_artifact("analyze", &dir.join(CONVERTED_ARTIFACT))?;
        let detections: DetectionsArtifact = read_artifact("analyze", &dir.join(DETECTIONS_ARTIFACT))?;
        let venues = self.venues()?;
        let analysis = analyze(&converted.papers, &detections.detections, &venues)?;
        let counts = analysis.counts.clone();
        write_artifact(&dir.join(ANALYSIS_ARTIFACT), &analysis)?;
        Ok(StageSummary { stage: "analyze", counts })
    }

    /// Writes the delimited reports and the manifest.
    pub fn report(&self, out_override: Option<&Path>) -> Result<StageSummary, PipelineError> {
        let dir = self.work_dir()?;
        let analysis: AnalysisArtifact = read_artifact("report", &dir.join(ANALYSIS_ARTIFACT))?;
        let detections: DetectionsArtifact = read_artifact("report", &dir.join(DETECTIONS_ARTIFACT))?;
        let base = &self.config.base_dir;
        let manifest = RunManifest {
            tool: "dsprobe".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            registry: InputDigest::of_file(base, &self.config.datasets)?,
            venues: InputDigest::of_file(base, &self.config.venues)?,
            config: config_snapshot(&self.config),
            counts: analysis.counts.clone(),
        };
        let out_dir = out_override.map(Path::to_path_buf).unwrap_or_else(|| self.config.resolve(&self.config.out_dir));
        let reports = Reports {
            summaries: &analysis.summaries,
            series: &analysis.series,
            detections: &detections.detections,
            groups: &analysis.groups,
        };
        let written = emit_reports(&out_dir, &reports, &manifest)?;
        let mut counts = BTreeMap::new();
        counts.insert("files".into(), written.len());
        counts.insert("presence_rows".into(), analysis.summaries.iter().filter(|s| s.total > 0).count() * 3);
        counts.insert("series".into(), analysis.series.len());
        Ok(StageSummary { stage: "report", counts })
    }

    /// Every stage in order.
    pub fn run_all(&self, out_override: Option<&Path>) -> Result<Vec<StageSummary>, PipelineError> {
        Ok(vec![
            self.harvest()?,
            self.fetch_fulltext()?,
            self.convert()?,
            self.detect()?,
            self.analyze()?,
            self.report(out_override)?,
        ])
    }
}

/// Config as recorded in the manifest: paths as written, no machine-local state.
fn config_snapshot(config: &Config) -> serde_json::Value {
    let mut v = serde_json::to_value(config).unwrap_or(serde_json::Value::Null);
    if let Some(obj) = v.as_object_mut() {
        obj.remove("mailto");
        if let Some(http) = obj.get_mut("http").and_then(|h| h.as_object_mut()) {
            http.remove("mailto");
        }
    }
    v
}

/// Pure analysis over harvested papers and detections.
pub fn analyze(
    papers: &[PaperRecord],
    detections: &[Detection],
    venues: &[VenueRecord],
) -> Result<AnalysisArtifact, PipelineError> {
    let groups: Vec<GroupAssignment> = papers.iter().map(assign_group).collect();
    let kept: BTreeSet<&str> =
        groups.iter().filter(|g| g.group != Group::Discarded).map(|g| g.paper_id.as_str()).collect();
    let known: BTreeSet<&str> = papers.iter().map(|p| p.paper_id.as_str()).collect();
    if let Some(d) = detections.iter().find(|d| !known.contains(d.paper_id.as_str())) {
        return Err(
            AnalyzerError::DanglingPaperRef { paper_id: d.paper_id.clone(), dataset_id: d.dataset_id.clone() }.into()
        );
    }
    let presence: Vec<PresenceRecord> = papers
        .iter()
        .filter(|p| kept.contains(p.paper_id.as_str()))
        .flat_map(|p| resolve_presence(&p.paper_id, detections))
        .collect();
    let summaries = aggregate_presence(&presence, papers)?;
    let ranges: Vec<(i32, i32)> = venues.iter().map(|v| v.year_range).collect();
    let years = year_range(&ranges, papers);
    let series = match years {
        Some(y) => cumulative_series(&presence, papers, y)?,
        None => Vec::new(),
    };
    let mut counts = BTreeMap::new();
    counts.insert("papers".into(), papers.len());
    for g in [Group::Group1, Group::Group2, Group::Group3, Group::Discarded] {
        counts.insert(format!("group.{}", g.as_str()), groups.iter().filter(|a| a.group == g).count());
    }
    counts.insert("detections".into(), detections.len());
    counts.insert("presence_records".into(), presence.len());
    Ok(AnalysisArtifact { years, groups, presence, summaries, series, counts })
}

/// Citing-work IDs from a JSON file. Accepts a plain array of IDs, an array
/// of OpenCitations-style objects (`citing` field), or an OpenAlex result
/// page (`results[].doi`, falling back to `results[].id`). DOIs are
/// normalized; OpenAlex URLs are shortened to their work ID.
pub fn load_citing_set(path: &Path) -> Result<BTreeSet<String>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Artifact { path: path.to_path_buf(), message: e.to_string() })?;
    let bad = |message: &str| PipelineError::Artifact { path: path.to_path_buf(), message: message.into() };
    let items: &Vec<serde_json::Value> = match &value {
        serde_json::Value::Array(a) => a,
        serde_json::Value::Object(o) => {
            o.get("results").and_then(|r| r.as_array()).ok_or_else(|| bad("expected an array or a `results` array"))?
        }
        _ => return Err(bad("expected an array or a `results` array")),
    };
    let mut out = BTreeSet::new();
    for item in items {
        let id = match item {
            serde_json::Value::String(s) => canonical_id(s),
            serde_json::Value::Object(o) => {
                if let Some(citing) = o.get("citing").and_then(|c| c.as_str()) {
                    citing_doi(citing)
                } else {
                    o.get("doi")
                        .and_then(|d| d.as_str())
                        .or_else(|| o.get("id").and_then(|d| d.as_str()))
                        .and_then(canonical_id)
                }
            }
            _ => None,
        };
        match id {
            Some(id) => {
                out.insert(id);
            }
            None => log::debug!("{}: skipping entry without a usable ID: {item}", path.display()),
        }
    }
    Ok(out)
}

fn canonical_id(s: &str) -> Option<String> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some(doi) = normalize_doi(s) {
        return Some(doi);
    }
    if s.contains("openalex.org/") {
        return Some(short_work_id(s));
    }
    Some(s.to_string())
}

/// `"omid:br/06101 doi:10.1/x pmid:123"` → `10.1/x`; a bare DOI also works.
fn citing_doi(citing: &str) -> Option<String> {
    citing
        .split_whitespace()
        .find_map(|tok| tok.strip_prefix("doi:").and_then(normalize_doi))
        .or_else(|| normalize_doi(citing.trim()))
}

pub fn compare_index_files(a: &Path, b: &Path) -> Result<IndexComparison, PipelineError> {
    Ok(compare_citation_indexes(&load_citing_set(a)?, &load_citing_set(b)?))
}
