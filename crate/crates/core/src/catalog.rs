//! Venue list and dataset registry: the two user inputs of a run.
//!
//! Both files are delimited UTF-8 tables with a header row. The delimiter
//! (`|` or `,`) is detected from the header line; list-valued cells use `;`
//! as the inner separator. Header names are matched case-insensitively and a
//! few synonyms are accepted so the registry can be kept in the same shape as
//! a paper's dataset summary table (`Dataset | Organ | Published | Modality`).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalize::{collapse_whitespace, normalize_doi, normalize_url, slug};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("duplicate dataset id `{0}`")]
    DuplicateDatasetId(String),
    #[error("dataset registry is empty")]
    EmptyRegistry,
    #[error("venue list is empty")]
    EmptyVenueList,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Segmentation,
    Classification,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Segmentation => "segmentation",
            Task::Classification => "classification",
        })
    }
}

/// A dataset name or alternative spelling, with its case rule.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alias {
    pub text: String,
    pub case_sensitive: bool,
}

impl Alias {
    /// Applies the default case rule: short all-caps acronyms are matched
    /// case-sensitively, everything else case-insensitively.
    pub fn with_default_rule(text: &str) -> Self {
        let text = collapse_whitespace(text);
        let case_sensitive = default_case_sensitive(&text);
        Alias { text, case_sensitive }
    }

    /// Parses a registry cell item. `cs:` and `ci:` prefixes force the rule.
    fn parse(item: &str) -> Self {
        let item = item.trim();
        if let Some(rest) = item.strip_prefix("cs:") {
            Alias { text: collapse_whitespace(rest), case_sensitive: true }
        } else if let Some(rest) = item.strip_prefix("ci:") {
            Alias { text: collapse_whitespace(rest), case_sensitive: false }
        } else {
            Alias::with_default_rule(item)
        }
    }

    fn to_cell(&self) -> String {
        format!("{}:{}", if self.case_sensitive { "cs" } else { "ci" }, self.text)
    }
}

fn default_case_sensitive(text: &str) -> bool {
    let mut letters = text.chars().filter(|c| c.is_alphabetic()).peekable();
    text.chars().count() <= 6 && letters.peek().is_some() && letters.all(char::is_uppercase)
}

/// A tracked dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub dataset_id: String,
    pub canonical_name: String,
    /// Always contains `canonical_name`.
    pub aliases: Vec<Alias>,
    pub urls: Vec<String>,
    pub paper_titles: Vec<String>,
    /// Normalized: lowercase, no resolver prefix.
    pub paper_dois: Vec<String>,
    pub task: Option<Task>,
    pub organ: String,
    pub modality: String,
    pub year_published: Option<i32>,
}

impl DatasetRecord {
    /// Re-checks every record invariant. Returns the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.dataset_id.trim().is_empty() {
            return Err("empty dataset_id".into());
        }
        if self.canonical_name.trim().is_empty() {
            return Err("empty canonical name".into());
        }
        if !self.aliases.iter().any(|a| a.text == self.canonical_name) {
            return Err("canonical name missing from aliases".into());
        }
        let mut seen = HashSet::new();
        for alias in &self.aliases {
            let key = collapse_whitespace(&alias.text);
            if key.is_empty() {
                return Err("empty alias".into());
            }
            if !seen.insert(key) {
                return Err(format!("duplicate alias `{}`", alias.text));
            }
        }
        let mut dois = HashSet::new();
        for doi in &self.paper_dois {
            if normalize_doi(doi).as_deref() != Some(doi.as_str()) {
                return Err(format!("DOI `{doi}` is not normalized"));
            }
            if !dois.insert(doi) {
                return Err(format!("duplicate DOI `{doi}`"));
            }
        }
        if self.paper_titles.is_empty() && self.paper_dois.is_empty() && self.urls.is_empty() {
            return Err("no titles, DOIs or URLs: dataset would be undetectable".into());
        }
        Ok(())
    }
}

/// A venue whose papers are harvested.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VenueRecord {
    pub venue_id: String,
    pub dblp_stream_key: String,
    pub display_name: String,
    /// Inclusive.
    pub year_range: (i32, i32),
}

impl VenueRecord {
    pub fn contains_year(&self, year: i32) -> bool {
        self.year_range.0 <= year && year <= self.year_range.1
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn column(&self, names: &[&str]) -> Option<usize> {
        names.iter().find_map(|n| self.header.iter().position(|h| h == n))
    }
}

fn detect_delimiter(text: &str) -> u8 {
    let header = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if header.matches('|').count() >= header.matches(',').count() && header.contains('|') {
        b'|'
    } else {
        b','
    }
}

fn read_table(path: &Path) -> Result<Table, CatalogError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| CatalogError::Io { path: path.display().to_string(), source })?;
    parse_table(&text)
}

fn parse_table(text: &str) -> Result<Table, CatalogError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(text))
        .trim(csv::Trim::All)
        .flexible(true)
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| CatalogError::MalformedRow { row: 0, reason: e.to_string() })?
        .iter()
        .map(|h| h.trim().to_lowercase())
        .collect::<Vec<_>>();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        // row numbers are 1-based data rows
        let row = i + 1;
        let rec = rec.map_err(|e| CatalogError::MalformedRow { row, reason: e.to_string() })?;
        if rec.iter().all(|c| c.trim().is_empty()) {
            continue;
        }
        if rec.len() > header.len() {
            return Err(CatalogError::MalformedRow {
                row,
                reason: format!("{} cells but header has {}", rec.len(), header.len()),
            });
        }
        rows.push((row, rec.iter().map(str::to_string).collect()));
    }
    Ok(Table { header, rows })
}

fn cell(row: &[String], col: Option<usize>) -> &str {
    col.and_then(|c| row.get(c)).map(String::as_str).unwrap_or("").trim()
}

fn list(cell: &str) -> impl Iterator<Item = &str> {
    cell.split(';').map(str::trim).filter(|s| !s.is_empty())
}

/// Loads and validates the dataset registry.
pub fn load_dataset_registry(path: &Path) -> Result<Vec<DatasetRecord>, CatalogError> {
    parse_dataset_registry(&read_table_text(path)?)
}

fn read_table_text(path: &Path) -> Result<String, CatalogError> {
    std::fs::read_to_string(path).map_err(|source| CatalogError::Io { path: path.display().to_string(), source })
}

/// Parses registry text; see [`load_dataset_registry`].
pub fn parse_dataset_registry(text: &str) -> Result<Vec<DatasetRecord>, CatalogError> {
    let table = parse_table(text)?;
    let c_id = table.column(&["dataset_id", "id"]);
    let c_name = table.column(&["canonical_name", "dataset", "name"]);
    let c_alias = table.column(&["aliases", "alias"]);
    let c_url = table.column(&["urls", "url"]);
    let c_title = table.column(&["paper_titles", "titles", "title"]);
    let c_doi = table.column(&["paper_dois", "dois", "doi"]);
    let c_task = table.column(&["task"]);
    let c_organ = table.column(&["organ"]);
    let c_modality = table.column(&["modality"]);
    let c_year = table.column(&["year_published", "published", "year"]);
    if c_name.is_none() {
        return Err(CatalogError::MalformedRow { row: 0, reason: "header lacks a dataset name column".into() });
    }

    let mut out: Vec<DatasetRecord> = Vec::new();
    let mut ids = HashSet::new();
    for (row, cells) in &table.rows {
        let row = *row;
        let bad = |reason: String| CatalogError::MalformedRow { row, reason };
        let canonical_name = collapse_whitespace(cell(cells, c_name));
        if canonical_name.is_empty() {
            return Err(bad("empty dataset name".into()));
        }
        let dataset_id = match cell(cells, c_id) {
            "" => slug(&canonical_name).to_lowercase(),
            id => id.to_string(),
        };

        let mut aliases = vec![Alias::with_default_rule(&canonical_name)];
        for item in list(cell(cells, c_alias)) {
            let alias = Alias::parse(item);
            if alias.text.is_empty() {
                continue;
            }
            match aliases.iter_mut().find(|a| a.text == alias.text) {
                // an explicit entry overrides the rule inferred for the self-alias
                Some(existing) if item.starts_with("cs:") || item.starts_with("ci:") => {
                    existing.case_sensitive = alias.case_sensitive
                }
                Some(_) => {}
                None => aliases.push(alias),
            }
        }

        let mut paper_dois: Vec<String> = Vec::new();
        for raw in list(cell(cells, c_doi)) {
            let doi = normalize_doi(raw).ok_or_else(|| bad(format!("invalid DOI `{raw}`")))?;
            if !paper_dois.contains(&doi) {
                paper_dois.push(doi);
            }
        }
        let mut urls: Vec<String> = Vec::new();
        for raw in list(cell(cells, c_url)) {
            let u = normalize_url(raw);
            if !urls.contains(&u) {
                urls.push(u);
            }
        }
        let paper_titles: Vec<String> = list(cell(cells, c_title)).map(collapse_whitespace).collect();

        let task = match cell(cells, c_task).to_lowercase().as_str() {
            "" => None,
            "segmentation" => Some(Task::Segmentation),
            "classification" => Some(Task::Classification),
            other => return Err(bad(format!("unknown task `{other}`"))),
        };
        let year_published = match cell(cells, c_year) {
            "" => None,
            y => Some(y.parse::<i32>().map_err(|_| bad(format!("invalid year `{y}`")))?),
        };

        let record = DatasetRecord {
            dataset_id,
            canonical_name,
            aliases,
            urls,
            paper_titles,
            paper_dois,
            task,
            organ: cell(cells, c_organ).to_string(),
            modality: cell(cells, c_modality).to_string(),
            year_published,
        };
        record.validate().map_err(bad)?;
        if !ids.insert(record.dataset_id.clone()) {
            return Err(CatalogError::DuplicateDatasetId(record.dataset_id));
        }
        out.push(record);
    }
    if out.is_empty() {
        return Err(CatalogError::EmptyRegistry);
    }
    Ok(out)
}

/// Serializes a registry in the `|`-delimited load format, with explicit
/// case markers on every alias so that reloading is lossless.
pub fn write_dataset_registry(records: &[DatasetRecord]) -> String {
    let mut w =
        csv::WriterBuilder::new().delimiter(b'|').terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let header = [
        "dataset_id",
        "canonical_name",
        "aliases",
        "urls",
        "paper_titles",
        "paper_dois",
        "task",
        "organ",
        "modality",
        "year_published",
    ];
    w.write_record(header).expect("in-memory write");
    for r in records {
        let aliases = r.aliases.iter().map(Alias::to_cell).collect::<Vec<_>>().join(";");
        w.write_record([
            r.dataset_id.as_str(),
            &r.canonical_name,
            &aliases,
            &r.urls.join(";"),
            &r.paper_titles.join(";"),
            &r.paper_dois.join(";"),
            &r.task.map(|t| t.to_string()).unwrap_or_default(),
            &r.organ,
            &r.modality,
            &r.year_published.map(|y| y.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// Loads and validates the venue list.
pub fn load_venue_list(path: &Path) -> Result<Vec<VenueRecord>, CatalogError> {
    let table = read_table(path)?;
    venues_from_table(&table)
}

/// Parses venue list text; see [`load_venue_list`].
pub fn parse_venue_list(text: &str) -> Result<Vec<VenueRecord>, CatalogError> {
    venues_from_table(&parse_table(text)?)
}

fn venues_from_table(table: &Table) -> Result<Vec<VenueRecord>, CatalogError> {
    let c_id = table.column(&["venue_id", "id", "venue"]);
    let c_name = table.column(&["display_name", "name"]);
    let c_years = table.column(&["year_range", "years"]);
    let c_stream = table.column(&["dblp_stream_key", "stream", "dblp"]);
    let mut out = Vec::new();
    let mut seen = BTreeMap::new();
    for (row, cells) in &table.rows {
        let row = *row;
        let bad = |reason: String| CatalogError::MalformedRow { row, reason };
        let venue_id = cell(cells, c_id).to_string();
        if venue_id.is_empty() {
            return Err(bad("empty venue id".into()));
        }
        let years = cell(cells, c_years);
        let (start, end) = years.split_once('-').map(|(a, b)| (a.trim(), b.trim())).unwrap_or((years, years));
        let start: i32 = start.parse().map_err(|_| bad(format!("invalid year range `{years}`")))?;
        let end: i32 = end.parse().map_err(|_| bad(format!("invalid year range `{years}`")))?;
        if start > end {
            return Err(bad(format!("inverted year range {start}-{end}")));
        }
        let dblp_stream_key = match cell(cells, c_stream) {
            "" => format!("conf/{}", venue_id.to_lowercase()),
            s => s.to_string(),
        };
        let display_name = match cell(cells, c_name) {
            "" => venue_id.clone(),
            s => s.to_string(),
        };
        if seen.insert(venue_id.clone(), row).is_some() {
            return Err(bad(format!("duplicate venue id `{venue_id}`")));
        }
        out.push(VenueRecord { venue_id, dblp_stream_key, display_name, year_range: (start, end) });
    }
    if out.is_empty() {
        return Err(CatalogError::EmptyVenueList);
    }
    Ok(out)
}
