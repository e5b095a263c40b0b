//! On-disk project store.
//!
//! ```text
//! <root>/tokens.json
//! <root>/projects/<id>/project.json
//! <root>/projects/<id>/pdfs/<pdf_id>.pdf
//! <root>/projects/<id>/annotations/<annotator>.jsonl
//! <root>/projects/<id>/export/<annotator>.csv
//! ```
//!
//! Annotation logs are append-only; a delete is a log entry of its own.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use dsprobe::http::write_atomic;
use dsprobe::normalize::{collapse_whitespace, slug};

/// Location labels offered when a project does not bring its own.
pub const DEFAULT_LOCATIONS: [&str; 6] =
    ["Abstract", "Body section", "Figure caption", "Table caption", "Footnote", "Reference list"];

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("a project named `{0}` already exists")]
    DuplicateProjectName(String),
    #[error("a project needs at least one PDF")]
    EmptyPdfSet,
    #[error("PDF id `{0}` given twice")]
    DuplicatePdfId(String),
    #[error("`{0}` is not a PDF")]
    NotPdf(String),
    #[error("unknown project `{0}`")]
    UnknownProject(String),
    #[error("label `{0}` already exists")]
    DuplicateLabel(String),
    #[error("labels must be nonempty")]
    EmptyLabel,
    #[error("the location label set is fixed")]
    FrozenSet,
    #[error("group file references unknown PDF `{0}`")]
    UnknownPdfId(String),
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },
    #[error("label `{0}` is not in the project's label sets")]
    UnknownLabel(String),
    #[error("unknown PDF `{0}`")]
    UnknownPdf(String),
    #[error("no such annotation")]
    NoSuchAnnotation,
    #[error("invalid identifier `{0}`")]
    InvalidId(String),
    #[error("missing or unknown annotator token")]
    Unauthorized,
    #[error("no project PDF joins to a corpus paper")]
    NoOverlap,
    #[error("{path}: {message}")]
    Storage { path: PathBuf, message: String },
}

fn storage(path: &Path) -> impl FnOnce(std::io::Error) -> AnnotateError + '_ {
    move |e| AnnotateError::Storage { path: path.to_path_buf(), message: e.to_string() }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationProject {
    pub project_id: String,
    pub name: String,
    pub pdf_ids: Vec<String>,
    /// Dataset labels; grows during labelling, never shrinks.
    pub label_set_1: Vec<String>,
    /// Location labels; fixed at creation.
    pub label_set_2: Vec<String>,
    /// annotator → assigned pdf_ids. Empty means every PDF is open to everyone.
    pub groups: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Annotation {
    pub project_id: String,
    pub annotator_id: String,
    pub pdf_id: String,
    pub label_1: String,
    pub label_2: String,
    pub created_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelSet {
    #[serde(rename = "1")]
    Datasets,
    #[serde(rename = "2")]
    Locations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Op {
    Add,
    Delete,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LogEntry {
    op: Op,
    pdf_id: String,
    label_1: String,
    label_2: String,
    at: String,
}

pub struct NewPdf {
    pub filename: String,
    pub bytes: Vec<u8>,
}

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

#[derive(Clone)]
pub struct Store {
    root: PathBuf,
    clock: Clock,
    /// Serializes project.json and tokens.json rewrites.
    meta: Arc<Mutex<()>>,
    logs: Arc<Mutex<HashMap<(String, String), LogLock>>>,
}

/// One lock per (project, annotator) log file.
type LogLock = Arc<Mutex<()>>;

fn check_id(id: &str) -> Result<(), AnnotateError> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(AnnotateError::InvalidId(id.to_string()))
    }
}

fn clean_label(value: &str) -> Result<String, AnnotateError> {
    let v = collapse_whitespace(value);
    if v.is_empty() {
        Err(AnnotateError::EmptyLabel)
    } else {
        Ok(v)
    }
}

fn unique_labels(values: &[String]) -> Result<Vec<String>, AnnotateError> {
    let mut out: Vec<String> = Vec::with_capacity(values.len());
    for v in values {
        let v = clean_label(v)?;
        if out.contains(&v) {
            return Err(AnnotateError::DuplicateLabel(v));
        }
        out.push(v);
    }
    Ok(out)
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, AnnotateError> {
        Self::with_clock(root, Arc::new(Utc::now))
    }

    pub fn with_clock(root: impl Into<PathBuf>, clock: Clock) -> Result<Self, AnnotateError> {
        let root = root.into();
        let projects = root.join("projects");
        std::fs::create_dir_all(&projects).map_err(storage(&projects))?;
        Ok(Store { root, clock, meta: Arc::default(), logs: Arc::default() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn now(&self) -> String {
        (self.clock)().to_rfc3339_opts(SecondsFormat::Secs, true)
    }

    fn project_dir(&self, id: &str) -> PathBuf {
        self.root.join("projects").join(id)
    }

    fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), AnnotateError> {
        let mut bytes = serde_json::to_vec_pretty(value)
            .map_err(|e| AnnotateError::Storage { path: path.to_path_buf(), message: e.to_string() })?;
        bytes.push(b'\n');
        write_atomic(path, &bytes).map_err(storage(path))
    }

    fn save(&self, p: &AnnotationProject) -> Result<(), AnnotateError> {
        Self::write_json(&self.project_dir(&p.project_id).join("project.json"), p)
    }

    pub fn project(&self, id: &str) -> Result<AnnotationProject, AnnotateError> {
        check_id(id).map_err(|_| AnnotateError::UnknownProject(id.to_string()))?;
        let path = self.project_dir(id).join("project.json");
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(AnnotateError::UnknownProject(id.to_string()))
            }
            Err(e) => return Err(storage(&path)(e)),
        };
        serde_json::from_str(&text).map_err(|e| AnnotateError::Storage { path, message: e.to_string() })
    }

    pub fn projects(&self) -> Result<Vec<AnnotationProject>, AnnotateError> {
        let dir = self.root.join("projects");
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(storage(&dir))? {
            let entry = entry.map_err(storage(&dir))?;
            if entry.path().join("project.json").is_file() {
                out.push(self.project(&entry.file_name().to_string_lossy())?);
            }
        }
        out.sort_by(|a, b| a.project_id.cmp(&b.project_id));
        Ok(out)
    }

    /// PDFs are addressed by their file stem, slugged. An empty location set
    /// falls back to [`DEFAULT_LOCATIONS`].
    pub fn create_project(
        &self,
        name: &str,
        pdfs: Vec<NewPdf>,
        label_set_1: &[String],
        label_set_2: &[String],
    ) -> Result<AnnotationProject, AnnotateError> {
        let name = collapse_whitespace(name);
        let project_id = slug(&name).to_lowercase();
        check_id(&project_id).map_err(|_| AnnotateError::InvalidId(name.clone()))?;
        if pdfs.is_empty() {
            return Err(AnnotateError::EmptyPdfSet);
        }
        let label_set_1 = unique_labels(label_set_1)?;
        let label_set_2 = if label_set_2.is_empty() {
            DEFAULT_LOCATIONS.iter().map(|s| s.to_string()).collect()
        } else {
            unique_labels(label_set_2)?
        };
        let mut pdf_ids = Vec::with_capacity(pdfs.len());
        for pdf in &pdfs {
            let stem = pdf.filename.strip_suffix(".pdf").or_else(|| pdf.filename.strip_suffix(".PDF"));
            let id = slug(stem.unwrap_or(&pdf.filename));
            check_id(&id)?;
            if !pdf.bytes.starts_with(b"%PDF") {
                return Err(AnnotateError::NotPdf(pdf.filename.clone()));
            }
            if pdf_ids.contains(&id) {
                return Err(AnnotateError::DuplicatePdfId(id));
            }
            pdf_ids.push(id);
        }

        let _g = self.meta.lock().unwrap_or_else(|e| e.into_inner());
        let dir = self.project_dir(&project_id);
        if dir.exists() {
            return Err(AnnotateError::DuplicateProjectName(name));
        }
        let pdf_dir = dir.join("pdfs");
        std::fs::create_dir_all(&pdf_dir).map_err(storage(&pdf_dir))?;
        std::fs::create_dir_all(dir.join("annotations")).map_err(storage(&dir))?;
        for (id, pdf) in pdf_ids.iter().zip(&pdfs) {
            let path = pdf_dir.join(format!("{id}.pdf"));
            write_atomic(&path, &pdf.bytes).map_err(storage(&path))?;
        }
        let project =
            AnnotationProject { project_id, name, pdf_ids, label_set_1, label_set_2, groups: BTreeMap::new() };
        self.save(&project)?;
        Ok(project)
    }

    /// Appends to the dataset label set; returns the updated set.
    pub fn add_label(&self, project_id: &str, set: LabelSet, value: &str) -> Result<Vec<String>, AnnotateError> {
        if set == LabelSet::Locations {
            self.project(project_id)?;
            return Err(AnnotateError::FrozenSet);
        }
        let value = clean_label(value)?;
        let _g = self.meta.lock().unwrap_or_else(|e| e.into_inner());
        let mut p = self.project(project_id)?;
        if p.label_set_1.contains(&value) {
            return Err(AnnotateError::DuplicateLabel(value));
        }
        p.label_set_1.push(value);
        self.save(&p)?;
        Ok(p.label_set_1)
    }

    /// Replaces the project's groups from `annotator,pdf_id` rows.
    pub fn upload_groups(
        &self,
        project_id: &str,
        csv_text: &str,
    ) -> Result<BTreeMap<String, Vec<String>>, AnnotateError> {
        let _g = self.meta.lock().unwrap_or_else(|e| e.into_inner());
        let mut p = self.project(project_id)?;
        let groups = parse_groups(csv_text, &p.pdf_ids)?;
        p.groups = groups.clone();
        self.save(&p)?;
        Ok(groups)
    }

    pub fn pdf_path(&self, project_id: &str, pdf_id: &str) -> Result<PathBuf, AnnotateError> {
        let p = self.project(project_id)?;
        if !p.pdf_ids.iter().any(|id| id == pdf_id) {
            return Err(AnnotateError::UnknownPdf(pdf_id.to_string()));
        }
        Ok(self.project_dir(project_id).join("pdfs").join(format!("{pdf_id}.pdf")))
    }

    fn log_path(&self, project_id: &str, annotator: &str) -> PathBuf {
        self.project_dir(project_id).join("annotations").join(format!("{annotator}.jsonl"))
    }

    fn log_lock(&self, project_id: &str, annotator: &str) -> Arc<Mutex<()>> {
        let mut locks = self.logs.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry((project_id.to_string(), annotator.to_string())).or_default().clone()
    }

    fn read_log(&self, project_id: &str, annotator: &str) -> Result<Vec<Annotation>, AnnotateError> {
        let path = self.log_path(project_id, annotator);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(storage(&path)(e)),
        };
        let mut live: BTreeMap<(String, String, String), String> = BTreeMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e: LogEntry = serde_json::from_str(line).map_err(|err| AnnotateError::Storage {
                path: path.clone(),
                message: format!("line {}: {err}", i + 1),
            })?;
            let key = (e.pdf_id, e.label_1, e.label_2);
            match e.op {
                Op::Add => {
                    live.entry(key).or_insert(e.at);
                }
                Op::Delete => {
                    live.remove(&key);
                }
            }
        }
        Ok(live
            .into_iter()
            .map(|((pdf_id, label_1, label_2), created_at)| Annotation {
                project_id: project_id.to_string(),
                annotator_id: annotator.to_string(),
                pdf_id,
                label_1,
                label_2,
                created_at,
            })
            .collect())
    }

    fn append(&self, project_id: &str, annotator: &str, entry: &LogEntry) -> Result<(), AnnotateError> {
        let path = self.log_path(project_id, annotator);
        let mut line = serde_json::to_string(entry).expect("log entry serializes");
        line.push('\n');
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&path).map_err(storage(&path))?;
        f.write_all(line.as_bytes()).map_err(storage(&path))
    }

    fn validate(
        &self,
        project_id: &str,
        annotator: &str,
        pdf_id: &str,
        label_1: &str,
        label_2: &str,
    ) -> Result<(), AnnotateError> {
        check_id(annotator)?;
        let p = self.project(project_id)?;
        if !p.pdf_ids.iter().any(|id| id == pdf_id) {
            return Err(AnnotateError::UnknownPdf(pdf_id.to_string()));
        }
        if !p.label_set_1.iter().any(|l| l == label_1) {
            return Err(AnnotateError::UnknownLabel(label_1.to_string()));
        }
        if !p.label_set_2.iter().any(|l| l == label_2) {
            return Err(AnnotateError::UnknownLabel(label_2.to_string()));
        }
        Ok(())
    }

    /// Stores an annotation. Re-submitting a live tuple returns it unchanged
    /// with `false`.
    pub fn record_annotation(
        &self,
        project_id: &str,
        annotator: &str,
        pdf_id: &str,
        label_1: &str,
        label_2: &str,
    ) -> Result<(Annotation, bool), AnnotateError> {
        self.validate(project_id, annotator, pdf_id, label_1, label_2)?;
        let lock = self.log_lock(project_id, annotator);
        let _g = lock.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(a) = self
            .read_log(project_id, annotator)?
            .into_iter()
            .find(|a| a.pdf_id == pdf_id && a.label_1 == label_1 && a.label_2 == label_2)
        {
            return Ok((a, false));
        }
        let at = self.now();
        let entry = LogEntry {
            op: Op::Add,
            pdf_id: pdf_id.into(),
            label_1: label_1.into(),
            label_2: label_2.into(),
            at: at.clone(),
        };
        self.append(project_id, annotator, &entry)?;
        let a = Annotation {
            project_id: project_id.into(),
            annotator_id: annotator.into(),
            pdf_id: pdf_id.into(),
            label_1: label_1.into(),
            label_2: label_2.into(),
            created_at: at,
        };
        Ok((a, true))
    }

    pub fn delete_annotation(
        &self,
        project_id: &str,
        annotator: &str,
        pdf_id: &str,
        label_1: &str,
        label_2: &str,
    ) -> Result<(), AnnotateError> {
        check_id(annotator)?;
        self.project(project_id)?;
        let lock = self.log_lock(project_id, annotator);
        let _g = lock.lock().unwrap_or_else(|e| e.into_inner());
        let live = self.read_log(project_id, annotator)?;
        if !live.iter().any(|a| a.pdf_id == pdf_id && a.label_1 == label_1 && a.label_2 == label_2) {
            return Err(AnnotateError::NoSuchAnnotation);
        }
        let entry = LogEntry {
            op: Op::Delete,
            pdf_id: pdf_id.into(),
            label_1: label_1.into(),
            label_2: label_2.into(),
            at: self.now(),
        };
        self.append(project_id, annotator, &entry)
    }

    /// Annotators known to the project: group members plus anyone with a log.
    pub fn annotators(&self, project_id: &str) -> Result<BTreeSet<String>, AnnotateError> {
        let p = self.project(project_id)?;
        let mut out: BTreeSet<String> = p.groups.keys().cloned().collect();
        let dir = self.project_dir(project_id).join("annotations");
        if let Ok(entries) = std::fs::read_dir(&dir) {
            for entry in entries.flatten() {
                if let Some(name) = entry.file_name().to_str().and_then(|n| n.strip_suffix(".jsonl")) {
                    out.insert(name.to_string());
                }
            }
        }
        Ok(out)
    }

    /// Live annotations, sorted by annotator, pdf and labels.
    pub fn annotations(&self, project_id: &str) -> Result<Vec<Annotation>, AnnotateError> {
        let mut out = Vec::new();
        for a in self.annotators(project_id)? {
            out.extend(self.read_log(project_id, &a)?);
        }
        Ok(out)
    }

    /// One CSV per annotator, also written under `export/`. Annotators with
    /// no annotations get a header-only file.
    pub fn export(&self, project_id: &str) -> Result<BTreeMap<String, String>, AnnotateError> {
        let dir = self.project_dir(project_id).join("export");
        std::fs::create_dir_all(&dir).map_err(storage(&dir))?;
        let mut files = BTreeMap::new();
        for annotator in self.annotators(project_id)? {
            let rows = self.read_log(project_id, &annotator)?;
            let text = export_csv(&rows);
            let path = dir.join(format!("{annotator}.csv"));
            write_atomic(&path, text.as_bytes()).map_err(storage(&path))?;
            files.insert(format!("{annotator}.csv"), text);
        }
        Ok(files)
    }

    /// Issues (or returns the existing) token for an annotator.
    pub fn issue_token(&self, annotator: &str) -> Result<String, AnnotateError> {
        check_id(annotator)?;
        let _g = self.meta.lock().unwrap_or_else(|e| e.into_inner());
        let mut tokens = self.tokens()?;
        if let Some((t, _)) = tokens.iter().find(|(_, a)| *a == annotator) {
            return Ok(t.clone());
        }
        let nanos = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_nanos());
        let seed = format!("{annotator}\n{nanos}\n{}\n{}", std::process::id(), tokens.len());
        let token = dsprobe::fulltext::acquire::sha256_hex(seed.as_bytes())[..32].to_string();
        tokens.insert(token.clone(), annotator.to_string());
        Self::write_json(&self.root.join("tokens.json"), &tokens)?;
        Ok(token)
    }

    fn tokens(&self) -> Result<BTreeMap<String, String>, AnnotateError> {
        let path = self.root.join("tokens.json");
        match std::fs::read_to_string(&path) {
            Ok(t) => serde_json::from_str(&t).map_err(|e| AnnotateError::Storage { path, message: e.to_string() }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
            Err(e) => Err(storage(&path)(e)),
        }
    }

    pub fn annotator_for_token(&self, token: &str) -> Result<String, AnnotateError> {
        self.tokens()?.remove(token).ok_or(AnnotateError::Unauthorized)
    }
}

pub const EXPORT_HEADER: [&str; 5] = ["annotator_id", "pdf_id", "label_1", "label_2", "created_at"];

pub fn export_csv(rows: &[Annotation]) -> String {
    let mut sorted: Vec<&Annotation> = rows.iter().collect();
    sorted.sort_by(|a, b| (&a.pdf_id, &a.label_1, &a.label_2).cmp(&(&b.pdf_id, &b.label_1, &b.label_2)));
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(EXPORT_HEADER).expect("in-memory write");
    for a in sorted {
        w.write_record([&a.annotator_id, &a.pdf_id, &a.label_1, &a.label_2, &a.created_at]).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// `annotator,pdf_id` rows with an optional header. A pdf may appear in
/// several groups.
pub fn parse_groups(csv_text: &str, pdf_ids: &[String]) -> Result<BTreeMap<String, Vec<String>>, AnnotateError> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(csv_text.as_bytes());
    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| AnnotateError::MalformedRow { row, reason: e.to_string() })?;
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        if rec.len() != 2 {
            return Err(AnnotateError::MalformedRow { row, reason: format!("expected 2 columns, got {}", rec.len()) });
        }
        let (annotator, pdf) = (&rec[0], &rec[1]);
        if row == 1 && annotator.eq_ignore_ascii_case("annotator") {
            continue;
        }
        check_id(annotator)
            .map_err(|_| AnnotateError::MalformedRow { row, reason: format!("bad annotator `{annotator}`") })?;
        let pdf = pdf.strip_suffix(".pdf").unwrap_or(pdf);
        if !pdf_ids.iter().any(|id| id == pdf) {
            return Err(AnnotateError::UnknownPdfId(pdf.to_string()));
        }
        let list = groups.entry(annotator.to_string()).or_default();
        if !list.iter().any(|p| p == pdf) {
            list.push(pdf.to_string());
        }
    }
    Ok(groups)
}
