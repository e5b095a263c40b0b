//! Delimited report files and the run manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analyzer::{GroupAssignment, PresenceSummary, YearSeries};
use crate::detector::{Detection, PresenceType};
use crate::fulltext::acquire::sha256_hex;
use crate::http::write_atomic;

pub const PRESENCE_FILE: &str = "presence.csv";
pub const CUMULATIVE_FILE: &str = "cumulative.csv";
pub const DETECTIONS_FILE: &str = "detections.csv";
pub const GROUPS_FILE: &str = "groups.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("manifest: {0}")]
    Manifest(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

impl InputDigest {
    /// Digest of `base/path`; `path` is recorded as given.
    pub fn of_file(base: &Path, path: &Path) -> Result<Self, ReportError> {
        let full = base.join(path);
        let bytes = std::fs::read(&full).map_err(io_err(&full))?;
        Ok(InputDigest { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub registry: InputDigest,
    pub venues: InputDigest,
    pub config: serde_json::Value,
    /// Record counts per stage, e.g. `harvest.papers`.
    pub counts: BTreeMap<String, usize>,
}

impl RunManifest {
    /// Recomputes the input digests relative to `base`; returns the paths
    /// whose content changed.
    pub fn stale_inputs(&self, base: &Path) -> Result<Vec<String>, ReportError> {
        let mut stale = Vec::new();
        for d in [&self.registry, &self.venues] {
            if InputDigest::of_file(base, Path::new(&d.path))?.sha256 != d.sha256 {
                stale.push(d.path.clone());
            }
        }
        Ok(stale)
    }
}

pub struct Reports<'a> {
    pub summaries: &'a [PresenceSummary],
    pub series: &'a [YearSeries],
    pub detections: &'a [Detection],
    pub groups: &'a [GroupAssignment],
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, ReportError> {
    w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))
}

pub fn presence_csv(summaries: &[PresenceSummary]) -> Result<Vec<u8>, ReportError> {
    let mut rows: Vec<&PresenceSummary> = summaries.iter().filter(|s| s.total > 0).collect();
    rows.sort_by(|a, b| (&a.dataset_id, &a.venue_id).cmp(&(&b.dataset_id, &b.venue_id)));
    let mut w = writer();
    w.write_record(["dataset", "venue", "type", "count", "total"])?;
    for s in rows {
        for t in PresenceType::ALL {
            w.write_record([
                s.dataset_id.as_str(),
                &s.venue_id,
                t.as_str(),
                &s.count(t).to_string(),
                &s.total.to_string(),
            ])?;
        }
    }
    finish(w)
}

pub fn cumulative_csv(series: &[YearSeries]) -> Result<Vec<u8>, ReportError> {
    let mut rows: Vec<&YearSeries> = series.iter().collect();
    rows.sort_by(|a, b| (&a.dataset_id, a.kind).cmp(&(&b.dataset_id, b.kind)));
    let mut w = writer();
    w.write_record(["dataset", "kind", "year", "count"])?;
    for s in rows {
        for (year, count) in &s.points {
            w.write_record([s.dataset_id.as_str(), s.kind.as_str(), &year.to_string(), &count.to_string()])?;
        }
    }
    finish(w)
}

pub fn detections_csv(detections: &[Detection]) -> Result<Vec<u8>, ReportError> {
    let mut rows: Vec<&Detection> = detections.iter().collect();
    rows.sort_by(|a, b| {
        (&a.paper_id, &a.dataset_id, a.kind, a.location.to_string(), a.element, a.span).cmp(&(
            &b.paper_id,
            &b.dataset_id,
            b.kind,
            b.location.to_string(),
            b.element,
            b.span,
        ))
    });
    let mut w = writer();
    w.write_record(["paper_id", "dataset_id", "kind", "location", "matched_text", "span_start", "span_end"])?;
    for d in rows {
        w.write_record([
            d.paper_id.as_str(),
            &d.dataset_id,
            d.kind.as_str(),
            &d.location.to_string(),
            &d.matched_text,
            &d.span.0.to_string(),
            &d.span.1.to_string(),
        ])?;
    }
    finish(w)
}

pub fn groups_csv(groups: &[GroupAssignment]) -> Result<Vec<u8>, ReportError> {
    let mut rows: Vec<&GroupAssignment> = groups.iter().collect();
    rows.sort_by(|a, b| a.paper_id.cmp(&b.paper_id));
    let mut w = writer();
    w.write_record(["paper_id", "group", "reason"])?;
    for g in rows {
        w.write_record([g.paper_id.as_str(), g.group.as_str(), &g.reason])?;
    }
    finish(w)
}

/// Writes every report into `out_dir`, the manifest last. Returns the paths written.
pub fn emit_reports(out_dir: &Path, reports: &Reports, manifest: &RunManifest) -> Result<Vec<PathBuf>, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let files = [
        (PRESENCE_FILE, presence_csv(reports.summaries)?),
        (CUMULATIVE_FILE, cumulative_csv(reports.series)?),
        (DETECTIONS_FILE, detections_csv(reports.detections)?),
        (GROUPS_FILE, groups_csv(reports.groups)?),
    ];
    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = out_dir.join(name);
        write_atomic(&path, &bytes).map_err(io_err(&path))?;
        written.push(path);
    }
    let mut json = serde_json::to_vec_pretty(manifest).map_err(|e| ReportError::Manifest(e.to_string()))?;
    json.push(b'\n');
    let path = out_dir.join(MANIFEST_FILE);
    write_atomic(&path, &json).map_err(io_err(&path))?;
    written.push(path);
    Ok(written)
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, ReportError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| ReportError::Manifest(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analyzer::SeriesKind;
    use crate::detector::{DetectionKind, Location};

    fn manifest(dir: &Path) -> RunManifest {
        std::fs::write(dir.join("datasets.csv"), "dataset_id|name|doi\nacdc|ACDC|10.1/x\n").unwrap();
        std::fs::write(dir.join("venues.csv"), "venue_id,display_name,years\nmiccai,MICCAI,2018-2022\n").unwrap();
        RunManifest {
            tool: "dsprobe".into(),
            version: "0.0.0".into(),
            registry: InputDigest::of_file(dir, Path::new("datasets.csv")).unwrap(),
            venues: InputDigest::of_file(dir, Path::new("venues.csv")).unwrap(),
            config: serde_json::json!({}),
            counts: BTreeMap::new(),
        }
    }

    #[test]
    fn empty_corpus_gives_headers_only() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let m = manifest(dir.path());
        let r = Reports { summaries: &[], series: &[], detections: &[], groups: &[] };
        emit_reports(&out, &r, &m).unwrap();
        assert_eq!(std::fs::read_to_string(out.join(PRESENCE_FILE)).unwrap(), "dataset,venue,type,count,total\n");
        assert_eq!(std::fs::read_to_string(out.join(CUMULATIVE_FILE)).unwrap(), "dataset,kind,year,count\n");
        assert_eq!(read_manifest(&out.join(MANIFEST_FILE)).unwrap(), m);
    }

    #[test]
    fn presence_rows_sorted_with_all_types() {
        let s = |ds: &str, v: &str| PresenceSummary {
            dataset_id: ds.into(),
            venue_id: v.into(),
            only_cited: 1,
            only_mentioned: 0,
            cited_and_mentioned: 2,
            total: 3,
        };
        let text = String::from_utf8(presence_csv(&[s("b", "x"), s("a", "y"), s("a", "x")]).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 10);
        assert_eq!(lines[1], "a,x,only_cited,1,3");
        assert_eq!(lines[3], "a,x,cited_and_mentioned,2,3");
        assert_eq!(lines[4], "a,y,only_cited,1,3");
    }

    #[test]
    fn cumulative_and_detection_rows() {
        let series = vec![
            YearSeries { dataset_id: "a".into(), kind: SeriesKind::Mentions, points: vec![(2020, 1)] },
            YearSeries { dataset_id: "a".into(), kind: SeriesKind::Citations, points: vec![(2020, 2)] },
        ];
        let text = String::from_utf8(cumulative_csv(&series).unwrap()).unwrap();
        assert_eq!(text, "dataset,kind,year,count\na,citations,2020,2\na,mentions,2020,1\n");

        let d = Detection {
            paper_id: "p".into(),
            dataset_id: "a".into(),
            kind: DetectionKind::Mention,
            location: Location::BodySection { heading: "3, Data".into() },
            element: 4,
            matched_text: "ACDC".into(),
            span: (3, 7),
        };
        let text = String::from_utf8(detections_csv(&[d]).unwrap()).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "p,a,mention,\"body_section:3, Data\",ACDC,3,7");
    }

    #[test]
    fn stale_inputs_detected() {
        let dir = tempfile::tempdir().unwrap();
        let m = manifest(dir.path());
        assert!(m.stale_inputs(dir.path()).unwrap().is_empty());
        std::fs::write(dir.path().join("datasets.csv"), "changed").unwrap();
        assert_eq!(m.stale_inputs(dir.path()).unwrap().len(), 1);
    }
}
