//! Precision and recall of automated detections against human labels.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use dsprobe::catalog::DatasetRecord;
use dsprobe::detector::Detection;

use crate::store::{AnnotateError, Annotation};

/// What the detector produced: the papers it ran on and the (paper,
/// dataset) pairs it flagged.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorOutput {
    pub papers: BTreeSet<String>,
    pub pairs: BTreeSet<(String, String)>,
}

impl DetectorOutput {
    pub fn from_detections(papers: impl IntoIterator<Item = String>, detections: &[Detection]) -> Self {
        let pairs = detections.iter().map(|d| (d.paper_id.clone(), d.dataset_id.clone())).collect();
        DetectorOutput { papers: papers.into_iter().collect(), pairs }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

impl Counts {
    fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |n: usize, d: usize| (d > 0).then(|| n as f64 / d as f64);
        Counts { tp, fp, fn_, precision: ratio(tp, tp + fp), recall: ratio(tp, tp + fn_) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub paper_id: String,
    pub dataset: String,
    /// `automated_only` or `human_only`.
    pub side: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub papers: usize,
    pub overall: Counts,
    pub per_dataset: BTreeMap<String, Counts>,
    pub disagreements: Vec<Disagreement>,
}

/// Maps a human label to a dataset key: the registry's dataset_id when the
/// label is a known name or alias, else the lowercased label.
fn label_key(label: &str, registry: &[DatasetRecord]) -> String {
    let folded = label.trim().to_lowercase();
    registry
        .iter()
        .find(|d| {
            d.dataset_id.to_lowercase() == folded
                || d.canonical_name.to_lowercase() == folded
                || d.aliases.iter().any(|a| a.text.to_lowercase() == folded)
        })
        .map(|d| d.dataset_id.clone())
        .unwrap_or(folded)
}

/// Human presence labels (any location, any annotator) are ground truth.
/// Only papers in both the project and the detector's corpus are compared.
pub fn compute_agreement(
    pdf_ids: &[String],
    annotations: &[Annotation],
    detected: &DetectorOutput,
    registry: &[DatasetRecord],
) -> Result<Agreement, AnnotateError> {
    let covered: BTreeSet<&str> =
        pdf_ids.iter().map(String::as_str).filter(|id| detected.papers.contains(*id)).collect();
    if covered.is_empty() {
        return Err(AnnotateError::NoOverlap);
    }
    let human: BTreeSet<(String, String)> = annotations
        .iter()
        .filter(|a| covered.contains(a.pdf_id.as_str()))
        .map(|a| (a.pdf_id.clone(), label_key(&a.label_1, registry)))
        .collect();
    let auto: BTreeSet<(String, String)> = detected
        .pairs
        .iter()
        .filter(|(p, _)| covered.contains(p.as_str()))
        .map(|(p, d)| (p.clone(), d.to_lowercase()))
        .collect();

    let datasets: BTreeSet<&str> = human.iter().chain(&auto).map(|(_, d)| d.as_str()).collect();
    let mut per_dataset = BTreeMap::new();
    for ds in datasets {
        let h: BTreeSet<_> = human.iter().filter(|(_, d)| d == ds).collect();
        let a: BTreeSet<_> = auto.iter().filter(|(_, d)| d == ds).collect();
        let tp = h.intersection(&a).count();
        per_dataset.insert(ds.to_string(), Counts::new(tp, a.len() - tp, h.len() - tp));
    }
    let tp = human.intersection(&auto).count();
    let mut disagreements: Vec<Disagreement> = auto
        .difference(&human)
        .map(|(p, d)| Disagreement { paper_id: p.clone(), dataset: d.clone(), side: "automated_only".into() })
        .chain(human.difference(&auto).map(|(p, d)| Disagreement {
            paper_id: p.clone(),
            dataset: d.clone(),
            side: "human_only".into(),
        }))
        .collect();
    disagreements.sort_by(|a, b| (&a.paper_id, &a.dataset).cmp(&(&b.paper_id, &b.dataset)));
    Ok(Agreement {
        papers: covered.len(),
        overall: Counts::new(tp, auto.len() - tp, human.len() - tp),
        per_dataset,
        disagreements,
    })
}
