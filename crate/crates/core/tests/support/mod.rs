//! Fixture runners and independent oracles shared by the integration and
//! acceptance suites. Callers pass fixture directories explicitly so the
//! module can be included from other crates.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde_json::Value;

use dsprobe::catalog::load_dataset_registry;
use dsprobe::detector::{Detection, Detector, Location, MatcherConfig, MentionSource};
use dsprobe::fulltext::{parse_tei, StructuredDocument};
use dsprobe::InvertedAbstract;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Score {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Score {
    pub fn precision(&self) -> f64 {
        if self.tp + self.fp == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fp) as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.tp + self.fn_ == 0 {
            1.0
        } else {
            self.tp as f64 / (self.tp + self.fn_) as f64
        }
    }
}

/// (paper, dataset, kind, location, ordinal within its class, start, end, matched text)
pub type Item = (String, String, String, String, usize, usize, usize, String);

pub struct CorpusRun {
    pub docs: usize,
    pub planted: usize,
    pub score: Score,
    pub false_positives: Vec<Item>,
    pub false_negatives: Vec<Item>,
    pub detections: BTreeMap<String, Vec<Detection>>,
}

fn ordinal(doc: &StructuredDocument, d: &Detection) -> usize {
    let pos = |anchors: Vec<usize>| anchors.iter().position(|a| *a == d.element).expect("anchor of a parsed element");
    match &d.location {
        Location::Abstract => 0,
        Location::BodySection { .. } => pos(doc.sections.iter().map(|s| s.anchor).collect()),
        Location::FigureCaption => pos(doc.figure_captions.iter().map(|c| c.anchor).collect()),
        Location::TableCaption => pos(doc.table_captions.iter().map(|c| c.anchor).collect()),
        Location::Footnote => pos(doc.footnotes.iter().map(|f| f.anchor).collect()),
        Location::ReferenceList => pos(doc.references.iter().map(|r| r.anchor).collect()),
    }
}

/// Runs mention and title-citation detection over every `docs/*.tei.xml`
/// and scores it against `truth.json`.
pub fn run_detection_corpus(dir: &Path) -> CorpusRun {
    let registry = load_dataset_registry(&dir.join("registry.csv")).expect("registry");
    let detector = Detector::new(&registry, MatcherConfig::default()).expect("detector");

    let mut truth: BTreeSet<Item> = BTreeSet::new();
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("truth.json")).unwrap()).unwrap();
    for t in raw.as_array().unwrap() {
        let s = |k: &str| t[k].as_str().unwrap().to_string();
        let n = |k: &str| t[k].as_u64().unwrap() as usize;
        truth.insert((
            s("paper_id"),
            s("dataset_id"),
            s("kind"),
            s("location"),
            n("ordinal"),
            n("span_start"),
            n("span_end"),
            s("matched_text"),
        ));
    }

    let mut paths: Vec<_> = std::fs::read_dir(dir.join("docs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.to_string_lossy().ends_with(".tei.xml"))
        .collect();
    paths.sort();

    let mut found: BTreeSet<Item> = BTreeSet::new();
    let mut detections = BTreeMap::new();
    for path in &paths {
        let id = path.file_name().unwrap().to_string_lossy().trim_end_matches(".tei.xml").to_string();
        let mut doc = parse_tei(&id, &std::fs::read_to_string(path).unwrap()).expect("parse");
        detector.annotate_eligibility(&mut doc);
        let mut ds = detector.detect_mentions(&id, MentionSource::Document(&doc));
        ds.extend(detector.detect_citations_by_title(&doc));
        for d in &ds {
            found.insert((
                d.paper_id.clone(),
                d.dataset_id.clone(),
                d.kind.as_str().to_string(),
                d.location.to_string(),
                ordinal(&doc, d),
                d.span.0,
                d.span.1,
                d.matched_text.clone(),
            ));
        }
        detections.insert(id, ds);
    }

    let tp = found.intersection(&truth).count();
    CorpusRun {
        docs: paths.len(),
        planted: truth.len(),
        score: Score { tp, fp: found.len() - tp, fn_: truth.len() - tp },
        false_positives: found.difference(&truth).cloned().collect(),
        false_negatives: truth.difference(&found).cloned().collect(),
        detections,
    }
}

pub struct TitleCase {
    pub kind: String,
    pub registry_title: String,
    pub raw: String,
    pub parsed_title: Option<String>,
    pub expected: bool,
}

pub fn load_title_cases(dir: &Path) -> Vec<TitleCase> {
    let raw: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("titles.json")).unwrap()).unwrap();
    raw.as_array()
        .unwrap()
        .iter()
        .map(|c| TitleCase {
            kind: c["kind"].as_str().unwrap().into(),
            registry_title: c["registry_title"].as_str().unwrap().into(),
            raw: c["raw"].as_str().unwrap().into(),
            parsed_title: c["parsed_title"].as_str().map(String::from),
            expected: c["expected"].as_bool().unwrap(),
        })
        .collect()
}

fn oracle_normalize(s: &str) -> String {
    let mut words = Vec::new();
    let mut cur = String::new();
    for c in s.chars() {
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words.join(" ")
}

/// Full-matrix Levenshtein distance.
pub fn brute_levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

pub fn oracle_decision(c: &TitleCase, threshold: f64) -> bool {
    let want = oracle_normalize(&c.registry_title);
    if oracle_normalize(&c.raw).contains(&want) {
        return true;
    }
    let Some(parsed) = &c.parsed_title else { return false };
    let p = oracle_normalize(parsed);
    let longest = p.chars().count().max(want.chars().count());
    let sim = if longest == 0 { 1.0 } else { 1.0 - brute_levenshtein(&p, &want) as f64 / longest as f64 };
    sim >= threshold
}

/// Word → positions, built by scanning every position for every distinct word.
pub fn brute_invert(text: &str) -> InvertedAbstract {
    let words: Vec<&str> = text.split_whitespace().collect();
    let distinct: BTreeSet<&str> = words.iter().copied().collect();
    distinct.into_iter().map(|w| (w.to_string(), (0..words.len()).filter(|&i| words[i] == w).collect())).collect()
}
