//! Citation and mention detection.
//!
//! A dataset is *cited* when one of its associated papers is in the reference
//! list (found through OpenAlex work IDs or by title against the parsed
//! bibliography) and *mentioned* when a name, alias or URL appears in the
//! abstract, an eligible body section, a caption or a footnote.

pub mod matcher;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::DatasetRecord;
use crate::fulltext::{Eligibility, StructuredDocument};
use crate::harvester::{DatasetWorks, PaperRecord};
use crate::normalize::{edit_similarity, normalize_title};
pub use matcher::{char_slice, AliasMatcher, Hit};

#[derive(Debug, Error, PartialEq)]
pub enum DetectorError {
    #[error("title similarity threshold {0} outside [0, 1]")]
    BadThreshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionKind {
    CitationViaDoi,
    CitationViaTitle,
    Mention,
}

impl DetectionKind {
    pub fn is_citation(self) -> bool {
        !matches!(self, DetectionKind::Mention)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DetectionKind::CitationViaDoi => "citation_via_doi",
            DetectionKind::CitationViaTitle => "citation_via_title",
            DetectionKind::Mention => "mention",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Location {
    Abstract,
    BodySection { heading: String },
    FigureCaption,
    TableCaption,
    Footnote,
    ReferenceList,
}

impl Location {
    fn rank(&self) -> u8 {
        match self {
            Location::Abstract => 0,
            Location::BodySection { .. } => 1,
            Location::FigureCaption => 2,
            Location::TableCaption => 3,
            Location::Footnote => 4,
            Location::ReferenceList => 5,
        }
    }

    /// Location class without the section heading.
    pub fn class(&self) -> &'static str {
        match self {
            Location::Abstract => "abstract",
            Location::BodySection { .. } => "body_section",
            Location::FigureCaption => "figure_caption",
            Location::TableCaption => "table_caption",
            Location::Footnote => "footnote",
            Location::ReferenceList => "reference_list",
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::BodySection { heading } => write!(f, "body_section:{heading}"),
            other => f.write_str(other.class()),
        }
    }
}

/// One piece of evidence that a dataset is present in a paper.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Detection {
    pub paper_id: String,
    pub dataset_id: String,
    pub kind: DetectionKind,
    pub location: Location,
    /// Source anchor of the element the span refers to.
    pub element: usize,
    pub matched_text: String,
    /// Char offsets `[start, end)` within the element text.
    pub span: (usize, usize),
}

impl Detection {
    fn sort_key(&self) -> (&str, u8, usize, (usize, usize), DetectionKind, &str, &str) {
        (&self.dataset_id, self.location.rank(), self.element, self.span, self.kind, &self.matched_text, &self.paper_id)
    }
}

/// Canonical detection order: dataset, location, span.
pub fn sort_detections(detections: &mut [Detection]) {
    detections.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    pub title_similarity_threshold: f64,
    pub excluded_heading_keywords: Vec<String>,
    /// Whether sections without a heading are searched.
    pub unknown_heading_eligible: bool,
}

pub const DEFAULT_EXCLUDED_HEADINGS: [&str; 4] = ["related work", "prior work", "state of the art", "discussion"];

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            title_similarity_threshold: 0.9,
            excluded_heading_keywords: DEFAULT_EXCLUDED_HEADINGS.iter().map(|s| s.to_string()).collect(),
            unknown_heading_eligible: true,
        }
    }
}

impl MatcherConfig {
    /// Checks the threshold and lowercases/normalizes keywords.
    pub fn validated(mut self) -> Result<Self, DetectorError> {
        let t = self.title_similarity_threshold;
        if !(0.0..=1.0).contains(&t) {
            return Err(DetectorError::BadThreshold(t));
        }
        self.excluded_heading_keywords =
            self.excluded_heading_keywords.iter().map(|k| normalize_title(k)).filter(|k| !k.is_empty()).collect();
        Ok(self)
    }
}

/// Eligibility of a body section from its heading.
pub fn classify_section(heading: &str, config: &MatcherConfig) -> Eligibility {
    let norm = normalize_title(heading);
    if norm.is_empty() {
        return Eligibility::Unknown;
    }
    if config.excluded_heading_keywords.iter().any(|k| norm.contains(&normalize_title(k))) {
        Eligibility::Excluded
    } else {
        Eligibility::Eligible
    }
}

/// Title-path decision for one reference entry and one registry title.
pub fn title_matches(raw: &str, parsed_title: Option<&str>, registry_title: &str, threshold: f64) -> bool {
    let wanted = normalize_title(registry_title);
    if wanted.is_empty() {
        return false;
    }
    if normalize_title(raw).contains(&wanted) {
        return true;
    }
    parsed_title.is_some_and(|t| edit_similarity(&normalize_title(t), &wanted) >= threshold)
}

/// Text searched for mentions.
#[derive(Debug, Clone, Copy)]
pub enum MentionSource<'a> {
    Document(&'a StructuredDocument),
    /// Only an abstract is available (no full text).
    AbstractOnly(&'a str),
}

/// Registry compiled for detection.
pub struct Detector<'r> {
    registry: &'r [DatasetRecord],
    config: MatcherConfig,
    matcher: AliasMatcher,
}

impl<'r> Detector<'r> {
    pub fn new(registry: &'r [DatasetRecord], config: MatcherConfig) -> Result<Self, DetectorError> {
        Ok(Detector { registry, config: config.validated()?, matcher: AliasMatcher::new(registry) })
    }

    pub fn config(&self) -> &MatcherConfig {
        &self.config
    }

    pub fn classify_section(&self, heading: &str) -> Eligibility {
        classify_section(heading, &self.config)
    }

    fn eligible(&self, e: Eligibility) -> bool {
        match e {
            Eligibility::Eligible => true,
            Eligibility::Excluded => false,
            Eligibility::Unknown => self.config.unknown_heading_eligible,
        }
    }

    /// Fills every section's eligibility.
    pub fn annotate_eligibility(&self, doc: &mut StructuredDocument) {
        for s in &mut doc.sections {
            s.eligibility = self.classify_section(&s.heading);
        }
    }

    /// One `citation_via_doi` detection per dataset whose resolved work ID is
    /// among a paper's referenced works.
    pub fn detect_citations_by_id(&self, paper: &PaperRecord, works: &DatasetWorks) -> Vec<Detection> {
        let Some(refs) = &paper.referenced_work_ids else {
            return Vec::new();
        };
        let mut out = Vec::new();
        for ds in self.registry {
            let Some(ids) = works.resolved.get(&ds.dataset_id) else { continue };
            if let Some((i, id)) = refs.iter().enumerate().find(|(_, r)| ids.contains(r)) {
                out.push(Detection {
                    paper_id: paper.paper_id.clone(),
                    dataset_id: ds.dataset_id.clone(),
                    kind: DetectionKind::CitationViaDoi,
                    location: Location::ReferenceList,
                    element: i,
                    matched_text: id.clone(),
                    span: (0, id.chars().count()),
                });
            }
        }
        sort_detections(&mut out);
        out
    }

    /// One `citation_via_title` detection per dataset with a registry title
    /// matching a bibliography entry.
    pub fn detect_citations_by_title(&self, doc: &StructuredDocument) -> Vec<Detection> {
        let threshold = self.config.title_similarity_threshold;
        let mut out = Vec::new();
        for ds in self.registry {
            let hit = doc.references.iter().find(|r| {
                ds.paper_titles.iter().any(|t| title_matches(&r.raw, r.parsed_title.as_deref(), t, threshold))
            });
            if let Some(r) = hit {
                out.push(Detection {
                    paper_id: doc.paper_id.clone(),
                    dataset_id: ds.dataset_id.clone(),
                    kind: DetectionKind::CitationViaTitle,
                    location: Location::ReferenceList,
                    element: r.anchor,
                    matched_text: r.raw.clone(),
                    span: (0, r.raw.chars().count()),
                });
            }
        }
        sort_detections(&mut out);
        out
    }

    fn scan(&self, paper_id: &str, text: &str, location: Location, element: usize, out: &mut Vec<Detection>) {
        for h in self.matcher.find(text) {
            out.push(Detection {
                paper_id: paper_id.to_string(),
                dataset_id: self.registry[h.dataset].dataset_id.clone(),
                kind: DetectionKind::Mention,
                location: location.clone(),
                element,
                matched_text: char_slice(text, h.start, h.end),
                span: (h.start, h.end),
            });
        }
    }

    /// Every alias/URL occurrence in the searchable locations. Section spans
    /// are offsets into the section's paragraphs joined by `\n`.
    pub fn detect_mentions(&self, paper_id: &str, source: MentionSource) -> Vec<Detection> {
        let mut out = Vec::new();
        match source {
            MentionSource::AbstractOnly(text) => self.scan(paper_id, text, Location::Abstract, 0, &mut out),
            MentionSource::Document(doc) => {
                if let Some(a) = &doc.abstract_text {
                    self.scan(paper_id, a, Location::Abstract, 0, &mut out);
                }
                for s in &doc.sections {
                    if self.eligible(self.classify_section(&s.heading)) {
                        let text = s.paragraphs.join("\n");
                        let loc = Location::BodySection { heading: s.heading.clone() };
                        self.scan(paper_id, &text, loc, s.anchor, &mut out);
                    }
                }
                for c in &doc.figure_captions {
                    self.scan(paper_id, &c.text, Location::FigureCaption, c.anchor, &mut out);
                }
                for c in &doc.table_captions {
                    self.scan(paper_id, &c.text, Location::TableCaption, c.anchor, &mut out);
                }
                for f in &doc.footnotes {
                    self.scan(paper_id, &f.text, Location::Footnote, f.anchor, &mut out);
                }
            }
        }
        sort_detections(&mut out);
        out
    }

    /// All detections for one paper given what is available for it.
    ///
    /// With a parsed full text, mentions come from the document (its abstract,
    /// or the OpenAlex abstract when GROBID found none) and titles are matched
    /// against its bibliography. Without one, only the OpenAlex abstract is
    /// searched.
    pub fn detect_paper(
        &self,
        paper: &PaperRecord,
        doc: Option<&StructuredDocument>,
        works: &DatasetWorks,
    ) -> Vec<Detection> {
        let mut out = self.detect_citations_by_id(paper, works);
        match doc {
            Some(doc) => {
                out.extend(self.detect_citations_by_title(doc));
                let fallback;
                let doc = if doc.abstract_text.is_none() && paper.has_openalex_abstract() {
                    fallback = StructuredDocument { abstract_text: paper.abstract_text.clone(), ..doc.clone() };
                    &fallback
                } else {
                    doc
                };
                out.extend(self.detect_mentions(&paper.paper_id, MentionSource::Document(doc)));
            }
            None => {
                if let (true, Some(a)) = (paper.has_openalex_abstract(), &paper.abstract_text) {
                    out.extend(self.detect_mentions(&paper.paper_id, MentionSource::AbstractOnly(a)));
                }
            }
        }
        for d in &mut out {
            d.paper_id = paper.paper_id.clone();
        }
        sort_detections(&mut out);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PresenceType {
    OnlyCited,
    OnlyMentioned,
    CitedAndMentioned,
}

impl PresenceType {
    pub const ALL: [PresenceType; 3] =
        [PresenceType::OnlyCited, PresenceType::OnlyMentioned, PresenceType::CitedAndMentioned];

    pub fn from_flags(cited: bool, mentioned: bool) -> Option<Self> {
        match (cited, mentioned) {
            (true, true) => Some(PresenceType::CitedAndMentioned),
            (true, false) => Some(PresenceType::OnlyCited),
            (false, true) => Some(PresenceType::OnlyMentioned),
            (false, false) => None,
        }
    }

    pub fn is_cited(self) -> bool {
        self != PresenceType::OnlyMentioned
    }

    pub fn is_mentioned(self) -> bool {
        self != PresenceType::OnlyCited
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PresenceType::OnlyCited => "only_cited",
            PresenceType::OnlyMentioned => "only_mentioned",
            PresenceType::CitedAndMentioned => "cited_and_mentioned",
        }
    }
}

/// Paper-level presence of one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PresenceRecord {
    pub paper_id: String,
    pub dataset_id: String,
    pub presence: PresenceType,
}

/// Presence of one dataset from the kinds of its detections.
pub fn presence_of(kinds: &HashSet<DetectionKind>) -> Option<PresenceType> {
    let cited = kinds.iter().any(|k| k.is_citation());
    let mentioned = kinds.contains(&DetectionKind::Mention);
    PresenceType::from_flags(cited, mentioned)
}

/// Per-dataset presence for one paper; datasets without detections are absent.
pub fn resolve_presence(paper_id: &str, detections: &[Detection]) -> Vec<PresenceRecord> {
    let mut kinds: BTreeMap<&str, HashSet<DetectionKind>> = BTreeMap::new();
    for d in detections.iter().filter(|d| d.paper_id == paper_id) {
        kinds.entry(&d.dataset_id).or_default().insert(d.kind);
    }
    kinds
        .into_iter()
        .filter_map(|(ds, k)| {
            presence_of(&k).map(|presence| PresenceRecord {
                paper_id: paper_id.to_string(),
                dataset_id: ds.to_string(),
                presence,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::parse_dataset_registry;
    use crate::fulltext::{Caption, CaptionKind, Footnote, ReferenceEntry, Section};

    fn registry() -> Vec<DatasetRecord> {
        parse_dataset_registry(
            "dataset_id|name|aliases|urls|paper_titles|doi\n\
             acdc|ACDC||https://www.creatis.insa-lyon.fr/Challenge/acdc|Deep Learning Techniques for Automatic MRI Cardiac Multi-Structures Segmentation and Diagnosis: Is the Problem Solved?|10.1109/tmi.2018.2837502\n\
             brats|BRATS|BraTS||The Multimodal Brain Tumor Image Segmentation Benchmark (BRATS)|10.1109/tmi.2014.2377694;10.1038/sdata.2017.117\n\
             camelyon|CAMELYON||https://camelyon17.grand-challenge.org|From Detection of Individual Metastases to Classification of Lymph Node Status at the Patient Level: The CAMELYON17 Challenge|10.1109/tmi.2018.2867350\n",
        )
        .unwrap()
    }

    fn section(heading: &str, text: &str, anchor: usize) -> Section {
        Section { heading: heading.into(), paragraphs: vec![text.into()], eligibility: Eligibility::Unknown, anchor }
    }

    fn kinds(ds: &[Detection]) -> Vec<(String, DetectionKind, &'static str)> {
        ds.iter().map(|d| (d.dataset_id.clone(), d.kind, d.location.class())).collect()
    }

    #[test]
    fn section_classification() {
        let c = MatcherConfig::default();
        assert_eq!(classify_section("2. Related Work", &c), Eligibility::Excluded);
        assert_eq!(classify_section("3 Method", &c), Eligibility::Eligible);
        assert_eq!(classify_section("", &c), Eligibility::Unknown);
        assert_eq!(classify_section("5 Discussion and Conclusion", &c), Eligibility::Excluded);
        assert_eq!(classify_section("Comparison to State-of-the-Art", &c), Eligibility::Excluded);
    }

    #[test]
    fn bad_threshold_rejected() {
        let cfg = MatcherConfig { title_similarity_threshold: 1.5, ..Default::default() };
        assert!(matches!(Detector::new(&registry(), cfg), Err(DetectorError::BadThreshold(_))));
    }

    #[test]
    fn mention_locations() {
        let reg = registry();
        let det = Detector::new(&reg, MatcherConfig::default()).unwrap();
        let doc = StructuredDocument {
            paper_id: "p".into(),
            abstract_text: None,
            sections: vec![
                section("2 Related Work", "Prior methods used ACDC.", 3),
                section("3 Experiments", "We train on ACDCNet features.", 7),
            ],
            figure_captions: vec![],
            table_captions: vec![Caption { kind: CaptionKind::Table, text: "Dice on BRATS.".into(), anchor: 20 }],
            footnotes: vec![Footnote { text: "https://camelyon17.grand-challenge.org".into(), anchor: 30 }],
            references: vec![],
        };
        let found = det.detect_mentions("p", MentionSource::Document(&doc));
        assert_eq!(
            kinds(&found),
            vec![
                ("brats".into(), DetectionKind::Mention, "table_caption"),
                ("camelyon".into(), DetectionKind::Mention, "footnote"),
            ]
        );
        assert_eq!(found[0].span, (8, 13));
        assert_eq!(found[1].matched_text, "camelyon17.grand-challenge.org");
    }

    #[test]
    fn abstract_only_scans_only_the_abstract() {
        let reg = registry();
        let det = Detector::new(&reg, MatcherConfig::default()).unwrap();
        let found = det.detect_mentions("p", MentionSource::AbstractOnly("Results on BraTS and ACDC."));
        assert_eq!(found.len(), 2);
        assert!(found.iter().all(|d| d.location == Location::Abstract));
    }

    #[test]
    fn unknown_heading_follows_config() {
        let reg = registry();
        let doc = StructuredDocument {
            paper_id: "p".into(),
            sections: vec![section("", "ACDC here", 1)],
            ..Default::default()
        };
        let det = Detector::new(&reg, MatcherConfig::default()).unwrap();
        assert_eq!(det.detect_mentions("p", MentionSource::Document(&doc)).len(), 1);
        let strict = MatcherConfig { unknown_heading_eligible: false, ..Default::default() };
        let det = Detector::new(&reg, strict).unwrap();
        assert!(det.detect_mentions("p", MentionSource::Document(&doc)).is_empty());
    }

    fn paper(refs: Option<Vec<&str>>) -> PaperRecord {
        let mut p = PaperRecord::new("p".into(), "v".into(), 2020, "t".into(), None);
        p.referenced_work_ids = refs.map(|r| r.into_iter().map(String::from).collect());
        p
    }

    fn works() -> DatasetWorks {
        let mut w = DatasetWorks::default();
        w.resolved.insert("acdc".into(), vec!["W100".into()]);
        w.resolved.insert("brats".into(), vec!["W200".into(), "W201".into()]);
        w
    }

    #[test]
    fn citations_by_id() {
        let reg = registry();
        let det = Detector::new(&reg, MatcherConfig::default()).unwrap();
        let found = det.detect_citations_by_id(&paper(Some(vec!["W1", "W100", "W201", "W200"])), &works());
        assert_eq!(
            kinds(&found),
            vec![
                ("acdc".into(), DetectionKind::CitationViaDoi, "reference_list"),
                ("brats".into(), DetectionKind::CitationViaDoi, "reference_list"),
            ]
        );
        assert!(det.detect_citations_by_id(&paper(Some(vec![])), &works()).is_empty());
        assert!(det.detect_citations_by_id(&paper(None), &works()).is_empty());
    }

    #[test]
    fn citations_by_title() {
        let reg = registry();
        let det = Detector::new(&reg, MatcherConfig::default()).unwrap();
        let doc = StructuredDocument {
            paper_id: "p".into(),
            references: vec![
                ReferenceEntry {
                    raw: "Bernard, O., et al.: Deep learning techniques for automatic MRI cardiac multi-structures segmentation and diagnosis: is the problem solved? IEEE TMI 37(11) (2018)".into(),
                    parsed_title: None,
                    parsed_doi: None,
                    anchor: 40,
                },
                ReferenceEntry {
                    raw: "Smith: Deep learning for segmentation. MICCAI (2019)".into(),
                    parsed_title: Some("Deep learning for segmentation".into()),
                    parsed_doi: None,
                    anchor: 41,
                },
            ],
            ..Default::default()
        };
        let found = det.detect_citations_by_title(&doc);
        assert_eq!(kinds(&found), vec![("acdc".into(), DetectionKind::CitationViaTitle, "reference_list")]);
        assert_eq!(found[0].element, 40);
    }

    #[test]
    fn identical_title_matches_at_threshold_one() {
        let t = "The Multimodal Brain Tumor Image Segmentation Benchmark";
        assert!(title_matches("x", Some(t), t, 1.0));
        assert!(!title_matches("x", Some("Deep learning for segmentation"), t, 0.9));
    }

    #[test]
    fn presence_truth_table() {
        assert_eq!(PresenceType::from_flags(false, false), None);
        assert_eq!(PresenceType::from_flags(true, false), Some(PresenceType::OnlyCited));
        assert_eq!(PresenceType::from_flags(false, true), Some(PresenceType::OnlyMentioned));
        assert_eq!(PresenceType::from_flags(true, true), Some(PresenceType::CitedAndMentioned));
    }

    #[test]
    fn resolve_presence_examples() {
        let d = |ds: &str, kind| Detection {
            paper_id: "p".into(),
            dataset_id: ds.into(),
            kind,
            location: if kind == DetectionKind::Mention { Location::Footnote } else { Location::ReferenceList },
            element: 0,
            matched_text: "x".into(),
            span: (0, 1),
        };
        let r = resolve_presence(
            "p",
            &[
                d("a", DetectionKind::CitationViaDoi),
                d("b", DetectionKind::Mention),
                d("c", DetectionKind::CitationViaTitle),
                d("c", DetectionKind::Mention),
            ],
        );
        let got: Vec<_> = r.iter().map(|r| (r.dataset_id.as_str(), r.presence)).collect();
        assert_eq!(
            got,
            vec![
                ("a", PresenceType::OnlyCited),
                ("b", PresenceType::OnlyMentioned),
                ("c", PresenceType::CitedAndMentioned)
            ]
        );
        assert!(resolve_presence("p", &[]).is_empty());
    }
}
