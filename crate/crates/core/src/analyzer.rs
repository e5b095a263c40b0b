//! Data-availability groups, presence breakdowns, cumulative series and
//! citation-index coverage.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{PresenceRecord, PresenceType};
use crate::harvester::PaperRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalyzerError {
    #[error("presence record for dataset {dataset_id} refers to unknown paper {paper_id}")]
    DanglingPaperRef { paper_id: String, dataset_id: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Group1,
    Group2,
    Group3,
    Discarded,
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Group1 => "group1",
            Group::Group2 => "group2",
            Group::Group3 => "group3",
            Group::Discarded => "discarded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    pub paper_id: String,
    pub group: Group,
    pub reason: String,
}

/// What could be obtained for a paper.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Availability {
    pub fulltext: bool,
    pub abstract_text: bool,
    pub references: bool,
}

impl Availability {
    pub fn of(paper: &PaperRecord) -> Self {
        Availability {
            fulltext: paper.fulltext_status.has_pdf(),
            abstract_text: paper.has_openalex_abstract(),
            references: paper.has_references(),
        }
    }
}

/// Group of one availability cell. Full text decides first: with references
/// it is group 1, without them group 3. Without full text any remaining
/// content or references puts a paper in group 2.
pub fn group_for(a: Availability) -> (Group, &'static str) {
    match (a.fulltext, a.abstract_text, a.references) {
        (true, _, true) => (Group::Group1, "full text and references available"),
        (true, _, false) => (Group::Group3, "no references in OpenAlex; citations by title only"),
        (false, true, _) => (Group::Group2, "no full text; mentions searched in abstract only"),
        (false, false, true) => (Group::Group2, "no full text and no abstract; citations only"),
        (false, false, false) => (Group::Discarded, "no content and no references"),
    }
}

pub fn assign_group(paper: &PaperRecord) -> GroupAssignment {
    let (group, reason) = group_for(Availability::of(paper));
    GroupAssignment { paper_id: paper.paper_id.clone(), group, reason: reason.to_string() }
}

/// Presence-type breakdown for one (dataset, venue) subset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceSummary {
    pub dataset_id: String,
    pub venue_id: String,
    pub only_cited: usize,
    pub only_mentioned: usize,
    pub cited_and_mentioned: usize,
    pub total: usize,
}

impl PresenceSummary {
    pub fn count(&self, t: PresenceType) -> usize {
        match t {
            PresenceType::OnlyCited => self.only_cited,
            PresenceType::OnlyMentioned => self.only_mentioned,
            PresenceType::CitedAndMentioned => self.cited_and_mentioned,
        }
    }

    pub fn proportion(&self, t: PresenceType) -> Option<f64> {
        (self.total > 0).then(|| self.count(t) as f64 / self.total as f64)
    }
}

fn index_papers(papers: &[PaperRecord]) -> HashMap<&str, &PaperRecord> {
    papers.iter().map(|p| (p.paper_id.as_str(), p)).collect()
}

/// Groups presence records by (dataset, venue), sorted by both.
pub fn aggregate_presence(
    resolved: &[PresenceRecord],
    papers: &[PaperRecord],
) -> Result<Vec<PresenceSummary>, AnalyzerError> {
    let by_id = index_papers(papers);
    let mut cells: BTreeMap<(&str, &str), [BTreeSet<&str>; 3]> = BTreeMap::new();
    for r in resolved {
        let paper = by_id.get(r.paper_id.as_str()).ok_or_else(|| AnalyzerError::DanglingPaperRef {
            paper_id: r.paper_id.clone(),
            dataset_id: r.dataset_id.clone(),
        })?;
        let slot = PresenceType::ALL.iter().position(|t| *t == r.presence).expect("listed");
        cells.entry((&r.dataset_id, &paper.venue_id)).or_default()[slot].insert(&r.paper_id);
    }
    Ok(cells
        .into_iter()
        .map(|((ds, venue), sets)| {
            let [c, m, b] = sets.map(|s| s.len());
            PresenceSummary {
                dataset_id: ds.to_string(),
                venue_id: venue.to_string(),
                only_cited: c,
                only_mentioned: m,
                cited_and_mentioned: b,
                total: c + m + b,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Citations,
    Mentions,
}

impl SeriesKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeriesKind::Citations => "citations",
            SeriesKind::Mentions => "mentions",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearSeries {
    pub dataset_id: String,
    pub kind: SeriesKind,
    /// `(year, cumulative count)` for every year of the range, ascending.
    pub points: Vec<(i32, usize)>,
}

impl YearSeries {
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| w[0].1 <= w[1].1)
    }
}

/// Cumulative per-year counts of distinct citing and mentioning papers for
/// each dataset with any presence, over `years` (inclusive). Papers outside
/// the range are clamped into its ends.
pub fn cumulative_series(
    resolved: &[PresenceRecord],
    papers: &[PaperRecord],
    years: (i32, i32),
) -> Result<Vec<YearSeries>, AnalyzerError> {
    let by_id = index_papers(papers);
    let (lo, hi) = years;
    let mut firsts: BTreeMap<(&str, SeriesKind), BTreeSet<(&str, i32)>> = BTreeMap::new();
    let mut datasets = BTreeSet::new();
    for r in resolved {
        let paper = by_id.get(r.paper_id.as_str()).ok_or_else(|| AnalyzerError::DanglingPaperRef {
            paper_id: r.paper_id.clone(),
            dataset_id: r.dataset_id.clone(),
        })?;
        datasets.insert(r.dataset_id.as_str());
        let year = paper.year.clamp(lo, hi);
        if r.presence.is_cited() {
            firsts.entry((&r.dataset_id, SeriesKind::Citations)).or_default().insert((&r.paper_id, year));
        }
        if r.presence.is_mentioned() {
            firsts.entry((&r.dataset_id, SeriesKind::Mentions)).or_default().insert((&r.paper_id, year));
        }
    }
    let mut out = Vec::new();
    if hi < lo {
        return Ok(out);
    }
    for ds in datasets {
        for kind in [SeriesKind::Citations, SeriesKind::Mentions] {
            let mut per_year = vec![0usize; (hi - lo + 1) as usize];
            // a paper is counted once even if listed twice for the same dataset
            let mut seen = BTreeSet::new();
            for (pid, y) in firsts.get(&(ds, kind)).into_iter().flatten() {
                if seen.insert(*pid) {
                    per_year[(y - lo) as usize] += 1;
                }
            }
            let mut acc = 0;
            let points = per_year
                .into_iter()
                .enumerate()
                .map(|(i, n)| {
                    acc += n;
                    (lo + i as i32, acc)
                })
                .collect();
            out.push(YearSeries { dataset_id: ds.to_string(), kind, points });
        }
    }
    Ok(out)
}

/// A ratio that is undefined when its denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Containment {
    pub numerator: usize,
    pub denominator: usize,
}

impl Containment {
    pub fn value(&self) -> Option<f64> {
        (self.denominator > 0).then(|| self.numerator as f64 / self.denominator as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexComparison {
    pub a_in_b: Containment,
    pub b_in_a: Containment,
}

pub fn compare_citation_indexes(a: &BTreeSet<String>, b: &BTreeSet<String>) -> IndexComparison {
    let both = a.intersection(b).count();
    IndexComparison {
        a_in_b: Containment { numerator: both, denominator: a.len() },
        b_in_a: Containment { numerator: both, denominator: b.len() },
    }
}

/// Year range spanned by the venues, widened to cover every paper.
pub fn year_range(venue_ranges: &[(i32, i32)], papers: &[PaperRecord]) -> Option<(i32, i32)> {
    let lows = venue_ranges.iter().map(|r| r.0).chain(papers.iter().map(|p| p.year));
    let highs = venue_ranges.iter().map(|r| r.1).chain(papers.iter().map(|p| p.year));
    Some((lows.min()?, highs.max()?))
}
