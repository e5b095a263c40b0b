mod support;

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use dsprobe::analyzer::{
    aggregate_presence, compare_citation_indexes, cumulative_series, group_for, Availability, Group, SeriesKind,
};
use dsprobe::catalog::{parse_dataset_registry, write_dataset_registry, Alias, DatasetRecord, Task};
use dsprobe::detector::{resolve_presence, Detection, DetectionKind, Location, PresenceRecord, PresenceType};
use dsprobe::harvester::reconstruct_abstract;
use dsprobe::normalize::{collapse_whitespace, normalize_url};
use dsprobe::PaperRecord;

fn detection(kind: DetectionKind) -> Detection {
    let location = if kind.is_citation() { Location::ReferenceList } else { Location::Footnote };
    Detection {
        paper_id: "p".into(),
        dataset_id: "d".into(),
        kind,
        location,
        element: 0,
        matched_text: "x".into(),
        span: (0, 1),
    }
}

#[test]
fn presence_truth_table() {
    for cited in [false, true] {
        for mentioned in [false, true] {
            let mut ds = Vec::new();
            if cited {
                ds.push(detection(DetectionKind::CitationViaDoi));
            }
            if mentioned {
                ds.push(detection(DetectionKind::Mention));
            }
            let got = resolve_presence("p", &ds).first().map(|r| r.presence);
            let want = match (cited, mentioned) {
                (false, false) => None,
                (true, false) => Some(PresenceType::OnlyCited),
                (false, true) => Some(PresenceType::OnlyMentioned),
                (true, true) => Some(PresenceType::CitedAndMentioned),
            };
            assert_eq!(got, want, "cited={cited} mentioned={mentioned}");
        }
    }
}

#[test]
fn availability_cube() {
    use Group::*;
    // (fulltext, abstract, references) → group
    let table = [
        ((true, true, true), Group1),
        ((true, false, true), Group1),
        ((true, true, false), Group3),
        ((true, false, false), Group3),
        ((false, true, true), Group2),
        ((false, true, false), Group2),
        ((false, false, true), Group2),
        ((false, false, false), Discarded),
    ];
    for ((f, a, r), want) in table {
        let (got, reason) = group_for(Availability { fulltext: f, abstract_text: a, references: r });
        assert_eq!(got, want, "F={f} A={a} R={r}");
        assert!(!reason.is_empty());
    }
}

#[test]
fn index_comparison_fixtures() {
    let set = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<BTreeSet<_>>();
    let a = set(&["W1", "W2", "W3", "W4"]);
    let b = set(&["W1", "W2", "W3"]);
    let same = compare_citation_indexes(&a, &a);
    assert_eq!((same.a_in_b.value(), same.b_in_a.value()), (Some(1.0), Some(1.0)));
    let c = compare_citation_indexes(&a, &b);
    assert_eq!((c.a_in_b.value(), c.b_in_a.value()), (Some(0.75), Some(1.0)));
    let swapped = compare_citation_indexes(&b, &a);
    assert_eq!((swapped.a_in_b, swapped.b_in_a), (c.b_in_a, c.a_in_b));
}

fn paper(id: &str, venue: &str, year: i32) -> PaperRecord {
    PaperRecord::new(id.into(), venue.into(), year, format!("title {id}"), None)
}

fn rec(p: &str, d: &str, t: PresenceType) -> PresenceRecord {
    PresenceRecord { paper_id: p.into(), dataset_id: d.into(), presence: t }
}

/// Prefix sums recomputed by counting, for every year, the papers at or
/// before it.
fn brute_cumulative(
    records: &[PresenceRecord],
    papers: &[PaperRecord],
    years: (i32, i32),
) -> BTreeMap<(String, SeriesKind), Vec<(i32, usize)>> {
    let year_of: BTreeMap<&str, i32> = papers.iter().map(|p| (p.paper_id.as_str(), p.year)).collect();
    let datasets: BTreeSet<&str> = records.iter().map(|r| r.dataset_id.as_str()).collect();
    let mut out = BTreeMap::new();
    for ds in datasets {
        for kind in [SeriesKind::Citations, SeriesKind::Mentions] {
            let points = (years.0..=years.1)
                .map(|y| {
                    let n = records
                        .iter()
                        .filter(|r| r.dataset_id == ds)
                        .filter(|r| match kind {
                            SeriesKind::Citations => r.presence != PresenceType::OnlyMentioned,
                            SeriesKind::Mentions => r.presence != PresenceType::OnlyCited,
                        })
                        .filter(|r| year_of[r.paper_id.as_str()].clamp(years.0, years.1) <= y)
                        .map(|r| r.paper_id.as_str())
                        .collect::<BTreeSet<_>>()
                        .len();
                    (y, n)
                })
                .collect();
            out.insert((ds.to_string(), kind), points);
        }
    }
    out
}

#[test]
fn five_paper_cumulative_fixture() {
    use PresenceType::*;
    let papers = [
        paper("a", "miccai", 2018),
        paper("b", "miccai", 2019),
        paper("c", "midl", 2019),
        paper("d", "midl", 2021),
        paper("e", "miccai", 2022),
    ];
    let records = [
        rec("a", "brats", CitedAndMentioned),
        rec("b", "brats", OnlyCited),
        rec("c", "brats", OnlyMentioned),
        rec("d", "acdc", OnlyMentioned),
        rec("e", "brats", CitedAndMentioned),
        rec("e", "acdc", OnlyCited),
    ];
    let series = cumulative_series(&records, &papers, (2018, 2022)).unwrap();
    let oracle = brute_cumulative(&records, &papers, (2018, 2022));
    assert_eq!(series.len(), 4);
    for s in &series {
        assert_eq!(s.points, oracle[&(s.dataset_id.clone(), s.kind)], "{} {:?}", s.dataset_id, s.kind);
        assert!(s.is_monotone());
    }
    let brats_cit = series.iter().find(|s| s.dataset_id == "brats" && s.kind == SeriesKind::Citations).unwrap();
    assert_eq!(brats_cit.points.last(), Some(&(2022, 3)));
}

#[test]
fn presence_breakdown_of_ten_records() {
    use PresenceType::*;
    let papers: Vec<PaperRecord> = (0..10).map(|i| paper(&format!("p{i}"), "miccai", 2020)).collect();
    let kinds = [OnlyCited, OnlyCited, OnlyCited, OnlyMentioned];
    let records: Vec<PresenceRecord> =
        (0..10).map(|i| rec(&format!("p{i}"), "brats", kinds.get(i).copied().unwrap_or(CitedAndMentioned))).collect();
    let s = aggregate_presence(&records, &papers).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].total, 10);
    assert_eq!(
        [s[0].proportion(OnlyCited), s[0].proportion(OnlyMentioned), s[0].proportion(CitedAndMentioned)],
        [Some(0.3), Some(0.1), Some(0.6)]
    );
}

fn presence_strategy() -> impl Strategy<Value = PresenceType> {
    prop::sample::select(PresenceType::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// invert → reconstruct is the identity up to whitespace.
    #[test]
    fn abstract_round_trip(
        words in prop::collection::vec("[A-Za-z0-9(),.;:'-]{1,12}", 0..=200),
        gaps in prop::collection::vec(prop::sample::select(vec![" ", "  ", "\n", "\t", " \n "]), 201),
    ) {
        let mut text = String::from(gaps[200]);
        for (w, g) in words.iter().zip(&gaps) {
            text.push_str(w);
            text.push_str(g);
        }
        let idx = support::brute_invert(&text);
        prop_assert_eq!(reconstruct_abstract(&idx).unwrap(), collapse_whitespace(&text));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cumulative_matches_brute_force(
        rows in prop::collection::vec((0usize..12, 0usize..3, presence_strategy()), 0..40),
        years in prop::collection::vec(2015i32..2025, 12),
    ) {
        let papers: Vec<PaperRecord> = years.iter().enumerate().map(|(i, y)| paper(&format!("p{i}"), "v", *y)).collect();
        let mut seen = BTreeSet::new();
        let records: Vec<PresenceRecord> = rows
            .into_iter()
            .filter(|(p, d, _)| seen.insert((*p, *d)))
            .map(|(p, d, t)| rec(&format!("p{p}"), &format!("d{d}"), t))
            .collect();
        let range = (2017, 2022);
        let series = cumulative_series(&records, &papers, range).unwrap();
        let oracle = brute_cumulative(&records, &papers, range);
        prop_assert_eq!(series.len(), oracle.len());
        for s in &series {
            prop_assert!(s.is_monotone());
            prop_assert_eq!(&s.points, &oracle[&(s.dataset_id.clone(), s.kind)]);
        }
        for summary in aggregate_presence(&records, &papers).unwrap() {
            prop_assert_eq!(summary.total, summary.only_cited + summary.only_mentioned + summary.cited_and_mentioned);
        }
    }

    #[test]
    fn containment_is_symmetric_under_swap(
        a in prop::collection::btree_set("W[0-9]{1,3}", 0..30),
        b in prop::collection::btree_set("W[0-9]{1,3}", 0..30),
    ) {
        let ab = compare_citation_indexes(&a, &b);
        let ba = compare_citation_indexes(&b, &a);
        prop_assert_eq!((ab.a_in_b, ab.b_in_a), (ba.b_in_a, ba.a_in_b));
        let both = a.intersection(&b).count();
        prop_assert_eq!(ab.a_in_b.numerator, both);
        prop_assert_eq!(ab.a_in_b.denominator, a.len());
    }
}

fn text(re: &'static str) -> impl Strategy<Value = String> {
    re.prop_map(|s| collapse_whitespace(&s)).prop_filter("nonempty", |s| !s.is_empty())
}

fn record_strategy(i: usize) -> impl Strategy<Value = DatasetRecord> {
    (
        text("[A-Za-z][A-Za-z0-9 &-]{0,15}"),
        prop::collection::vec((text("[A-Za-z][A-Za-z0-9 .-]{0,20}"), any::<bool>()), 0..4),
        prop::collection::vec("https://[a-z]{3,8}\\.(org|com)(/[a-z0-9]{1,6}){0,2}/?", 0..3),
        prop::collection::vec(text("[A-Z][a-z ,:]{0,30}"), 1..3),
        prop::collection::vec("10\\.[0-9]{4}/[a-z0-9.]{1,8}[a-z0-9]", 0..3),
        prop::option::of(prop::sample::select(vec![Task::Segmentation, Task::Classification])),
        "[A-Za-z]{0,8}",
        "[A-Za-z]{0,8}",
        prop::option::of(1990i32..2025),
    )
        .prop_map(move |(name, extra, urls, titles, dois, task, organ, modality, year)| {
            let mut aliases = vec![Alias::with_default_rule(&name)];
            for (t, cs) in extra {
                if !aliases.iter().any(|a| a.text == t) {
                    aliases.push(Alias { text: t, case_sensitive: cs });
                }
            }
            let mut u: Vec<String> = Vec::new();
            for raw in urls {
                let n = normalize_url(&raw);
                if !u.contains(&n) {
                    u.push(n);
                }
            }
            let mut d: Vec<String> = Vec::new();
            for doi in dois {
                if !d.contains(&doi) {
                    d.push(doi);
                }
            }
            DatasetRecord {
                dataset_id: format!("ds{i}"),
                canonical_name: name,
                aliases,
                urls: u,
                paper_titles: titles,
                paper_dois: d,
                task,
                organ,
                modality,
                year_published: year,
            }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Writing a registry and loading it back yields the same records, and
    /// every loaded record passes the invariant validator.
    #[test]
    fn registry_round_trip(records in (1usize..5).prop_flat_map(|n| (0..n).map(record_strategy).collect::<Vec<_>>())) {
        let text = write_dataset_registry(&records);
        let loaded = parse_dataset_registry(&text).unwrap();
        for r in &loaded {
            prop_assert!(r.validate().is_ok());
        }
        prop_assert_eq!(loaded, records);
    }
}
