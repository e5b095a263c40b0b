mod support;

use std::collections::{BTreeSet, HashSet};
use std::path::PathBuf;

use proptest::prelude::*;

use dsprobe::catalog::{load_dataset_registry, Alias};
use dsprobe::detector::{Detector, Location, MatcherConfig, MentionSource};
use dsprobe::fulltext::parse_tei;
use dsprobe::harvester::DatasetWorks;
use dsprobe::PaperRecord;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

#[test]
fn planted_corpus_is_recovered_exactly() {
    let run = support::run_detection_corpus(&fixtures().join("detection"));
    assert!(run.docs >= 20);
    assert!(run.false_positives.is_empty(), "spurious: {:#?}", run.false_positives);
    assert!(run.false_negatives.is_empty(), "missed: {:#?}", run.false_negatives);
    assert_eq!(run.score.tp, run.planted);
}

#[test]
fn corpus_covers_every_location_class() {
    let run = support::run_detection_corpus(&fixtures().join("detection"));
    let classes: BTreeSet<&str> = run.detections.values().flatten().map(|d| d.location.class()).collect();
    assert_eq!(
        classes,
        ["abstract", "body_section", "figure_caption", "footnote", "reference_list", "table_caption"].into()
    );
}

#[test]
fn nothing_fires_in_excluded_sections() {
    let run = support::run_detection_corpus(&fixtures().join("detection"));
    let config = MatcherConfig::default();
    for d in run.detections.values().flatten() {
        if let Location::BodySection { heading } = &d.location {
            let e = dsprobe::detector::classify_section(heading, &config);
            assert_ne!(e, dsprobe::fulltext::Eligibility::Excluded, "{d:?}");
        }
    }
}

#[test]
fn detection_is_deterministic() {
    let dir = fixtures().join("detection");
    let a = support::run_detection_corpus(&dir).detections;
    let b = support::run_detection_corpus(&dir).detections;
    assert_eq!(a, b);
}

/// Aliases planted only in excluded sections and the bibliography.
#[test]
fn aliases_only_in_excluded_places_yield_no_mentions() {
    let registry = load_dataset_registry(&fixtures().join("detection/registry.csv")).unwrap();
    let det = Detector::new(&registry, MatcherConfig::default()).unwrap();
    let xml = r#"<TEI xmlns="http://www.tei-c.org/ns/1.0"><text><body>
        <div><head>2 Related Work</head><p>ACDC and BRATS were used by many, see https://drive.grand-challenge.org.</p></div>
        <div><head>6 Discussion</head><p>CAMELYON17 and ChestX-ray8 remain popular.</p></div>
        </body><back><div type="references"><listBibl>
        <biblStruct><note type="raw_reference">Bernard, O.: ACDC results. IEEE TMI (2018)</note></biblStruct>
        </listBibl></div></back></text></TEI>"#;
    let doc = parse_tei("x", xml).unwrap();
    assert!(det.detect_mentions("x", MentionSource::Document(&doc)).is_empty());
}

/// A registry where both dataset papers carry an OpenAlex ID and a title
/// that the bibliography cites: both citation paths agree on the pairs.
#[test]
fn id_and_title_paths_agree_when_planted_consistently() {
    let registry = load_dataset_registry(&fixtures().join("detection/registry.csv")).unwrap();
    let det = Detector::new(&registry, MatcherConfig::default()).unwrap();
    let refs: Vec<String> = registry
        .iter()
        .take(3)
        .map(|d| format!("<biblStruct><analytic><title>{t}</title></analytic><note type=\"raw_reference\">A. Author: {t}. Journal (2019)</note></biblStruct>", t = d.paper_titles[0]))
        .collect();
    let xml = format!(
        r#"<TEI xmlns="http://www.tei-c.org/ns/1.0"><text><body><div><p>x</p></div></body><back><listBibl>{}</listBibl></back></text></TEI>"#,
        refs.join("")
    );
    let doc = parse_tei("p", &xml.replace('&', "&amp;")).unwrap();
    let mut works = DatasetWorks::default();
    for (i, d) in registry.iter().enumerate() {
        works.resolved.insert(d.dataset_id.clone(), vec![format!("W{}", 100 + i)]);
    }
    let mut paper = PaperRecord::new("p".into(), "v".into(), 2020, "t".into(), None);
    paper.referenced_work_ids = Some(vec!["W100".into(), "W101".into(), "W102".into(), "W999".into()]);

    let by_id: BTreeSet<_> = det.detect_citations_by_id(&paper, &works).into_iter().map(|d| d.dataset_id).collect();
    let by_title: BTreeSet<_> = det.detect_citations_by_title(&doc).into_iter().map(|d| d.dataset_id).collect();
    assert_eq!(by_id.len(), 3);
    assert_eq!(by_id, by_title);
}

#[test]
fn two_papers_of_one_dataset_give_one_citation() {
    let registry = load_dataset_registry(&fixtures().join("detection/registry.csv")).unwrap();
    let det = Detector::new(&registry, MatcherConfig::default()).unwrap();
    let mut works = DatasetWorks::default();
    works.resolved.insert("brats".into(), vec!["W1".into(), "W2".into()]);
    let mut paper = PaperRecord::new("p".into(), "v".into(), 2020, "t".into(), None);
    paper.referenced_work_ids = Some(vec!["W2".into(), "W1".into()]);
    let found = det.detect_citations_by_id(&paper, &works);
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].matched_text, "W2");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// Adding an alias to any dataset never removes an existing detection.
    #[test]
    fn adding_an_alias_is_monotone(ds in 0usize..5, alias in "[A-Za-z][A-Za-z0-9 -]{2,12}", doc in 0usize..24) {
        let dir = fixtures().join("detection");
        let registry = load_dataset_registry(&dir.join("registry.csv")).unwrap();
        let path = dir.join(format!("docs/doc{doc:02}.tei.xml"));
        let parsed = parse_tei("d", &std::fs::read_to_string(path).unwrap()).unwrap();

        let before: HashSet<_> = Detector::new(&registry, MatcherConfig::default()).unwrap()
            .detect_mentions("d", MentionSource::Document(&parsed))
            .into_iter()
            .collect();
        let mut grown = registry.clone();
        grown[ds].aliases.push(Alias::with_default_rule(alias.trim()));
        let after: HashSet<_> = Detector::new(&grown, MatcherConfig::default()).unwrap()
            .detect_mentions("d", MentionSource::Document(&parsed))
            .into_iter()
            .collect();
        // a new alias can only add hits or swallow a nested hit of the same dataset
        for d in &before {
            let kept = after.contains(d) || after.iter().any(|a| {
                a.dataset_id == d.dataset_id && a.location == d.location && a.element == d.element
                    && a.span.0 <= d.span.0 && d.span.1 <= a.span.1
            });
            prop_assert!(kept, "lost {:?}", d);
        }
    }
}
