use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use dsprobe_annotate::{compute_agreement, Annotation, DetectorOutput};

fn ann(pdf: &str, label: &str, who: &str) -> Annotation {
    Annotation {
        project_id: "p".into(),
        annotator_id: who.into(),
        pdf_id: pdf.into(),
        label_1: label.into(),
        label_2: "Body".into(),
        created_at: String::new(),
    }
}

fn pairs() -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0usize..6, 0usize..4), 0..20)
}

fn build(
    human: &[(usize, usize)],
    auto: &[(usize, usize)],
    name: &dyn Fn(usize) -> String,
) -> (Vec<String>, Vec<Annotation>, DetectorOutput) {
    let pdfs: Vec<String> = (0..6).map(|p| format!("pdf{p}")).collect();
    let annotations = human
        .iter()
        .enumerate()
        .map(|(i, (p, d))| ann(&pdfs[*p], &name(*d), if i % 2 == 0 { "a" } else { "b" }))
        .collect();
    let detected = DetectorOutput {
        papers: pdfs.iter().cloned().collect(),
        pairs: auto.iter().map(|(p, d)| (pdfs[*p].clone(), name(*d))).collect(),
    };
    (pdfs, annotations, detected)
}

proptest! {
    #[test]
    fn counts_match_set_arithmetic(human in pairs(), auto in pairs()) {
        let (pdfs, anns, det) = build(&human, &auto, &|d| format!("ds{d}"));
        let got = compute_agreement(&pdfs, &anns, &det, &[]).unwrap();
        let h: BTreeSet<_> = human.iter().collect();
        let a: BTreeSet<_> = auto.iter().collect();
        let tp = h.intersection(&a).count();
        prop_assert_eq!((got.overall.tp, got.overall.fp, got.overall.fn_), (tp, a.len() - tp, h.len() - tp));
        prop_assert_eq!(got.disagreements.len(), a.len() + h.len() - 2 * tp);
    }

    #[test]
    fn insertion_order_does_not_matter(human in pairs(), auto in pairs(), seed in any::<u64>()) {
        let (pdfs, anns, det) = build(&human, &auto, &|d| format!("ds{d}"));
        let mut shuffled = anns.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed as usize ^ i.wrapping_mul(2654435761)) % (i + 1));
        }
        let a = compute_agreement(&pdfs, &anns, &det, &[]).unwrap();
        let b = compute_agreement(&pdfs, &shuffled, &det, &[]).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn relabelling_datasets_permutes_per_dataset_counts(human in pairs(), auto in pairs(), rot in 1usize..4) {
        let (pdfs, anns, det) = build(&human, &auto, &|d| format!("ds{d}"));
        let (_, anns2, det2) = build(&human, &auto, &|d| format!("ds{}", (d + rot) % 4));
        let a = compute_agreement(&pdfs, &anns, &det, &[]).unwrap();
        let b = compute_agreement(&pdfs, &anns2, &det2, &[]).unwrap();
        prop_assert_eq!(&a.overall, &b.overall);
        let renamed: BTreeMap<String, _> = a
            .per_dataset
            .iter()
            .map(|(k, v)| (format!("ds{}", (k[2..].parse::<usize>().unwrap() + rot) % 4), v.clone()))
            .collect();
        prop_assert_eq!(renamed, b.per_dataset);
    }
}
