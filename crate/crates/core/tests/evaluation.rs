use std::cmp::Ordering;

use xmec_core::eval::{
    collection_retrieval, topk_subset, EvalConfig, EvalSubset, EvaluationReport,
};
use xmec_core::model::EntityType;
use xmec_core::simeng::{MeasureKind, Scorer, ScoringConfig};
use xmec_core::synthetic::{generate, SyntheticConfig};
use xmec_core::tamper::{tamper_context, tamper_entities, TamperStrategy, TamperedTestSet};
use xmec_core::{load_manifest, write_manifest, CorpusManifest};

struct Straight {
    va: f64,
    auc: f64,
    ap_clean: Vec<f64>,
    ap_tampered: Vec<f64>,
    n: usize,
}

/// Plain reimplementation: quadratic AUC, explicit sort, AP walk.
fn straight_line(
    c: &CorpusManifest,
    set: &TamperedTestSet,
    cfg: ScoringConfig,
    top: Option<f64>,
) -> Straight {
    let scorer = Scorer::new(c, cfg);
    let kind = set.target();
    let mut rows: Vec<(String, f64, f64)> = Vec::new();
    for id in set.substitutions.keys() {
        let clean = scorer.measure_value(&c.documents[id], kind);
        let tampered = scorer.measure_value(&set.tampered_document(c, id).unwrap(), kind);
        if let (Some(a), Some(b)) = (clean, tampered) {
            rows.push((id.clone(), a, b));
        }
    }
    if let Some(f) = top {
        let mut by_clean = rows.clone();
        by_clean.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let k = (f * by_clean.len() as f64).ceil() as usize;
        let keep: Vec<String> = by_clean[..k].iter().map(|r| r.0.clone()).collect();
        rows.retain(|r| keep.contains(&r.0));
    }
    let n = rows.len();
    let va = rows.iter().filter(|r| r.1 > r.2).count() as f64 / n as f64;
    let mut credit = 0.0;
    for a in &rows {
        for b in &rows {
            credit += match a.1.partial_cmp(&b.2).unwrap() {
                Ordering::Greater => 1.0,
                Ordering::Equal => 0.5,
                Ordering::Less => 0.0,
            };
        }
    }
    let auc = credit / (n * n) as f64;

    // (doc, is_tampered, score)
    let mut all: Vec<(String, bool, f64)> = Vec::new();
    for r in &rows {
        all.push((r.0.clone(), false, r.1));
        all.push((r.0.clone(), true, r.2));
    }
    let ap = |descending: bool, want_tampered: bool| -> Vec<f64> {
        let mut ranked = all.clone();
        ranked.sort_by(|a, b| {
            let s = if descending {
                b.2.partial_cmp(&a.2).unwrap()
            } else {
                a.2.partial_cmp(&b.2).unwrap()
            };
            s.then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1))
        });
        [0.25, 0.5, 1.0]
            .iter()
            .map(|r| {
                let need = (r * n as f64).ceil() as usize;
                let mut hits = 0;
                let mut sum = 0.0;
                for (i, e) in ranked.iter().enumerate() {
                    if e.1 == want_tampered {
                        hits += 1;
                        sum += hits as f64 / (i + 1) as f64;
                        if hits == need {
                            break;
                        }
                    }
                }
                sum / need as f64
            })
            .collect()
    };
    Straight {
        va,
        auc,
        ap_clean: ap(true, false),
        ap_tampered: ap(false, true),
        n,
    }
}

fn assert_matches(r: &EvaluationReport, s: &Straight) {
    assert_eq!(r.n_documents, s.n);
    assert!((r.va - s.va).abs() <= 1e-9);
    assert!((r.auc - s.auc).abs() <= 1e-9);
    for (i, level) in [0.25, 0.5, 1.0].into_iter().enumerate() {
        assert!((r.ap_clean_at(level).unwrap() - s.ap_clean[i]).abs() <= 1e-9);
        assert!((r.ap_tampered_at(level).unwrap() - s.ap_tampered[i]).abs() <= 1e-9);
    }
}

fn fixture() -> CorpusManifest {
    generate(&SyntheticConfig {
        n_documents: 50,
        ..SyntheticConfig::overlapping(50)
    })
}

#[test]
fn reports_match_straight_line_reimplementation() {
    let c = fixture();
    let sets = [
        tamper_entities(&c, EntityType::Person, TamperStrategy::PersonSameGender, 1).unwrap(),
        tamper_entities(&c, EntityType::Location, TamperStrategy::LocationRandom, 2).unwrap(),
        tamper_entities(&c, EntityType::Event, TamperStrategy::EventSameParent, 3).unwrap(),
        tamper_context(&c, TamperStrategy::ContextRandomImage, 4).unwrap(),
    ];
    for set in &sets {
        for (subset, top) in [
            (EvalSubset::All, None),
            (EvalSubset::Top(0.25), Some(0.25)),
            (EvalSubset::Top(0.5), Some(0.5)),
        ] {
            let cfg = EvalConfig {
                subset,
                ..Default::default()
            };
            let r = collection_retrieval(&c, set, &cfg).unwrap();
            assert_matches(&r, &straight_line(&c, set, cfg.scoring, top));
        }
    }
}

#[test]
fn excluded_documents_are_counted() {
    let c = fixture();
    let set = tamper_entities(&c, EntityType::Person, TamperStrategy::PersonRandom, 9).unwrap();
    let r = collection_retrieval(&c, &set, &EvalConfig::default()).unwrap();
    let no_faces = set
        .substitutions
        .keys()
        .filter(|id| c.documents[*id].image.face_embeddings.is_empty())
        .count();
    assert_eq!(r.n_excluded, no_faces);
    assert_eq!(r.n_documents + r.n_excluded, set.substitutions.len());
}

#[test]
fn topk_subset_uses_clean_scores() {
    let c = fixture();
    let scored = Scorer::new(&c, ScoringConfig::default()).score_all();
    let top = topk_subset(&scored, MeasureKind::Event, 0.5).unwrap();
    assert_eq!(top.len(), 25);
    let worst_kept = top
        .iter()
        .map(|id| scored.iter().find(|s| &s.doc_id == id).unwrap().value(MeasureKind::Event).unwrap())
        .fold(f64::INFINITY, f64::min);
    for s in &scored {
        if !top.contains(&s.doc_id) {
            assert!(s.value(MeasureKind::Event).unwrap() <= worst_kept);
        }
    }
    assert!(topk_subset(&scored, MeasureKind::Event, 1.0).is_err());
}

#[test]
fn evaluation_survives_manifest_round_trip() {
    let c = fixture();
    let dir = tempfile::tempdir().unwrap();
    write_manifest(&c, dir.path()).unwrap();
    let loaded = load_manifest(dir.path()).unwrap();
    assert_eq!(loaded, c);
    let set = tamper_entities(&c, EntityType::Event, TamperStrategy::EventRandom, 5).unwrap();
    let cfg = EvalConfig::default();
    let a = collection_retrieval(&c, &set, &cfg).unwrap();
    let b = collection_retrieval(&loaded, &set, &cfg).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn test_set_from_another_corpus_is_rejected() {
    let c = fixture();
    let other = generate(&SyntheticConfig::separable(1));
    let set = tamper_entities(&other, EntityType::Event, TamperStrategy::EventRandom, 5).unwrap();
    assert!(collection_retrieval(&c, &set, &EvalConfig::default()).is_err());
}
