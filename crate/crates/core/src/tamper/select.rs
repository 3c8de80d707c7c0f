//! Candidate pools and seeded replacement draws.

use std::collections::BTreeSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::strategy::TamperStrategy;
use super::TamperError;
use crate::model::{CorpusManifest, EntityRecord};

/// Name recorded in test sets for the generator below.
pub const RNG_ALGORITHM: &str = "chacha8-seed_from_u64-stream_fnv1a64_doc_id";

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Generator for one document: ChaCha8 keyed by the run seed, with the stream
/// selected by a hash of the doc_id. Documents draw independently, so the
/// result does not depend on processing order.
pub fn document_rng(seed: u64, doc_id: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a64(doc_id.as_bytes()));
    rng
}

/// Uniform index in `0..n` by rejection sampling on 64-bit outputs.
pub fn uniform_index(rng: &mut impl RngCore, n: usize) -> usize {
    assert!(n > 0, "uniform_index over an empty range");
    let n = n as u64;
    let threshold = n.wrapping_neg() % n;
    loop {
        let x = rng.next_u64();
        if x >= threshold {
            return (x % n) as usize;
        }
    }
}

fn check_type(original: &EntityRecord, strategy: &TamperStrategy) -> Result<(), TamperError> {
    match strategy.entity_type() {
        Some(t) if t == original.entity_type() => Ok(()),
        _ => Err(TamperError::StrategyMismatch {
            strategy: strategy.label(),
            target: original.entity_type().to_string(),
        }),
    }
}

/// Every other entity of the original's type that meets all of the strategy's
/// criteria, in entity_id order.
pub fn candidate_pool<'a>(
    original: &EntityRecord,
    corpus: &'a CorpusManifest,
    strategy: &TamperStrategy,
) -> Result<Vec<&'a str>, TamperError> {
    check_type(original, strategy)?;
    let constraints = strategy.constraints();
    Ok(corpus
        .entities_of_type(original.entity_type())
        .filter(|c| c.entity_id != original.entity_id)
        .filter(|c| constraints.iter().all(|k| k.holds(original, c)))
        .map(|c| c.entity_id.as_str())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub entity_id: String,
    pub used_fallback: bool,
    /// Criteria the replacement satisfies, out of `required`.
    pub satisfied: usize,
    pub required: usize,
}

pub fn select_replacement(
    original: &EntityRecord,
    corpus: &CorpusManifest,
    strategy: &TamperStrategy,
    rng: &mut impl RngCore,
) -> Result<Selection, TamperError> {
    select_replacement_excluding(original, corpus, strategy, &BTreeSet::new(), rng)
}

/// Draws uniformly from the candidate pool. When the pool is empty, falls back
/// to the candidates satisfying the most individual criteria. Entities in
/// `exclude` and the original itself are never drawn.
pub fn select_replacement_excluding(
    original: &EntityRecord,
    corpus: &CorpusManifest,
    strategy: &TamperStrategy,
    exclude: &BTreeSet<&str>,
    rng: &mut impl RngCore,
) -> Result<Selection, TamperError> {
    check_type(original, strategy)?;
    let constraints = strategy.constraints();
    let required = constraints.len();
    let scored: Vec<(&str, usize)> = corpus
        .entities_of_type(original.entity_type())
        .filter(|c| c.entity_id != original.entity_id && !exclude.contains(c.entity_id.as_str()))
        .map(|c| {
            let n = constraints.iter().filter(|k| k.holds(original, c)).count();
            (c.entity_id.as_str(), n)
        })
        .collect();
    let best = scored
        .iter()
        .map(|(_, n)| *n)
        .max()
        .ok_or_else(|| TamperError::NoCandidates {
            entity_id: original.entity_id.clone(),
        })?;
    let top: Vec<&str> = scored
        .iter()
        .filter(|(_, n)| *n == best)
        .map(|(id, _)| *id)
        .collect();
    let pick = top[uniform_index(rng, top.len())];
    Ok(Selection {
        entity_id: pick.to_string(),
        used_fallback: best < required,
        satisfied: best,
        required,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        EntityAttrs, EventAttrs, GeoPoint, LocationAttrs, PersonAttrs,
        ReferenceImageSet, SceneVocabulary,
    };
    use std::collections::BTreeMap;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn person(id: &str, gender: &str, cit: &[&str]) -> EntityRecord {
        EntityRecord {
            entity_id: id.into(),
            label: id.into(),
            attrs: EntityAttrs::Person(PersonAttrs {
                gender: gender.into(),
                citizenship: set(cit),
            }),
            references: ReferenceImageSet::empty(),
        }
    }

    fn location(id: &str, lat: f64, lon: f64, parents: &[&str]) -> EntityRecord {
        EntityRecord {
            entity_id: id.into(),
            label: id.into(),
            attrs: EntityAttrs::Location(LocationAttrs {
                coordinates: GeoPoint::new(lat, lon).unwrap(),
                parent_classes: set(parents),
            }),
            references: ReferenceImageSet::empty(),
        }
    }

    fn event(id: &str, parents: &[&str]) -> EntityRecord {
        EntityRecord {
            entity_id: id.into(),
            label: id.into(),
            attrs: EntityAttrs::Event(EventAttrs {
                parent_classes: set(parents),
            }),
            references: ReferenceImageSet::empty(),
        }
    }

    fn corpus(es: Vec<EntityRecord>) -> CorpusManifest {
        CorpusManifest {
            corpus_id: "t".into(),
            entities: es.into_iter().map(|e| (e.entity_id.clone(), e)).collect(),
            documents: BTreeMap::new(),
            scene_vocabulary: SceneVocabulary::default(),
            embedding_dims: BTreeMap::new(),
        }
    }

    #[test]
    fn same_gender_pool() {
        let c = corpus(vec![
            person("F1", "female", &["DE"]),
            person("F2", "female", &["US"]),
            person("F3", "female", &["FR"]),
            person("M1", "male", &["DE"]),
            person("M2", "male", &["US"]),
        ]);
        let pool = candidate_pool(&c.entities["F1"], &c, &TamperStrategy::PersonSameGender).unwrap();
        assert_eq!(pool, vec!["F2", "F3"]);
        let pool =
            candidate_pool(&c.entities["F1"], &c, &TamperStrategy::PersonSameCitizenship).unwrap();
        assert_eq!(pool, vec!["M1"]);
        let pool = candidate_pool(&c.entities["F1"], &c, &TamperStrategy::PersonRandom).unwrap();
        assert_eq!(pool.len(), 4);
    }

    /// Point at `km` kilometers due north of (lat, lon).
    fn north_of(lat: f64, lon: f64, km: f64) -> (f64, f64) {
        (lat + (km / 6371.0).to_degrees(), lon)
    }

    #[test]
    fn distance_band_pool() {
        let (la, lo) = (10.0, 20.0);
        let near = north_of(la, lo, 10.0);
        let mid = north_of(la, lo, 100.0);
        let far = north_of(la, lo, 300.0);
        let c = corpus(vec![
            location("L0", la, lo, &["country"]),
            location("Lnear", near.0, near.1, &["country"]),
            location("Lmid", mid.0, mid.1, &["country"]),
            location("Lfar", far.0, far.1, &["country"]),
        ]);
        let band = TamperStrategy::LocationGcdBand {
            dmin_km: 25.0,
            dmax_km: 200.0,
            require_shared_parent: true,
        };
        assert_eq!(candidate_pool(&c.entities["L0"], &c, &band).unwrap(), vec!["Lmid"]);
    }

    #[test]
    fn empty_esp_pool_and_type_mismatch() {
        let c = corpus(vec![event("E1", &["final"]), event("E2", &["disaster"])]);
        assert!(candidate_pool(&c.entities["E1"], &c, &TamperStrategy::EventSameParent)
            .unwrap()
            .is_empty());
        assert!(matches!(
            candidate_pool(&c.entities["E1"], &c, &TamperStrategy::PersonRandom),
            Err(TamperError::StrategyMismatch { .. })
        ));
    }

    #[test]
    fn single_candidate_pool() {
        let c = corpus(vec![event("E1", &["final"]), event("E2", &["final"]), event("E3", &[])]);
        let mut rng = document_rng(1, "d");
        let s = select_replacement(&c.entities["E1"], &c, &TamperStrategy::EventSameParent, &mut rng)
            .unwrap();
        assert_eq!(s.entity_id, "E2");
        assert!(!s.used_fallback);
    }

    #[test]
    fn pscg_falls_back_to_best_partial_match() {
        let c = corpus(vec![
            person("P0", "female", &["DE"]),
            person("P1", "female", &["US"]),
            person("P2", "male", &["FR"]),
        ]);
        for seed in 0..20 {
            let mut rng = document_rng(seed, "d");
            let s = select_replacement(&c.entities["P0"], &c, &TamperStrategy::PersonSameBoth, &mut rng)
                .unwrap();
            assert_eq!(s.entity_id, "P1");
            assert!(s.used_fallback);
            assert_eq!((s.satisfied, s.required), (1, 2));
        }
    }

    #[test]
    fn no_candidates_when_alone() {
        let c = corpus(vec![person("P0", "female", &["DE"])]);
        let mut rng = document_rng(1, "d");
        assert!(matches!(
            select_replacement(&c.entities["P0"], &c, &TamperStrategy::PersonRandom, &mut rng),
            Err(TamperError::NoCandidates { .. })
        ));
    }

    #[test]
    fn draws_are_deterministic_and_cover_pool() {
        let es: Vec<_> = (0..6).map(|i| person(&format!("P{i}"), "x", &[])).collect();
        let c = corpus(es);
        let draw = |seed| {
            let mut rng = document_rng(seed, "doc");
            select_replacement(&c.entities["P0"], &c, &TamperStrategy::PersonRandom, &mut rng)
                .unwrap()
                .entity_id
        };
        assert_eq!(draw(42), draw(42));
        let seen: BTreeSet<String> = (0..200).map(draw).collect();
        assert_eq!(seen.len(), 5);
        assert!(!seen.contains("P0"));
    }

    #[test]
    fn uniform_index_is_in_range() {
        let mut rng = document_rng(9, "x");
        let mut counts = [0usize; 3];
        for _ in 0..3000 {
            counts[uniform_index(&mut rng, 3)] += 1;
        }
        assert!(counts.iter().all(|&c| c > 850 && c < 1150), "{counts:?}");
    }

    #[test]
    fn stream_depends_on_doc_id() {
        let a = document_rng(5, "a").next_u64();
        let b = document_rng(5, "b").next_u64();
        assert_ne!(a, b);
        assert_eq!(a, document_rng(5, "a").next_u64());
    }
}
