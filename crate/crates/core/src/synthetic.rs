//! Seeded synthetic corpora with controllable cross-modal agreement.
//!
//! Every entity has a prototype direction per embedding space. Reference
//! images and document image features are noisy copies of the prototypes of
//! the entities a document mentions, so clean documents agree with their
//! images up to `image_noise` while substituted entities do not. Prototypes of
//! entities sharing a parent class are pulled towards a common center by
//! `parent_affinity`, which makes same-parent substitutions harder to detect.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::model::{
    CorpusManifest, DocumentRecord, EmbeddingRole, EmbeddingVector, EntityAttrs, EntityRecord,
    EventAttrs, GeoPoint, ImageFeatures, LocationAttrs, NounEmbedding, PersonAttrs,
    ReferenceImage, ReferenceImageSet, SceneClass, SceneKind, SceneProbabilities,
    SceneVocabulary, DEFAULT_PER_SOURCE_CAP,
};

const GENDERS: [&str; 2] = ["female", "male"];
const COUNTRIES: [&str; 8] = ["BR", "DE", "ES", "FR", "GB", "IT", "JP", "US"];
const SOURCES: [&str; 3] = ["news-archive", "web-search", "wikimedia"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub corpus_id: String,
    pub seed: u64,
    pub n_documents: usize,
    pub dim: usize,
    pub n_persons: usize,
    pub n_locations: usize,
    pub n_events: usize,
    pub n_parent_classes: usize,
    pub n_scene_classes: usize,
    pub references_per_entity: usize,
    /// Unrelated faces mixed into each person's gallery.
    pub outlier_faces: usize,
    /// Norm of the Gaussian perturbation applied to reference images.
    pub reference_noise: f64,
    /// Norm of the Gaussian perturbation applied to document image features.
    pub image_noise: f64,
    /// Weight of the parent-class center in an entity prototype, in [0, 1).
    pub parent_affinity: f64,
    /// Probability mass the image puts on its own scene class.
    pub scene_peak: f64,
    /// Probability that a document's image shows no faces.
    pub face_dropout: f64,
}

impl SyntheticConfig {
    /// Tight image features and unrelated prototypes: clean and tampered
    /// documents separate almost perfectly.
    pub fn separable(seed: u64) -> Self {
        Self {
            corpus_id: format!("synthetic-separable-{seed}"),
            seed,
            n_documents: 200,
            dim: 32,
            n_persons: 60,
            n_locations: 60,
            n_events: 40,
            n_parent_classes: 5,
            n_scene_classes: 12,
            references_per_entity: 6,
            outlier_faces: 2,
            reference_noise: 0.25,
            image_noise: 0.2,
            parent_affinity: 0.0,
            scene_peak: 0.7,
            face_dropout: 0.0,
        }
    }

    /// Noisy image features and parent-correlated prototypes.
    pub fn overlapping(seed: u64) -> Self {
        Self {
            corpus_id: format!("synthetic-overlapping-{seed}"),
            image_noise: 2.5,
            parent_affinity: 0.8,
            scene_peak: 0.35,
            face_dropout: 0.05,
            ..Self::separable(seed)
        }
    }

    /// 300 entities with diverse attributes for exercising tampering.
    pub fn tampering_fixture(seed: u64) -> Self {
        Self {
            corpus_id: format!("synthetic-tampering-{seed}"),
            n_documents: 150,
            dim: 16,
            n_persons: 120,
            n_locations: 100,
            n_events: 80,
            n_parent_classes: 6,
            references_per_entity: 3,
            outlier_faces: 1,
            ..Self::separable(seed)
        }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    dim: usize,
}

impl Gen {
    fn gaussian(&mut self) -> Vec<f64> {
        (0..self.dim).map(|_| self.rng.sample(StandardNormal)).collect()
    }

    fn unit(&mut self) -> Vec<f64> {
        normalize(self.gaussian())
    }

    /// `v` plus isotropic noise of expected norm `sigma`, renormalized.
    fn perturb(&mut self, v: &[f64], sigma: f64) -> Vec<f64> {
        let scale = sigma / (self.dim as f64).sqrt();
        let g = self.gaussian();
        normalize(v.iter().zip(g).map(|(x, n)| x + scale * n).collect())
    }

    /// Unit vector at weight `affinity` towards `center`.
    fn near_center(&mut self, center: &[f64], affinity: f64) -> Vec<f64> {
        let u = self.unit();
        let rest = (1.0 - affinity * affinity).sqrt();
        normalize(center.iter().zip(u).map(|(c, x)| affinity * c + rest * x).collect())
    }
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Rounds to binary32 so the vector survives blob storage unchanged.
fn embedding(v: &[f64]) -> EmbeddingVector {
    let rounded: Vec<f32> = v.iter().map(|&x| x as f32).collect();
    EmbeddingVector::from_f32(&rounded).expect("generated vectors are finite and non-zero")
}

fn gallery(g: &mut Gen, prototype: &[f64], cfg: &SyntheticConfig, outliers: usize) -> ReferenceImageSet {
    let mut items: Vec<ReferenceImage> = (0..cfg.references_per_entity)
        .map(|i| ReferenceImage {
            source: SOURCES[i % SOURCES.len()].to_string(),
            embedding: embedding(&g.perturb(prototype, cfg.reference_noise)),
        })
        .collect();
    for i in 0..outliers {
        items.push(ReferenceImage {
            source: SOURCES[(cfg.references_per_entity + i) % SOURCES.len()].to_string(),
            embedding: embedding(&g.unit()),
        });
    }
    items.shuffle(&mut g.rng);
    ReferenceImageSet::new(items, DEFAULT_PER_SOURCE_CAP).expect("gallery within source cap")
}

/// Moves `(lat, lon)` by up to `spread` degrees on each axis.
fn jitter_point(g: &mut Gen, lat: f64, lon: f64, spread: f64) -> GeoPoint {
    let lat = (lat + g.rng.gen_range(-spread..=spread)).clamp(-85.0, 85.0);
    let mut lon = lon + g.rng.gen_range(-spread..=spread) / lat.to_radians().cos().max(0.2);
    while lon > 180.0 {
        lon -= 360.0;
    }
    while lon <= -180.0 {
        lon += 360.0;
    }
    GeoPoint::new(lat, lon).expect("coordinates normalized")
}

fn pick_distinct(g: &mut Gen, n: usize, k: usize) -> Vec<usize> {
    sample(&mut g.rng, n, k.min(n)).into_vec()
}

/// Builds a corpus from `cfg`. The same config always yields the same corpus.
pub fn generate(cfg: &SyntheticConfig) -> CorpusManifest {
    assert!(cfg.dim > 0 && cfg.n_documents > 0, "empty synthetic corpus");
    assert!(cfg.n_persons >= 2 && cfg.n_locations >= 2 && cfg.n_events >= 2);
    assert!(cfg.n_parent_classes > 0 && cfg.n_scene_classes >= 2);
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed),
        dim: cfg.dim,
    };

    let mut entities = BTreeMap::new();
    let mut protos: BTreeMap<String, Vec<f64>> = BTreeMap::new();

    for i in 0..cfg.n_persons {
        let id = format!("per-{i:04}");
        let proto = g.unit();
        let n_cit = g.rng.gen_range(1..=2);
        let citizenship: BTreeSet<String> = pick_distinct(&mut g, COUNTRIES.len(), n_cit)
            .into_iter()
            .map(|c| COUNTRIES[c].to_string())
            .collect();
        let attrs = EntityAttrs::Person(PersonAttrs {
            gender: GENDERS[g.rng.gen_range(0..GENDERS.len())].to_string(),
            citizenship,
        });
        let references = gallery(&mut g, &proto, cfg, cfg.outlier_faces);
        entities.insert(
            id.clone(),
            EntityRecord {
                entity_id: id.clone(),
                label: format!("Person {i}"),
                attrs,
                references,
            },
        );
        protos.insert(id, proto);
    }

    let centers: Vec<Vec<f64>> = (0..cfg.n_parent_classes).map(|_| g.unit()).collect();
    let geo_centers: Vec<(f64, f64)> = (0..cfg.n_parent_classes)
        .map(|_| (g.rng.gen_range(-60.0..60.0), g.rng.gen_range(-179.0..180.0)))
        .collect();
    for i in 0..cfg.n_locations {
        let id = format!("loc-{i:04}");
        let k = i % cfg.n_parent_classes;
        let proto = g.near_center(&centers[k], cfg.parent_affinity);
        let (clat, clon) = geo_centers[k];
        let attrs = EntityAttrs::Location(LocationAttrs {
            coordinates: jitter_point(&mut g, clat, clon, 12.0),
            parent_classes: BTreeSet::from([format!("region-{k}")]),
        });
        let references = gallery(&mut g, &proto, cfg, 0);
        entities.insert(
            id.clone(),
            EntityRecord {
                entity_id: id.clone(),
                label: format!("Location {i}"),
                attrs,
                references,
            },
        );
        protos.insert(id, proto);
    }

    let event_centers: Vec<Vec<f64>> = (0..cfg.n_parent_classes).map(|_| g.unit()).collect();
    for i in 0..cfg.n_events {
        let id = format!("evt-{i:04}");
        let k = i % cfg.n_parent_classes;
        let proto = g.near_center(&event_centers[k], cfg.parent_affinity);
        let attrs = EntityAttrs::Event(EventAttrs {
            parent_classes: BTreeSet::from([format!("event-class-{k}")]),
        });
        let references = gallery(&mut g, &proto, cfg, 0);
        entities.insert(
            id.clone(),
            EntityRecord {
                entity_id: id.clone(),
                label: format!("Event {i}"),
                attrs,
                references,
            },
        );
        protos.insert(id, proto);
    }

    let labels: Vec<Vec<f64>> = (0..cfg.n_scene_classes).map(|_| g.unit()).collect();
    let looks: Vec<Vec<f64>> = (0..cfg.n_scene_classes).map(|_| g.unit()).collect();
    let vocabulary = SceneVocabulary::new(
        labels
            .iter()
            .enumerate()
            .map(|(s, v)| SceneClass {
                class_id: format!("scene-{s:03}"),
                label: format!("scene {s}"),
                embedding: embedding(v),
            })
            .collect(),
    )
    .expect("unique scene ids");

    let person_ids: Vec<String> = (0..cfg.n_persons).map(|i| format!("per-{i:04}")).collect();
    let location_ids: Vec<String> = (0..cfg.n_locations).map(|i| format!("loc-{i:04}")).collect();
    let event_ids: Vec<String> = (0..cfg.n_events).map(|i| format!("evt-{i:04}")).collect();

    let mut documents = BTreeMap::new();
    for d in 0..cfg.n_documents {
        let doc_id = format!("doc-{d:05}");
        let n_p = g.rng.gen_range(1..=2);
        let persons: Vec<String> = pick_distinct(&mut g, cfg.n_persons, n_p)
            .into_iter()
            .map(|i| person_ids[i].clone())
            .collect();
        let n_l = g.rng.gen_range(1..=2);
        let locations: Vec<String> = pick_distinct(&mut g, cfg.n_locations, n_l)
            .into_iter()
            .map(|i| location_ids[i].clone())
            .collect();
        let event = event_ids[g.rng.gen_range(0..cfg.n_events)].clone();
        let scene = g.rng.gen_range(0..cfg.n_scene_classes);

        let faces = if g.rng.gen_bool(cfg.face_dropout) {
            Vec::new()
        } else {
            persons
                .iter()
                .map(|p| embedding(&g.perturb(&protos[p], cfg.image_noise)))
                .collect()
        };
        let geo = g.perturb(&protos[&locations[0]], cfg.image_noise);
        let scene_vec = g.perturb(&protos[&event], cfg.image_noise);
        let rest = (1.0 - cfg.scene_peak) / (cfg.n_scene_classes - 1) as f64;
        let probs: Vec<f64> = (0..cfg.n_scene_classes)
            .map(|s| if s == scene { cfg.scene_peak } else { rest })
            .collect();
        let look = g.perturb(&looks[scene], 0.5);

        let other = (scene + g.rng.gen_range(1..cfg.n_scene_classes)) % cfg.n_scene_classes;
        let mut nouns = Vec::new();
        for (j, s) in [scene, scene, other].into_iter().enumerate() {
            nouns.push(NounEmbedding {
                noun: format!("noun-{s}-{j}"),
                embedding: embedding(&g.perturb(&labels[s], cfg.image_noise.min(1.0))),
            });
        }

        let image = ImageFeatures {
            face_embeddings: faces,
            geo_embedding: Some(embedding(&geo)),
            scene_embedding: Some(embedding(&scene_vec)),
            scene_probabilities: Some(
                SceneProbabilities::new(probs).expect("probabilities sum to one"),
            ),
            image_similarity_embedding: Some(embedding(&look)),
            scene_kind: Some(if scene % 2 == 0 {
                SceneKind::Outdoor
            } else {
                SceneKind::Indoor
            }),
        };
        documents.insert(
            doc_id.clone(),
            DocumentRecord {
                doc_id,
                person_mentions: persons,
                location_mentions: locations,
                event_mentions: vec![event],
                noun_context: nouns,
                image,
            },
        );
    }

    CorpusManifest {
        corpus_id: cfg.corpus_id.clone(),
        entities,
        documents,
        scene_vocabulary: vocabulary,
        embedding_dims: EmbeddingRole::ALL.iter().map(|r| (*r, cfg.dim)).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EntityType;

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig {
            n_documents: 20,
            ..SyntheticConfig::separable(3)
        };
        assert_eq!(generate(&cfg), generate(&cfg));
        let other = SyntheticConfig { seed: 4, ..cfg.clone() };
        assert_ne!(generate(&cfg).documents, generate(&other).documents);
    }

    #[test]
    fn fixture_shape() {
        let c = generate(&SyntheticConfig::tampering_fixture(1));
        assert_eq!(c.entities.len(), 300);
        assert_eq!(c.entities_of_type(EntityType::Person).count(), 120);
        assert_eq!(c.documents.len(), 150);
        for doc in c.documents.values() {
            assert!(!doc.person_mentions.is_empty());
            assert!(doc.image.image_similarity_embedding.is_some());
            assert!(doc
                .image
                .face_embeddings
                .iter()
                .all(EmbeddingVector::is_f32_exact));
        }
    }
}
