#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use xmec_core::model::{
    CorpusManifest, DocumentRecord, EmbeddingVector, EntityAttrs, EntityRecord, EventAttrs,
    GeoPoint, ImageFeatures, LocationAttrs, PersonAttrs, ReferenceImage, ReferenceImageSet,
    SceneVocabulary,
};

pub fn emb(v: &[f64]) -> EmbeddingVector {
    EmbeddingVector::new(v.to_vec()).unwrap()
}

pub fn strings(xs: &[&str]) -> BTreeSet<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

pub fn gallery(vs: &[&[f64]]) -> ReferenceImageSet {
    ReferenceImageSet::new(
        vs.iter()
            .map(|v| ReferenceImage {
                source: "web".into(),
                embedding: emb(v),
            })
            .collect(),
        10,
    )
    .unwrap()
}

pub fn person(id: &str, gender: &str, citizenship: &[&str], refs: &[&[f64]]) -> EntityRecord {
    EntityRecord {
        entity_id: id.into(),
        label: id.into(),
        attrs: EntityAttrs::Person(PersonAttrs {
            gender: gender.into(),
            citizenship: strings(citizenship),
        }),
        references: if refs.is_empty() {
            ReferenceImageSet::empty()
        } else {
            gallery(refs)
        },
    }
}

pub fn location(id: &str, lat: f64, lon: f64, parents: &[&str]) -> EntityRecord {
    EntityRecord {
        entity_id: id.into(),
        label: id.into(),
        attrs: EntityAttrs::Location(LocationAttrs {
            coordinates: GeoPoint::new(lat, lon).unwrap(),
            parent_classes: strings(parents),
        }),
        references: ReferenceImageSet::empty(),
    }
}

pub fn event(id: &str, parents: &[&str], refs: &[&[f64]]) -> EntityRecord {
    EntityRecord {
        entity_id: id.into(),
        label: id.into(),
        attrs: EntityAttrs::Event(EventAttrs {
            parent_classes: strings(parents),
        }),
        references: if refs.is_empty() {
            ReferenceImageSet::empty()
        } else {
            gallery(refs)
        },
    }
}

pub fn doc(id: &str) -> DocumentRecord {
    DocumentRecord {
        doc_id: id.into(),
        person_mentions: vec![],
        location_mentions: vec![],
        event_mentions: vec![],
        noun_context: vec![],
        image: ImageFeatures::default(),
    }
}

pub fn corpus(entities: Vec<EntityRecord>, docs: Vec<DocumentRecord>) -> CorpusManifest {
    CorpusManifest {
        corpus_id: "test".into(),
        entities: entities
            .into_iter()
            .map(|e| (e.entity_id.clone(), e))
            .collect(),
        documents: docs.into_iter().map(|d| (d.doc_id.clone(), d)).collect(),
        scene_vocabulary: SceneVocabulary::default(),
        embedding_dims: BTreeMap::new(),
    }
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
