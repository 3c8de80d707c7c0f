//! Corpus data model: embeddings, knowledge-base entities, news documents and
//! the scene vocabulary.
//!
//! Every constructor here validates its invariants, so a value of any of these
//! types is known-good once it exists. The manifest loader is the only place
//! that builds them from untrusted input.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reference images allowed per source tag unless configured otherwise.
pub const DEFAULT_PER_SOURCE_CAP: usize = 10;

/// Tolerance on the sum of a scene probability vector.
pub const PROBABILITY_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("embedding has no components")]
    EmptyEmbedding,
    #[error("embedding component {index} is not finite")]
    NonFinite { index: usize },
    #[error("embedding has zero norm")]
    ZeroNorm,
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("invalid coordinate ({lat}, {lon})")]
    InvalidCoordinate { lat: f64, lon: f64 },
    #[error("source {source_tag:?} has {count} reference images, cap is {cap}")]
    SourceCapExceeded {
        source_tag: String,
        count: usize,
        cap: usize,
    },
    #[error("per-source cap must be positive")]
    ZeroSourceCap,
    #[error("{0}")]
    InvalidProbabilities(String),
}

/// A dense real-valued feature vector with a strictly positive norm.
#[derive(Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::EmptyEmbedding);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { index });
        }
        if values.iter().all(|v| *v == 0.0) {
            return Err(ModelError::ZeroNorm);
        }
        Ok(Self { values })
    }

    pub fn from_f32(values: &[f32]) -> Result<Self, ModelError> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Multiplies every component by `factor`, which must be positive.
    pub fn scaled(&self, factor: f64) -> Result<Self, ModelError> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }

    /// True when every component survives a round trip through binary32.
    pub fn is_f32_exact(&self) -> bool {
        self.values.iter().all(|&v| f64::from(v as f32) == v)
    }
}

impl fmt::Debug for EmbeddingVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EmbeddingVector(dim={}, {:?})", self.dim(), self.values)
    }
}

impl<'de> Deserialize<'de> for EmbeddingVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        EmbeddingVector::new(values).map_err(serde::de::Error::custom)
    }
}

/// The producer that an embedding comes from. Embeddings of one role share a
/// dimension across the whole corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingRole {
    /// Face descriptors: document faces and person reference galleries.
    Face,
    /// Geolocation features: document image and location galleries.
    Geo,
    /// Scene features: document image and event galleries.
    Scene,
    /// Word embeddings: text nouns and scene class labels.
    Word,
    /// Object-classification features used to find similar images.
    ImageSimilarity,
}

impl EmbeddingRole {
    pub const ALL: [EmbeddingRole; 5] = [
        EmbeddingRole::Face,
        EmbeddingRole::Geo,
        EmbeddingRole::Scene,
        EmbeddingRole::Word,
        EmbeddingRole::ImageSimilarity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EmbeddingRole::Face => "face",
            EmbeddingRole::Geo => "geo",
            EmbeddingRole::Scene => "scene",
            EmbeddingRole::Word => "word",
            EmbeddingRole::ImageSimilarity => "image_similarity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityType {
    Person,
    Location,
    Event,
}

impl EntityType {
    pub const ALL: [EntityType; 3] = [EntityType::Person, EntityType::Location, EntityType::Event];

    pub fn name(self) -> &'static str {
        match self {
            EntityType::Person => "person",
            EntityType::Location => "location",
            EntityType::Event => "event",
        }
    }

    /// Role of the gallery embeddings for entities of this type.
    pub fn reference_role(self) -> EmbeddingRole {
        match self {
            EntityType::Person => EmbeddingRole::Face,
            EntityType::Location => EmbeddingRole::Geo,
            EntityType::Event => EmbeddingRole::Scene,
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EntityType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "person" | "persons" => Ok(EntityType::Person),
            "location" | "locations" => Ok(EntityType::Location),
            "event" | "events" => Ok(EntityType::Event),
            other => Err(format!("unknown entity type {other:?}")),
        }
    }
}

/// Latitude/longitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    /// Latitude in [-90, 90], longitude in (-180, 180].
    pub fn new(lat: f64, lon: f64) -> Result<Self, ModelError> {
        let valid = lat.is_finite()
            && lon.is_finite()
            && (-90.0..=90.0).contains(&lat)
            && lon > -180.0
            && lon <= 180.0;
        if valid {
            Ok(Self { lat, lon })
        } else {
            Err(ModelError::InvalidCoordinate { lat, lon })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonAttrs {
    pub gender: String,
    pub citizenship: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationAttrs {
    pub coordinates: GeoPoint,
    pub parent_classes: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventAttrs {
    pub parent_classes: BTreeSet<String>,
}

/// Type-specific attributes. The variant determines the entity type, so a
/// record can never carry the wrong attribute block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityAttrs {
    Person(PersonAttrs),
    Location(LocationAttrs),
    Event(EventAttrs),
}

impl EntityAttrs {
    pub fn entity_type(&self) -> EntityType {
        match self {
            EntityAttrs::Person(_) => EntityType::Person,
            EntityAttrs::Location(_) => EntityType::Location,
            EntityAttrs::Event(_) => EntityType::Event,
        }
    }

    pub fn parent_classes(&self) -> Option<&BTreeSet<String>> {
        match self {
            EntityAttrs::Person(_) => None,
            EntityAttrs::Location(l) => Some(&l.parent_classes),
            EntityAttrs::Event(e) => Some(&e.parent_classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceImage {
    pub source: String,
    pub embedding: EmbeddingVector,
}

/// Gallery of reference embeddings for one entity, capped per source tag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceImageSet {
    items: Vec<ReferenceImage>,
    per_source_cap: usize,
}

impl ReferenceImageSet {
    pub fn new(items: Vec<ReferenceImage>, per_source_cap: usize) -> Result<Self, ModelError> {
        if per_source_cap == 0 {
            return Err(ModelError::ZeroSourceCap);
        }
        let mut per_source: BTreeMap<&str, usize> = BTreeMap::new();
        for item in &items {
            *per_source.entry(item.source.as_str()).or_default() += 1;
        }
        if let Some((source, count)) = per_source.iter().find(|(_, c)| **c > per_source_cap) {
            return Err(ModelError::SourceCapExceeded {
                source_tag: source.to_string(),
                count: *count,
                cap: per_source_cap,
            });
        }
        if let Some(first) = items.first() {
            let dim = first.embedding.dim();
            if let Some(bad) = items.iter().find(|i| i.embedding.dim() != dim) {
                return Err(ModelError::DimMismatch {
                    expected: dim,
                    actual: bad.embedding.dim(),
                });
            }
        }
        Ok(Self {
            items,
            per_source_cap,
        })
    }

    pub fn empty() -> Self {
        Self {
            items: Vec::new(),
            per_source_cap: DEFAULT_PER_SOURCE_CAP,
        }
    }

    pub fn items(&self) -> &[ReferenceImage] {
        &self.items
    }

    pub fn embeddings(&self) -> impl Iterator<Item = &EmbeddingVector> + '_ {
        self.items.iter().map(|i| &i.embedding)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn per_source_cap(&self) -> usize {
        self.per_source_cap
    }

    pub fn dim(&self) -> Option<usize> {
        self.items.first().map(|i| i.embedding.dim())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityRecord {
    pub entity_id: String,
    pub label: String,
    pub attrs: EntityAttrs,
    pub references: ReferenceImageSet,
}

impl EntityRecord {
    pub fn entity_type(&self) -> EntityType {
        self.attrs.entity_type()
    }

    pub fn person(&self) -> Option<&PersonAttrs> {
        match &self.attrs {
            EntityAttrs::Person(p) => Some(p),
            _ => None,
        }
    }

    pub fn location(&self) -> Option<&LocationAttrs> {
        match &self.attrs {
            EntityAttrs::Location(l) => Some(l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Indoor,
    Outdoor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NounEmbedding {
    pub noun: String,
    pub embedding: EmbeddingVector,
}

/// Probability distribution over the scene vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SceneProbabilities(Vec<f64>);

impl SceneProbabilities {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::InvalidProbabilities(
                "empty probability vector".into(),
            ));
        }
        if let Some(i) = values.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(ModelError::InvalidProbabilities(format!(
                "entry {i} is negative or not finite"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > PROBABILITY_SUM_TOLERANCE {
            return Err(ModelError::InvalidProbabilities(format!(
                "probabilities sum to {sum}"
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The visual side of a document. Context tampering swaps this wholesale.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ImageFeatures {
    pub face_embeddings: Vec<EmbeddingVector>,
    pub geo_embedding: Option<EmbeddingVector>,
    pub scene_embedding: Option<EmbeddingVector>,
    pub scene_probabilities: Option<SceneProbabilities>,
    pub image_similarity_embedding: Option<EmbeddingVector>,
    pub scene_kind: Option<SceneKind>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DocumentRecord {
    pub doc_id: String,
    pub person_mentions: Vec<String>,
    pub location_mentions: Vec<String>,
    pub event_mentions: Vec<String>,
    pub noun_context: Vec<NounEmbedding>,
    pub image: ImageFeatures,
}

impl DocumentRecord {
    pub fn mentions(&self, entity_type: EntityType) -> &[String] {
        match entity_type {
            EntityType::Person => &self.person_mentions,
            EntityType::Location => &self.location_mentions,
            EntityType::Event => &self.event_mentions,
        }
    }

    pub fn mentions_mut(&mut self, entity_type: EntityType) -> &mut Vec<String> {
        match entity_type {
            EntityType::Person => &mut self.person_mentions,
            EntityType::Location => &mut self.location_mentions,
            EntityType::Event => &mut self.event_mentions,
        }
    }

    /// Mentions of one type with repeats removed, in first-mention order.
    pub fn distinct_mentions(&self, entity_type: EntityType) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.mentions(entity_type)
            .iter()
            .map(String::as_str)
            .filter(|id| seen.insert(*id))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneClass {
    pub class_id: String,
    pub label: String,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SceneVocabulary {
    classes: Vec<SceneClass>,
}

impl SceneVocabulary {
    pub fn new(classes: Vec<SceneClass>) -> Result<Self, String> {
        let mut ids = BTreeSet::new();
        for class in &classes {
            if !ids.insert(class.class_id.as_str()) {
                return Err(format!("duplicate scene class {:?}", class.class_id));
            }
        }
        if let Some(first) = classes.first() {
            let dim = first.embedding.dim();
            if classes.iter().any(|c| c.embedding.dim() != dim) {
                return Err("scene class embeddings differ in dimension".into());
            }
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[SceneClass] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

/// A validated corpus. Immutable once loaded; share it behind an `Arc`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusManifest {
    pub corpus_id: String,
    pub entities: BTreeMap<String, EntityRecord>,
    /// Keyed and iterated by doc_id.
    pub documents: BTreeMap<String, DocumentRecord>,
    pub scene_vocabulary: SceneVocabulary,
    pub embedding_dims: BTreeMap<EmbeddingRole, usize>,
}

impl CorpusManifest {
    pub fn entity(&self, entity_id: &str) -> Option<&EntityRecord> {
        self.entities.get(entity_id)
    }

    pub fn document(&self, doc_id: &str) -> Option<&DocumentRecord> {
        self.documents.get(doc_id)
    }

    /// Entities of one type in entity_id order.
    pub fn entities_of_type(&self, entity_type: EntityType) -> impl Iterator<Item = &EntityRecord> {
        self.entities
            .values()
            .filter(move |e| e.entity_type() == entity_type)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn emb(v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn rejects_degenerate_embeddings() {
        assert_eq!(EmbeddingVector::new(vec![]), Err(ModelError::EmptyEmbedding));
        assert_eq!(
            EmbeddingVector::new(vec![0.0, 0.0]),
            Err(ModelError::ZeroNorm)
        );
        assert_eq!(
            EmbeddingVector::new(vec![1.0, f64::NAN]),
            Err(ModelError::NonFinite { index: 1 })
        );
    }

    #[test]
    fn coordinate_ranges() {
        assert!(GeoPoint::new(90.0, 180.0).is_ok());
        assert!(GeoPoint::new(-90.0, -179.999).is_ok());
        assert!(GeoPoint::new(0.0, -180.0).is_err());
        assert!(GeoPoint::new(90.5, 0.0).is_err());
    }

    #[test]
    fn per_source_cap_enforced() {
        let item = |s: &str| ReferenceImage {
            source: s.into(),
            embedding: emb(&[1.0, 0.0]),
        };
        let ok = (0..10).map(|_| item("bing")).chain([item("wikidata")]).collect();
        assert!(ReferenceImageSet::new(ok, 10).is_ok());
        let too_many = (0..11).map(|_| item("bing")).collect();
        assert!(matches!(
            ReferenceImageSet::new(too_many, 10),
            Err(ModelError::SourceCapExceeded { count: 11, .. })
        ));
    }

    #[test]
    fn reference_dims_must_agree() {
        let items = vec![
            ReferenceImage {
                source: "a".into(),
                embedding: emb(&[1.0, 0.0]),
            },
            ReferenceImage {
                source: "a".into(),
                embedding: emb(&[1.0, 0.0, 1.0]),
            },
        ];
        assert!(matches!(
            ReferenceImageSet::new(items, 10),
            Err(ModelError::DimMismatch { .. })
        ));
    }

    #[test]
    fn probability_tolerance_boundary() {
        assert!(SceneProbabilities::new(vec![0.5, 0.48]).is_err());
        assert!(SceneProbabilities::new(vec![0.5, 0.5 + 1e-7]).is_ok());
        assert!(SceneProbabilities::new(vec![0.5, 0.5 - 1e-7]).is_ok());
        assert!(SceneProbabilities::new(vec![1.1, -0.1]).is_err());
    }

    #[test]
    fn distinct_mentions_keep_first_order() {
        let doc = DocumentRecord {
            doc_id: "d".into(),
            person_mentions: vec!["B".into(), "A".into(), "B".into()],
            location_mentions: vec![],
            event_mentions: vec![],
            noun_context: vec![],
            image: ImageFeatures::default(),
        };
        assert_eq!(doc.distinct_mentions(EntityType::Person), vec!["B", "A"]);
    }
}
