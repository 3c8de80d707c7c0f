//! Document-level cross-modal measures: persons (CMPS), locations (CMLS),
//! events (CMES) and scene context (CMCS).
//!
//! Each measure is the maximum over its breakdown, and the breakdown is kept
//! alongside the value so callers can show where the maximum came from.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::aggregate::{aggregate, Aggregator};
use super::cluster::{person_reference, ClusteringParams, PersonReference};
use super::similarity::{cosine, SimError};
use crate::model::{
    DocumentRecord, EmbeddingVector, EntityRecord, EntityType, ReferenceImageSet, SceneVocabulary,
};

/// Why a measure or an entity row could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Absence {
    NoMentions,
    NoFaces,
    NoReferences,
    DegenerateReference,
    MissingImageFeature,
    DimMismatch,
    NoContext,
    MissingSceneProbabilities,
    VocabularyMismatch,
    UnknownEntity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureResult<B> {
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub absent: Option<Absence>,
    pub breakdown: B,
}

impl<B> MeasureResult<B> {
    fn present(value: f64, breakdown: B) -> Self {
        Self {
            value: Some(value),
            absent: None,
            breakdown,
        }
    }

    fn absent(reason: Absence, breakdown: B) -> Self {
        Self {
            value: None,
            absent: Some(reason),
            breakdown,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedEntity {
    pub entity_id: String,
    pub reason: Absence,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PersonBreakdown {
    pub faces: usize,
    /// Scored persons, one matrix column each.
    pub persons: Vec<String>,
    /// `matrix[face][person]`.
    pub matrix: Vec<Vec<f64>>,
    pub skipped: Vec<SkippedEntity>,
}

impl PersonBreakdown {
    pub fn max(&self) -> Option<f64> {
        max_of(self.matrix.iter().flatten().copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntitySimilarity {
    pub entity_id: String,
    pub similarity: f64,
    pub references: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EntityBreakdown {
    pub entities: Vec<EntitySimilarity>,
    pub skipped: Vec<SkippedEntity>,
}

impl EntityBreakdown {
    pub fn max(&self) -> Option<f64> {
        max_of(self.entities.iter().map(|e| e.similarity))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NounSimilarity {
    pub noun: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContextBreakdown {
    pub nouns: Vec<NounSimilarity>,
}

impl ContextBreakdown {
    pub fn max(&self) -> Option<f64> {
        max_of(self.nouns.iter().map(|n| n.similarity))
    }
}

fn max_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
}

/// How a person's gallery is turned into scores against a face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum PersonMode {
    /// Cosine against the mean of the majority reference cluster.
    Cluster,
    /// Aggregate of cosines against every gallery face.
    Aggregate(Aggregator),
}

impl std::str::FromStr for PersonMode {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("cluster") {
            Ok(PersonMode::Cluster)
        } else {
            s.parse().map(PersonMode::Aggregate)
        }
    }
}

impl TryFrom<String> for PersonMode {
    type Error = SimError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<PersonMode> for String {
    fn from(m: PersonMode) -> String {
        match m {
            PersonMode::Cluster => "cluster".into(),
            PersonMode::Aggregate(a) => a.into(),
        }
    }
}

/// What a person column is compared against.
pub(crate) enum PersonColumn<'a> {
    Reference(&'a EmbeddingVector),
    Gallery(&'a ReferenceImageSet, Aggregator),
}

/// Core of CMPS once every mentioned person is resolved to a column or a
/// skip reason.
pub(crate) fn person_measure<'a>(
    faces: &[EmbeddingVector],
    columns: Vec<(String, Result<PersonColumn<'a>, Absence>)>,
) -> MeasureResult<PersonBreakdown> {
    let mut breakdown = PersonBreakdown {
        faces: faces.len(),
        ..Default::default()
    };
    if columns.is_empty() {
        return MeasureResult::absent(Absence::NoMentions, breakdown);
    }
    let mut scored = Vec::new();
    for (entity_id, column) in columns {
        match column {
            Ok(c) => scored.push((entity_id, c)),
            Err(reason) => breakdown.skipped.push(SkippedEntity { entity_id, reason }),
        }
    }
    if faces.is_empty() {
        return MeasureResult::absent(Absence::NoFaces, breakdown);
    }
    let mut usable = Vec::with_capacity(scored.len());
    let mut matrix_cols: Vec<Vec<f64>> = Vec::with_capacity(scored.len());
    for (entity_id, column) in scored {
        let col: Result<Vec<f64>, SimError> = faces
            .iter()
            .map(|face| match &column {
                PersonColumn::Reference(r) => cosine(face, r),
                PersonColumn::Gallery(refs, agg) => entity_image_similarity(face, refs, *agg),
            })
            .collect();
        match col {
            Ok(col) => {
                usable.push(entity_id);
                matrix_cols.push(col);
            }
            Err(e) => breakdown.skipped.push(SkippedEntity {
                entity_id,
                reason: sim_absence(&e),
            }),
        }
    }
    if usable.is_empty() {
        return MeasureResult::absent(Absence::NoReferences, breakdown);
    }
    breakdown.matrix = (0..faces.len())
        .map(|f| matrix_cols.iter().map(|c| c[f]).collect())
        .collect();
    breakdown.persons = usable;
    let value = breakdown.max().expect("non-empty matrix");
    MeasureResult::present(value, breakdown)
}

fn sim_absence(e: &SimError) -> Absence {
    match e {
        SimError::DimMismatch(..) => Absence::DimMismatch,
        SimError::EmptyReferences | SimError::EmptyInput => Absence::NoReferences,
        _ => Absence::DegenerateReference,
    }
}

/// Resolves one mentioned person into a comparison column.
pub(crate) fn resolve_person<'a>(
    entity: Option<&'a EntityRecord>,
    mode: PersonMode,
    params: &ClusteringParams,
) -> Result<PersonSource<'a>, Absence> {
    let entity = entity.ok_or(Absence::UnknownEntity)?;
    if entity.references.is_empty() {
        return Err(Absence::NoReferences);
    }
    match mode {
        PersonMode::Cluster => {
            let faces: Vec<EmbeddingVector> = entity.references.embeddings().cloned().collect();
            person_reference(&faces, params)
                .map(PersonSource::Owned)
                .map_err(|e| sim_absence(&e))
        }
        PersonMode::Aggregate(agg) => Ok(PersonSource::Gallery(&entity.references, agg)),
    }
}

pub(crate) enum PersonSource<'a> {
    Owned(PersonReference),
    Gallery(&'a ReferenceImageSet, Aggregator),
}

/// Cross-modal person similarity: the best cosine between any face in the
/// image and any mentioned person's reference.
pub fn cmps(
    doc: &DocumentRecord,
    entities: &BTreeMap<String, EntityRecord>,
    mode: PersonMode,
    params: &ClusteringParams,
) -> MeasureResult<PersonBreakdown> {
    let sources: Vec<(String, Result<PersonSource<'_>, Absence>)> = doc
        .distinct_mentions(EntityType::Person)
        .into_iter()
        .map(|id| (id.to_string(), resolve_person(entities.get(id), mode, params)))
        .collect();
    let columns = sources
        .iter()
        .map(|(id, s)| {
            let col = match s {
                Ok(PersonSource::Owned(r)) => Ok(PersonColumn::Reference(&r.vector)),
                Ok(PersonSource::Gallery(refs, agg)) => Ok(PersonColumn::Gallery(refs, *agg)),
                Err(a) => Err(*a),
            };
            (id.clone(), col)
        })
        .collect();
    person_measure(&doc.image.face_embeddings, columns)
}

/// Aggregated cosine between an image feature and every reference of one
/// entity.
pub fn entity_image_similarity(
    image_vec: &EmbeddingVector,
    refs: &ReferenceImageSet,
    agg: Aggregator,
) -> Result<f64, SimError> {
    if refs.is_empty() {
        return Err(SimError::EmptyReferences);
    }
    let sims = refs
        .embeddings()
        .map(|r| cosine(image_vec, r))
        .collect::<Result<Vec<_>, _>>()?;
    aggregate(&sims, agg)
}

fn entity_measure(
    doc: &DocumentRecord,
    entities: &BTreeMap<String, EntityRecord>,
    entity_type: EntityType,
    image_vec: Option<&EmbeddingVector>,
    agg: Aggregator,
) -> MeasureResult<EntityBreakdown> {
    let mentions = doc.distinct_mentions(entity_type);
    let mut breakdown = EntityBreakdown::default();
    if mentions.is_empty() {
        return MeasureResult::absent(Absence::NoMentions, breakdown);
    }
    let Some(image_vec) = image_vec else {
        return MeasureResult::absent(Absence::MissingImageFeature, breakdown);
    };
    for id in mentions {
        let result = match entities.get(id) {
            None => Err(Absence::UnknownEntity),
            Some(e) => entity_image_similarity(image_vec, &e.references, agg)
                .map(|s| (s, e.references.len()))
                .map_err(|err| sim_absence(&err)),
        };
        match result {
            Ok((similarity, references)) => breakdown.entities.push(EntitySimilarity {
                entity_id: id.to_string(),
                similarity,
                references,
            }),
            Err(reason) => breakdown.skipped.push(SkippedEntity {
                entity_id: id.to_string(),
                reason,
            }),
        }
    }
    match breakdown.max() {
        Some(v) => MeasureResult::present(v, breakdown),
        None => MeasureResult::absent(Absence::NoReferences, breakdown),
    }
}

/// Cross-modal location similarity against the image's geolocation feature.
pub fn cmls(
    doc: &DocumentRecord,
    entities: &BTreeMap<String, EntityRecord>,
    agg: Aggregator,
) -> MeasureResult<EntityBreakdown> {
    entity_measure(
        doc,
        entities,
        EntityType::Location,
        doc.image.geo_embedding.as_ref(),
        agg,
    )
}

/// Cross-modal event similarity against the image's scene feature.
pub fn cmes(
    doc: &DocumentRecord,
    entities: &BTreeMap<String, EntityRecord>,
    agg: Aggregator,
) -> MeasureResult<EntityBreakdown> {
    entity_measure(
        doc,
        entities,
        EntityType::Event,
        doc.image.scene_embedding.as_ref(),
        agg,
    )
}

/// Cross-modal context similarity: for each noun, scene-label cosines weighted
/// by the image's scene probabilities; the best noun wins.
pub fn cmcs(doc: &DocumentRecord, vocab: &SceneVocabulary) -> MeasureResult<ContextBreakdown> {
    let mut breakdown = ContextBreakdown::default();
    if doc.noun_context.is_empty() {
        return MeasureResult::absent(Absence::NoContext, breakdown);
    }
    let Some(probs) = &doc.image.scene_probabilities else {
        return MeasureResult::absent(Absence::MissingSceneProbabilities, breakdown);
    };
    if probs.len() != vocab.len() {
        return MeasureResult::absent(Absence::VocabularyMismatch, breakdown);
    }
    for noun in &doc.noun_context {
        let mut total = 0.0;
        for (class, &p) in vocab.classes().iter().zip(probs.values()) {
            if p == 0.0 {
                continue;
            }
            match cosine(&class.embedding, &noun.embedding) {
                Ok(c) => total += p * c,
                Err(_) => return MeasureResult::absent(Absence::DimMismatch, breakdown),
            }
        }
        breakdown.nouns.push(NounSimilarity {
            noun: noun.noun.clone(),
            similarity: total,
        });
    }
    let value = breakdown.max().expect("non-empty nouns");
    MeasureResult::present(value, breakdown)
}
