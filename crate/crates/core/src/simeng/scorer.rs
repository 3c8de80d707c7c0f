//! Document scoring with per-entity reference caching.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, OnceLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aggregate::Aggregator;
use super::cluster::{ClusteringParams, PersonReference};
use super::measures::{
    cmcs, cmes, cmls, person_measure, resolve_person, Absence, ContextBreakdown, EntityBreakdown,
    MeasureResult, PersonBreakdown, PersonColumn, PersonMode, PersonSource,
};
use super::similarity::SimError;
use crate::model::{CorpusManifest, DocumentRecord, EntityType};

/// One of the four document-level measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Person,
    Location,
    Event,
    Context,
}

impl MeasureKind {
    pub const ALL: [MeasureKind; 4] = [
        MeasureKind::Person,
        MeasureKind::Location,
        MeasureKind::Event,
        MeasureKind::Context,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Person => "person",
            MeasureKind::Location => "location",
            MeasureKind::Event => "event",
            MeasureKind::Context => "context",
        }
    }

    pub fn entity_type(self) -> Option<EntityType> {
        match self {
            MeasureKind::Person => Some(EntityType::Person),
            MeasureKind::Location => Some(EntityType::Location),
            MeasureKind::Event => Some(EntityType::Event),
            MeasureKind::Context => None,
        }
    }
}

impl From<EntityType> for MeasureKind {
    fn from(t: EntityType) -> Self {
        match t {
            EntityType::Person => MeasureKind::Person,
            EntityType::Location => MeasureKind::Location,
            EntityType::Event => MeasureKind::Event,
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MeasureKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "context" => Ok(MeasureKind::Context),
            other => other.parse::<EntityType>().map(MeasureKind::from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringConfig {
    #[serde(default)]
    pub clustering: ClusteringParams,
    #[serde(default = "default_person_mode")]
    pub persons: PersonMode,
    #[serde(default = "default_aggregator")]
    pub locations: Aggregator,
    #[serde(default = "default_aggregator")]
    pub events: Aggregator,
}

fn default_person_mode() -> PersonMode {
    PersonMode::Cluster
}

fn default_aggregator() -> Aggregator {
    Aggregator::Max
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            clustering: ClusteringParams::default(),
            persons: default_person_mode(),
            locations: default_aggregator(),
            events: default_aggregator(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        ClusteringParams::new(self.clustering.tau_p())?;
        if let PersonMode::Aggregate(a) = self.persons {
            a.validate()?;
        }
        self.locations.validate()?;
        self.events.validate()?;
        Ok(())
    }

    /// Identifies the settings one measure depends on. Two configs with equal
    /// keys for a measure produce identical values for it.
    pub fn measure_key(&self, kind: MeasureKind) -> String {
        match kind {
            MeasureKind::Person => match self.persons {
                PersonMode::Cluster => format!("cluster@{}", self.clustering.tau_p()),
                mode => String::from(mode),
            },
            MeasureKind::Location => String::from(self.locations),
            MeasureKind::Event => String::from(self.events),
            MeasureKind::Context => "context".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDocument {
    pub doc_id: String,
    pub cmps: MeasureResult<PersonBreakdown>,
    pub cmls: MeasureResult<EntityBreakdown>,
    pub cmes: MeasureResult<EntityBreakdown>,
    pub cmcs: MeasureResult<ContextBreakdown>,
}

impl ScoredDocument {
    pub fn value(&self, kind: MeasureKind) -> Option<f64> {
        match kind {
            MeasureKind::Person => self.cmps.value,
            MeasureKind::Location => self.cmls.value,
            MeasureKind::Event => self.cmes.value,
            MeasureKind::Context => self.cmcs.value,
        }
    }

    pub fn absence(&self, kind: MeasureKind) -> Option<Absence> {
        match kind {
            MeasureKind::Person => self.cmps.absent,
            MeasureKind::Location => self.cmls.absent,
            MeasureKind::Event => self.cmes.absent,
            MeasureKind::Context => self.cmcs.absent,
        }
    }
}

/// Any single measure with its breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "measure", rename_all = "snake_case")]
pub enum MeasureOutcome {
    Person(MeasureResult<PersonBreakdown>),
    Location(MeasureResult<EntityBreakdown>),
    Event(MeasureResult<EntityBreakdown>),
    Context(MeasureResult<ContextBreakdown>),
}

impl MeasureOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            MeasureOutcome::Person(m) => m.value,
            MeasureOutcome::Location(m) | MeasureOutcome::Event(m) => m.value,
            MeasureOutcome::Context(m) => m.value,
        }
    }
}

type CachedReference = Result<Arc<PersonReference>, Absence>;

/// Scores documents against one corpus under one config. Person reference
/// vectors are computed at most once per entity and shared across threads.
pub struct Scorer<'a> {
    corpus: &'a CorpusManifest,
    config: ScoringConfig,
    references: HashMap<&'a str, OnceLock<CachedReference>>,
}

impl<'a> Scorer<'a> {
    pub fn new(corpus: &'a CorpusManifest, config: ScoringConfig) -> Self {
        let references = corpus
            .entities_of_type(EntityType::Person)
            .map(|e| (e.entity_id.as_str(), OnceLock::new()))
            .collect();
        Self {
            corpus,
            config,
            references,
        }
    }

    pub fn corpus(&self) -> &'a CorpusManifest {
        self.corpus
    }

    pub fn config(&self) -> &ScoringConfig {
        &self.config
    }

    fn person_reference(&self, entity_id: &str) -> CachedReference {
        let Some(cell) = self.references.get(entity_id) else {
            return Err(Absence::UnknownEntity);
        };
        cell.get_or_init(|| {
            match resolve_person(
                self.corpus.entity(entity_id),
                PersonMode::Cluster,
                &self.config.clustering,
            )? {
                PersonSource::Owned(r) => Ok(Arc::new(r)),
                PersonSource::Gallery(..) => unreachable!("cluster mode yields a reference"),
            }
        })
        .clone()
    }

    pub fn cmps(&self, doc: &DocumentRecord) -> MeasureResult<PersonBreakdown> {
        let mentions = doc.distinct_mentions(EntityType::Person);
        match self.config.persons {
            PersonMode::Cluster => {
                let refs: Vec<(String, CachedReference)> = mentions
                    .into_iter()
                    .map(|id| (id.to_string(), self.person_reference(id)))
                    .collect();
                let columns = refs
                    .iter()
                    .map(|(id, r)| {
                        let col = match r {
                            Ok(r) => Ok(PersonColumn::Reference(&r.vector)),
                            Err(a) => Err(*a),
                        };
                        (id.clone(), col)
                    })
                    .collect();
                person_measure(&doc.image.face_embeddings, columns)
            }
            PersonMode::Aggregate(agg) => {
                let columns = mentions
                    .into_iter()
                    .map(|id| {
                        let col = match self.corpus.entity(id) {
                            None => Err(Absence::UnknownEntity),
                            Some(e) if e.references.is_empty() => Err(Absence::NoReferences),
                            Some(e) => Ok(PersonColumn::Gallery(&e.references, agg)),
                        };
                        (id.to_string(), col)
                    })
                    .collect();
                person_measure(&doc.image.face_embeddings, columns)
            }
        }
    }

    pub fn measure(&self, doc: &DocumentRecord, kind: MeasureKind) -> MeasureOutcome {
        let entities = &self.corpus.entities;
        match kind {
            MeasureKind::Person => MeasureOutcome::Person(self.cmps(doc)),
            MeasureKind::Location => {
                MeasureOutcome::Location(cmls(doc, entities, self.config.locations))
            }
            MeasureKind::Event => MeasureOutcome::Event(cmes(doc, entities, self.config.events)),
            MeasureKind::Context => {
                MeasureOutcome::Context(cmcs(doc, &self.corpus.scene_vocabulary))
            }
        }
    }

    /// Value of one measure, or `None` when it does not apply.
    pub fn measure_value(&self, doc: &DocumentRecord, kind: MeasureKind) -> Option<f64> {
        self.measure(doc, kind).value()
    }

    pub fn score(&self, doc: &DocumentRecord) -> ScoredDocument {
        let entities = &self.corpus.entities;
        ScoredDocument {
            doc_id: doc.doc_id.clone(),
            cmps: self.cmps(doc),
            cmls: cmls(doc, entities, self.config.locations),
            cmes: cmes(doc, entities, self.config.events),
            cmcs: cmcs(doc, &self.corpus.scene_vocabulary),
        }
    }

    /// Scores every corpus document in parallel; output is in doc_id order.
    pub fn score_all(&self) -> Vec<ScoredDocument> {
        let docs: Vec<&DocumentRecord> = self.corpus.documents.values().collect();
        docs.par_iter().map(|d| self.score(d)).collect()
    }
}

/// Scores one document with a fresh scorer.
pub fn score_document(
    doc: &DocumentRecord,
    corpus: &CorpusManifest,
    config: &ScoringConfig,
) -> ScoredDocument {
    Scorer::new(corpus, *config).score(doc)
}
