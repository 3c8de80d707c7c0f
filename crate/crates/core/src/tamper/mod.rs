//! Tampered test-set generation: constrained entity substitution and image
//! swapping, reproducible from a seed.

mod geo;
mod select;
mod strategy;
mod testset;

use thiserror::Error;

pub use geo::{great_circle_km, haversine_km, EARTH_RADIUS_KM};
pub use select::{
    candidate_pool, document_rng, select_replacement, select_replacement_excluding,
    uniform_index, Selection, RNG_ALGORITHM,
};
pub use strategy::{Constraint, TamperStrategy};
pub use testset::{
    tamper_context, tamper_corpus, tamper_entities, DroppedDocument, FallbackRecord, Substitution,
    TamperedTestSet,
};

#[derive(Debug, Error)]
pub enum TamperError {
    #[error("strategy {strategy} does not apply to {target}")]
    StrategyMismatch { strategy: String, target: String },
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("no replacement candidate for entity {entity_id}")]
    NoCandidates { entity_id: String },
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("document {0} has no image similarity embedding")]
    MissingSimilarityEmbedding(String),
    #[error("image tampering needs at least 2 documents, corpus has {0}")]
    NotEnoughDocuments(usize),
    #[error("{0}")]
    CorpusMismatch(String),
    #[error("malformed test set: {0}")]
    Format(String),
}
