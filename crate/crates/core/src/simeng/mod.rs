//! Cross-modal similarity engine: cosine primitives, reference clustering,
//! aggregation operators and the four document-level measures.

mod aggregate;
mod cluster;
mod measures;
mod scorer;
mod similarity;

pub use aggregate::{aggregate, Aggregator};
pub use cluster::{
    cluster_references, person_reference, person_reference_vector, ClusteringParams,
    PersonReference, DEFAULT_TAU_P,
};
pub use measures::{
    cmcs, cmes, cmls, cmps, entity_image_similarity, Absence, ContextBreakdown,
    EntityBreakdown, EntitySimilarity, MeasureResult, NounSimilarity, PersonBreakdown,
    PersonMode, SkippedEntity,
};
pub use scorer::{score_document, MeasureKind, MeasureOutcome, ScoredDocument, Scorer, ScoringConfig};
pub use similarity::{cosine, normalized_cosine, SimError};
