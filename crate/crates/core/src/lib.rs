//! Cross-modal entity consistency for news documents.
//!
//! Ingests precomputed embeddings for a news corpus, measures how well a
//! document's image agrees with the persons, locations, events and scene
//! context of its text, generates tampered counterparts under constrained
//! entity substitution, and evaluates verification and retrieval quality.

pub mod blob;
pub mod config;
pub mod eval;
pub mod manifest;
pub mod model;
pub mod simeng;
pub mod stats;
pub mod synthetic;
pub mod tamper;

mod util;

pub use manifest::{load_manifest, write_manifest, ManifestError};
pub use model::{CorpusManifest, DocumentRecord, EmbeddingVector, EntityRecord, EntityType};
pub use stats::corpus_stats;
