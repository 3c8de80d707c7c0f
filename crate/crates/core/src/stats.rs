//! Corpus statistics per entity type: documents, unique entities, and mean
//! unique entities per document.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{CorpusManifest, EntityType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeStats {
    /// Documents with at least one mention of the type.
    pub documents: usize,
    /// Distinct entities of the type mentioned anywhere.
    pub unique_entities: usize,
    /// Mean number of distinct mentions per counted document; absent when no
    /// document qualifies.
    pub mean_per_document: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub corpus_id: String,
    pub persons: TypeStats,
    pub locations: TypeStats,
    pub events: TypeStats,
    /// Context row: every document counts, unique nouns across the corpus,
    /// mean noun-context length.
    pub context: TypeStats,
}

impl CorpusStats {
    pub fn for_type(&self, entity_type: EntityType) -> &TypeStats {
        match entity_type {
            EntityType::Person => &self.persons,
            EntityType::Location => &self.locations,
            EntityType::Event => &self.events,
        }
    }
}

pub fn corpus_stats(corpus: &CorpusManifest) -> CorpusStats {
    let row = |t: EntityType| {
        let mut unique = BTreeSet::new();
        let mut documents = 0usize;
        let mut mentions = 0usize;
        for doc in corpus.documents.values() {
            let distinct = doc.distinct_mentions(t);
            if distinct.is_empty() {
                continue;
            }
            documents += 1;
            mentions += distinct.len();
            unique.extend(distinct);
        }
        TypeStats {
            documents,
            unique_entities: unique.len(),
            mean_per_document: (documents > 0).then(|| mentions as f64 / documents as f64),
        }
    };

    let n_docs = corpus.documents.len();
    let nouns: BTreeSet<&str> = corpus
        .documents
        .values()
        .flat_map(|d| d.noun_context.iter().map(|n| n.noun.as_str()))
        .collect();
    let noun_total: usize = corpus.documents.values().map(|d| d.noun_context.len()).sum();
    let context = TypeStats {
        documents: n_docs,
        unique_entities: nouns.len(),
        mean_per_document: (n_docs > 0).then(|| noun_total as f64 / n_docs as f64),
    };

    CorpusStats {
        corpus_id: corpus.corpus_id.clone(),
        persons: row(EntityType::Person),
        locations: row(EntityType::Location),
        events: row(EntityType::Event),
        context,
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "corpus: {}", self.corpus_id)?;
        writeln!(f, "{:<10} {:>8} {:>8} {:>8}", "type", "|D|", "T*", "T-mean")?;
        for (name, s) in [
            ("persons", &self.persons),
            ("locations", &self.locations),
            ("events", &self.events),
            ("context", &self.context),
        ] {
            let mean = s
                .mean_per_document
                .map_or_else(|| "-".to_string(), |m| format!("{m:.2}"));
            writeln!(
                f,
                "{:<10} {:>8} {:>8} {:>8}",
                name, s.documents, s.unique_entities, mean
            )?;
        }
        Ok(())
    }
}
