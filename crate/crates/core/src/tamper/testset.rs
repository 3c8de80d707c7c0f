//! Seeded generation of tampered test sets.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::select::{document_rng, select_replacement_excluding, uniform_index, RNG_ALGORITHM};
use super::strategy::TamperStrategy;
use super::TamperError;
use crate::model::{CorpusManifest, DocumentRecord, EntityType};
use crate::simeng::{cosine, MeasureKind};
use crate::util::ceil_count;

/// What replaces a document's original content in its tampered counterpart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Substitution {
    /// original entity_id -> replacement entity_id, one per distinct mention.
    Entities(BTreeMap<String, String>),
    /// doc_id of the document whose image replaces this one's.
    Image(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackRecord {
    pub doc_id: String,
    pub original: String,
    pub replacement: String,
    pub satisfied: usize,
    pub required: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedDocument {
    pub doc_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TamperedTestSet {
    pub corpus_id: String,
    pub strategy: TamperStrategy,
    pub seed: u64,
    pub rng: String,
    pub substitutions: BTreeMap<String, Substitution>,
    pub fallback_log: Vec<FallbackRecord>,
    #[serde(default)]
    pub dropped: Vec<DroppedDocument>,
}

impl TamperedTestSet {
    pub fn target(&self) -> MeasureKind {
        self.strategy.target()
    }

    /// The tampered counterpart of `doc_id`, if the set covers it.
    pub fn tampered_document(
        &self,
        corpus: &CorpusManifest,
        doc_id: &str,
    ) -> Option<DocumentRecord> {
        let doc = corpus.document(doc_id)?;
        match self.substitutions.get(doc_id)? {
            Substitution::Entities(map) => {
                let entity_type = self.strategy.entity_type()?;
                let mut tampered = doc.clone();
                for m in tampered.mentions_mut(entity_type).iter_mut() {
                    if let Some(r) = map.get(m) {
                        m.clone_from(r);
                    }
                }
                Some(tampered)
            }
            Substitution::Image(donor) => {
                let donor = corpus.document(donor)?;
                let mut tampered = doc.clone();
                tampered.image = donor.image.clone();
                Some(tampered)
            }
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("test set serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, TamperError> {
        let set: Self =
            serde_json::from_str(text).map_err(|e| TamperError::Format(e.to_string()))?;
        set.strategy.validate()?;
        Ok(set)
    }

    /// Checks that the set was built from `corpus`.
    pub fn check_corpus(&self, corpus: &CorpusManifest) -> Result<(), TamperError> {
        if self.corpus_id != corpus.corpus_id {
            return Err(TamperError::CorpusMismatch(format!(
                "test set is for corpus {:?}, loaded corpus is {:?}",
                self.corpus_id, corpus.corpus_id
            )));
        }
        if let Some(missing) = self.substitutions.keys().find(|d| corpus.document(d).is_none()) {
            return Err(TamperError::CorpusMismatch(format!(
                "test set references unknown document {missing:?}"
            )));
        }
        Ok(())
    }
}

enum DocOutcome {
    Done(Substitution, Vec<FallbackRecord>),
    Dropped(DroppedDocument),
}

fn tamper_one(
    corpus: &CorpusManifest,
    doc: &DocumentRecord,
    entity_type: EntityType,
    strategy: &TamperStrategy,
    seed: u64,
) -> Result<DocOutcome, TamperError> {
    let mentions = doc.distinct_mentions(entity_type);
    let exclude: BTreeSet<&str> = mentions.iter().copied().collect();
    let mut rng = document_rng(seed, &doc.doc_id);
    let mut map = BTreeMap::new();
    let mut fallbacks = Vec::new();
    for original_id in mentions {
        let original = corpus
            .entity(original_id)
            .ok_or_else(|| TamperError::UnknownEntity(original_id.to_string()))?;
        match select_replacement_excluding(original, corpus, strategy, &exclude, &mut rng) {
            Ok(sel) => {
                if sel.used_fallback {
                    fallbacks.push(FallbackRecord {
                        doc_id: doc.doc_id.clone(),
                        original: original_id.to_string(),
                        replacement: sel.entity_id.clone(),
                        satisfied: sel.satisfied,
                        required: sel.required,
                    });
                }
                map.insert(original_id.to_string(), sel.entity_id);
            }
            Err(TamperError::NoCandidates { entity_id }) => {
                return Ok(DocOutcome::Dropped(DroppedDocument {
                    doc_id: doc.doc_id.clone(),
                    reason: format!("no replacement candidate for {entity_id}"),
                }))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(DocOutcome::Done(Substitution::Entities(map), fallbacks))
}

/// Replaces every mentioned entity of the strategy's type in every document
/// that has one. Documents whose entities cannot be replaced are listed in
/// `dropped`. Deterministic per (corpus, strategy, seed).
pub fn tamper_entities(
    corpus: &CorpusManifest,
    entity_type: EntityType,
    strategy: TamperStrategy,
    seed: u64,
) -> Result<TamperedTestSet, TamperError> {
    let strategy = strategy.validate()?;
    if strategy.entity_type() != Some(entity_type) {
        return Err(TamperError::StrategyMismatch {
            strategy: strategy.label(),
            target: entity_type.to_string(),
        });
    }
    let docs: Vec<&DocumentRecord> = corpus
        .documents
        .values()
        .filter(|d| !d.mentions(entity_type).is_empty())
        .collect();
    let outcomes = docs
        .par_iter()
        .map(|d| tamper_one(corpus, d, entity_type, &strategy, seed))
        .collect::<Result<Vec<_>, _>>()?;

    let mut set = empty_set(corpus, strategy, seed);
    for (doc, outcome) in docs.iter().zip(outcomes) {
        match outcome {
            DocOutcome::Done(sub, fallbacks) => {
                set.substitutions.insert(doc.doc_id.clone(), sub);
                set.fallback_log.extend(fallbacks);
            }
            DocOutcome::Dropped(d) => set.dropped.push(d),
        }
    }
    Ok(set)
}

fn empty_set(corpus: &CorpusManifest, strategy: TamperStrategy, seed: u64) -> TamperedTestSet {
    TamperedTestSet {
        corpus_id: corpus.corpus_id.clone(),
        strategy,
        seed,
        rng: RNG_ALGORITHM.to_string(),
        substitutions: BTreeMap::new(),
        fallback_log: Vec::new(),
        dropped: Vec::new(),
    }
}

/// Replaces each document's image wholesale with another document's: drawn
/// uniformly, or from the most similar images by object-feature cosine.
pub fn tamper_context(
    corpus: &CorpusManifest,
    strategy: TamperStrategy,
    seed: u64,
) -> Result<TamperedTestSet, TamperError> {
    let strategy = strategy.validate()?;
    let docs: Vec<&DocumentRecord> = corpus.documents.values().collect();
    if docs.len() < 2 {
        return Err(TamperError::NotEnoughDocuments(docs.len()));
    }
    let top_fraction = match strategy {
        TamperStrategy::ContextRandomImage => None,
        TamperStrategy::ContextSimilarImage { top_fraction } => {
            if let Some(d) = docs
                .iter()
                .find(|d| d.image.image_similarity_embedding.is_none())
            {
                return Err(TamperError::MissingSimilarityEmbedding(d.doc_id.clone()));
            }
            Some(top_fraction)
        }
        other => {
            return Err(TamperError::StrategyMismatch {
                strategy: other.label(),
                target: MeasureKind::Context.to_string(),
            })
        }
    };

    let donors: Vec<String> = docs
        .par_iter()
        .enumerate()
        .map(|(i, doc)| {
            let mut rng = document_rng(seed, &doc.doc_id);
            let others: Vec<usize> = (0..docs.len()).filter(|&j| j != i).collect();
            let pool: Vec<usize> = match top_fraction {
                None => others,
                Some(f) => similar_pool(&docs, i, others, f)?,
            };
            Ok(docs[pool[uniform_index(&mut rng, pool.len())]].doc_id.clone())
        })
        .collect::<Result<_, TamperError>>()?;

    let mut set = empty_set(corpus, strategy, seed);
    for (doc, donor) in docs.iter().zip(donors) {
        set.substitutions
            .insert(doc.doc_id.clone(), Substitution::Image(donor));
    }
    Ok(set)
}

/// The `ceil(fraction * others)` documents most similar to `docs[i]`; ties go
/// to the smaller doc_id.
fn similar_pool(
    docs: &[&DocumentRecord],
    i: usize,
    others: Vec<usize>,
    fraction: f64,
) -> Result<Vec<usize>, TamperError> {
    let anchor = docs[i]
        .image
        .image_similarity_embedding
        .as_ref()
        .expect("checked above");
    let mut ranked = others
        .into_iter()
        .map(|j| {
            let v = docs[j]
                .image
                .image_similarity_embedding
                .as_ref()
                .expect("checked above");
            cosine(anchor, v)
                .map(|s| (j, s))
                .map_err(|e| TamperError::InvalidStrategy(e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let k = ceil_count(fraction, ranked.len());
    let order = |a: &(usize, f64), b: &(usize, f64)| {
        b.1.total_cmp(&a.1)
            .then_with(|| docs[a.0].doc_id.cmp(&docs[b.0].doc_id))
    };
    if k < ranked.len() {
        ranked.select_nth_unstable_by(k - 1, order);
        ranked.truncate(k);
    }
    ranked.sort_by(order);
    Ok(ranked.into_iter().map(|(j, _)| j).collect())
}

/// Builds a test set for whichever measure the strategy targets.
pub fn tamper_corpus(
    corpus: &CorpusManifest,
    strategy: TamperStrategy,
    seed: u64,
) -> Result<TamperedTestSet, TamperError> {
    match strategy.entity_type() {
        Some(t) => tamper_entities(corpus, t, strategy, seed),
        None => tamper_context(corpus, strategy, seed),
    }
}
