//! Verification accuracy, ROC AUC and average precision at a recall level.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::util::ceil_count;

fn check_finite(values: impl IntoIterator<Item = f64>) -> Result<(), EvalError> {
    if values.into_iter().all(f64::is_finite) {
        Ok(())
    } else {
        Err(EvalError::NonFinite)
    }
}

/// Fraction of `(clean, tampered)` pairs where the clean score is strictly
/// higher. Ties count as failures.
pub fn verification_accuracy(pairs: &[(f64, f64)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    check_finite(pairs.iter().flat_map(|(c, t)| [*c, *t]))?;
    let wins = pairs.iter().filter(|(c, t)| c > t).count();
    Ok(wins as f64 / pairs.len() as f64)
}

/// Mann-Whitney AUC with clean as the positive class: the probability that a
/// clean score beats a tampered one, ties counting one half.
pub fn roc_auc(clean: &[f64], tampered: &[f64]) -> Result<f64, EvalError> {
    if clean.is_empty() || tampered.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    check_finite(clean.iter().chain(tampered).copied())?;
    let mut sorted = tampered.to_vec();
    sorted.sort_by(f64::total_cmp);
    // twice the U statistic, exact in integers
    let mut doubled: u128 = 0;
    for &c in clean {
        let below = sorted.partition_point(|&t| t < c);
        let not_above = sorted.partition_point(|&t| t <= c);
        doubled += 2 * below as u128 + (not_above - below) as u128;
    }
    let pairs = clean.len() as u128 * tampered.len() as u128;
    Ok((doubled as f64 / 2.0) / pairs as f64)
}

/// Which half of the collection a document belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Clean,
    Tampered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderDirection {
    Descending,
    Ascending,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub doc_id: String,
    pub variant: Variant,
    pub score: f64,
}

/// The clean and tampered versions of |D| documents, 2|D| entries, ordered by
/// score. Equal scores are ordered by doc_id, then clean before tampered.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedCollection {
    entries: Vec<RankedEntry>,
    direction: OrderDirection,
}

impl RankedCollection {
    pub fn new(mut entries: Vec<RankedEntry>, direction: OrderDirection) -> Result<Self, EvalError> {
        check_finite(entries.iter().map(|e| e.score))?;
        let mut seen: BTreeMap<&str, [usize; 2]> = BTreeMap::new();
        for e in &entries {
            let slot = match e.variant {
                Variant::Clean => 0,
                Variant::Tampered => 1,
            };
            seen.entry(e.doc_id.as_str()).or_default()[slot] += 1;
        }
        if let Some((doc, counts)) = seen.iter().find(|(_, c)| **c != [1, 1]) {
            return Err(EvalError::Unbalanced(format!(
                "document {doc:?} has {} clean and {} tampered entries",
                counts[0], counts[1]
            )));
        }
        entries.sort_by(|a, b| {
            let by_score = match direction {
                OrderDirection::Descending => b.score.total_cmp(&a.score),
                OrderDirection::Ascending => a.score.total_cmp(&b.score),
            };
            by_score
                .then_with(|| a.doc_id.cmp(&b.doc_id))
                .then_with(|| a.variant.cmp(&b.variant))
        });
        Ok(Self { entries, direction })
    }

    /// Builds the collection from `(doc_id, clean_score, tampered_score)`.
    pub fn from_pairs<'a>(
        pairs: impl IntoIterator<Item = (&'a str, f64, f64)>,
        direction: OrderDirection,
    ) -> Result<Self, EvalError> {
        let entries = pairs
            .into_iter()
            .flat_map(|(doc, c, t)| {
                [
                    RankedEntry {
                        doc_id: doc.to_string(),
                        variant: Variant::Clean,
                        score: c,
                    },
                    RankedEntry {
                        doc_id: doc.to_string(),
                        variant: Variant::Tampered,
                        score: t,
                    },
                ]
            })
            .collect();
        Self::new(entries, direction)
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn direction(&self) -> OrderDirection {
        self.direction
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Summation rule for average precision.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApMode {
    /// Precision summed at relevant positions only.
    #[default]
    Standard,
    /// Precision summed at every position up to the cutoff rank.
    Literal,
}

/// Average precision over the ranking, truncated where `ceil(recall * n)` of
/// the `n` relevant documents have been retrieved.
pub fn ap_at_recall(
    ranking: &RankedCollection,
    relevant: Variant,
    recall: f64,
) -> Result<f64, EvalError> {
    ap_at_recall_with(ranking, relevant, recall, ApMode::Standard)
}

pub fn ap_at_recall_with(
    ranking: &RankedCollection,
    relevant: Variant,
    recall: f64,
    mode: ApMode,
) -> Result<f64, EvalError> {
    if !(recall > 0.0 && recall <= 1.0) {
        return Err(EvalError::InvalidRecall(recall));
    }
    let n_relevant = ranking
        .entries
        .iter()
        .filter(|e| e.variant == relevant)
        .count();
    if n_relevant == 0 {
        return Err(EvalError::InsufficientRelevant {
            needed: 1,
            available: 0,
        });
    }
    let cutoff = ceil_count(recall, n_relevant);
    let mut hits = 0usize;
    let mut total = 0.0;
    for (i, e) in ranking.entries.iter().enumerate() {
        let is_hit = e.variant == relevant;
        if is_hit {
            hits += 1;
        }
        if is_hit || mode == ApMode::Literal {
            total += hits as f64 / (i + 1) as f64;
        }
        if hits == cutoff {
            return Ok(total / cutoff as f64);
        }
    }
    unreachable!("cutoff never exceeds the relevant count")
}
