use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{
    ap_at_recall_with, roc_auc, verification_accuracy, ApMode, OrderDirection, RankedCollection,
    Variant,
};
use super::report::{ApAtRecall, EvaluationReport};
use super::EvalError;
use crate::model::CorpusManifest;
use crate::simeng::{MeasureKind, ScoredDocument, Scorer, ScoringConfig};
use crate::tamper::{TamperError, TamperedTestSet};
use crate::util::ceil_count;

pub const DEFAULT_RECALL_LEVELS: [f64; 3] = [0.25, 0.5, 1.0];

const SUBSET_FRACTIONS: [f64; 2] = [0.25, 0.5];

/// Which documents enter an evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EvalSubset {
    #[default]
    All,
    /// Documents whose clean score is in the top fraction.
    Top(f64),
}

impl EvalSubset {
    pub fn validate(self) -> Result<Self, EvalError> {
        match self {
            EvalSubset::Top(f) if !SUBSET_FRACTIONS.contains(&f) => {
                Err(EvalError::InvalidFraction(f))
            }
            s => Ok(s),
        }
    }

    pub fn fraction(self) -> Option<f64> {
        match self {
            EvalSubset::All => None,
            EvalSubset::Top(f) => Some(f),
        }
    }
}

impl fmt::Display for EvalSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalSubset::All => f.write_str("all"),
            EvalSubset::Top(x) => write!(f, "top{}", x * 100.0),
        }
    }
}

impl FromStr for EvalSubset {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "all" {
            return Ok(EvalSubset::All);
        }
        let pct: f64 = s
            .strip_prefix("top")
            .and_then(|p| p.trim_end_matches('%').parse().ok())
            .ok_or_else(|| EvalError::Config(format!("unknown subset {s:?}")))?;
        EvalSubset::Top(pct / 100.0).validate()
    }
}

impl TryFrom<String> for EvalSubset {
    type Error = EvalError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<EvalSubset> for String {
    fn from(s: EvalSubset) -> Self {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    #[serde(default)]
    pub scoring: ScoringConfig,
    #[serde(default)]
    pub subset: EvalSubset,
    #[serde(default = "default_levels")]
    pub recall_levels: Vec<f64>,
    #[serde(default)]
    pub ap_mode: ApMode,
}

fn default_levels() -> Vec<f64> {
    DEFAULT_RECALL_LEVELS.to_vec()
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            scoring: ScoringConfig::default(),
            subset: EvalSubset::All,
            recall_levels: default_levels(),
            ap_mode: ApMode::Standard,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        self.scoring
            .validate()
            .map_err(|e| EvalError::Config(e.to_string()))?;
        self.subset.validate()?;
        if self.recall_levels.is_empty() {
            return Err(EvalError::Config("no recall levels".into()));
        }
        if let Some(r) = self
            .recall_levels
            .iter()
            .find(|r| !DEFAULT_RECALL_LEVELS.contains(r))
        {
            return Err(EvalError::InvalidRecall(*r));
        }
        Ok(())
    }
}

/// Clean and tampered scores of one document under the test set's measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub doc_id: String,
    pub clean: f64,
    pub tampered: f64,
}

/// Scores both variants of every test-set document. Documents where either
/// variant has no value for the measure are counted, not returned.
pub fn score_pairs(
    scorer: &Scorer<'_>,
    testset: &TamperedTestSet,
) -> Result<(Vec<ScoredPair>, usize), EvalError> {
    let corpus = scorer.corpus();
    testset.check_corpus(corpus)?;
    let kind = testset.target();
    let ids: Vec<&String> = testset.substitutions.keys().collect();
    let scored = ids
        .par_iter()
        .map(|id| {
            let clean = corpus.document(id).expect("checked against corpus");
            let tampered = testset.tampered_document(corpus, id).ok_or_else(|| {
                TamperError::CorpusMismatch(format!("cannot rebuild tampered document {id:?}"))
            })?;
            let c = scorer.measure_value(clean, kind);
            let t = scorer.measure_value(&tampered, kind);
            Ok(c.zip(t).map(|(clean, tampered)| ScoredPair {
                doc_id: id.to_string(),
                clean,
                tampered,
            }))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let excluded = scored.iter().filter(|p| p.is_none()).count();
    Ok((scored.into_iter().flatten().collect(), excluded))
}

fn top_fraction<'a>(
    values: impl IntoIterator<Item = (&'a str, f64)>,
    fraction: f64,
) -> Result<BTreeSet<String>, EvalError> {
    EvalSubset::Top(fraction).validate()?;
    let mut ranked: Vec<(&str, f64)> = values.into_iter().collect();
    if ranked.is_empty() {
        return Ok(BTreeSet::new());
    }
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let k = ceil_count(fraction, ranked.len());
    Ok(ranked[..k].iter().map(|(id, _)| id.to_string()).collect())
}

/// The `ceil(fraction * N)` documents with the highest value of `kind` among
/// the N that have one. Ties go to the smaller doc_id.
pub fn topk_subset(
    scored: &[ScoredDocument],
    kind: MeasureKind,
    fraction: f64,
) -> Result<BTreeSet<String>, EvalError> {
    top_fraction(
        scored
            .iter()
            .filter_map(|d| d.value(kind).map(|v| (d.doc_id.as_str(), v))),
        fraction,
    )
}

/// VA, AUC and AP at each recall level over already-scored pairs.
pub fn evaluate_pairs(
    pairs: &[ScoredPair],
    recall_levels: &[f64],
    mode: ApMode,
) -> Result<(f64, f64, Vec<ApAtRecall>, Vec<ApAtRecall>), EvalError> {
    let tuples: Vec<(f64, f64)> = pairs.iter().map(|p| (p.clean, p.tampered)).collect();
    let va = verification_accuracy(&tuples)?;
    let clean: Vec<f64> = pairs.iter().map(|p| p.clean).collect();
    let tampered: Vec<f64> = pairs.iter().map(|p| p.tampered).collect();
    let auc = roc_auc(&clean, &tampered)?;
    let as_triples = || pairs.iter().map(|p| (p.doc_id.as_str(), p.clean, p.tampered));
    let desc = RankedCollection::from_pairs(as_triples(), OrderDirection::Descending)?;
    let asc = RankedCollection::from_pairs(as_triples(), OrderDirection::Ascending)?;
    let levels = |ranking: &RankedCollection, relevant| {
        recall_levels
            .iter()
            .map(|&recall| {
                Ok(ApAtRecall {
                    recall,
                    ap: ap_at_recall_with(ranking, relevant, recall, mode)?,
                })
            })
            .collect::<Result<Vec<_>, EvalError>>()
    };
    let ap_clean = levels(&desc, Variant::Clean)?;
    let ap_tampered = levels(&asc, Variant::Tampered)?;
    Ok((va, auc, ap_clean, ap_tampered))
}

/// Scores every clean/tampered pair of the test set and evaluates both tasks.
pub fn collection_retrieval(
    corpus: &CorpusManifest,
    testset: &TamperedTestSet,
    config: &EvalConfig,
) -> Result<EvaluationReport, EvalError> {
    config.validate()?;
    let scorer = Scorer::new(corpus, config.scoring);
    collection_retrieval_with(&scorer, testset, config)
}

/// As [`collection_retrieval`], reusing a scorer built with `config.scoring`.
pub fn collection_retrieval_with(
    scorer: &Scorer<'_>,
    testset: &TamperedTestSet,
    config: &EvalConfig,
) -> Result<EvaluationReport, EvalError> {
    config.validate()?;
    if *scorer.config() != config.scoring {
        return Err(EvalError::Config(
            "scorer was built with a different scoring config".into(),
        ));
    }
    let (mut pairs, n_excluded) = score_pairs(scorer, testset)?;
    if let Some(f) = config.subset.fraction() {
        let keep = top_fraction(pairs.iter().map(|p| (p.doc_id.as_str(), p.clean)), f)?;
        pairs.retain(|p| keep.contains(&p.doc_id));
    }
    let (va, auc, ap_clean, ap_tampered) =
        evaluate_pairs(&pairs, &config.recall_levels, config.ap_mode)?;
    Ok(EvaluationReport {
        corpus_id: testset.corpus_id.clone(),
        measure: testset.target(),
        test_set: testset.strategy.label(),
        strategy: testset.strategy,
        seed: testset.seed,
        subset: config.subset,
        ap_mode: config.ap_mode,
        scoring: scorer.config().measure_key(testset.target()),
        n_documents: pairs.len(),
        n_excluded,
        va,
        auc,
        ap_clean,
        ap_tampered,
    })
}
