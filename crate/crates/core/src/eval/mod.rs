//! Document verification and collection retrieval: VA, ROC AUC and AP at
//! fixed recall levels over clean/tampered document pairs.

mod metrics;
mod report;
mod retrieval;

use thiserror::Error;

use crate::tamper::TamperError;

pub use metrics::{
    ap_at_recall, ap_at_recall_with, roc_auc, verification_accuracy, ApMode, OrderDirection,
    RankedCollection, RankedEntry, Variant,
};
pub use report::{ApAtRecall, EvaluationReport, CSV_HEADER};
pub use retrieval::{
    collection_retrieval, collection_retrieval_with, evaluate_pairs, score_pairs, topk_subset, EvalConfig, EvalSubset,
    ScoredPair, DEFAULT_RECALL_LEVELS,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("scores must be finite")]
    NonFinite,
    #[error("recall level {0} outside (0, 1]")]
    InvalidRecall(f64),
    #[error("need {needed} relevant documents, have {available}")]
    InsufficientRelevant { needed: usize, available: usize },
    #[error("unbalanced collection: {0}")]
    Unbalanced(String),
    #[error("subset fraction {0} not supported (use 0.25 or 0.5)")]
    InvalidFraction(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Tamper(#[from] TamperError),
}
