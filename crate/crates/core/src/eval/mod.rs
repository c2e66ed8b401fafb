//! Prediction rules, ranking metrics and evaluation reports.

mod metrics;
mod report;

pub use metrics::{
    prf1, rank_indices, rank_objects, recall_at_k, select_antecedents, Prf1, RankedObject,
    RankedPrediction,
};
pub use report::{
    default_root_categories, evaluate, pronoun_id, summarize, write_predictions_jsonl,
    CategoryRecall, EvalOptions, Evaluation, InTextMetrics, MetricsReport, PronounOutcome,
    RecallAtK, IN_TEXT_CONVENTION,
};
