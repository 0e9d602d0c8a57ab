//! Accuracy metrics, cross-validation, and the analysis procedures run on a
//! fitted model: initial-position cohorts, quality versus popularity, top-k
//! overlap and normalized growth rates.

mod analysis;
mod cv;
mod metrics;

pub use analysis::{
    final_scores_from_observations, initial_position_analysis, normalized_growth_rate,
    quality_popularity_report, topk_overlap, CohortRule, PageSummary, QualityPopularity,
};
pub use cv::{fold_assignment, kfold_cv, model_comparison, CvOptions, CvPrediction, CvReport, FoldCoverage, ModelComparison, ModelComparisonRow};
pub use metrics::{average_ranks, metrics, pearson, spearman, MetricsReport};
