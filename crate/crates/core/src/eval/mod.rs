//! Embedding-quality and ranking metrics, plus the scripted desk-scale experiments.

pub mod experiments;
pub mod fixtures;
mod metrics;

pub use metrics::{
    auc_roc, language_score_table, precision_at_k, psamecat, LanguageGroup, LanguageScoreTable,
    LanguageScored, MetricsDoc, PSameCatConfig, PSameCatReport, RankLevel, RankedItem, RankedList,
    ScoreCell,
};
