//! Item Response Theory evaluation of binary classifiers.
//!
//! Predictions of many classifiers on a labelled test set form a response
//! matrix. Calibrating a 3PL model on it gives every instance a
//! discrimination, difficulty and guessing parameter; each evaluated model
//! then gets an ability, True and Total Scores, a per-cell breakdown of its
//! confusion matrix, and a rank-based comparison against classic metrics.
//!
//! The model math ([`irt`], ability estimation, [`evaluation`]) is generic
//! over [`Scalar`] (`f32` or `f64`). Calibration, statistics and synthesis
//! run in `f64`.

pub mod calibration;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod irt;
pub mod pipeline;
pub mod scalar;
pub mod stats;
pub mod synthesis;

pub use calibration::{
    birnbaum_fit, calibrate_items, estimate_abilities, estimate_ability, CalibrationConfig,
    CalibrationResult,
};
pub use data::{
    BinaryOutcome, ConfusionCell, ConfusionPartition, LabeledInstance, ModelPredictions,
    ResponseMatrix,
};
pub use error::{Error, Result};
pub use evaluation::{classic_metrics, rank_models, ClassicMetrics, Metric, MetricTable};
pub use irt::{item_information, prob_correct, total_score, true_score};
pub use scalar::Scalar;
pub use stats::{
    compare, friedman_test, nemenyi_test, studentized_range_sf, ScoreTable, TestReport,
};

pub type Item = data::ItemParameters<f64>;
pub type Item32 = data::ItemParameters<f32>;
pub type Ability = data::AbilityEstimate<f64>;
pub type Ability32 = data::AbilityEstimate<f32>;
pub type Metrics = evaluation::ClassicMetrics<f64>;
pub type Metrics32 = evaluation::ClassicMetrics<f32>;
pub type Iccmc = evaluation::Iccmc<f64>;
