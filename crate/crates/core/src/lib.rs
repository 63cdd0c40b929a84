//! Robust online metric learning.
//!
//! Learners consume triplets `(anchor, positive, negative)` one at a time and
//! update either a full-rank matrix `M` or a low-rank factor `L`, down-weighting
//! triplets whose hinge loss is large (likely produced by mislabeled points).
//! The per-instance weights they emit drive a kNN classifier that drops the
//! least trusted training points.

// `!(x > 0.0)` style guards are how NaN gets rejected here
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod learners;
pub mod loss;
pub mod model;
pub mod persist;
pub mod triplets;

pub use data::{load_csv, load_libsvm, Dataset, Preprocessor};
pub use error::{Error, Result};
pub use eval::{
    confusion, evaluate, inject_label_noise, kfold_cv, metrics, score, ConfusionMatrix, CvReport,
    MetricReport, RobustKnn,
};
pub use experiment::{
    fit_pipeline, triplet_stats, DataFormat, ExperimentConfig, FittedPipeline, Method,
    ResultRecord, TripletSource,
};
pub use learners::{Algorithm, Learner, LowRankOptions, TripletOutcome};
pub use loss::RobustParams;
pub use model::{FullRankMetric, LowRankTransform, MeasureKind, Metric, Triplet};
pub use persist::{read_model, write_model, ModelFile};
pub use triplets::{ClusterCenters, OctgOptions, TripletStats};
