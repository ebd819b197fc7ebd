//! Split conformal prediction for ordinal classifiers.
//!
//! This crate wraps any probabilistic K-way scorer with set-valued
//! predictions that carry a finite-sample marginal coverage guarantee:
//! for a user-chosen risk level `alpha`, the true label lands inside the
//! predicted set with probability at least `1 - alpha`, provided the
//! calibration and test records are exchangeable.
//!
//! The pieces, in pipeline order:
//!
//! * [`label_space`] — ordered label sets and raw-score banding, so
//!   heterogeneous rubrics (e.g. a 1–40 holistic scale) normalise onto a
//!   small ordinal space.
//! * [`dataset`] — probability-record files, manifests, and the seeded
//!   train/calibration/test split.
//! * [`conformal`] — least-ambiguous-classifier scoring, threshold
//!   calibration, and prediction-set construction.
//! * [`metrics`] — point metrics (accuracy, macro-F1, quadratic-weighted
//!   kappa) and set metrics (coverage, set size, singleton rate,
//!   uncertainty-aware accuracy).
//! * [`sim`] — synthetic exchangeable data and Monte-Carlo experiments
//!   that check the coverage guarantee empirically.

pub mod conformal;
pub mod dataset;
pub mod label_space;
pub mod metrics;
pub mod rng;
pub mod sim;
pub mod util;

pub use conformal::{
    calibrate, lac_score, load_model, read_model, read_predictions, save_model, write_model,
    write_predictions, ConformalError, ConformalModel, PredictionSet,
};
pub use dataset::{
    load_manifest, load_records, read_records, split, write_records, write_records_to, DataError,
    Manifest, ProbRecord, RecordSet, SplitReport, SplitSpec,
};
pub use label_space::{BandMap, LabelSpace, LabelSpaceError};
pub use metrics::{
    accuracy, avg_set_size, coverage, evaluate, macro_f1, point_prediction, qwk, singleton_rate,
    uacc, ConfusionMatrix, EvalReport, MetricError,
};
pub use sim::{generate_exchangeable, run_coverage_experiment, SimConfig, SimError, SimResult};
