//! Iterative random-forest imputation for prediction settings.
//!
//! Every column with missing values is first filled with a simple
//! initialization (mean/mode, median/mode or user constants) and then
//! re-imputed, variable by variable, with random forests trained on the
//! rows where that variable is observed. Iterations continue while the
//! weighted out-of-bag NMSE keeps decreasing. The initialization, the
//! imputation sequence and every per-variable forest are kept in an
//! [`ImputationModel`](imputer::ImputationModel), so the exact same
//! procedure can be replayed later on new observations, including a single
//! row.
//!
//! Alongside the imputer the crate ships the pieces needed to study it:
//! missingness simulators ([`ampute`]), a correlated-Gaussian dataset
//! generator with a calibrated logistic outcome ([`simgen`]), evaluation
//! metrics ([`metrics`]) and a split/ampute/fit/impute/evaluate loop
//! ([`evaluate`]).

pub mod ampute;
pub mod evaluate;
pub mod forest;
pub mod imputer;
pub mod metrics;
pub mod rng;
pub mod simgen;
pub mod tabular;

pub use ampute::{ampute, AmputationSpec, Mechanism};
pub use forest::{fit_forest, FeatureKind, FeatureMatrix, Forest, ForestMode, ForestParams};
pub use imputer::{fit, load_model, save_model, transform, ImputationModel, ImputerConfig};
pub use tabular::{Column, ColumnKind, Dataset};
