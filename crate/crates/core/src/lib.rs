//! Domain-aware calibration for multiclass classifiers.
//!
//! The loss implemented here is a base cross-entropy term plus a class-similarity
//! penalty `beta * y^T W y_hat`, where `W` is an `N x N` zero-diagonal matrix whose
//! entry `(i, j)` is the cost of predicting class `j` when the truth is class `i`.
//!
//! Modules:
//! - [`data`]: IDX parsing/serialization, synthetic Gaussian blobs, stratified splits.
//! - [`net`]: a small ReLU MLP with exact forward/backward passes.
//! - [`loss`]: cross-entropy, the penalty term, their sum and its gradient.
//! - [`wmatrix`]: penalty matrices from confusion matrices or class hierarchies.
//! - [`train`]: deterministic SGD training and the two-phase confusion pipeline.
//! - [`metrics`]: confusion matrix, accuracy, per-class Brier, reliability bins.

pub mod checkpoint;
pub mod data;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod net;
pub mod rng;
pub mod train;
pub mod wmatrix;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use data::{BlobSpec, DataError, Dataset, ImageSet, LabelSet, SplitFractions};
pub use loss::{LossConfig, LossError, OneHotLabel, Reduction};
pub use matrix::Matrix;
pub use metrics::{CalibrationReport, ConfusionMatrix, MetricsError, ReportMetadata};
pub use net::{ForwardCache, Gradients, ModelParams, NetError};
pub use rng::SplitMix64;
pub use train::{Method, TrainConfig, TrainError, TrainHistory};
pub use wmatrix::{HierarchySpec, PenaltyMatrix, Violation, WMatrixError};

/// Smallest number of classes the loss is defined for. With two classes every
/// confusion is the same confusion and the penalty carries no extra information.
pub const MIN_CLASSES: usize = 3;
