//! Photo content classification.
//!
//! The built-in model is multinomial logistic regression over per-channel
//! color histograms, trained by full-batch gradient descent on the mean
//! cross-entropy. Anything implementing [`PhotoClassifier`] can replace it,
//! including an out-of-process model speaking the [`remote`] protocol.

use std::path::{Path, PathBuf};

use thiserror::Error;

pub mod features;
pub mod handle;
pub mod metrics;
pub mod model;
pub mod remote;
pub mod train;

pub use features::{extract_features, FeatureConfig, FeatureVector};
pub use handle::{classify_file, save_model, BuiltinClassifier, Classification, FnClassifier, PhotoClassifier, StubClassifier};
pub use metrics::{
    accuracy, confusion_matrix, per_class_accuracy, private_to_public_leak_rate, ratio_to_f64, ConfusionMatrix,
    MetricError, PerClassAccuracy,
};
pub use model::{argmax, softmax, ModelMetadata, Prediction, SoftmaxModel};
pub use remote::RemoteClassifier;
pub use train::{cross_entropy_loss, loss_gradient, train, Dataset, Gradient, LabeledSample, Split, TrainConfig, TrainOutcome};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("cannot decode image: {0}")]
    Decode(String),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature {0} is not finite")]
    NonFiniteFeature(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid configuration: {0}")]
    BadConfig(String),
    #[error("invalid model: {0}")]
    BadModel(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is not in the fixture table")]
    NotInFixture(PathBuf),
    #[error("remote classifier: {0}")]
    Remote(String),
    #[error("remote classifier timed out")]
    Timeout,
    #[error("remote protocol violation: {0}")]
    Protocol(String),
    /// Catch-all for injected failures in custom classifiers.
    #[error("{0}")]
    Other(String),
}

impl ClassifierError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }
}
