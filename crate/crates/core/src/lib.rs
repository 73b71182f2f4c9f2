//! Content-aware, context-aware access control for photo files.
//!
//! Photos are classified into five privacy categories and cached in a
//! [`store::ContentStore`]. Each access request is then gated on lock state,
//! app run state and the cached category by [`policy::decide`]; foreground
//! access to private content is left to a human prompt.

pub mod category;
pub mod classifier;
pub mod manifest;
pub mod policy;
pub mod scalar;
pub mod sim;
pub mod store;
pub mod synthetic;

pub use category::ContentCategory;
pub use policy::{
    decide, decide_assessed, decision_table, requires_control, resolve_prompt, AccessRequest, AppRunState,
    ContentAssessment, ExtensionSet, PolicyDecision, Reason, SystemStatus, UserChoice, Verdict, Whitelist,
};
pub use scalar::Scalar;
pub use store::{ContentRecord, ContentStore, Fingerprint, PhotoLibrary};

/// Built-in model in double precision.
pub type Model = classifier::SoftmaxModel<f64>;
/// Built-in model in single precision.
pub type Model32 = classifier::SoftmaxModel<f32>;
pub type Features = classifier::FeatureVector<f64>;
pub type Dataset = classifier::Dataset<f64>;
pub type Builtin = classifier::BuiltinClassifier<f64>;
