use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};

use super::features::extract_features;
use super::model::SoftmaxModel;
use super::ClassifierError;
use crate::category::ContentCategory;
use crate::scalar::Scalar;

/// A category together with the per-category probabilities in code order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub category: ContentCategory,
    pub probabilities: [f64; ContentCategory::COUNT],
}

impl Classification {
    /// Probability 1 on `category`.
    pub fn certain(category: ContentCategory) -> Self {
        let mut probabilities = [0.0; ContentCategory::COUNT];
        probabilities[category.index()] = 1.0;
        Self { category, probabilities }
    }
}

/// Pluggable classification boundary used by the content store and daemon.
///
/// `path` identifies the photo; `bytes` are its current contents. Failures
/// must be returned, never mapped to a category.
pub trait PhotoClassifier: Send + Sync {
    fn classify(&self, path: &Path, bytes: &[u8]) -> Result<Classification, ClassifierError>;

    fn name(&self) -> String;
}

/// Reads `path` and classifies its bytes.
pub fn classify_file(handle: &dyn PhotoClassifier, path: &Path) -> Result<ContentCategory, ClassifierError> {
    let bytes = std::fs::read(path).map_err(|e| ClassifierError::io(path, e))?;
    Ok(handle.classify(path, &bytes)?.category)
}

/// The built-in softmax model behind the classifier interface.
#[derive(Debug, Clone)]
pub struct BuiltinClassifier<T: Scalar> {
    model: SoftmaxModel<T>,
}

impl<T: Scalar> BuiltinClassifier<T> {
    pub fn new(model: SoftmaxModel<T>) -> Self {
        Self { model }
    }

    pub fn model(&self) -> &SoftmaxModel<T> {
        &self.model
    }

    /// Loads a model saved as JSON by [`save_model`].
    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let text = std::fs::read_to_string(path).map_err(|e| ClassifierError::io(path, e))?;
        let model: SoftmaxModel<T> =
            serde_json::from_str(&text).map_err(|e| ClassifierError::BadModel(format!("{}: {e}", path.display())))?;
        model.validate()?;
        Ok(Self { model })
    }
}

pub fn save_model<T: Scalar>(model: &SoftmaxModel<T>, path: &Path) -> Result<(), ClassifierError> {
    let text = serde_json::to_string(model).map_err(|e| ClassifierError::BadModel(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| ClassifierError::io(path, e))
}

impl<T: Scalar> PhotoClassifier for BuiltinClassifier<T> {
    fn classify(&self, _path: &Path, bytes: &[u8]) -> Result<Classification, ClassifierError> {
        let x = extract_features::<T>(bytes, &self.model.extractor)?;
        let pred = self.model.predict(&x)?;
        Ok(Classification {
            category: pred.category,
            probabilities: pred.probabilities.map(Scalar::as_f64),
        })
    }

    fn name(&self) -> String {
        format!("builtin:{}", self.model.metadata.name)
    }
}

/// Fixture table mapping paths to categories.
///
/// Lookups try the exact path, then its canonical form, then the bare file
/// name. Paths missing from the table are an error.
#[derive(Debug, Clone, Default)]
pub struct StubClassifier {
    table: HashMap<PathBuf, ContentCategory>,
}

impl StubClassifier {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, path: impl Into<PathBuf>, category: ContentCategory) -> Self {
        self.insert(path, category);
        self
    }

    pub fn insert(&mut self, path: impl Into<PathBuf>, category: ContentCategory) {
        self.table.insert(path.into(), category);
    }

    /// Parses `<label> <path>` lines; `#` starts a comment.
    pub fn parse_table(text: &str) -> Result<Self, ClassifierError> {
        let mut stub = Self::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (label, path) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| ClassifierError::BadConfig(format!("stub table line {}: expected `<label> <path>`", i + 1)))?;
            let category = label
                .parse()
                .map_err(|e| ClassifierError::BadConfig(format!("stub table line {}: {e}", i + 1)))?;
            stub.insert(path.trim(), category);
        }
        Ok(stub)
    }

    pub fn lookup(&self, path: &Path) -> Option<ContentCategory> {
        if let Some(c) = self.table.get(path) {
            return Some(*c);
        }
        if let Ok(canon) = path.canonicalize() {
            if let Some(c) = self.table.get(&canon) {
                return Some(*c);
            }
        }
        let name = path.file_name()?;
        self.table.get(Path::new(name)).copied()
    }
}

impl PhotoClassifier for StubClassifier {
    fn classify(&self, path: &Path, _bytes: &[u8]) -> Result<Classification, ClassifierError> {
        self.lookup(path)
            .map(Classification::certain)
            .ok_or_else(|| ClassifierError::NotInFixture(path.to_path_buf()))
    }

    fn name(&self) -> String {
        format!("stub:{} entries", self.table.len())
    }
}

/// Adapter turning a closure into a classifier; handy for instrumented
/// tests and content-derived fixtures.
pub struct FnClassifier<F> {
    name: String,
    f: F,
}

impl<F> FnClassifier<F>
where
    F: Fn(&Path, &[u8]) -> Result<ContentCategory, ClassifierError> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> fmt::Debug for FnClassifier<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnClassifier").field("name", &self.name).finish()
    }
}

impl<F> PhotoClassifier for FnClassifier<F>
where
    F: Fn(&Path, &[u8]) -> Result<ContentCategory, ClassifierError> + Send + Sync,
{
    fn classify(&self, path: &Path, bytes: &[u8]) -> Result<Classification, ClassifierError> {
        (self.f)(path, bytes).map(Classification::certain)
    }

    fn name(&self) -> String {
        self.name.clone()
    }
}
