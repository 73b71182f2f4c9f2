use serde::{Deserialize, Serialize};

use super::features::{FeatureConfig, FeatureVector};
use super::ClassifierError;
use crate::category::ContentCategory;
use crate::scalar::Scalar;

const K: usize = ContentCategory::COUNT;

/// Descriptive metadata so externally trained models can report size and
/// accuracy alongside the built-in one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub name: String,
    pub size_bytes: u64,
    pub reported_accuracy: Option<f64>,
}

/// Multinomial logistic regression over histogram features.
///
/// `weights` is stored row-major, one row of length `dim` per category in
/// code order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SoftmaxModel<T: Scalar> {
    weights: Vec<T>,
    bias: Vec<T>,
    pub extractor: FeatureConfig,
    pub metadata: ModelMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T> {
    pub category: ContentCategory,
    pub probabilities: [T; K],
}

impl<T: Scalar> SoftmaxModel<T> {
    /// All-zero parameters: uniform output for every input.
    pub fn zeros(extractor: FeatureConfig) -> Self {
        let dim = extractor.dimension();
        Self::from_parts(vec![T::zero(); K * dim], vec![T::zero(); K], extractor)
            .expect("zero model is well formed")
    }

    pub fn from_parts(weights: Vec<T>, bias: Vec<T>, extractor: FeatureConfig) -> Result<Self, ClassifierError> {
        let model = Self {
            weights,
            bias,
            extractor,
            metadata: ModelMetadata {
                name: "softmax-histogram".into(),
                size_bytes: 0,
                reported_accuracy: None,
            },
        };
        model.validate()?;
        let mut model = model;
        model.metadata.size_bytes = ((K * model.dim() + K) * std::mem::size_of::<T>()) as u64;
        Ok(model)
    }

    /// Checks shape and finiteness; used after deserialization.
    pub fn validate(&self) -> Result<(), ClassifierError> {
        let dim = self.extractor.dimension();
        if self.weights.len() != K * dim || self.bias.len() != K {
            return Err(ClassifierError::BadModel(format!(
                "expected {}x{} weights and {} biases, got {} and {}",
                K,
                dim,
                K,
                self.weights.len(),
                self.bias.len()
            )));
        }
        if self.weights.iter().chain(&self.bias).any(|v| !v.is_finite()) {
            return Err(ClassifierError::BadModel("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.extractor.dimension()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn bias(&self) -> &[T] {
        &self.bias
    }

    pub fn weight_row(&self, class: usize) -> &[T] {
        let d = self.dim();
        &self.weights[class * d..(class + 1) * d]
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [T], &mut [T]) {
        (&mut self.weights, &mut self.bias)
    }

    pub fn logits(&self, x: &FeatureVector<T>) -> Result<[T; K], ClassifierError> {
        if x.dim() != self.dim() {
            return Err(ClassifierError::DimensionMismatch { expected: self.dim(), got: x.dim() });
        }
        let xs = x.as_slice();
        let mut z = [T::zero(); K];
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = self
                .weight_row(k)
                .iter()
                .zip(xs)
                .fold(self.bias[k], |acc, (&w, &v)| acc + w * v);
        }
        Ok(z)
    }

    pub fn probabilities(&self, x: &FeatureVector<T>) -> Result<[T; K], ClassifierError> {
        Ok(softmax(&self.logits(x)?))
    }

    pub fn predict(&self, x: &FeatureVector<T>) -> Result<Prediction<T>, ClassifierError> {
        let probabilities = self.probabilities(x)?;
        let category = ContentCategory::from_index(argmax(&probabilities)).expect("index below 5");
        Ok(Prediction { category, probabilities })
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(z: &[T; K]) -> [T; K] {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out = [T::zero(); K];
    let mut sum = T::zero();
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - max).exp();
        sum = sum + *o;
    }
    for o in &mut out {
        *o = *o / sum;
    }
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
