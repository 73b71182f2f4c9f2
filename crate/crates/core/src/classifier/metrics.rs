//! Accuracy, confusion matrices and the private-to-public leak rate.
//!
//! Ratios derived from counts are kept exact (`Ratio<u64>`); convert with
//! [`ratio_to_f64`] only for display or tolerance checks.

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::SoftmaxModel;
use super::train::Dataset;
use super::ClassifierError;
use crate::category::ContentCategory;
use crate::scalar::Scalar;

const K: usize = ContentCategory::COUNT;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("no private samples; leak rate is undefined")]
    NoPrivateSamples,
}

pub fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Fraction of samples whose prediction equals the label.
pub fn accuracy<T: Scalar>(model: &SoftmaxModel<T>, data: &Dataset<T>) -> Result<T, ClassifierError> {
    if data.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let mut hits = 0usize;
    for s in &data.samples {
        if model.predict(&s.features)?.category == s.label {
            hits += 1;
        }
    }
    Ok(T::from_count(hits) / T::from_count(data.len()))
}

/// Rows are actual categories, columns predicted, both in code order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[u64; K]; K],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_counts(counts: [[u64; K]; K]) -> Self {
        Self { counts }
    }

    pub fn record(&mut self, actual: ContentCategory, predicted: ContentCategory) {
        self.counts[actual.index()][predicted.index()] += 1;
    }

    pub fn get(&self, actual: ContentCategory, predicted: ContentCategory) -> u64 {
        self.counts[actual.index()][predicted.index()]
    }

    pub fn counts(&self) -> &[[u64; K]; K] {
        &self.counts
    }

    pub fn row_sum(&self, actual: ContentCategory) -> u64 {
        self.counts[actual.index()].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..K).map(|i| self.counts[i][i]).sum()
    }

    /// `trace / total`, or `None` for an empty matrix.
    pub fn overall_accuracy(&self) -> Option<Ratio<u64>> {
        let total = self.total();
        (total > 0).then(|| Ratio::new(self.trace(), total))
    }
}

pub fn confusion_matrix<T: Scalar>(model: &SoftmaxModel<T>, data: &Dataset<T>) -> Result<ConfusionMatrix, ClassifierError> {
    if data.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let mut cm = ConfusionMatrix::new();
    for s in &data.samples {
        cm.record(s.label, model.predict(&s.features)?.category);
    }
    Ok(cm)
}

/// Per-category recall. A category with no samples is `None`, not zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerClassAccuracy {
    values: [Option<Ratio<u64>>; K],
}

impl PerClassAccuracy {
    pub fn get(&self, category: ContentCategory) -> Option<Ratio<u64>> {
        self.values[category.index()]
    }

    pub fn get_f64(&self, category: ContentCategory) -> Option<f64> {
        self.get(category).map(ratio_to_f64)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ContentCategory, Option<Ratio<u64>>)> + '_ {
        ContentCategory::ALL.into_iter().map(|c| (c, self.get(c)))
    }
}

pub fn per_class_accuracy(cm: &ConfusionMatrix) -> PerClassAccuracy {
    let mut values = [None; K];
    for c in ContentCategory::ALL {
        let row = cm.row_sum(c);
        if row > 0 {
            values[c.index()] = Some(Ratio::new(cm.get(c, c), row));
        }
    }
    PerClassAccuracy { values }
}

/// Share of actually-private samples predicted as public.
pub fn private_to_public_leak_rate(cm: &ConfusionMatrix) -> Result<Ratio<u64>, MetricError> {
    let private: Vec<_> = ContentCategory::ALL.into_iter().filter(|c| c.is_private()).collect();
    let total: u64 = private.iter().map(|&c| cm.row_sum(c)).sum();
    if total == 0 {
        return Err(MetricError::NoPrivateSamples);
    }
    let leaked: u64 = private.iter().map(|&c| cm.get(c, ContentCategory::Public)).sum();
    Ok(Ratio::new(leaked, total))
}
