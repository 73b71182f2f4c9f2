use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::{extract_features, FeatureConfig, FeatureVector};
use super::model::{softmax, SoftmaxModel};
use super::ClassifierError;
use crate::category::ContentCategory;
use crate::scalar::Scalar;

const K: usize = ContentCategory::COUNT;

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample<T> {
    pub features: FeatureVector<T>,
    pub label: ContentCategory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub samples: Vec<LabeledSample<T>>,
    pub split: Split,
}

impl<T: Scalar> Dataset<T> {
    /// Rejects datasets whose samples disagree on dimension.
    pub fn new(samples: Vec<LabeledSample<T>>, split: Split) -> Result<Self, ClassifierError> {
        if let Some(first) = samples.first() {
            let d = first.features.dim();
            if let Some(bad) = samples.iter().find(|s| s.features.dim() != d) {
                return Err(ClassifierError::DimensionMismatch { expected: d, got: bad.features.dim() });
            }
        }
        Ok(Self { samples, split })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-class shuffled split: `train_fraction` of each class goes to the
    /// training set, the rest to the test set.
    pub fn stratified_split(self, train_fraction: f64, seed: u64) -> (Dataset<T>, Dataset<T>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut by_class: [Vec<LabeledSample<T>>; K] = Default::default();
        for s in self.samples {
            by_class[s.label.index()].push(s);
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for mut group in by_class {
            group.shuffle(&mut rng);
            let cut = (group.len() as f64 * train_fraction).round() as usize;
            let rest = group.split_off(cut.min(group.len()));
            train.extend(group);
            test.extend(rest);
        }
        (
            Dataset { samples: train, split: Split::Train },
            Dataset { samples: test, split: Split::Test },
        )
    }

    /// Loads a fixture tree: one sub-directory per category label, each
    /// holding image files. Unknown sub-directories are an error.
    pub fn from_fixture_dir(root: &Path, config: &FeatureConfig, split: Split) -> Result<Self, ClassifierError> {
        let mut files = Vec::new();
        for entry in std::fs::read_dir(root).map_err(|e| ClassifierError::io(root, e))? {
            let entry = entry.map_err(|e| ClassifierError::io(root, e))?;
            if !entry.path().is_dir() {
                continue;
            }
            let name = entry.file_name().to_string_lossy().into_owned();
            let label: ContentCategory = name
                .parse()
                .map_err(|_| ClassifierError::BadConfig(format!("unknown category directory {name:?}")))?;
            let mut paths: Vec<_> = walkdir::WalkDir::new(entry.path())
                .into_iter()
                .filter_map(Result::ok)
                .filter(|e| e.file_type().is_file())
                .map(|e| e.into_path())
                .collect();
            paths.sort();
            files.extend(paths.into_iter().map(|p| (p, label)));
        }
        files.sort();
        let samples = files
            .par_iter()
            .map(|(path, label)| {
                let bytes = std::fs::read(path).map_err(|e| ClassifierError::io(path, e))?;
                Ok(LabeledSample { features: extract_features(&bytes, config)?, label: *label })
            })
            .collect::<Result<Vec<_>, ClassifierError>>()?;
        Self::new(samples, split)
    }
}

/// Gradient of the mean cross-entropy with respect to weights and bias,
/// laid out like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Gradient<T> {
    pub fn norm(&self) -> T {
        self.weights.iter().chain(&self.bias).fold(T::zero(), |a, &g| a + g * g).sqrt()
    }
}

fn check_model_fits<T: Scalar>(model: &SoftmaxModel<T>, data: &Dataset<T>) -> Result<(), ClassifierError> {
    if data.is_empty() {
        return Err(ClassifierError::EmptyDataset);
    }
    let d = data.samples[0].features.dim();
    if d != model.dim() {
        return Err(ClassifierError::DimensionMismatch { expected: model.dim(), got: d });
    }
    Ok(())
}

/// Mean over samples of `-ln p(true label)`, via log-sum-exp.
pub fn cross_entropy_loss<T: Scalar>(model: &SoftmaxModel<T>, data: &Dataset<T>) -> Result<T, ClassifierError> {
    check_model_fits(model, data)?;
    let mut total = T::zero();
    for s in &data.samples {
        let z = model.logits(&s.features)?;
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + z.iter().fold(T::zero(), |a, &v| a + (v - max).exp()).ln();
        total = total + (lse - z[s.label.index()]);
    }
    Ok(total / T::from_count(data.len()))
}

/// Analytic gradient: mean over samples of `(p - onehot(y)) x^T` for the
/// weights and `p - onehot(y)` for the bias.
pub fn loss_gradient<T: Scalar>(model: &SoftmaxModel<T>, data: &Dataset<T>) -> Result<Gradient<T>, ClassifierError> {
    check_model_fits(model, data)?;
    let d = model.dim();
    let mut gw = vec![T::zero(); K * d];
    let mut gb = vec![T::zero(); K];
    for s in &data.samples {
        let mut delta = softmax(&model.logits(&s.features)?);
        delta[s.label.index()] = delta[s.label.index()] - T::one();
        let xs = s.features.as_slice();
        for (k, &dk) in delta.iter().enumerate() {
            gb[k] = gb[k] + dk;
            for (g, &x) in gw[k * d..(k + 1) * d].iter_mut().zip(xs) {
                *g = *g + dk * x;
            }
        }
    }
    let n = T::from_count(data.len());
    gw.iter_mut().chain(gb.iter_mut()).for_each(|g| *g = *g / n);
    Ok(Gradient { weights: gw, bias: gb })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Training stops once one epoch improves the loss by less than this.
    pub tolerance: f64,
    /// Recorded for reproducibility; full-batch descent from zero does not
    /// consume randomness.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 0.1, max_epochs: 1000, tolerance: 1e-6, seed: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T: Scalar> {
    pub model: SoftmaxModel<T>,
    /// Loss before the first step followed by the loss after each epoch.
    pub loss_history: Vec<T>,
}

impl<T: Scalar> TrainOutcome<T> {
    pub fn epochs_run(&self) -> usize {
        self.loss_history.len() - 1
    }

    pub fn final_loss(&self) -> T {
        *self.loss_history.last().expect("history starts with the initial loss")
    }
}

/// Full-batch gradient descent from the zero model.
pub fn train<T: Scalar>(
    data: &Dataset<T>,
    extractor: FeatureConfig,
    config: &TrainConfig,
) -> Result<TrainOutcome<T>, ClassifierError> {
    if !config.learning_rate.is_finite() || config.learning_rate <= 0.0 {
        return Err(ClassifierError::BadConfig(format!(
            "learning rate must be positive, got {}",
            config.learning_rate
        )));
    }
    let mut model = SoftmaxModel::zeros(extractor);
    let lr = T::of(config.learning_rate);
    let tol = T::of(config.tolerance);
    let mut history = vec![cross_entropy_loss(&model, data)?];
    for epoch in 1..=config.max_epochs {
        let grad = loss_gradient(&model, data)?;
        let (w, b) = model.params_mut();
        for (p, g) in w.iter_mut().zip(&grad.weights).chain(b.iter_mut().zip(&grad.bias)) {
            *p = *p - lr * *g;
        }
        let loss = cross_entropy_loss(&model, data)?;
        if !loss.is_finite() {
            return Err(ClassifierError::Diverged { epoch });
        }
        let previous = *history.last().expect("non-empty history");
        history.push(loss);
        if previous - loss < tol {
            break;
        }
    }
    model.metadata.name = format!("softmax-histogram-{}", model.extractor.bins_per_channel);
    Ok(TrainOutcome { model, loss_history: history })
}
