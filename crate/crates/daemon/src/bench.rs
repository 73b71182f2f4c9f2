//! Cached lookup versus synchronous classification latency.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use photoguard_core::classifier::PhotoClassifier;
use photoguard_core::store::photo_id_for;
use photoguard_core::ContentStore;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("need {wanted} photos but the store has {available}")]
    NotEnoughPhotos { wanted: usize, available: usize },
    #[error("photos and trials must both be at least 1")]
    Empty,
    #[error("{path}: {message}")]
    Photo { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Serialize)]
pub struct TimingReport {
    pub photos: usize,
    pub trials: usize,
    /// One sample per photo per trial, in milliseconds.
    pub lookup_ms: Vec<f64>,
    pub classify_ms: Vec<f64>,
    pub median_lookup_ms: f64,
    pub median_classify_ms: f64,
    /// `median_classify_ms / median_lookup_ms`.
    pub ratio: f64,
}

impl TimingReport {
    pub fn from_samples(photos: usize, trials: usize, lookup: Vec<Duration>, classify: Vec<Duration>) -> Self {
        // a zero reading means the clock was too coarse; count it as one tick
        let ms = |v: Vec<Duration>| -> Vec<f64> { v.into_iter().map(|d| d.max(Duration::from_nanos(1)).as_secs_f64() * 1e3).collect() };
        let lookup_ms = ms(lookup);
        let classify_ms = ms(classify);
        let median_lookup_ms = median(&lookup_ms);
        let median_classify_ms = median(&classify_ms);
        Self { photos, trials, lookup_ms, classify_ms, median_lookup_ms, median_classify_ms, ratio: median_classify_ms / median_lookup_ms }
    }

    pub fn render(&self) -> String {
        format!(
            "photos {} x trials {}\nmedian lookup   {:>10.4} ms\nmedian classify {:>10.4} ms\nratio           {:>10.1}x\n",
            self.photos, self.trials, self.median_lookup_ms, self.median_classify_ms, self.ratio
        )
    }
}

/// Median of a non-empty sample; the mean of the middle pair for even sizes.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Times `trials` lookups and classifications for each of `photos` records
/// picked at random from the store. Run with no other load on the store.
pub fn bench(store: &ContentStore, clf: &dyn PhotoClassifier, photos: usize, trials: usize, seed: u64) -> Result<TimingReport, BenchError> {
    if photos == 0 || trials == 0 {
        return Err(BenchError::Empty);
    }
    let mut ids: Vec<PathBuf> = store.records().into_iter().map(|r| PathBuf::from(r.photo_id)).collect();
    if ids.len() < photos {
        return Err(BenchError::NotEnoughPhotos { wanted: photos, available: ids.len() });
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids.truncate(photos);

    let mut lookup = Vec::with_capacity(photos * trials);
    let mut classify = Vec::with_capacity(photos * trials);
    for path in &ids {
        for _ in 0..trials {
            lookup.push(time_lookup(store, path)?);
            classify.push(time_classify(clf, path)?);
        }
    }
    Ok(TimingReport::from_samples(photos, trials, lookup, classify))
}

fn time_lookup(store: &ContentStore, path: &Path) -> Result<Duration, BenchError> {
    let start = Instant::now();
    let found = photo_id_for(path).ok().and_then(|id| store.lookup(&id));
    let elapsed = start.elapsed();
    found.map(|_| elapsed).ok_or_else(|| BenchError::Photo { path: path.into(), message: "record vanished".into() })
}

fn time_classify(clf: &dyn PhotoClassifier, path: &Path) -> Result<Duration, BenchError> {
    let start = Instant::now();
    let result = std::fs::read(path).map_err(|e| e.to_string()).and_then(|b| clf.classify(path, &b).map_err(|e| e.to_string()));
    let elapsed = start.elapsed();
    result.map(|_| elapsed).map_err(|message| BenchError::Photo { path: path.into(), message })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
        assert_eq!(median(&[7.0]), 7.0);
    }

    #[test]
    fn ratio_is_classify_over_lookup() {
        let r = TimingReport::from_samples(
            1,
            3,
            vec![Duration::from_micros(10), Duration::from_micros(20), Duration::ZERO],
            vec![Duration::from_millis(1), Duration::from_millis(2), Duration::from_millis(3)],
        );
        assert_eq!(r.median_lookup_ms, 0.01);
        assert_eq!(r.median_classify_ms, 2.0);
        assert!((r.ratio - 200.0).abs() < 1e-9);
        assert!(r.lookup_ms.iter().all(|&v| v > 0.0));
    }
}
