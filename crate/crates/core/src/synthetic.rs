//! Synthetic labeled photos for training, tests and benchmarks.
//!
//! Each category has a base color. An image is that color shifted by a
//! per-image offset, plus independent per-pixel noise, so every image's
//! label is known by construction.

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::category::ContentCategory;
use crate::classifier::{extract_features, ClassifierError, Dataset, FeatureConfig, LabeledSample, Split};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticParams {
    pub width: u32,
    pub height: u32,
    /// Maximum per-image shift of the base color, per channel.
    pub jitter: u8,
    /// Maximum per-pixel deviation, per channel.
    pub noise: u8,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self { width: 16, height: 16, jitter: 10, noise: 20 }
    }
}

pub fn base_color(category: ContentCategory) -> [u8; 3] {
    match category {
        ContentCategory::Public => [70, 150, 70],
        ContentCategory::PhotoId => [60, 110, 210],
        ContentCategory::LegalDocument => [225, 225, 215],
        ContentCategory::Family => [200, 110, 50],
        ContentCategory::Nude => [215, 160, 140],
    }
}

fn offset(v: u8, delta: i32) -> u8 {
    (v as i32 + delta).clamp(0, 255) as u8
}

pub fn render<R: Rng>(category: ContentCategory, params: &SyntheticParams, rng: &mut R) -> RgbImage {
    let base = base_color(category);
    let j = params.jitter as i32;
    let n = params.noise as i32;
    let shift: [i32; 3] = std::array::from_fn(|_| rng.gen_range(-j..=j));
    RgbImage::from_fn(params.width, params.height, |_, _| {
        Rgb(std::array::from_fn(|c| offset(base[c], shift[c] + rng.gen_range(-n..=n))))
    })
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("in-memory PNG encoding");
    out.into_inner()
}

/// `per_class` PNG-encoded images of every category, in category order.
pub fn labeled_images(per_class: usize, params: &SyntheticParams, seed: u64) -> Vec<(ContentCategory, Vec<u8>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(per_class * ContentCategory::COUNT);
    for category in ContentCategory::ALL {
        for _ in 0..per_class {
            out.push((category, encode_png(&render(category, params, &mut rng))));
        }
    }
    out
}

/// Synthetic images pushed through the real decoder and feature extractor.
pub fn dataset<T: Scalar>(
    per_class: usize,
    params: &SyntheticParams,
    features: &FeatureConfig,
    seed: u64,
) -> Result<Dataset<T>, ClassifierError> {
    let samples = labeled_images(per_class, params, seed)
        .into_iter()
        .map(|(label, bytes)| Ok(LabeledSample { features: extract_features(&bytes, features)?, label }))
        .collect::<Result<Vec<_>, ClassifierError>>()?;
    Dataset::new(samples, Split::Train)
}

/// Writes `per_class` images per category as `<label>_<n>.png` under `dir`.
pub fn write_library(dir: &Path, per_class: usize, params: &SyntheticParams, seed: u64) -> std::io::Result<Vec<(PathBuf, ContentCategory)>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (i, (category, bytes)) in labeled_images(per_class, params, seed).into_iter().enumerate() {
        let path = dir.join(format!("{}_{:04}.png", category.label(), i));
        std::fs::write(&path, bytes)?;
        written.push((path, category));
    }
    Ok(written)
}

/// Writes a training fixture tree: `<dir>/<label>/<n>.png`.
pub fn write_fixture_tree(dir: &Path, per_class: usize, params: &SyntheticParams, seed: u64) -> std::io::Result<()> {
    for (i, (category, bytes)) in labeled_images(per_class, params, seed).into_iter().enumerate() {
        let sub = dir.join(category.label());
        std::fs::create_dir_all(&sub)?;
        std::fs::write(sub.join(format!("{i:04}.png")), bytes)?;
    }
    Ok(())
}
