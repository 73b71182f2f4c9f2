use serde::{Deserialize, Serialize};

use super::ClassifierError;
use crate::scalar::Scalar;

/// Feature extractor parameters.
///
/// The extractor builds one intensity histogram per RGB channel and
/// concatenates them, so the feature dimension is `3 * bins_per_channel`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub bins_per_channel: usize,
}

impl FeatureConfig {
    pub const CHANNELS: usize = 3;

    pub fn dimension(&self) -> usize {
        Self::CHANNELS * self.bins_per_channel
    }
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { bins_per_channel: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector<T> {
    values: Vec<T>,
}

impl<T: Scalar> FeatureVector<T> {
    /// Rejects non-finite entries.
    pub fn new(values: Vec<T>) -> Result<Self, ClassifierError> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(ClassifierError::NonFiniteFeature(i));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    /// Block `channel` of a histogram feature vector.
    pub fn channel_block(&self, config: &FeatureConfig, channel: usize) -> &[T] {
        let b = config.bins_per_channel;
        &self.values[channel * b..(channel + 1) * b]
    }
}

/// Decodes an encoded image and computes its normalized RGB histograms.
pub fn extract_features<T: Scalar>(
    bytes: &[u8],
    config: &FeatureConfig,
) -> Result<FeatureVector<T>, ClassifierError> {
    if config.bins_per_channel == 0 || config.bins_per_channel > 256 {
        return Err(ClassifierError::BadConfig(format!(
            "bins_per_channel must be in 1..=256, got {}",
            config.bins_per_channel
        )));
    }
    let img = image::load_from_memory(bytes)
        .map_err(|e| ClassifierError::Decode(e.to_string()))?
        .to_rgb8();
    let pixels = img.width() as usize * img.height() as usize;
    if pixels == 0 {
        return Err(ClassifierError::Decode("image has no pixels".into()));
    }
    Ok(histogram_features(img.as_raw(), pixels, config))
}

/// Histogram features from packed RGB8 data.
pub fn histogram_features<T: Scalar>(rgb: &[u8], pixels: usize, config: &FeatureConfig) -> FeatureVector<T> {
    let bins = config.bins_per_channel;
    let mut counts = vec![0u32; config.dimension()];
    for px in rgb.chunks_exact(3) {
        for (channel, &v) in px.iter().enumerate() {
            let bin = v as usize * bins / 256;
            counts[channel * bins + bin] += 1;
        }
    }
    let total = T::from_count(pixels);
    FeatureVector {
        values: counts.into_iter().map(|c| T::from_count(c as usize) / total).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageFormat, Rgb, RgbImage};
    use std::io::Cursor;

    fn png_of(w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) -> Vec<u8> {
        let img = RgbImage::from_fn(w, h, |x, y| Rgb(f(x, y)));
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png).unwrap();
        out.into_inner()
    }

    #[test]
    fn uniform_gray_concentrates_mass() {
        let cfg = FeatureConfig::default();
        let fv: FeatureVector<f64> = extract_features(&png_of(8, 8, |_, _| [128, 128, 128]), &cfg).unwrap();
        assert_eq!(fv.dim(), 192);
        for ch in 0..3 {
            let block = fv.channel_block(&cfg, ch);
            assert_eq!(block.iter().sum::<f64>(), 1.0);
            assert_eq!(block[32], 1.0);
            assert_eq!(block.iter().filter(|&&v| v > 0.0).count(), 1);
        }
    }

    #[test]
    fn deterministic() {
        let bytes = png_of(13, 7, |x, y| [(x * 17) as u8, (y * 31) as u8, (x * y) as u8]);
        let cfg = FeatureConfig::default();
        let a: FeatureVector<f32> = extract_features(&bytes, &cfg).unwrap();
        let b: FeatureVector<f32> = extract_features(&bytes, &cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn red_and_blue_differ_only_in_their_blocks() {
        let cfg = FeatureConfig::default();
        let red: FeatureVector<f64> = extract_features(&png_of(4, 4, |_, _| [255, 0, 0]), &cfg).unwrap();
        let blue: FeatureVector<f64> = extract_features(&png_of(4, 4, |_, _| [0, 0, 255]), &cfg).unwrap();
        assert_ne!(red.channel_block(&cfg, 0), blue.channel_block(&cfg, 0));
        assert_eq!(red.channel_block(&cfg, 1), blue.channel_block(&cfg, 1));
        assert_ne!(red.channel_block(&cfg, 2), blue.channel_block(&cfg, 2));
        // red channel: all mass in the top bin for red, bottom bin for blue
        assert_eq!(red.channel_block(&cfg, 0)[63], 1.0);
        assert_eq!(blue.channel_block(&cfg, 0)[0], 1.0);
    }

    #[test]
    fn garbage_bytes_fail_to_decode() {
        let err = extract_features::<f64>(b"not an image", &FeatureConfig::default()).unwrap_err();
        assert!(matches!(err, ClassifierError::Decode(_)));
    }

    #[test]
    fn non_finite_rejected() {
        assert!(FeatureVector::new(vec![0.0f64, f64::NAN]).is_err());
    }
}
