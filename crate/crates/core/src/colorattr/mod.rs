//! Weakly supervised color attributes for liquid-related instances.
//!
//! The rule is pixel statistics inside the instance mask: per-pixel
//! saturation `(max-min)/max` over RGB (zero for black pixels) averaged over
//! the mask, thresholded at `sat_threshold` with a near-black value guard.
//! Confidence is the distance of the mean saturation from the threshold,
//! normalized by the farthest end of the unit interval so it lands in [0, 1].

use std::collections::HashMap;
use std::path::Path;

use thiserror::Error;

use crate::dataset::{Category, ColorAttr, PredictionSet};
use crate::geometry::{rle_decode, BinaryMask};

/// Default mean-saturation threshold separating colored from colorless.
pub const DEFAULT_SAT_THRESHOLD: f64 = 0.15;
/// Mean-value guard: anything darker is colorless regardless of saturation.
pub const NEAR_BLACK_VALUE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum ColorError {
    #[error("mask is empty")]
    EmptyMask,
    #[error("image is {iw}x{ih} but mask is {mw}x{mh}")]
    DimensionMismatch { iw: u32, ih: u32, mw: u32, mh: u32 },
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("{path}: {message}")]
    Image { path: String, message: String },
}

/// 8-bit RGB raster.
#[derive(Debug, Clone)]
pub struct RgbImage {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Self {
        assert_eq!(pixels.len(), width as usize * height as usize);
        RgbImage {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        Self::new(width, height, vec![rgb; width as usize * height as usize])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        self.pixels[y as usize * self.width as usize + x as usize] = rgb;
    }

    /// Decode a PNG or PPM file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ColorError> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|e| ColorError::Image {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb8();
        let (width, height) = rgb.dimensions();
        let pixels = rgb.pixels().map(|p| [p[0], p[1], p[2]]).collect();
        Ok(RgbImage {
            width,
            height,
            pixels,
        })
    }
}

/// Pixel statistics over a mask region.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorStats {
    pub mean_rgb: [f64; 3],
    /// mean per-pixel `(max-min)/max`, in [0, 1]
    pub mean_saturation: f64,
    /// mean per-pixel `max/255`, in [0, 1]
    pub mean_value: f64,
    pub pixel_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorLabel {
    pub label: ColorAttr,
    pub confidence: f64,
}

/// Means over exactly the foreground pixels of `mask`.
pub fn color_stats(image: &RgbImage, mask: &BinaryMask) -> Result<ColorStats, ColorError> {
    if image.width != mask.width() || image.height != mask.height() {
        return Err(ColorError::DimensionMismatch {
            iw: image.width,
            ih: image.height,
            mw: mask.width(),
            mh: mask.height(),
        });
    }
    let mut sum_rgb = [0.0f64; 3];
    let mut sum_sat = 0.0f64;
    let mut sum_val = 0.0f64;
    let mut count = 0u64;
    for (x, y) in mask.foreground_pixels() {
        let [r, g, b] = image.get(x, y);
        sum_rgb[0] += r as f64;
        sum_rgb[1] += g as f64;
        sum_rgb[2] += b as f64;
        let max = r.max(g).max(b) as f64;
        let min = r.min(g).min(b) as f64;
        if max > 0.0 {
            sum_sat += (max - min) / max;
        }
        sum_val += max / 255.0;
        count += 1;
    }
    if count == 0 {
        return Err(ColorError::EmptyMask);
    }
    let n = count as f64;
    Ok(ColorStats {
        mean_rgb: [sum_rgb[0] / n, sum_rgb[1] / n, sum_rgb[2] / n],
        mean_saturation: sum_sat / n,
        mean_value: sum_val / n,
        pixel_count: count,
    })
}

/// Colored iff the mean saturation strictly exceeds the threshold and the
/// region is not near-black. Confidence is `|s - t| / max(t, 1-t)`.
pub fn pseudo_label(stats: &ColorStats, sat_threshold: f64) -> Result<ColorLabel, ColorError> {
    if !(sat_threshold > 0.0 && sat_threshold < 1.0) {
        return Err(ColorError::InvalidThreshold(sat_threshold));
    }
    let s = stats.mean_saturation;
    let colored = s > sat_threshold && stats.mean_value > NEAR_BLACK_VALUE;
    let confidence = (s - sat_threshold).abs() / sat_threshold.max(1.0 - sat_threshold);
    Ok(ColorLabel {
        label: if colored {
            ColorAttr::Colored
        } else {
            ColorAttr::Colorless
        },
        confidence,
    })
}

/// Fill `color_attr` for predictions of liquid-involved interface classes.
///
/// Classes whose category is not a liquid-involved interface are left
/// untouched. A missing raster or a mask/raster dimension mismatch produces a
/// warning and leaves that prediction's attribute as it was. Running the
/// annotation twice equals running it once.
pub fn annotate_predictions(
    preds: &PredictionSet,
    categories: &[Category],
    images: &HashMap<u64, RgbImage>,
    sat_threshold: f64,
) -> Result<(PredictionSet, Vec<String>), ColorError> {
    if !(sat_threshold > 0.0 && sat_threshold < 1.0) {
        return Err(ColorError::InvalidThreshold(sat_threshold));
    }
    let liquid_classes: std::collections::HashSet<u64> = categories
        .iter()
        .filter(|c| c.interface_type.is_some_and(|t| t.involves_liquid()))
        .map(|c| c.id)
        .collect();

    let mut warnings = Vec::new();
    let mut annotated = preds.clone();
    for (i, pred) in annotated.predictions.iter_mut().enumerate() {
        if !liquid_classes.contains(&pred.category_id) {
            continue;
        }
        let Some(image) = images.get(&pred.image_id) else {
            warnings.push(format!(
                "predictions[{i}]: no raster for image {}; color attribute left absent",
                pred.image_id
            ));
            continue;
        };
        let mask = rle_decode(&pred.rle).expect("validated prediction mask");
        match color_stats(image, &mask) {
            Ok(stats) => {
                let label = pseudo_label(&stats, sat_threshold)?;
                pred.color_attr = Some(label.label);
            }
            Err(e) => {
                warnings.push(format!("predictions[{i}]: {e}; color attribute left absent"));
            }
        }
    }
    Ok((annotated, warnings))
}
