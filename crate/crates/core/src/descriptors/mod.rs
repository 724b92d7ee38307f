//! Time-resolved process descriptors extracted from per-frame instances:
//! interface heights, inter-interface distance, solid area, smoothing, and
//! the endpoint/onset/jump detectors.
//!
//! All detectors are prefix-consistent: their verdict at time `t` depends
//! only on samples at or before `t`, so streaming a series through them
//! yields exactly the batch result. Rows increase downward, matching image
//! coordinates.

mod detect;
pub mod synthetic;

pub use detect::{
    detect_endpoint, detect_jumps, detect_onset, mask_jumps, theil_sen_slope, EndpointResult,
    DEFAULT_ENDPOINT_EPS_SLOPE, DEFAULT_ENDPOINT_K, DEFAULT_ENDPOINT_WINDOW_SECONDS,
    DEFAULT_ONSET_HOLD_SAMPLES, DEFAULT_ONSET_MIN_VALUE,
};

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BBox, BinaryMask};

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("instance mask does not intersect the statistical region")]
    EmptyIntersection,
    #[error("smoothing window must be odd, got {0}")]
    EvenWindow(usize),
    #[error("sample times must be strictly increasing (t={0})")]
    NonMonotonicTime(f64),
    #[error("non-finite sample value at t={0}")]
    NonFiniteValue(f64),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Named rectangular region instances are measured in.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StatRegion {
    pub name: String,
    pub region: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesUnits {
    Pixels,
    PixelsSquared,
    Ratio,
}

/// Time-stamped scalar series; times strictly increase, values are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorSeries {
    pub name: String,
    pub units: SeriesUnits,
    samples: Vec<(f64, f64)>,
}

impl DescriptorSeries {
    pub fn new(name: impl Into<String>, units: SeriesUnits) -> Self {
        DescriptorSeries {
            name: name.into(),
            units,
            samples: Vec::new(),
        }
    }

    pub fn from_samples(
        name: impl Into<String>,
        units: SeriesUnits,
        samples: Vec<(f64, f64)>,
    ) -> Result<Self, DescriptorError> {
        let mut series = Self::new(name, units);
        for (t, v) in samples {
            series.push(t, v)?;
        }
        Ok(series)
    }

    pub fn push(&mut self, t: f64, value: f64) -> Result<(), DescriptorError> {
        if !value.is_finite() || !t.is_finite() {
            return Err(DescriptorError::NonFiniteValue(t));
        }
        if let Some(&(last_t, _)) = self.samples.last() {
            if t <= last_t {
                return Err(DescriptorError::NonMonotonicTime(t));
            }
        }
        self.samples.push((t, value));
        Ok(())
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// CSV rendering with the documented header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_seconds,value\n");
        for &(t, v) in &self.samples {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DescriptorError> {
        std::fs::write(path.as_ref(), self.to_csv()).map_err(|source| DescriptorError::Io {
            path: path.as_ref().display().to_string(),
            source,
        })
    }
}

/// One frame's worth of instances, already materialized as masks.
#[derive(Debug, Clone)]
pub struct Frame {
    pub t: f64,
    pub instances: Vec<FrameInstance>,
}

#[derive(Debug, Clone)]
pub struct FrameInstance {
    pub category_id: u64,
    pub score: f64,
    pub mask: BinaryMask,
}

/// Mean foreground row index inside `region` (rows increase downward).
pub fn interface_height(mask: &BinaryMask, region: &BBox) -> Result<f64, DescriptorError> {
    let mut sum_rows = 0u64;
    let mut count = 0u64;
    mask.for_each_foreground_in(region, |_, y| {
        sum_rows += y as u64;
        count += 1;
    });
    if count == 0 {
        return Err(DescriptorError::EmptyIntersection);
    }
    Ok(sum_rows as f64 / count as f64)
}

/// Highest-score instance of a class whose mask reaches into the region;
/// score ties keep the earlier instance.
fn best_instance<'a>(frame: &'a Frame, class: u64, region: &BBox) -> Option<&'a FrameInstance> {
    let mut best: Option<&FrameInstance> = None;
    for inst in &frame.instances {
        if inst.category_id != class || inst.mask.area_in(region) == 0 {
            continue;
        }
        if best.map_or(true, |b| inst.score > b.score) {
            best = Some(inst);
        }
    }
    best
}

/// Vertical distance between two interfaces over time:
/// `height(lower) - height(upper)` per frame, using each class's best-scored
/// instance. Frames missing either class contribute no sample.
pub fn pair_distance_series(
    frames: &[Frame],
    upper_class: u64,
    lower_class: u64,
    region: &StatRegion,
) -> Result<DescriptorSeries, DescriptorError> {
    let mut series = DescriptorSeries::new(
        format!("pair_distance:{}", region.name),
        SeriesUnits::Pixels,
    );
    for frame in frames {
        let upper = best_instance(frame, upper_class, &region.region);
        let lower = best_instance(frame, lower_class, &region.region);
        if let (Some(u), Some(l)) = (upper, lower) {
            let hu = interface_height(&u.mask, &region.region)?;
            let hl = interface_height(&l.mask, &region.region)?;
            series.push(frame.t, hl - hu)?;
        }
    }
    Ok(series)
}

/// Solid-phase area over time: union of the solid-class masks clipped to the
/// region. Every frame contributes a sample; frames without solids read 0.
pub fn solid_area_series(
    frames: &[Frame],
    solid_classes: &[u64],
    region: &StatRegion,
) -> Result<DescriptorSeries, DescriptorError> {
    let mut series = DescriptorSeries::new(
        format!("solid_area:{}", region.name),
        SeriesUnits::PixelsSquared,
    );
    for frame in frames {
        let mut union: Option<BinaryMask> = None;
        for inst in &frame.instances {
            if !solid_classes.contains(&inst.category_id) {
                continue;
            }
            match &mut union {
                Some(u) => u.union_with(&inst.mask),
                None => union = Some(inst.mask.clone()),
            }
        }
        let area = union.map_or(0, |u| u.area_in(&region.region));
        series.push(frame.t, area as f64)?;
    }
    Ok(series)
}

/// Centered moving median; endpoints use truncated windows. Window 1 is the
/// identity.
pub fn smooth(series: &DescriptorSeries, window: usize) -> Result<DescriptorSeries, DescriptorError> {
    if window % 2 == 0 || window == 0 {
        return Err(DescriptorError::EvenWindow(window));
    }
    let half = window / 2;
    let samples = series.samples();
    let mut out = DescriptorSeries::new(series.name.clone(), series.units);
    let mut buf: Vec<f64> = Vec::with_capacity(window);
    for i in 0..samples.len() {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(samples.len());
        buf.clear();
        buf.extend(samples[lo..hi].iter().map(|&(_, v)| v));
        buf.sort_by(|a, b| a.total_cmp(b));
        let m = buf.len() / 2;
        let median = if buf.len() % 2 == 1 {
            buf[m]
        } else {
            (buf[m - 1] + buf[m]) / 2.0
        };
        out.push(samples[i].0, median)?;
    }
    Ok(out)
}
