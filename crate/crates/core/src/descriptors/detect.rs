//! Endpoint, onset and change-point detectors over descriptor series.
//!
//! Every detector is a deterministic, prefix-consistent function: the verdict
//! attached to time `t` is computable from samples at or before `t` and never
//! revised by later data. That is what lets the monitor stream a series
//! through these and still match the batch result exactly.

use serde::Serialize;

use super::{DescriptorError, DescriptorSeries};

pub const DEFAULT_ENDPOINT_WINDOW_SECONDS: f64 = 1.0;
pub const DEFAULT_ENDPOINT_EPS_SLOPE: f64 = 2.0;
pub const DEFAULT_ENDPOINT_K: usize = 3;
pub const DEFAULT_ONSET_MIN_VALUE: f64 = 5.0;
pub const DEFAULT_ONSET_HOLD_SAMPLES: usize = 3;

/// Trailing differences considered when judging one difference against its
/// neighborhood.
const JUMP_NEIGHBORHOOD: usize = 24;
/// Minimum trailing differences needed before a jump verdict is possible.
const JUMP_MIN_HISTORY: usize = 4;

/// Stationarity detection outcome with the configuration echoed back.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointResult {
    pub t_star: Option<f64>,
    pub window_seconds: f64,
    pub eps_slope: f64,
    pub k_consecutive: usize,
}

fn median_of(sorted_scratch: &mut Vec<f64>) -> f64 {
    sorted_scratch.sort_by(|a, b| a.total_cmp(b));
    let n = sorted_scratch.len();
    if n % 2 == 1 {
        sorted_scratch[n / 2]
    } else {
        (sorted_scratch[n / 2 - 1] + sorted_scratch[n / 2]) / 2.0
    }
}

/// Theil-Sen slope: median of all pairwise slopes. `None` for fewer than two
/// samples or when no pair has distinct times.
pub fn theil_sen_slope(samples: &[(f64, f64)]) -> Option<f64> {
    let mut slopes = Vec::with_capacity(samples.len() * (samples.len().saturating_sub(1)) / 2);
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let dt = samples[j].0 - samples[i].0;
            if dt != 0.0 {
                slopes.push((samples[j].1 - samples[i].1) / dt);
            }
        }
    }
    if slopes.is_empty() {
        return None;
    }
    Some(median_of(&mut slopes))
}

/// Stationarity endpoint: the start time of the first run of `k_consecutive`
/// sliding windows whose robust slope magnitude stays below `eps_slope`.
///
/// A window anchors at a sample time `t_i` and spans `[t_i - window/2,
/// t_i + window/2)`. Centering removes the anchor bias a one-sided window
/// would have at a decay-to-plateau elbow: the window reads flat when most
/// of it is plateau, which for a centered span happens when the anchor sits
/// at the elbow rather than half a window early. A window only counts once
/// the series extends past its right edge (so a prefix never fires on a
/// half-filled window) and needs at least two samples for a slope.
pub fn detect_endpoint(
    series: &DescriptorSeries,
    window_seconds: f64,
    eps_slope: f64,
    k_consecutive: usize,
) -> EndpointResult {
    let config = |t_star| EndpointResult {
        t_star,
        window_seconds,
        eps_slope,
        k_consecutive,
    };
    let samples = series.samples();
    if samples.len() < 2 || k_consecutive == 0 {
        return config(None);
    }
    let t_last = samples[samples.len() - 1].0;
    let half = window_seconds / 2.0;

    let mut run_start: Option<f64> = None;
    let mut run_len = 0usize;
    let mut lo = 0usize;
    for i in 0..samples.len() {
        let t_i = samples[i].0;
        if t_i + half > t_last {
            break; // right edge not yet covered by data
        }
        while samples[lo].0 < t_i - half {
            lo += 1;
        }
        let end = samples[lo..]
            .iter()
            .position(|&(t, _)| t >= t_i + half)
            .map(|p| lo + p)
            .unwrap_or(samples.len());
        let window = &samples[lo..end];
        let flat = match theil_sen_slope(window) {
            Some(slope) => slope.abs() < eps_slope,
            None => false,
        };
        if flat {
            if run_len == 0 {
                run_start = Some(t_i);
            }
            run_len += 1;
            if run_len >= k_consecutive {
                return config(run_start);
            }
        } else {
            run_len = 0;
            run_start = None;
        }
    }
    config(None)
}

/// First time the series reaches `min_value` and holds it for
/// `hold_samples` consecutive samples; returns the run's first time.
pub fn detect_onset(
    series: &DescriptorSeries,
    min_value: f64,
    hold_samples: usize,
) -> Option<f64> {
    if hold_samples == 0 {
        return None;
    }
    let samples = series.samples();
    let mut run_start: Option<f64> = None;
    let mut run_len = 0usize;
    for &(t, v) in samples {
        if v >= min_value {
            if run_len == 0 {
                run_start = Some(t);
            }
            run_len += 1;
            if run_len >= hold_samples {
                return run_start;
            }
        } else {
            run_len = 0;
            run_start = None;
        }
    }
    None
}

/// Robust scale of a difference neighborhood: `1.4826 * MAD` with an
/// absolute floor so exactly-regular series do not flag their own roundoff.
fn robust_scale(neighborhood: &mut Vec<f64>, median: f64) -> f64 {
    let mut devs: Vec<f64> = neighborhood.iter().map(|&d| (d - median).abs()).collect();
    let mad = median_of(&mut devs);
    (1.4826 * mad).max(1e-9 * median.abs().max(1.0))
}

/// Change-point times: sample times whose first difference deviates from the
/// trailing-neighborhood median by more than `z_threshold` robust standard
/// deviations (median-absolute-deviation scale). Only trailing differences
/// are consulted, so a flag raised at `t` is final.
pub fn detect_jumps(series: &DescriptorSeries, z_threshold: f64) -> Vec<f64> {
    let samples = series.samples();
    if samples.len() < 3 {
        return Vec::new();
    }
    let diffs: Vec<f64> = samples.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let mut flags = Vec::new();
    for i in 0..diffs.len() {
        if i < JUMP_MIN_HISTORY {
            continue;
        }
        let lo = i.saturating_sub(JUMP_NEIGHBORHOOD);
        let mut neighborhood: Vec<f64> = diffs[lo..i].to_vec();
        let median = median_of(&mut neighborhood.clone());
        let scale = robust_scale(&mut neighborhood, median);
        if (diffs[i] - median).abs() > z_threshold * scale {
            flags.push(samples[i + 1].0);
        }
    }
    flags
}

/// Remove flagged steps: at each jump the excess of that difference over the
/// trailing-median difference is subtracted from every later sample. Feeding
/// the result to `detect_onset` keeps editing artifacts from masquerading as
/// onsets.
pub fn mask_jumps(series: &DescriptorSeries, jumps: &[f64]) -> DescriptorSeries {
    let samples = series.samples();
    if samples.len() < 2 || jumps.is_empty() {
        return series.clone();
    }
    let diffs: Vec<f64> = samples.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let mut corrected = DescriptorSeries::new(series.name.clone(), series.units);
    let mut offset = 0.0;
    let mut jump_iter = jumps.iter().peekable();
    for (i, &(t, v)) in samples.iter().enumerate() {
        if let Some(&&jt) = jump_iter.peek() {
            if t == jt && i >= 1 {
                let lo = (i - 1).saturating_sub(JUMP_NEIGHBORHOOD);
                let mut neighborhood: Vec<f64> = diffs[lo..i - 1].to_vec();
                let median = if neighborhood.is_empty() {
                    0.0
                } else {
                    median_of(&mut neighborhood)
                };
                offset += diffs[i - 1] - median;
                jump_iter.next();
            }
        }
        corrected
            .push(t, v - offset)
            .expect("masked series keeps the time base");
    }
    corrected
}

#[cfg(test)]
mod tests {
    use super::super::SeriesUnits;
    use super::*;

    fn series(samples: Vec<(f64, f64)>) -> DescriptorSeries {
        DescriptorSeries::from_samples("test", SeriesUnits::Pixels, samples).unwrap()
    }

    fn grid(fps: usize, seconds: f64, f: impl Fn(f64) -> f64) -> DescriptorSeries {
        let n = (seconds * fps as f64).round() as usize;
        series(
            (0..=n)
                .map(|i| {
                    let t = i as f64 / fps as f64;
                    (t, f(t))
                })
                .collect(),
        )
    }

    #[test]
    fn theil_sen_recovers_a_clean_line() {
        let s: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 + 2.0 * i as f64)).collect();
        assert_eq!(theil_sen_slope(&s), Some(2.0));
    }

    #[test]
    fn theil_sen_ignores_a_minority_of_outliers() {
        let mut s: Vec<(f64, f64)> = (0..11).map(|i| (i as f64, 0.5 * i as f64)).collect();
        s[3].1 += 100.0;
        s[7].1 -= 50.0;
        let slope = theil_sen_slope(&s).unwrap();
        assert!((slope - 0.5).abs() < 0.1, "slope {slope}");
    }

    #[test]
    fn constant_series_endpoint_is_first_window_start() {
        let s = grid(10, 3.0, |_| 7.0);
        let r = detect_endpoint(&s, 1.0, 0.5, 3);
        assert_eq!(r.t_star, Some(0.0));
    }

    #[test]
    fn steep_line_never_fires() {
        let s = grid(10, 3.0, |t| -10.0 * t);
        let r = detect_endpoint(&s, 1.0, 2.0, 3);
        assert_eq!(r.t_star, None);
    }

    #[test]
    fn endpoint_invariant_under_value_offset_and_time_shift() {
        let shape = |t: f64| 50.0 * (1.0 - t / 2.0).max(0.0);
        let s = grid(20, 4.0, shape);
        let base = detect_endpoint(&s, 1.0, 2.0, 3).t_star.unwrap();

        let offset = grid(20, 4.0, |t| shape(t) + 400.0);
        let r = detect_endpoint(&offset, 1.0, 2.0, 3).t_star.unwrap();
        assert!((r - base).abs() < 1e-9);

        let shifted = series(
            s.samples()
                .iter()
                .map(|&(t, v)| (t + 10.0, v))
                .collect(),
        );
        let r = detect_endpoint(&shifted, 1.0, 2.0, 3).t_star.unwrap();
        assert!((r - (base + 10.0)).abs() < 1e-9);
    }

    #[test]
    fn endpoint_never_fires_on_an_uncovered_window() {
        // flat series too short to cover even one full window
        let s = series(vec![(0.0, 1.0), (0.2, 1.0), (0.4, 1.0)]);
        assert_eq!(detect_endpoint(&s, 1.0, 0.5, 1).t_star, None);
    }

    #[test]
    fn endpoint_is_prefix_consistent() {
        let shape = |t: f64| 80.0 * (1.0 - t / 3.0).max(0.0);
        let full = grid(25, 6.0, shape);
        let batch = detect_endpoint(&full, 1.0, 2.0, 3).t_star;
        assert!(batch.is_some());
        // streaming: first prefix that fires must agree with the batch result
        let samples = full.samples();
        let mut streamed = None;
        for n in 2..=samples.len() {
            let prefix = series(samples[..n].to_vec());
            if let Some(t) = detect_endpoint(&prefix, 1.0, 2.0, 3).t_star {
                streamed = Some(t);
                break;
            }
        }
        assert_eq!(streamed, batch);
    }

    #[test]
    fn onset_all_zero_is_absent() {
        let s = grid(10, 2.0, |_| 0.0);
        assert_eq!(detect_onset(&s, 5.0, 3), None);
    }

    #[test]
    fn onset_blip_shorter_than_hold_is_ignored() {
        let mut samples: Vec<(f64, f64)> = (0..30).map(|i| (i as f64 * 0.1, 0.0)).collect();
        samples[10].1 = 50.0; // one-sample blip
        let s = series(samples);
        assert_eq!(detect_onset(&s, 5.0, 3), None);
    }

    #[test]
    fn onset_reports_first_time_of_the_hold_run() {
        let s = grid(10, 3.0, |t| if t >= 1.5 { 25.0 } else { 0.0 });
        assert_eq!(detect_onset(&s, 5.0, 3), Some(1.5));
    }

    #[test]
    fn smooth_ramp_produces_no_jump_flags() {
        let s = grid(50, 4.0, |t| 3.0 * t + 1.0);
        assert!(detect_jumps(&s, 8.0).is_empty());
    }

    #[test]
    fn big_step_is_flagged_at_its_time() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let samples: Vec<(f64, f64)> = (0..=350)
            .map(|i| {
                let t = i as f64 / 50.0;
                let noise: f64 = rng.gen_range(-1.0..1.0);
                let step = if t >= 6.6 { 500.0 } else { 0.0 };
                (t, 10.0 * t + noise + step)
            })
            .collect();
        let s = series(samples);
        let flags = detect_jumps(&s, 8.0);
        assert_eq!(flags.len(), 1, "flags {flags:?}");
        assert!((flags[0] - 6.6).abs() < 0.05, "flagged at {}", flags[0]);
    }

    #[test]
    fn masked_jump_is_not_an_onset() {
        // pure editing artifact: flat zero, then a step plateau
        let s = grid(25, 8.0, |t| if t >= 6.6 { 300.0 } else { 0.0 });
        let flags = detect_jumps(&s, 8.0);
        assert_eq!(flags.len(), 1);
        let masked = mask_jumps(&s, &flags);
        assert_eq!(detect_onset(&masked, 5.0, 3), None);
        // the raw series would have "onset" at the editing step
        assert!(detect_onset(&s, 5.0, 3).is_some());
    }

    #[test]
    fn detectors_are_deterministic() {
        let s = grid(30, 5.0, |t| (t * 3.0).sin() * 20.0 + 40.0);
        assert_eq!(
            detect_endpoint(&s, 1.0, 2.0, 3),
            detect_endpoint(&s, 1.0, 2.0, 3)
        );
        assert_eq!(detect_jumps(&s, 6.0), detect_jumps(&s, 6.0));
    }
}
