//! Seeded synthetic descriptor traces with known ground truth, used to
//! exercise the detectors end to end: a separation trace that decays and
//! plateaus at a known settle time, and a crystallization trace with a known
//! nucleation onset and an optional editing-artifact step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DescriptorSeries, SeriesUnits};

/// Standard normal via Box-Muller, good enough for test noise.
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Inter-interface distance trace: linear decay of `amplitude` pixels that
/// lands on `plateau` exactly at `settle_t`, plus additive Gaussian noise at
/// `noise_db` below the decay amplitude (20 dB = amplitude/10).
#[derive(Debug, Clone)]
pub struct SeparationTraceSpec {
    pub fps: f64,
    pub clip_seconds: f64,
    pub settle_t: f64,
    pub amplitude: f64,
    pub plateau: f64,
    pub noise_db: f64,
}

impl Default for SeparationTraceSpec {
    fn default() -> Self {
        SeparationTraceSpec {
            fps: 50.0,
            clip_seconds: 7.0,
            settle_t: 5.0,
            amplitude: 120.0,
            plateau: 40.0,
            noise_db: 20.0,
        }
    }
}

pub fn separation_trace(spec: &SeparationTraceSpec, seed: u64) -> DescriptorSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = spec.amplitude / 10f64.powf(spec.noise_db / 20.0);
    let n = (spec.clip_seconds * spec.fps).round() as usize;
    let mut series = DescriptorSeries::new("delta_h", SeriesUnits::Pixels);
    for i in 0..=n {
        let t = i as f64 / spec.fps;
        let decay = spec.amplitude * (1.0 - t / spec.settle_t).max(0.0);
        let v = spec.plateau + decay + sigma * normal(&mut rng);
        series.push(t, v).expect("strictly increasing grid");
    }
    series
}

/// Solid-area trace: zero until `onset_t`, then linear growth with
/// multiplicative fluctuation, plus an optional step of `jump_size` pixels at
/// `jump_t` mimicking a video edit.
#[derive(Debug, Clone)]
pub struct CrystallizationTraceSpec {
    pub fps: f64,
    pub clip_seconds: f64,
    pub onset_t: f64,
    /// pixels of new solid area per second
    pub growth_rate: f64,
    /// multiplicative fluctuation amplitude (crystal motion, occlusion)
    pub relative_noise: f64,
    pub jump_t: Option<f64>,
    pub jump_size: f64,
}

impl Default for CrystallizationTraceSpec {
    fn default() -> Self {
        CrystallizationTraceSpec {
            fps: 50.0,
            clip_seconds: 8.0,
            onset_t: 1.5,
            growth_rate: 200.0,
            relative_noise: 0.1,
            jump_t: Some(6.6),
            jump_size: 10_000.0,
        }
    }
}

pub fn crystallization_trace(spec: &CrystallizationTraceSpec, seed: u64) -> DescriptorSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xc2b2_ae35_9d3c_b871);
    let n = (spec.clip_seconds * spec.fps).round() as usize;
    let mut series = DescriptorSeries::new("solid_area", SeriesUnits::PixelsSquared);
    for i in 0..=n {
        let t = i as f64 / spec.fps;
        let mut v = if t < spec.onset_t {
            0.0
        } else {
            let base = spec.growth_rate * (t - spec.onset_t);
            (base * (1.0 + spec.relative_noise * normal(&mut rng))).max(0.0)
        };
        if let Some(jt) = spec.jump_t {
            if t >= jt {
                v += spec.jump_size;
            }
        }
        series.push(t, v).expect("strictly increasing grid");
    }
    series
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn traces_are_seed_deterministic() {
        let spec = SeparationTraceSpec::default();
        assert_eq!(separation_trace(&spec, 9), separation_trace(&spec, 9));
        let cspec = CrystallizationTraceSpec::default();
        assert_eq!(
            crystallization_trace(&cspec, 9),
            crystallization_trace(&cspec, 9)
        );
    }

    #[test]
    fn separation_trace_shapes_match_spec() {
        let spec = SeparationTraceSpec::default();
        let s = separation_trace(&spec, 4);
        let first = s.samples()[0].1;
        let last = s.samples()[s.len() - 1].1;
        assert!(first > spec.plateau + spec.amplitude * 0.5);
        assert!((last - spec.plateau).abs() < spec.amplitude * 0.5);
    }

    #[test]
    fn crystallization_trace_is_zero_before_onset() {
        let spec = CrystallizationTraceSpec {
            jump_t: None,
            ..CrystallizationTraceSpec::default()
        };
        let s = crystallization_trace(&spec, 4);
        for &(t, v) in s.samples() {
            if t < spec.onset_t {
                assert_eq!(v, 0.0);
            }
        }
        assert!(s.samples().last().unwrap().1 > 1000.0);
    }
}
