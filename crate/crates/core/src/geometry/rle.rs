use serde::{Deserialize, Serialize};

use super::{BinaryMask, GeometryError};

/// Run-length encoded mask over the row-major pixel order.
///
/// Runs alternate background/foreground and begin with a background run;
/// a mask whose first pixel is foreground carries a leading zero-length
/// background run. Interior runs are never zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    #[serde(rename = "w")]
    pub width: u32,
    #[serde(rename = "h")]
    pub height: u32,
    pub runs: Vec<u64>,
}

impl RleMask {
    /// Structural validation: run sum covers the grid exactly and no
    /// interior run is zero (a leading zero is the foreground-first marker).
    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.width == 0 || self.height == 0 {
            return Err(GeometryError::ZeroDimension(self.width, self.height));
        }
        let expected = self.width as u64 * self.height as u64;
        let got: u64 = self.runs.iter().sum();
        if got != expected {
            return Err(GeometryError::RunSumMismatch { got, expected });
        }
        for (i, &run) in self.runs.iter().enumerate() {
            if run == 0 && i != 0 {
                return Err(GeometryError::InteriorZeroRun(i));
            }
        }
        Ok(())
    }

    /// Foreground pixel count without materializing the bitmap.
    pub fn area(&self) -> u64 {
        self.runs.iter().skip(1).step_by(2).sum()
    }
}

/// Encode a mask; lossless inverse of [`rle_decode`].
pub fn rle_encode(m: &BinaryMask) -> RleMask {
    let mut runs: Vec<u64> = Vec::new();
    let mut current = false; // runs start with background
    let mut length = 0u64;
    for y in 0..m.height() {
        for x in 0..m.width() {
            let bit = m.get(x, y);
            if bit == current {
                length += 1;
            } else {
                runs.push(length);
                current = bit;
                length = 1;
            }
        }
    }
    runs.push(length);
    RleMask {
        width: m.width(),
        height: m.height(),
        runs,
    }
}

/// Decode to a bitmap; validates the run structure first.
pub fn rle_decode(r: &RleMask) -> Result<BinaryMask, GeometryError> {
    r.validate()?;
    let mut mask = BinaryMask::new(r.width, r.height)?;
    let w = r.width as u64;
    let mut pos = 0u64;
    let mut foreground = false;
    for &run in &r.runs {
        if foreground {
            for i in pos..pos + run {
                mask.set((i % w) as u32, (i / w) as u32, true);
            }
        }
        pos += run;
        foreground = !foreground;
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_background_3x3() {
        let m = BinaryMask::new(3, 3).unwrap();
        assert_eq!(rle_encode(&m).runs, vec![9]);
    }

    #[test]
    fn all_foreground_3x3() {
        let mut m = BinaryMask::new(3, 3).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                m.set(x, y, true);
            }
        }
        assert_eq!(rle_encode(&m).runs, vec![0, 9]);
    }

    #[test]
    fn bad_run_sum_rejected() {
        let r = RleMask {
            width: 3,
            height: 3,
            runs: vec![4, 4],
        };
        assert_eq!(
            rle_decode(&r).unwrap_err(),
            GeometryError::RunSumMismatch { got: 8, expected: 9 }
        );
    }

    #[test]
    fn interior_zero_run_rejected() {
        let r = RleMask {
            width: 3,
            height: 3,
            runs: vec![4, 0, 5],
        };
        assert_eq!(rle_decode(&r).unwrap_err(), GeometryError::InteriorZeroRun(1));
    }

    #[test]
    fn area_from_runs_matches_decoded_area() {
        let r = RleMask {
            width: 4,
            height: 3,
            runs: vec![2, 5, 1, 3, 1],
        };
        assert_eq!(r.area(), rle_decode(&r).unwrap().area());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]
            #[test]
            fn roundtrip_identity(
                w in 1u32..24,
                h in 1u32..24,
                seed in any::<u64>(),
            ) {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let bits: Vec<bool> = (0..(w * h)).map(|_| rng.gen_bool(0.4)).collect();
                let m = BinaryMask::from_bits(w, h, &bits).unwrap();
                let rle = rle_encode(&m);
                rle.validate().unwrap();
                let back = rle_decode(&rle).unwrap();
                prop_assert_eq!(&m, &back);
                prop_assert_eq!(rle.area(), m.area());
            }
        }
    }
}
