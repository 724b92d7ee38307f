use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Axis-aligned pixel box, half-open on the max edges: a pixel `(x, y)` is
/// inside iff `x_min <= x < x_max` and `y_min <= y < y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Result<Self, GeometryError> {
        if x_min >= x_max || y_min >= y_max {
            return Err(GeometryError::InvalidBox(x_min, y_min, x_max, y_max));
        }
        Ok(BBox {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> u32 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> u32 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x_min && x < self.x_max && y >= self.y_min && y < self.y_max
    }

    /// True if `other` lies entirely inside `self`.
    pub fn encloses(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }
}

/// Row-major binary bitmap. Bit `y * width + x` is pixel `(x, y)`.
///
/// Bits are packed into 64-bit words; any padding bits past `width*height`
/// are kept at zero so popcount-based set operations stay exact.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    words: Vec<u64>,
}

impl BinaryMask {
    /// All-background mask. Dimensions must be at least 1x1.
    pub fn new(width: u32, height: u32) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::ZeroDimension(width, height));
        }
        let bits = width as u64 * height as u64;
        let words = vec![0u64; bits.div_ceil(64) as usize];
        Ok(BinaryMask {
            width,
            height,
            words,
        })
    }

    /// Build from a row-major bit slice of length `width*height`.
    pub fn from_bits(width: u32, height: u32, bits: &[bool]) -> Result<Self, GeometryError> {
        let mut m = Self::new(width, height)?;
        assert_eq!(bits.len() as u64, width as u64 * height as u64);
        for (i, &b) in bits.iter().enumerate() {
            if b {
                m.words[i / 64] |= 1u64 << (i % 64);
            }
        }
        Ok(m)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    fn bit_index(&self, x: u32, y: u32) -> usize {
        debug_assert!(x < self.width && y < self.height);
        y as usize * self.width as usize + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        let i = self.bit_index(x, y);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let i = self.bit_index(x, y);
        if value {
            self.words[i / 64] |= 1u64 << (i % 64);
        } else {
            self.words[i / 64] &= !(1u64 << (i % 64));
        }
    }

    /// Foreground pixel count.
    pub fn area(&self) -> u64 {
        self.words.iter().map(|w| w.count_ones() as u64).sum()
    }

    /// `|self ∩ other|`; callers guarantee equal shapes.
    pub fn intersection_area(&self, other: &BinaryMask) -> u64 {
        debug_assert_eq!((self.width, self.height), (other.width, other.height));
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as u64)
            .sum()
    }

    /// In-place union with a same-shape mask.
    pub fn union_with(&mut self, other: &BinaryMask) {
        debug_assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    /// Tightest bounding box, or `None` for an empty mask.
    pub fn tight_bbox(&self) -> Option<BBox> {
        let mut x_min = self.width;
        let mut y_min = self.height;
        let mut x_max = 0u32;
        let mut y_max = 0u32;
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x_min = x_min.min(x);
                    y_min = y_min.min(y);
                    x_max = x_max.max(x + 1);
                    y_max = y_max.max(y + 1);
                }
            }
        }
        if any {
            Some(BBox {
                x_min,
                y_min,
                x_max,
                y_max,
            })
        } else {
            None
        }
    }

    /// Foreground pixel count restricted to `region` (clipped to the mask).
    pub fn area_in(&self, region: &BBox) -> u64 {
        let x_hi = region.x_max.min(self.width);
        let y_hi = region.y_max.min(self.height);
        let mut count = 0u64;
        for y in region.y_min..y_hi {
            for x in region.x_min..x_hi {
                if self.get(x, y) {
                    count += 1;
                }
            }
        }
        count
    }

    /// Visit every foreground pixel inside `region` (clipped to the mask).
    pub fn for_each_foreground_in(&self, region: &BBox, mut f: impl FnMut(u32, u32)) {
        let x_hi = region.x_max.min(self.width);
        let y_hi = region.y_max.min(self.height);
        for y in region.y_min..y_hi {
            for x in region.x_min..x_hi {
                if self.get(x, y) {
                    f(x, y);
                }
            }
        }
    }

    /// Iterate all foreground pixels as `(x, y)`.
    pub fn foreground_pixels(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let w = self.width;
        let h = self.height;
        (0..h).flat_map(move |y| (0..w).filter_map(move |x| self.get(x, y).then_some((x, y))))
    }

    /// Row-major bit vector; mostly a convenience for tests and codecs.
    pub fn to_bits(&self) -> Vec<bool> {
        let n = self.width as usize * self.height as usize;
        (0..n).map(|i| self.words[i / 64] >> (i % 64) & 1 == 1).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_get_roundtrip_and_padding_stays_clean() {
        let mut m = BinaryMask::new(9, 7).unwrap();
        m.set(8, 6, true);
        m.set(0, 0, true);
        assert!(m.get(8, 6));
        assert!(m.get(0, 0));
        assert!(!m.get(4, 3));
        assert_eq!(m.area(), 2);
        m.set(8, 6, false);
        assert_eq!(m.area(), 1);
    }

    #[test]
    fn area_in_clips_to_region() {
        let mut m = BinaryMask::new(10, 10).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                m.set(x, y, true);
            }
        }
        let r = BBox::new(2, 3, 5, 9).unwrap();
        assert_eq!(m.area_in(&r), 3 * 6);
        // region extending past the mask clips rather than panics
        let r2 = BBox::new(8, 8, 20, 20).unwrap();
        assert_eq!(m.area_in(&r2), 4);
    }

    #[test]
    fn union_counts_overlap_once() {
        let mut a = BinaryMask::new(8, 1).unwrap();
        let mut b = BinaryMask::new(8, 1).unwrap();
        for x in 0..5 {
            a.set(x, 0, true);
        }
        for x in 3..8 {
            b.set(x, 0, true);
        }
        a.union_with(&b);
        assert_eq!(a.area(), 8);
    }

    #[test]
    fn bbox_encloses() {
        let outer = BBox::new(0, 0, 10, 10).unwrap();
        let inner = BBox::new(2, 2, 8, 8).unwrap();
        assert!(outer.encloses(&inner));
        assert!(!inner.encloses(&outer));
    }
}
