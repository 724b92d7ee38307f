//! Pixel-level substrate: binary masks, boxes, polygons and RLE.
//!
//! Everything downstream (evaluation, descriptors, the monitor) reduces to
//! counting pixels here, so the conventions are pinned exactly:
//!
//! * masks are row-major bitmaps; a pixel is addressed as `(x, y)` with rows
//!   increasing downward,
//! * boxes are half-open on their max edges, so `width = x_max - x_min`,
//! * rasterization uses even-odd fill against pixel centers `(x+0.5, y+0.5)`,
//! * RLE runs alternate background/foreground and always start with a
//!   background run (length zero when the mask begins with foreground).
//!
//! All types are immutable after construction and all operations are pure.

mod mask;
mod polygon;
mod rle;

pub use mask::{BBox, BinaryMask};
pub use polygon::{rasterize, Polygon};
pub use rle::{rle_decode, rle_encode, RleMask};

use thiserror::Error;

/// Errors raised by mask/polygon/RLE operations.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum GeometryError {
    #[error("mask dimensions differ: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(u32, u32, u32, u32),
    #[error("mask is empty")]
    EmptyMask,
    #[error("polygon is degenerate: fewer than 3 distinct vertices")]
    DegeneratePolygon,
    #[error("polygon has a non-finite vertex")]
    NonFiniteVertex,
    #[error("mask dimensions must be at least 1x1, got {0}x{1}")]
    ZeroDimension(u32, u32),
    #[error("rle runs sum to {got}, expected width*height = {expected}")]
    RunSumMismatch { got: u64, expected: u64 },
    #[error("rle has a zero-length run at interior position {0}")]
    InteriorZeroRun(usize),
    #[error("box is empty or inverted: ({0},{1})..({2},{3})")]
    InvalidBox(u32, u32, u32, u32),
}

/// Intersection-over-union of two same-shape masks.
///
/// `|A∩B| / |A∪B|`, defined as 0 when the union is empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64, GeometryError> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(GeometryError::ShapeMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ));
    }
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

/// Fraction of `inner`'s foreground that lies inside `outer`: `|inner∩outer| / |inner|`.
pub fn containment(inner: &BinaryMask, outer: &BinaryMask) -> Result<f64, GeometryError> {
    if inner.width() != outer.width() || inner.height() != outer.height() {
        return Err(GeometryError::ShapeMismatch(
            inner.width(),
            inner.height(),
            outer.width(),
            outer.height(),
        ));
    }
    let denom = inner.area();
    if denom == 0 {
        return Err(GeometryError::EmptyMask);
    }
    Ok(inner.intersection_area(outer) as f64 / denom as f64)
}

/// Tightest box containing every foreground pixel of `m`.
pub fn bbox_of(m: &BinaryMask) -> Result<BBox, GeometryError> {
    m.tight_bbox().ok_or(GeometryError::EmptyMask)
}

/// Number of foreground pixels.
pub fn area(m: &BinaryMask) -> u64 {
    m.area()
}
