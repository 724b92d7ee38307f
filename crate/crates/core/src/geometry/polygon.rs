use serde::{Deserialize, Serialize};

use super::{BinaryMask, GeometryError};

/// Simple polygon in real pixel coordinates, implicitly closed
/// (the last vertex connects back to the first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<(f64, f64)>,
}

impl Polygon {
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self, GeometryError> {
        if vertices.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(GeometryError::NonFiniteVertex);
        }
        let mut distinct: Vec<(f64, f64)> = Vec::new();
        for &v in &vertices {
            if !distinct.contains(&v) {
                distinct.push(v);
            }
        }
        if distinct.len() < 3 {
            return Err(GeometryError::DegeneratePolygon);
        }
        Ok(Polygon { vertices })
    }
}

/// Even-odd scanline rasterization.
///
/// A pixel is foreground iff its center `(x+0.5, y+0.5)` is inside the
/// polygon. Per row, edge crossings with the horizontal line `py = y+0.5`
/// are collected using the half-open rule `(y1 > py) != (y2 > py)`, sorted,
/// and consumed in pairs: centers in `[c_{2j}, c_{2j+1})` are inside. The
/// crossing rule makes the fill agree exactly with an even-odd
/// point-in-polygon test at every pixel center.
pub fn rasterize(poly: &Polygon, width: u32, height: u32) -> Result<BinaryMask, GeometryError> {
    // Re-validate: Polygon values are constructible by deserialization too.
    let poly = Polygon::new(poly.vertices.clone())?;
    let mut mask = BinaryMask::new(width, height)?;
    let verts = &poly.vertices;
    let n = verts.len();

    let mut crossings: Vec<f64> = Vec::with_capacity(n);
    for y in 0..height {
        let py = y as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let (x1, y1) = verts[i];
            let (x2, y2) = verts[(i + 1) % n];
            if (y1 > py) != (y2 > py) {
                crossings.push(x1 + (py - y1) * (x2 - x1) / (y2 - y1));
            }
        }
        crossings.sort_by(|a, b| a.partial_cmp(b).expect("finite crossings"));
        for pair in crossings.chunks_exact(2) {
            let (lo, hi) = (pair[0], pair[1]);
            // centers x+0.5 in [lo, hi)
            let x_start = (lo - 0.5).ceil().max(0.0) as i64;
            let x_end = ((hi - 0.5).ceil() as i64).min(width as i64);
            for x in x_start..x_end {
                mask.set(x as u32, y, true);
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Even-odd point-in-polygon ray cast, the independent oracle for the
    /// scanline fill: counts edge crossings strictly to the right of the point.
    fn point_in_polygon(verts: &[(f64, f64)], px: f64, py: f64) -> bool {
        let n = verts.len();
        let mut inside = false;
        for i in 0..n {
            let (x1, y1) = verts[i];
            let (x2, y2) = verts[(i + 1) % n];
            if (y1 > py) != (y2 > py) {
                let xc = x1 + (py - y1) * (x2 - x1) / (y2 - y1);
                if px < xc {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn oracle_count(verts: &[(f64, f64)], w: u32, h: u32) -> u64 {
        let mut count = 0;
        for y in 0..h {
            for x in 0..w {
                if point_in_polygon(verts, x as f64 + 0.5, y as f64 + 0.5) {
                    count += 1;
                }
            }
        }
        count
    }

    #[test]
    fn square_on_8x8_has_16_pixels() {
        let p = Polygon::new(vec![(0.0, 0.0), (4.0, 0.0), (4.0, 4.0), (0.0, 4.0)]).unwrap();
        let m = rasterize(&p, 8, 8).unwrap();
        assert_eq!(m.area(), 16);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(m.get(x, y), x < 4 && y < 4, "pixel ({x},{y})");
            }
        }
        assert_eq!(m.area(), oracle_count(&p.vertices, 8, 8));
    }

    #[test]
    fn full_grid_polygon_sets_every_pixel() {
        let p = Polygon::new(vec![(-1.0, -1.0), (9.0, -1.0), (9.0, 9.0), (-1.0, 9.0)]).unwrap();
        let m = rasterize(&p, 8, 8).unwrap();
        assert_eq!(m.area(), 64);
    }

    #[test]
    fn triangle_matches_center_oracle() {
        let verts = vec![(0.0, 0.0), (6.0, 0.0), (0.0, 6.0)];
        let p = Polygon::new(verts.clone()).unwrap();
        let m = rasterize(&p, 8, 8).unwrap();
        assert_eq!(m.area(), oracle_count(&verts, 8, 8));
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(
                    m.get(x, y),
                    point_in_polygon(&verts, x as f64 + 0.5, y as f64 + 0.5),
                    "pixel ({x},{y})"
                );
            }
        }
    }

    #[test]
    fn degenerate_polygons_rejected() {
        assert_eq!(
            Polygon::new(vec![(0.0, 0.0), (1.0, 1.0)]).unwrap_err(),
            GeometryError::DegeneratePolygon
        );
        // three vertices but only two distinct points
        assert_eq!(
            Polygon::new(vec![(0.0, 0.0), (1.0, 1.0), (0.0, 0.0)]).unwrap_err(),
            GeometryError::DegeneratePolygon
        );
        assert_eq!(
            Polygon::new(vec![(0.0, 0.0), (f64::NAN, 1.0), (2.0, 0.0)]).unwrap_err(),
            GeometryError::NonFiniteVertex
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        /// Random convex polygon: points on a circle with jittered radii,
        /// sorted by angle.
        fn convex_polygon() -> impl Strategy<Value = Vec<(f64, f64)>> {
            (
                3usize..10,
                0.0f64..std::f64::consts::TAU,
                2.0f64..14.0,
                8.0f64..24.0,
                8.0f64..24.0,
            )
                .prop_map(|(n, phase, r, cx, cy)| {
                    (0..n)
                        .map(|i| {
                            let ang = phase + std::f64::consts::TAU * i as f64 / n as f64;
                            (cx + r * ang.cos(), cy + r * ang.sin())
                        })
                        .collect()
                })
        }

        proptest! {
            #[test]
            fn rasterize_agrees_with_point_oracle(verts in convex_polygon()) {
                let p = Polygon::new(verts.clone()).unwrap();
                let m = rasterize(&p, 32, 32).unwrap();
                for y in 0..32 {
                    for x in 0..32 {
                        let want = point_in_polygon(&verts, x as f64 + 0.5, y as f64 + 0.5);
                        prop_assert_eq!(m.get(x, y), want, "pixel ({},{})", x, y);
                    }
                }
            }
        }
    }
}
