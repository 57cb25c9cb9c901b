//! Spatial maps shared by the geometric effects.
//!
//! Every map works in continuous pixel coordinates where pixel `(x, y)` has
//! its center at `(x, y)`. `inverse` takes an output location to the source
//! location that is sampled there; `forward` moves a source point (a landmark)
//! into the output image.

use nalgebra::{Matrix2, Vector2};

use crate::grid::{Grid2, Image, Mask};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum SpatialMap {
    /// Axis-aligned window `[x0, x0 + cw) x [y0, y0 + ch)` stretched over the
    /// full `w x h` output.
    Crop {
        x0: f64,
        y0: f64,
        cw: f64,
        ch: f64,
        w: f64,
        h: f64,
    },
    /// `p' = center + shift + a (p - center)`.
    Affine {
        a: Matrix2<f64>,
        a_inv: Matrix2<f64>,
        center: Vector2<f64>,
        shift: Vector2<f64>,
    },
    Piecewise(PiecewiseAffine),
}

impl SpatialMap {
    pub(crate) fn affine(a: Matrix2<f64>, center: Vector2<f64>, shift: Vector2<f64>) -> Option<Self> {
        let a_inv = a.try_inverse()?;
        Some(SpatialMap::Affine { a, a_inv, center, shift })
    }

    pub(crate) fn inverse(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        match self {
            SpatialMap::Crop { x0, y0, cw, ch, w, h } => {
                Some((x0 + (x + 0.5) * cw / w - 0.5, y0 + (y + 0.5) * ch / h - 0.5))
            }
            SpatialMap::Affine { a_inv, center, shift, .. } => {
                let p = center + a_inv * (Vector2::new(x, y) - center - shift);
                Some((p.x, p.y))
            }
            SpatialMap::Piecewise(pw) => pw.map(&pw.dst, &pw.src, x, y),
        }
    }

    pub(crate) fn forward(&self, x: f64, y: f64) -> Option<(f64, f64)> {
        match self {
            SpatialMap::Crop { x0, y0, cw, ch, w, h } => {
                Some(((x - x0 + 0.5) * w / cw - 0.5, (y - y0 + 0.5) * h / ch - 0.5))
            }
            SpatialMap::Affine { a, center, shift, .. } => {
                let p = center + shift + a * (Vector2::new(x, y) - center);
                Some((p.x, p.y))
            }
            SpatialMap::Piecewise(pw) => pw.map(&pw.src, &pw.dst, x, y),
        }
    }

    /// Resamples an image; locations that map outside the source become 0.
    pub(crate) fn warp_image(&self, img: &Image) -> Image {
        let (w, h) = img.dims();
        Grid2::from_fn(w, h, |x, y| match self.inverse(x as f64, y as f64) {
            Some((sx, sy)) if inside(sx, sy, w, h) => img.sample_bilinear(sx, sy),
            _ => 0.0,
        })
    }

    /// Nearest-neighbour resampling; outside locations become background (0).
    pub(crate) fn warp_mask(&self, mask: &Mask) -> Mask {
        let (w, h) = mask.dims();
        Grid2::from_fn(w, h, |x, y| match self.inverse(x as f64, y as f64) {
            Some((sx, sy)) if inside(sx, sy, w, h) => {
                let xi = (sx.round().max(0.0) as usize).min(w - 1);
                let yi = (sy.round().max(0.0) as usize).min(h - 1);
                *mask.get(xi, yi)
            }
            _ => 0,
        })
    }

    /// Moves a landmark; landmarks leaving the image become `None`.
    pub(crate) fn warp_point(&self, p: Option<[f64; 2]>, w: usize, h: usize) -> Option<[f64; 2]> {
        let [x, y] = p?;
        let (fx, fy) = self.forward(x, y)?;
        inside(fx, fy, w, h).then_some([fx, fy])
    }
}

fn inside(x: f64, y: f64, w: usize, h: usize) -> bool {
    x >= -0.5 && y >= -0.5 && x <= w as f64 - 0.5 && y <= h as f64 - 0.5
}

/// Triangulated mesh pairing a regular grid (`dst`) with a displaced copy
/// (`src`) of the same topology.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PiecewiseAffine {
    cells: usize,
    src: Vec<[f64; 2]>,
    dst: Vec<[f64; 2]>,
}

impl PiecewiseAffine {
    /// `offsets` are per-vertex displacements in units of cell size, row-major
    /// over the `(cells + 1)^2` vertices; border vertices are kept in place.
    pub(crate) fn new(w: usize, h: usize, cells: usize, offsets: &[[f64; 2]]) -> Self {
        let n = cells + 1;
        let (cw, ch) = (w as f64 / cells as f64, h as f64 / cells as f64);
        let mut src = Vec::with_capacity(n * n);
        let mut dst = Vec::with_capacity(n * n);
        for j in 0..n {
            for i in 0..n {
                let base = [i as f64 * cw - 0.5, j as f64 * ch - 0.5];
                dst.push(base);
                let interior = i > 0 && j > 0 && i < cells && j < cells;
                let off = offsets.get(j * n + i).copied().unwrap_or([0.0, 0.0]);
                if interior {
                    src.push([base[0] + off[0] * cw, base[1] + off[1] * ch]);
                } else {
                    src.push(base);
                }
            }
        }
        PiecewiseAffine { cells, src, dst }
    }

    fn triangles(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        let n = self.cells + 1;
        (0..self.cells).flat_map(move |j| {
            (0..self.cells).flat_map(move |i| {
                let a = j * n + i;
                let (b, c, d) = (a + 1, a + n, a + n + 1);
                [[a, b, d], [a, d, c]]
            })
        })
    }

    /// Locates `(x, y)` in the `from` mesh and maps it with the matching
    /// triangle of the `to` mesh.
    fn map(&self, from: &[[f64; 2]], to: &[[f64; 2]], x: f64, y: f64) -> Option<(f64, f64)> {
        const EPS: f64 = 1e-9;
        for t in self.triangles() {
            let [p0, p1, p2] = t.map(|k| from[k]);
            let det = (p1[1] - p2[1]) * (p0[0] - p2[0]) + (p2[0] - p1[0]) * (p0[1] - p2[1]);
            if det.abs() < 1e-12 {
                continue;
            }
            let l0 = ((p1[1] - p2[1]) * (x - p2[0]) + (p2[0] - p1[0]) * (y - p2[1])) / det;
            let l1 = ((p2[1] - p0[1]) * (x - p2[0]) + (p0[0] - p2[0]) * (y - p2[1])) / det;
            let l2 = 1.0 - l0 - l1;
            if l0 >= -EPS && l1 >= -EPS && l2 >= -EPS {
                let [q0, q1, q2] = t.map(|k| to[k]);
                return Some((
                    l0 * q0[0] + l1 * q1[0] + l2 * q2[0],
                    l0 * q0[1] + l1 * q1[1] + l2 * q2[1],
                ));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_roundtrip() {
        let m = SpatialMap::Crop { x0: 3.0, y0: 5.0, cw: 90.0, ch: 90.0, w: 100.0, h: 100.0 };
        let (ix, iy) = m.inverse(12.0, 40.0).unwrap();
        let (fx, fy) = m.forward(ix, iy).unwrap();
        assert!((fx - 12.0).abs() < 1e-12 && (fy - 40.0).abs() < 1e-12);
    }

    #[test]
    fn affine_roundtrip() {
        let a = Matrix2::new(0.9, 0.2, -0.1, 1.1);
        let m = SpatialMap::affine(a, Vector2::new(20.0, 20.0), Vector2::new(3.0, -2.0)).unwrap();
        let (fx, fy) = m.forward(7.0, 31.0).unwrap();
        let (ix, iy) = m.inverse(fx, fy).unwrap();
        assert!((ix - 7.0).abs() < 1e-12 && (iy - 31.0).abs() < 1e-12);
    }

    #[test]
    fn piecewise_roundtrip_and_identity() {
        let flat = PiecewiseAffine::new(64, 64, 4, &[]);
        let m = SpatialMap::Piecewise(flat);
        assert_eq!(m.forward(10.0, 50.0).unwrap(), (10.0, 50.0));

        let offsets: Vec<[f64; 2]> = (0..25).map(|k| [0.2 * ((k % 3) as f64 - 1.0), -0.15]).collect();
        let m = SpatialMap::Piecewise(PiecewiseAffine::new(64, 64, 4, &offsets));
        let (fx, fy) = m.forward(30.0, 22.0).unwrap();
        let (ix, iy) = m.inverse(fx, fy).unwrap();
        assert!((ix - 30.0).abs() < 1e-9 && (iy - 22.0).abs() < 1e-9);
    }
}
