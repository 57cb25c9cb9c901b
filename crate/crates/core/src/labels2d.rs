//! Landmark heatmaps and their argmax decoding.
//!
//! Heatmaps are unnormalized Gaussians with amplitude 1 at the landmark, so a
//! confidence threshold means the same thing at every resolution. Invisible
//! landmarks get an all-zero map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Image;

/// Default heatmap width at 360 px; scale proportionally with resolution.
pub const DEFAULT_SIGMA_PX_AT_360: f64 = 6.0;

pub fn default_sigma_px(width: usize) -> f64 {
    DEFAULT_SIGMA_PX_AT_360 * width as f64 / 360.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub name: String,
    pub values: Image,
}

impl Heatmap {
    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dims()
    }

    pub fn is_zero(&self) -> bool {
        self.values.as_slice().iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandmarkPrediction {
    /// Pixel `(x, y)` of the peak.
    pub pixel: [usize; 2],
    /// Peak heatmap response.
    pub confidence: f64,
}

/// Gaussian of width `sigma_px` centered on `pixel` (continuous `(x, y)`).
pub fn encode(pixel: Option<[f64; 2]>, width: usize, height: usize, sigma_px: f64) -> Result<Heatmap> {
    if !(sigma_px > 0.0 && sigma_px.is_finite()) {
        return Err(Error::Precondition(format!("heatmap sigma must be positive, got {sigma_px}")));
    }
    let values = match pixel {
        None => Image::filled(width, height, 0.0),
        Some([px, py]) => {
            let inv = 1.0 / (2.0 * sigma_px * sigma_px);
            // Separable: precompute the per-axis factors.
            let gx: Vec<f64> = (0..width).map(|x| (-(x as f64 - px).powi(2) * inv).exp()).collect();
            let gy: Vec<f64> = (0..height).map(|y| (-(y as f64 - py).powi(2) * inv).exp()).collect();
            Image::from_fn(width, height, |x, y| gx[x] * gy[y])
        }
    };
    Ok(Heatmap {
        name: String::new(),
        values,
    })
}

/// Argmax of the map; ties resolve to the smallest row-major index.
pub fn decode(h: &Heatmap) -> LandmarkPrediction {
    decode_image(&h.values)
}

pub fn decode_image(values: &Image) -> LandmarkPrediction {
    let mut best = 0usize;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in values.as_slice().iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    let w = values.width().max(1);
    LandmarkPrediction {
        pixel: [best % w, best / w],
        confidence: best_v.clamp(0.0, 1.0),
    }
}

/// Mean squared difference between two heatmaps.
pub fn mse_heatmap_loss(pred: &Heatmap, reference: &Heatmap) -> Result<f64> {
    if !pred.values.same_dims(&reference.values) {
        return Err(Error::DimMismatch(format!(
            "heatmaps {:?} vs {:?}",
            pred.dims(),
            reference.dims()
        )));
    }
    let n = pred.values.len() as f64;
    Ok(pred
        .values
        .as_slice()
        .iter()
        .zip(reference.values.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_and_sigma_value() {
        let h = encode(Some([100.0, 100.0]), 200, 200, 5.0).unwrap();
        assert_eq!(*h.values.get(100, 100), 1.0);
        assert!((h.values.get(105, 100) - (-0.5f64).exp()).abs() < 1e-12);
        assert!((h.values.get(100, 95) - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn absent_is_zero() {
        let h = encode(None, 10, 7, 2.0).unwrap();
        assert!(h.is_zero());
        let p = decode(&h);
        assert_eq!(p.confidence, 0.0);
        assert_eq!(p.pixel, [0, 0]);
    }

    #[test]
    fn roundtrip_and_ties() {
        let h = encode(Some([3.0, 4.0]), 10, 10, 1.5).unwrap();
        assert_eq!(decode(&h), LandmarkPrediction { pixel: [3, 4], confidence: 1.0 });

        let mut img = Image::filled(5, 5, 0.0);
        *img.get_mut(4, 1) = 0.7;
        *img.get_mut(2, 3) = 0.7;
        assert_eq!(decode_image(&img).pixel, [4, 1]);
    }

    #[test]
    fn bad_sigma() {
        assert!(encode(Some([1.0, 1.0]), 4, 4, 0.0).is_err());
    }

    #[test]
    fn mse_cases() {
        let a = encode(Some([2.0, 2.0]), 6, 6, 1.0).unwrap();
        let b = encode(Some([3.0, 1.0]), 6, 6, 1.0).unwrap();
        assert_eq!(mse_heatmap_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(mse_heatmap_loss(&a, &b).unwrap(), mse_heatmap_loss(&b, &a).unwrap());

        let zero = encode(None, 6, 6, 1.0).unwrap();
        let mut single = zero.clone();
        *single.values.get_mut(1, 1) = 1.0;
        assert!((mse_heatmap_loss(&zero, &single).unwrap() - 1.0 / 36.0).abs() < 1e-15);

        let other = encode(None, 5, 6, 1.0).unwrap();
        assert!(mse_heatmap_loss(&zero, &other).is_err());
    }
}
