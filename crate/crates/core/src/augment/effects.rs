//! Pixel-level implementations of the intensity effects.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::grid::{convolve3x3, gaussian_blur, Grid2, Image};

use super::{BlurMode, ContrastMode, ImpulseKind, MultiplyMode, PoolOp, RectFrac, SharpenMode};

pub(crate) fn gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match Normal::new(0.0, sigma) {
        Ok(n) => img.map(|&v| v + n.sample(&mut rng)),
        Err(_) => img.clone(),
    }
}

/// Min-max normalization raised to `gamma`; a constant image becomes zeros.
pub(crate) fn gamma(img: &Image, gamma: f64) -> Image {
    let (lo, hi) = img.min_max();
    if !(hi > lo) {
        log::warn!("gamma applied to a constant image; output set to zero");
        return img.map(|_| 0.0);
    }
    img.map(|&v| ((v - lo) / (hi - lo)).powf(gamma))
}

pub(crate) fn invert(img: &Image) -> Image {
    let (_, hi) = img.min_max();
    img.map(|&v| hi - v)
}

pub(crate) fn impulse(img: &Image, kind: ImpulseKind, fraction: f64, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    let n = out.len();
    let count = ((fraction * n as f64).round() as usize).min(n);
    for i in index::sample(&mut rng, n, count).into_vec() {
        out.as_mut_slice()[i] = match kind {
            ImpulseKind::Salt => 1.0,
            ImpulseKind::Pepper => 0.0,
            ImpulseKind::Impulse => {
                if rng.random_bool(0.5) {
                    1.0
                } else {
                    0.0
                }
            }
        };
    }
    out
}

pub(crate) fn contrast(img: &Image, mode: ContrastMode) -> Image {
    match mode {
        ContrastMode::Linear { alpha } => img.map(|&v| 0.5 + alpha * (v - 0.5)),
        ContrastMode::Log { gain } => img.map(|&v| gain * (1.0 + v.max(0.0)).log2()),
        ContrastMode::Sigmoid { gain, cutoff } => img.map(|&v| 1.0 / (1.0 + (gain * (cutoff - v)).exp())),
    }
}

pub(crate) fn blur(img: &Image, mode: BlurMode) -> Image {
    match mode {
        BlurMode::Gaussian { sigma } => gaussian_blur(img, sigma),
        BlurMode::Average { kernel } => box_filter(img, kernel.max(1)),
    }
}

/// `k x k` mean with the window anchored so that even kernels extend one
/// pixel further towards negative coordinates; edges replicate.
fn box_filter(img: &Image, k: usize) -> Image {
    let (w, h) = img.dims();
    let lo = (k / 2) as i64;
    let hi = (k - 1 - k / 2) as i64;
    let clamp = |v: i64, n: usize| v.clamp(0, n as i64 - 1) as usize;
    let horiz = Grid2::from_fn(w, h, |x, y| {
        (-lo..=hi).map(|d| img.get(clamp(x as i64 + d, w), y)).sum::<f64>() / k as f64
    });
    Grid2::from_fn(w, h, |x, y| {
        (-lo..=hi).map(|d| horiz.get(x, clamp(y as i64 + d, h))).sum::<f64>() / k as f64
    })
}

/// Pixel rectangle covered by a fractional box, clipped to the image.
fn rect_pixels(r: &RectFrac, w: usize, h: usize) -> (usize, usize, usize, usize) {
    let x0 = ((r.x * w as f64).floor().max(0.0) as usize).min(w);
    let y0 = ((r.y * h as f64).floor().max(0.0) as usize).min(h);
    let x1 = (((r.x + r.w) * w as f64).round().max(0.0) as usize).clamp(x0, w);
    let y1 = (((r.y + r.h) * h as f64).round().max(0.0) as usize).clamp(y0, h);
    (x0, y0, x1, y1)
}

pub(crate) fn box_corruption(img: &Image, boxes: &[RectFrac], seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    let (w, h) = img.dims();
    for b in boxes {
        let (x0, y0, x1, y1) = rect_pixels(b, w, h);
        for y in y0..y1 {
            for x in x0..x1 {
                *out.get_mut(x, y) = rng.random_range(0.0..=1.0);
            }
        }
    }
    out
}

/// Zeroes exactly `round(rate * N)` distinct pixels.
pub(crate) fn dropout_pixels(img: &Image, rate: f64, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = img.clone();
    let n = out.len();
    let count = ((rate * n as f64).round() as usize).min(n);
    for i in index::sample(&mut rng, n, count).into_vec() {
        out.as_mut_slice()[i] = 0.0;
    }
    out
}

pub(crate) fn dropout_rect(img: &Image, rect: &RectFrac) -> Image {
    let mut out = img.clone();
    let (w, h) = img.dims();
    let (x0, y0, x1, y1) = rect_pixels(rect, w, h);
    for y in y0..y1 {
        for x in x0..x1 {
            *out.get_mut(x, y) = 0.0;
        }
    }
    out
}

const SHARPEN: [[f64; 3]; 3] = [[0.0, -1.0, 0.0], [-1.0, 5.0, -1.0], [0.0, -1.0, 0.0]];
const EMBOSS: [[f64; 3]; 3] = [[-1.0, -1.0, 0.0], [-1.0, 0.0, 1.0], [0.0, 1.0, 1.0]];

pub(crate) fn sharpen_emboss(img: &Image, mode: SharpenMode) -> Image {
    match mode {
        SharpenMode::Sharpen { alpha } => {
            let s = convolve3x3(img, &SHARPEN);
            Grid2::from_fn(img.width(), img.height(), |x, y| {
                (1.0 - alpha) * img.get(x, y) + alpha * s.get(x, y)
            })
        }
        SharpenMode::Emboss { alpha } => {
            let e = convolve3x3(img, &EMBOSS);
            Grid2::from_fn(img.width(), img.height(), |x, y| img.get(x, y) + alpha * e.get(x, y))
        }
    }
}

/// Non-overlapping `k x k` pooling followed by bilinear upsampling back to the
/// input size.
pub(crate) fn pooling(img: &Image, op: PoolOp, k: usize) -> Image {
    let k = k.max(1);
    let (w, h) = img.dims();
    let (pw, ph) = (w.div_ceil(k), h.div_ceil(k));
    let pooled = Grid2::from_fn(pw, ph, |px, py| {
        let mut vals: Vec<f64> = Vec::with_capacity(k * k);
        for y in py * k..((py + 1) * k).min(h) {
            for x in px * k..((px + 1) * k).min(w) {
                vals.push(*img.get(x, y));
            }
        }
        match op {
            PoolOp::Average => vals.iter().sum::<f64>() / vals.len() as f64,
            PoolOp::Max => vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            PoolOp::Min => vals.iter().copied().fold(f64::INFINITY, f64::min),
            PoolOp::Median => {
                vals.sort_by(f64::total_cmp);
                let m = vals.len() / 2;
                if vals.len() % 2 == 1 {
                    vals[m]
                } else {
                    0.5 * (vals[m - 1] + vals[m])
                }
            }
        }
    });
    let s = 1.0 / k as f64;
    Grid2::from_fn(w, h, |x, y| {
        pooled.sample_bilinear((x as f64 + 0.5) * s - 0.5, (y as f64 + 0.5) * s - 0.5)
    })
}

pub(crate) fn multiply(img: &Image, mode: MultiplyMode) -> Image {
    match mode {
        MultiplyMode::Brightness { factor } => img.map(|&v| v * factor),
        MultiplyMode::Elementwise { low, high, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            img.map(|&v| v * rng.random_range(low..=high))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| (x + y) as f64 / (w + h - 2) as f64)
    }

    #[test]
    fn box_filter_constant_and_mean() {
        let c = Image::filled(9, 7, 0.3);
        assert!(box_filter(&c, 4).as_slice().iter().all(|v| (v - 0.3).abs() < 1e-12));
        let mut d = Image::filled(5, 5, 0.0);
        *d.get_mut(2, 2) = 9.0;
        assert!((box_filter(&d, 3).get(2, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pooling_block_values() {
        let img = ramp(8, 8);
        let max = pooling(&img, PoolOp::Max, 2);
        let min = pooling(&img, PoolOp::Min, 2);
        for (a, b) in max.as_slice().iter().zip(min.as_slice()) {
            assert!(a >= b);
        }
        let c = Image::filled(7, 5, 0.4);
        for op in [PoolOp::Average, PoolOp::Max, PoolOp::Min, PoolOp::Median] {
            let p = pooling(&c, op, 3);
            assert_eq!(p.dims(), (7, 5));
            assert!(p.as_slice().iter().all(|v| (v - 0.4).abs() < 1e-12));
        }
    }

    #[test]
    fn impulse_counts() {
        let img = Image::filled(20, 10, 0.5);
        let salted = impulse(&img, ImpulseKind::Salt, 0.1, 3);
        assert_eq!(salted.as_slice().iter().filter(|&&v| v == 1.0).count(), 20);
        let peppered = impulse(&img, ImpulseKind::Pepper, 0.1, 3);
        assert_eq!(peppered.as_slice().iter().filter(|&&v| v == 0.0).count(), 20);
    }

    #[test]
    fn sharpen_zero_alpha_is_identity() {
        let img = ramp(6, 6);
        assert_eq!(sharpen_emboss(&img, SharpenMode::Sharpen { alpha: 0.0 }), img);
    }

    #[test]
    fn contrast_linear_fixed_point() {
        let img = Image::filled(2, 2, 0.5);
        let out = contrast(&img, ContrastMode::Linear { alpha: 1.3 });
        assert_eq!(out, img);
    }
}
