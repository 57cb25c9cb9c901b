//! Seeded domain-randomization pipeline.
//!
//! A plan is sampled once ([`plan`]) and can be serialized and replayed
//! exactly ([`apply`], [`apply_labeled`]). Every plan starts with the three
//! regular effects; strong plans append up to two distinct strong effects.
//! Intensities are treated as normalized `[0, 1]` values and clamped after
//! each effect.

mod effects;
mod warp;

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Image, Mask};
use warp::{PiecewiseAffine, SpatialMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Regular,
    Strong,
}

impl std::str::FromStr for Level {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "regular" => Ok(Level::Regular),
            "strong" => Ok(Level::Strong),
            other => Err(Error::Precondition(format!("unknown augmentation level {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpulseKind {
    /// Random mix of black and white pixels.
    Impulse,
    Pepper,
    Salt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ContrastMode {
    /// `0.5 + alpha (x - 0.5)`
    Linear { alpha: f64 },
    /// `gain log2(1 + x)`
    Log { gain: f64 },
    /// `1 / (1 + exp(gain (cutoff - x)))`
    Sigmoid { gain: f64, cutoff: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BlurMode {
    Gaussian { sigma: f64 },
    Average { kernel: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SharpenMode {
    /// Blend towards the sharpened image by `alpha`.
    Sharpen { alpha: f64 },
    /// Add `alpha` times the emboss response.
    Emboss { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolOp {
    Average,
    Max,
    Min,
    Median,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MultiplyMode {
    Brightness { factor: f64 },
    Elementwise { low: f64, high: f64, seed: u64 },
}

/// Rectangle as fractions of image width/height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RectFrac {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DropoutMode {
    Pixels { rate: f64, seed: u64 },
    Rect { rect: RectFrac },
}

/// One effect with all of its sampled parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    GaussianNoise { sigma: f64, seed: u64 },
    Gamma { gamma: f64 },
    /// Crop of `fraction` of each side at relative offset `(offset_x, offset_y)`
    /// of the free margin, resized back.
    RandomCrop { fraction: f64, offset_x: f64, offset_y: f64 },
    Invert,
    ImpulseNoise { kind: ImpulseKind, fraction: f64, seed: u64 },
    /// Rotation, shear and scale about the image center followed by a
    /// translation given as fractions of width/height.
    Affine {
        rotation_deg: f64,
        shear_deg: f64,
        scale: f64,
        translate: [f64; 2],
    },
    Contrast(ContrastMode),
    Blur(BlurMode),
    BoxCorruption { boxes: Vec<RectFrac>, seed: u64 },
    Dropout(DropoutMode),
    SharpenEmboss(SharpenMode),
    Pooling { op: PoolOp, kernel: usize },
    Multiply(MultiplyMode),
    /// Piecewise-affine warp on a `cells x cells` mesh; `offsets` displace the
    /// source vertices in units of cell size.
    Distort { cells: usize, offsets: Vec<[f64; 2]> },
}

pub const REGULAR_EFFECTS: [&str; 3] = ["gaussian_noise", "gamma", "random_crop"];

pub const STRONG_EFFECTS: [&str; 11] = [
    "invert",
    "impulse_noise",
    "affine",
    "contrast",
    "blur",
    "box_corruption",
    "dropout",
    "sharpen_emboss",
    "pooling",
    "multiply",
    "distort",
];

impl Effect {
    pub fn id(&self) -> &'static str {
        match self {
            Effect::GaussianNoise { .. } => "gaussian_noise",
            Effect::Gamma { .. } => "gamma",
            Effect::RandomCrop { .. } => "random_crop",
            Effect::Invert => "invert",
            Effect::ImpulseNoise { .. } => "impulse_noise",
            Effect::Affine { .. } => "affine",
            Effect::Contrast(_) => "contrast",
            Effect::Blur(_) => "blur",
            Effect::BoxCorruption { .. } => "box_corruption",
            Effect::Dropout(_) => "dropout",
            Effect::SharpenEmboss(_) => "sharpen_emboss",
            Effect::Pooling { .. } => "pooling",
            Effect::Multiply(_) => "multiply",
            Effect::Distort { .. } => "distort",
        }
    }

    pub fn is_strong(&self) -> bool {
        !REGULAR_EFFECTS.contains(&self.id())
    }

    pub fn is_geometric(&self) -> bool {
        matches!(self, Effect::RandomCrop { .. } | Effect::Affine { .. } | Effect::Distort { .. })
    }

    fn spatial_map(&self, w: usize, h: usize) -> Option<SpatialMap> {
        let (wf, hf) = (w as f64, h as f64);
        match self {
            Effect::RandomCrop { fraction, offset_x, offset_y } => {
                let cw = (fraction * wf).round().clamp(1.0, wf);
                let ch = (fraction * hf).round().clamp(1.0, hf);
                Some(SpatialMap::Crop {
                    x0: (offset_x * (wf - cw)).round(),
                    y0: (offset_y * (hf - ch)).round(),
                    cw,
                    ch,
                    w: wf,
                    h: hf,
                })
            }
            Effect::Affine { rotation_deg, shear_deg, scale, translate } => {
                let (s, c) = (rotation_deg * PI / 180.0).sin_cos();
                let rot = Matrix2::new(c, -s, s, c);
                let shear = Matrix2::new(1.0, (shear_deg * PI / 180.0).tan(), 0.0, 1.0);
                let a = rot * shear * *scale;
                let center = Vector2::new((wf - 1.0) / 2.0, (hf - 1.0) / 2.0);
                SpatialMap::affine(a, center, Vector2::new(translate[0] * wf, translate[1] * hf))
            }
            Effect::Distort { cells, offsets } => {
                Some(SpatialMap::Piecewise(PiecewiseAffine::new(w, h, (*cells).max(1), offsets)))
            }
            _ => None,
        }
    }

    fn apply_intensity(&self, img: &Image) -> Image {
        match self {
            Effect::GaussianNoise { sigma, seed } => effects::gaussian_noise(img, *sigma, *seed),
            Effect::Gamma { gamma } => effects::gamma(img, *gamma),
            Effect::Invert => effects::invert(img),
            Effect::ImpulseNoise { kind, fraction, seed } => effects::impulse(img, *kind, *fraction, *seed),
            Effect::Contrast(m) => effects::contrast(img, *m),
            Effect::Blur(m) => effects::blur(img, *m),
            Effect::BoxCorruption { boxes, seed } => effects::box_corruption(img, boxes, *seed),
            Effect::Dropout(DropoutMode::Pixels { rate, seed }) => effects::dropout_pixels(img, *rate, *seed),
            Effect::Dropout(DropoutMode::Rect { rect }) => effects::dropout_rect(img, rect),
            Effect::SharpenEmboss(m) => effects::sharpen_emboss(img, *m),
            Effect::Pooling { op, kernel } => effects::pooling(img, *op, *kernel),
            Effect::Multiply(m) => effects::multiply(img, *m),
            Effect::RandomCrop { .. } | Effect::Affine { .. } | Effect::Distort { .. } => img.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationPlan {
    pub seed: u64,
    pub level: Level,
    pub effects: Vec<Effect>,
}

impl AugmentationPlan {
    pub fn strong_count(&self) -> usize {
        self.effects.iter().filter(|e| e.is_strong()).count()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plan serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(format!("augmentation plan: {e}")))
    }
}

/// Sampling ranges for every effect parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentKnobs {
    /// Noise standard deviation as a fraction of the unit intensity range.
    pub noise_sigma: (f64, f64),
    pub gamma: (f64, f64),
    pub crop_fraction: f64,
    pub max_strong: usize,
    pub impulse_fraction: f64,
    pub affine_rotation_deg: f64,
    pub affine_shear_deg: f64,
    pub affine_scale: (f64, f64),
    pub affine_translate: f64,
    pub linear_alpha: (f64, f64),
    pub log_gain: (f64, f64),
    pub sigmoid_gain: (f64, f64),
    pub sigmoid_cutoff: (f64, f64),
    pub blur_sigma: f64,
    pub blur_kernel: (usize, usize),
    pub box_count: (usize, usize),
    /// Box side as a fraction of image width/height.
    pub box_side: (f64, f64),
    pub dropout_rate: (f64, f64),
    pub dropout_rect_area: (f64, f64),
    pub pool_kernel: (usize, usize),
    pub multiply: (f64, f64),
    pub distort_cells: usize,
    /// Maximum vertex displacement in units of mesh cell size.
    pub distort_max_offset: f64,
}

impl Default for AugmentKnobs {
    fn default() -> Self {
        AugmentKnobs {
            noise_sigma: (0.005, 0.1),
            gamma: (0.7, 1.3),
            crop_fraction: 0.9,
            max_strong: 2,
            impulse_fraction: 0.1,
            affine_rotation_deg: 15.0,
            affine_shear_deg: 10.0,
            affine_scale: (0.9, 1.1),
            affine_translate: 0.1,
            linear_alpha: (0.6, 1.4),
            log_gain: (0.6, 1.4),
            sigmoid_gain: (5.0, 20.0),
            sigmoid_cutoff: (0.25, 0.75),
            blur_sigma: 3.0,
            blur_kernel: (2, 7),
            box_count: (1, 5),
            box_side: (0.05, 0.2),
            dropout_rate: (0.01, 0.1),
            dropout_rect_area: (0.02, 0.05),
            pool_kernel: (2, 4),
            multiply: (0.5, 1.5),
            distort_cells: 4,
            distort_max_offset: 0.25,
        }
    }
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn uniform_usize<R: Rng>(rng: &mut R, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi.max(lo))
}

fn sample_strong<R: Rng>(id: &str, k: &AugmentKnobs, rng: &mut R) -> Effect {
    match id {
        "invert" => Effect::Invert,
        "impulse_noise" => Effect::ImpulseNoise {
            kind: [ImpulseKind::Impulse, ImpulseKind::Pepper, ImpulseKind::Salt][rng.random_range(0..3)],
            fraction: k.impulse_fraction,
            seed: rng.next_u64(),
        },
        "affine" => Effect::Affine {
            rotation_deg: uniform(rng, (-k.affine_rotation_deg, k.affine_rotation_deg)),
            shear_deg: uniform(rng, (-k.affine_shear_deg, k.affine_shear_deg)),
            scale: uniform(rng, k.affine_scale),
            translate: [
                uniform(rng, (-k.affine_translate, k.affine_translate)),
                uniform(rng, (-k.affine_translate, k.affine_translate)),
            ],
        },
        "contrast" => Effect::Contrast(match rng.random_range(0..3) {
            0 => ContrastMode::Linear { alpha: uniform(rng, k.linear_alpha) },
            1 => ContrastMode::Log { gain: uniform(rng, k.log_gain) },
            _ => ContrastMode::Sigmoid {
                gain: uniform(rng, k.sigmoid_gain),
                cutoff: uniform(rng, k.sigmoid_cutoff),
            },
        }),
        "blur" => Effect::Blur(if rng.random_bool(0.5) {
            BlurMode::Gaussian { sigma: k.blur_sigma }
        } else {
            BlurMode::Average { kernel: uniform_usize(rng, k.blur_kernel) }
        }),
        "box_corruption" => {
            let n = uniform_usize(rng, k.box_count);
            let boxes = (0..n)
                .map(|_| {
                    let (w, h) = (uniform(rng, k.box_side), uniform(rng, k.box_side));
                    RectFrac { x: uniform(rng, (0.0, 1.0 - w)), y: uniform(rng, (0.0, 1.0 - h)), w, h }
                })
                .collect();
            Effect::BoxCorruption { boxes, seed: rng.next_u64() }
        }
        "dropout" => Effect::Dropout(if rng.random_bool(0.5) {
            DropoutMode::Pixels { rate: uniform(rng, k.dropout_rate), seed: rng.next_u64() }
        } else {
            let area = uniform(rng, k.dropout_rect_area);
            let aspect: f64 = uniform(rng, (0.5, 2.0));
            let w = (area * aspect).sqrt().min(1.0);
            let h = (area / aspect).sqrt().min(1.0);
            let rect = RectFrac { x: uniform(rng, (0.0, 1.0 - w)), y: uniform(rng, (0.0, 1.0 - h)), w, h };
            DropoutMode::Rect { rect }
        }),
        "sharpen_emboss" => Effect::SharpenEmboss(if rng.random_bool(0.5) {
            SharpenMode::Sharpen { alpha: uniform(rng, (0.0, 1.0)) }
        } else {
            SharpenMode::Emboss { alpha: uniform(rng, (0.0, 1.0)) }
        }),
        "pooling" => Effect::Pooling {
            op: [PoolOp::Average, PoolOp::Max, PoolOp::Min, PoolOp::Median][rng.random_range(0..4)],
            kernel: uniform_usize(rng, k.pool_kernel),
        },
        "multiply" => Effect::Multiply(if rng.random_bool(0.5) {
            MultiplyMode::Brightness { factor: uniform(rng, k.multiply) }
        } else {
            MultiplyMode::Elementwise { low: k.multiply.0, high: k.multiply.1, seed: rng.next_u64() }
        }),
        "distort" => {
            let n = (k.distort_cells + 1) * (k.distort_cells + 1);
            let m = k.distort_max_offset;
            let offsets = (0..n).map(|_| [uniform(rng, (-m, m)), uniform(rng, (-m, m))]).collect();
            Effect::Distort { cells: k.distort_cells, offsets }
        }
        other => unreachable!("unknown strong effect {other}"),
    }
}

/// Samples a plan with default knobs.
pub fn plan(level: Level, seed: u64) -> AugmentationPlan {
    plan_with(level, seed, &AugmentKnobs::default())
}

/// Draws a plan seed from `rng`, for sequential plan streams.
pub fn plan_from_rng<R: RngCore>(level: Level, rng: &mut R, knobs: &AugmentKnobs) -> AugmentationPlan {
    plan_with(level, rng.next_u64(), knobs)
}

pub fn plan_with(level: Level, seed: u64, k: &AugmentKnobs) -> AugmentationPlan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut effects = vec![
        Effect::GaussianNoise { sigma: uniform(&mut rng, k.noise_sigma), seed: rng.next_u64() },
        Effect::Gamma { gamma: uniform(&mut rng, k.gamma) },
        Effect::RandomCrop {
            fraction: k.crop_fraction,
            offset_x: rng.random_range(0.0..=1.0),
            offset_y: rng.random_range(0.0..=1.0),
        },
    ];
    if level == Level::Strong {
        let count = rng.random_range(0..=k.max_strong.min(STRONG_EFFECTS.len()));
        for i in index::sample(&mut rng, STRONG_EFFECTS.len(), count).into_vec() {
            effects.push(sample_strong(STRONG_EFFECTS[i], k, &mut rng));
        }
    }
    AugmentationPlan { seed, level, effects }
}

/// Image plus the labels that follow it through geometric effects.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub image: Image,
    pub mask: Option<Mask>,
    /// Landmark pixels `(x, y)`; `None` for invisible landmarks.
    pub landmarks: Vec<Option<[f64; 2]>>,
}

/// Applies a single effect and clamps to `[0, 1]`.
pub fn apply_effect(target: &Labeled, effect: &Effect) -> Labeled {
    let (w, h) = target.image.dims();
    let mut out = match effect.spatial_map(w, h) {
        Some(map) => Labeled {
            image: map.warp_image(&target.image),
            mask: target.mask.as_ref().map(|m| map.warp_mask(m)),
            landmarks: target.landmarks.iter().map(|&p| map.warp_point(p, w, h)).collect(),
        },
        None => Labeled {
            image: effect.apply_intensity(&target.image),
            mask: target.mask.clone(),
            landmarks: target.landmarks.clone(),
        },
    };
    out.image.clamp_unit();
    out
}

pub fn apply_labeled(target: &Labeled, plan: &AugmentationPlan) -> Result<Labeled> {
    let bad = target.image.as_slice().iter().position(|v| !v.is_finite());
    if let Some(i) = bad {
        return Err(Error::NonFinite(i));
    }
    if let Some(m) = &target.mask {
        if !m.same_dims(&target.image) {
            return Err(Error::DimMismatch(format!(
                "mask {:?} vs image {:?}",
                m.dims(),
                target.image.dims()
            )));
        }
    }
    let mut cur = target.clone();
    for e in &plan.effects {
        cur = apply_effect(&cur, e);
    }
    Ok(cur)
}

pub fn apply(image: &Image, plan: &AugmentationPlan) -> Result<Image> {
    let t = Labeled {
        image: image.clone(),
        mask: None,
        landmarks: Vec::new(),
    };
    Ok(apply_labeled(&t, plan)?.image)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_image() -> Image {
        Image::from_fn(40, 30, |x, y| 0.1 + 0.8 * ((x * 7 + y * 3) % 17) as f64 / 16.0)
    }

    #[test]
    fn regular_plan_shape() {
        let p = plan(Level::Regular, 11);
        let ids: Vec<_> = p.effects.iter().map(Effect::id).collect();
        assert_eq!(ids, REGULAR_EFFECTS);
        assert_eq!(p.strong_count(), 0);
    }

    #[test]
    fn strong_plans_are_distinct_and_bounded() {
        for seed in 0..300 {
            let p = plan(Level::Strong, seed);
            assert!(p.strong_count() <= 2);
            let ids: Vec<_> = p.effects.iter().map(Effect::id).collect();
            assert_eq!(&ids[..3], REGULAR_EFFECTS);
            if ids.len() == 5 {
                assert_ne!(ids[3], ids[4]);
            }
        }
    }

    #[test]
    fn every_strong_effect_json_roundtrip() {
        let k = AugmentKnobs::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for id in STRONG_EFFECTS {
            let e = sample_strong(id, &k, &mut rng);
            assert_eq!(e.id(), id);
            let p = AugmentationPlan { seed: 0, level: Level::Strong, effects: vec![e] };
            assert_eq!(AugmentationPlan::from_json(&p.to_json()).unwrap(), p);
            let out = apply(&test_image(), &p).unwrap();
            assert_eq!(out.dims(), (40, 30));
            assert!(out.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn rejects_non_finite() {
        let mut img = test_image();
        *img.get_mut(3, 3) = f64::NAN;
        assert!(apply(&img, &plan(Level::Regular, 1)).is_err());
    }

    #[test]
    fn level_parse() {
        assert_eq!("strong".parse::<Level>().unwrap(), Level::Strong);
        assert!("heavy".parse::<Level>().is_err());
    }
}
