//! Ray casting and the three DRR simulators, plus propagation of 3D labels
//! and landmarks onto the detector.
//!
//! One center ray per output pixel, from the source to the pixel's detector
//! position. Voxels are cells: the grid occupies index space
//! `[-0.5, n - 0.5]` on each axis, values are trilinearly interpolated between
//! voxel centers and held constant out to the cell boundary. Per-voxel maps
//! (HU -> attenuation, material channels) are applied before interpolation.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PoseRecord, ProjectionGeometry};
use crate::grid::{write_raw_f32, Image, Mask};
use crate::labels2d::{self, Heatmap};
use crate::physics::{self, Material, PhysicsConfig, Polarity, REFERENCE_WATER_MU};
use crate::volume::{LabelVolume, LandmarkSet3D, Volume, VolumeGeometry};

/// Default heuristic air threshold (HU).
pub const DEFAULT_AIR_THRESHOLD_HU: f32 = -300.0;

/// Minimum path (mm) a class needs along a ray to claim the pixel.
pub const DEFAULT_MIN_LABEL_PATH_MM: f64 = 1.0;

/// Per-pixel line integrals, `channels` values per pixel (pixel-major).
#[derive(Debug, Clone, PartialEq)]
pub struct RayIntegral {
    width: usize,
    height: usize,
    materials: Vec<String>,
    values: Vec<f64>,
}

impl RayIntegral {
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> usize {
        self.materials.len()
    }

    pub fn materials(&self) -> &[String] {
        &self.materials
    }

    pub fn pixel(&self, index: usize) -> &[f64] {
        let c = self.channels();
        &self.values[index * c..(index + 1) * c]
    }

    pub fn at(&self, x: usize, y: usize) -> &[f64] {
        self.pixel(y * self.width + x)
    }

    pub fn channel_image(&self, channel: usize) -> Image {
        let c = self.channels();
        Image::from_vec(
            self.width,
            self.height,
            self.values.iter().skip(channel).step_by(c).copied().collect(),
        )
        .expect("sized by construction")
    }
}

/// `min(spacing) / 2`.
pub fn default_step(geometry: &VolumeGeometry) -> f64 {
    geometry.spacing.iter().copied().fold(f64::INFINITY, f64::min) / 2.0
}

/// A detector ray expressed in continuous voxel-index space:
/// `index(s) = origin + s * direction`, `s` in world mm from the source.
#[derive(Debug, Clone, Copy)]
struct IndexRay {
    origin: Vector3<f64>,
    direction: Vector3<f64>,
    length: f64,
}

/// Affine map world mm -> continuous voxel index, including the inverse of any
/// volume pre-warp.
#[derive(Debug, Clone, Copy)]
struct WorldToIndex {
    linear: Matrix3<f64>,
    offset: Vector3<f64>,
}

impl WorldToIndex {
    fn new(vg: &VolumeGeometry, g: &ProjectionGeometry) -> Self {
        let scale = Matrix3::from_diagonal(&Vector3::from(vg.spacing.map(|s| 1.0 / s)));
        let a = scale * vg.orientation.transpose();
        let origin = Vector3::from(vg.origin);
        match &g.warp {
            None => Self {
                linear: a,
                offset: -(a * origin),
            },
            Some(w) => {
                let minv = w.inverse_matrix();
                Self {
                    linear: a * minv,
                    offset: a * (w.center - minv * w.center - origin),
                }
            }
        }
    }

    fn ray(&self, source: &Vector3<f64>, target: &Vector3<f64>) -> IndexRay {
        let d = target - source;
        let length = d.norm();
        let unit = d / length;
        IndexRay {
            origin: self.linear * source + self.offset,
            direction: self.linear * unit,
            length,
        }
    }
}

impl IndexRay {
    /// Parameter interval where the ray is inside the cell box, clipped to
    /// `[0, length]`.
    fn clip(&self, dims: [usize; 3]) -> Option<(f64, f64)> {
        let (mut t0, mut t1) = (0.0f64, self.length);
        for a in 0..3 {
            let lo = -0.5;
            let hi = dims[a] as f64 - 0.5;
            let o = self.origin[a];
            let d = self.direction[a];
            if d.abs() < 1e-15 {
                if o < lo || o > hi {
                    return None;
                }
            } else {
                let (mut ta, mut tb) = ((lo - o) / d, (hi - o) / d);
                if ta > tb {
                    std::mem::swap(&mut ta, &mut tb);
                }
                t0 = t0.max(ta);
                t1 = t1.min(tb);
            }
        }
        (t1 > t0).then_some((t0, t1))
    }

    #[inline]
    fn at(&self, s: f64) -> [f64; 3] {
        [
            self.origin.x + s * self.direction.x,
            self.origin.y + s * self.direction.y,
            self.origin.z + s * self.direction.z,
        ]
    }
}

/// Interleaved multi-channel voxel data for trilinear sampling.
struct ChannelVolume<'a> {
    dims: [usize; 3],
    data: &'a [f32],
}

impl ChannelVolume<'_> {
    /// Trilinear sample of all `N` channels at continuous index `q`, holding
    /// edge values constant outside the voxel-center lattice.
    #[inline(always)]
    fn sample<const N: usize>(&self, q: [f64; 3]) -> [f64; N] {
        let [nx, ny, nz] = self.dims;
        let axis = |v: f64, n: usize| {
            let qc = v.clamp(0.0, (n - 1) as f64);
            let f = qc.floor();
            let b = f as usize;
            (b, qc - f, usize::from(b + 1 < n))
        };
        let (i0, fx, dx) = axis(q[0], nx);
        let (j0, fy, dy) = axis(q[1], ny);
        let (k0, fz, dz) = axis(q[2], nz);
        let sx = N * dx;
        let sy = N * nx * dy;
        let sz = N * nx * ny * dz;
        let b = ((k0 * ny + j0) * nx + i0) * N;
        let d = self.data;
        let (gx, gy, gz) = (1.0 - fx, 1.0 - fy, 1.0 - fz);
        let w = [
            gx * gy * gz,
            fx * gy * gz,
            gx * fy * gz,
            fx * fy * gz,
            gx * gy * fz,
            fx * gy * fz,
            gx * fy * fz,
            fx * fy * fz,
        ];
        let offs = [b, b + sx, b + sy, b + sx + sy, b + sz, b + sx + sz, b + sy + sz, b + sx + sy + sz];
        let mut out = [0.0f64; N];
        for (o, wk) in offs.iter().zip(w) {
            let cell = &d[*o..*o + N];
            for c in 0..N {
                out[c] += wk * cell[c] as f64;
            }
        }
        out
    }
}

/// Integrates one ray with the composite trapezoid rule into `acc`.
#[inline(always)]
fn integrate_ray<const N: usize>(vol: &ChannelVolume<'_>, ray: &IndexRay, s0: f64, s1: f64, step_mm: f64, acc: &mut [f64]) {
    let n = ((s1 - s0) / step_mm).ceil().max(1.0) as usize;
    let hstep = (s1 - s0) / n as f64;
    let mut sum = [0.0f64; N];
    for k in 0..=n {
        let v = vol.sample::<N>(ray.at(s0 + k as f64 * hstep));
        let wk = if k == 0 || k == n { 0.5 } else { 1.0 };
        for c in 0..N {
            sum[c] += wk * v[c];
        }
    }
    for c in 0..N {
        acc[c] = sum[c] * hstep;
    }
}

fn check_inputs(g: &ProjectionGeometry, step_mm: f64) -> Result<()> {
    if !(step_mm > 0.0 && step_mm.is_finite()) {
        return Err(Error::Precondition(format!("step_mm must be positive, got {step_mm}")));
    }
    g.camera.validate()
}

/// Integrates each channel volume along every detector ray (composite
/// trapezoid rule, step at most `step_mm`). `channels[c]` holds one value per
/// voxel in x-fastest order.
pub fn raycast_channels(
    geometry: &VolumeGeometry,
    channels: &[(String, Vec<f32>)],
    g: &ProjectionGeometry,
    step_mm: f64,
) -> Result<RayIntegral> {
    check_inputs(g, step_mm)?;
    let n_vox = geometry.voxel_count();
    if channels.is_empty() || channels.iter().any(|(_, c)| c.len() != n_vox) {
        return Err(Error::DimMismatch("channel volumes must match the voxel count".into()));
    }
    if channels.len() > 4 {
        return Err(Error::Precondition(format!("at most 4 channels per cast, got {}", channels.len())));
    }
    let nc = channels.len();
    let mut interleaved = vec![0f32; n_vox * nc];
    for (c, (_, data)) in channels.iter().enumerate() {
        for (i, &v) in data.iter().enumerate() {
            interleaved[i * nc + c] = v;
        }
    }
    let vol = ChannelVolume {
        dims: geometry.dims,
        data: &interleaved,
    };
    let map = WorldToIndex::new(geometry, g);
    let source = g.source_position();
    let (w, h) = g.output_dims();
    let mut values = vec![0.0f64; w * h * nc];
    values
        .par_chunks_mut(w * nc)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..w {
                let ray = map.ray(&source, &g.detector_point(x as f64, y as f64));
                let Some((s0, s1)) = ray.clip(geometry.dims) else {
                    continue;
                };
                let acc = &mut row[x * nc..(x + 1) * nc];
                match nc {
                    1 => integrate_ray::<1>(&vol, &ray, s0, s1, step_mm, acc),
                    2 => integrate_ray::<2>(&vol, &ray, s0, s1, step_mm, acc),
                    3 => integrate_ray::<3>(&vol, &ray, s0, s1, step_mm, acc),
                    4 => integrate_ray::<4>(&vol, &ray, s0, s1, step_mm, acc),
                    _ => unreachable!("channel count checked above"),
                }
            }
        });
    Ok(RayIntegral {
        width: w,
        height: h,
        materials: channels.iter().map(|(n, _)| n.clone()).collect(),
        values,
    })
}

/// Integrates `sampler(HU)` along every detector ray.
pub fn raycast(
    v: &Volume,
    g: &ProjectionGeometry,
    sampler: impl Fn(f32) -> f32,
    step_mm: f64,
) -> Result<RayIntegral> {
    let mapped: Vec<f32> = v.voxels().iter().map(|&h| sampler(h)).collect();
    raycast_channels(v.geometry(), &[("total".to_string(), mapped)], g, step_mm)
}

/// A rendered radiograph: raw transmission plus the normalized display image.
#[derive(Debug, Clone, PartialEq)]
pub struct Drr {
    /// Detected signal relative to an unattenuated pixel.
    pub transmission: Image,
    /// Neg-log, min-max normalized intensity in `[0, 1]`.
    pub image: Image,
}

fn mono_drr(integral: &RayIntegral) -> Drr {
    let transmission = integral.channel_image(0).map(|l| (-l).exp());
    let image = physics::neglog_normalize(&transmission, Polarity::default());
    Drr { transmission, image }
}

/// Mono-energetic, single-material simulation with `mu = mu_water * (1 + HU/1000)`.
pub fn naive_drr(v: &Volume, g: &ProjectionGeometry) -> Result<Drr> {
    naive_drr_with(v, g, REFERENCE_WATER_MU, default_step(v.geometry()))
}

pub fn naive_drr_with(v: &Volume, g: &ProjectionGeometry, mu_water: f64, step_mm: f64) -> Result<Drr> {
    let mu = mu_water as f32;
    let integral = raycast(v, g, |h| mu * physics::density_scale(h), step_mm)?;
    Ok(mono_drr(&integral))
}

/// As [`naive_drr`], but voxels below `air_threshold_hu` are treated as air.
pub fn heuristic_drr(v: &Volume, g: &ProjectionGeometry, air_threshold_hu: f32) -> Result<Drr> {
    heuristic_drr_with(v, g, air_threshold_hu, REFERENCE_WATER_MU, default_step(v.geometry()))
}

pub fn heuristic_drr_with(
    v: &Volume,
    g: &ProjectionGeometry,
    air_threshold_hu: f32,
    mu_water: f64,
    step_mm: f64,
) -> Result<Drr> {
    let mu = mu_water as f32;
    let integral = raycast(
        v,
        g,
        |h| if h < air_threshold_hu { 0.0 } else { mu * physics::density_scale(h) },
        step_mm,
    )?;
    Ok(mono_drr(&integral))
}

/// Per-material path integrals (mm x density), channels ordered as
/// [`Material::ALL`].
pub fn material_paths(v: &Volume, g: &ProjectionGeometry, phys: &PhysicsConfig, step_mm: f64) -> Result<RayIntegral> {
    let decomposition = physics::decompose_materials(v, &phys.lut);
    let channels: Vec<(String, Vec<f32>)> = Material::ALL
        .iter()
        .map(|&m| (m.name().to_string(), decomposition.channel(m)))
        .collect();
    raycast_channels(v.geometry(), &channels, g, step_mm)
}

/// Polychromatic simulation: material decomposition, per-material ray
/// casting, energy-integrating detection, scatter, noise and saturation.
pub fn realistic_drr(v: &Volume, g: &ProjectionGeometry, phys: &PhysicsConfig, rng: &mut ChaCha8Rng) -> Result<Drr> {
    realistic_drr_with(v, g, phys, default_step(v.geometry()), rng)
}

pub fn realistic_drr_with(
    v: &Volume,
    g: &ProjectionGeometry,
    phys: &PhysicsConfig,
    step_mm: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Drr> {
    phys.validate()?;
    let paths = material_paths(v, g, phys, step_mm)?;
    let primary = physics::polychromatic_integral(&paths, &phys.spectrum, &phys.lut)?;
    let scatter = physics::scatter_estimate(&primary, phys);
    let total = Image::from_vec(
        primary.width(),
        primary.height(),
        primary
            .as_slice()
            .iter()
            .zip(scatter.as_slice())
            .map(|(p, s)| p + s)
            .collect(),
    )?;
    let counts = physics::noise_apply(&total, phys, rng);
    let transmission = counts.map(|c| c / phys.photons_per_pixel);
    let image = physics::neglog_normalize(&counts, Polarity::default());
    Ok(Drr { transmission, image })
}

/// Per pixel, the non-background class with the longest path along the ray,
/// if that path exceeds `min_path_mm`; background otherwise. Ties go to the
/// smaller class id.
pub fn project_labels(lv: &LabelVolume, g: &ProjectionGeometry, min_path_mm: f64, step_mm: f64) -> Result<Mask> {
    check_inputs(g, step_mm)?;
    let geometry = lv.geometry();
    let dims = geometry.dims;
    let labels = lv.labels();
    let n_classes = lv.max_class() as usize + 1;
    let map = WorldToIndex::new(geometry, g);
    let source = g.source_position();
    let (w, h) = g.output_dims();
    let mut mask = vec![0u8; w * h];
    mask.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut path = vec![0.0f64; n_classes];
        for (x, out) in row.iter_mut().enumerate() {
            let ray = map.ray(&source, &g.detector_point(x as f64, y as f64));
            let Some((s0, s1)) = ray.clip(dims) else {
                continue;
            };
            path.iter_mut().for_each(|p| *p = 0.0);
            let n = ((s1 - s0) / step_mm).ceil().max(1.0) as usize;
            let hstep = (s1 - s0) / n as f64;
            for k in 0..n {
                let q = ray.at(s0 + (k as f64 + 0.5) * hstep);
                let [i, j, kk] = [0, 1, 2].map(|a| ((q[a] + 0.5).floor().max(0.0) as usize).min(dims[a] - 1));
                let l = labels[i + dims[0] * (j + dims[1] * kk)] as usize;
                if l != 0 {
                    path[l] += hstep;
                }
            }
            let mut best = 0usize;
            let mut best_len = min_path_mm;
            for (class, &len) in path.iter().enumerate().skip(1) {
                if len > best_len {
                    best = class;
                    best_len = len;
                }
            }
            *out = best as u8;
        }
    });
    Mask::from_vec(w, h, mask)
}

/// Detector position of each landmark, `None` when not visible. Landmarks move
/// with any volume pre-warp.
pub fn project_landmarks(ls: &LandmarkSet3D, g: &ProjectionGeometry) -> Vec<Option<[f64; 2]>> {
    ls.entries()
        .iter()
        .map(|lm| {
            let mut p = Vector3::from(lm.position);
            if let Some(w) = &g.warp {
                p = w.apply(&p);
            }
            match g.project_point(&p) {
                Ok((px, true)) => Some([px.x, px.y]),
                _ => None,
            }
        })
        .collect()
}

/// Which simulator renders the image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Simulator {
    Naive,
    Heuristic {
        #[serde(default = "default_air_threshold")]
        air_threshold_hu: f32,
    },
    Realistic(Box<PhysicsConfig>),
}

fn default_air_threshold() -> f32 {
    DEFAULT_AIR_THRESHOLD_HU
}

impl Simulator {
    pub fn tag(&self) -> &'static str {
        match self {
            Simulator::Naive => "naive",
            Simulator::Heuristic { .. } => "heuristic",
            Simulator::Realistic(_) => "realistic",
        }
    }

    pub fn render(&self, v: &Volume, g: &ProjectionGeometry, step_mm: f64, rng: &mut ChaCha8Rng) -> Result<Drr> {
        match self {
            Simulator::Naive => naive_drr_with(v, g, REFERENCE_WATER_MU, step_mm),
            Simulator::Heuristic { air_threshold_hu } => {
                heuristic_drr_with(v, g, *air_threshold_hu, REFERENCE_WATER_MU, step_mm)
            }
            Simulator::Realistic(phys) => {
                let (w, _) = g.output_dims();
                realistic_drr_with(v, g, &phys.scaled_to_width(w), step_mm, rng)
            }
        }
    }
}

/// The annotated CT a sample is rendered from.
#[derive(Debug, Clone, Copy)]
pub struct RenderInputs<'a> {
    pub volume: &'a Volume,
    pub labels: &'a LabelVolume,
    pub landmarks: &'a LandmarkSet3D,
    pub volume_id: &'a str,
    pub subject_id: &'a str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderSettings {
    pub simulator: Simulator,
    pub heatmap_sigma_px: f64,
    /// `None` uses `min(spacing) / 2`.
    pub step_mm: Option<f64>,
    pub min_label_path_mm: f64,
}

impl RenderSettings {
    pub fn new(simulator: Simulator, heatmap_sigma_px: f64) -> Self {
        Self {
            simulator,
            heatmap_sigma_px,
            step_mm: None,
            min_label_path_mm: DEFAULT_MIN_LABEL_PATH_MM,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkMeta {
    pub name: String,
    pub px: Option<[f64; 2]>,
    pub visible: bool,
}

/// Pose, seed and label summary written next to each sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub pose: PoseRecord,
    pub simulator: String,
    pub seed: u64,
    pub volume_id: String,
    pub subject_id: String,
    pub width: usize,
    pub height: usize,
    pub heatmap_sigma_px: f64,
    pub landmarks: Vec<LandmarkMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiographSample {
    pub image: Image,
    pub seg_mask: Mask,
    pub heatmaps: Vec<Heatmap>,
    pub landmark_px: Vec<Option<[f64; 2]>>,
    pub meta: SampleMeta,
}

/// Renders one labeled radiograph. Every random draw derives from `seed`.
pub fn render_sample(
    inputs: &RenderInputs<'_>,
    g: &ProjectionGeometry,
    settings: &RenderSettings,
    pose_index: usize,
    seed: u64,
) -> Result<RadiographSample> {
    inputs.labels.check_aligned(inputs.volume)?;
    let step = settings.step_mm.unwrap_or_else(|| default_step(inputs.volume.geometry()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let drr = settings.simulator.render(inputs.volume, g, step, &mut rng)?;
    let seg_mask = project_labels(inputs.labels, g, settings.min_label_path_mm, step)?;
    let landmark_px = project_landmarks(inputs.landmarks, g);
    let (w, h) = g.output_dims();
    let heatmaps = inputs
        .landmarks
        .entries()
        .iter()
        .zip(&landmark_px)
        .map(|(lm, px)| labels2d::encode(*px, w, h, settings.heatmap_sigma_px).map(|hm| hm.named(&lm.name)))
        .collect::<Result<Vec<_>>>()?;
    let meta = SampleMeta {
        pose: PoseRecord::from_geometry(pose_index, g, seed),
        simulator: settings.simulator.tag().to_string(),
        seed,
        volume_id: inputs.volume_id.to_string(),
        subject_id: inputs.subject_id.to_string(),
        width: w,
        height: h,
        heatmap_sigma_px: settings.heatmap_sigma_px,
        landmarks: inputs
            .landmarks
            .entries()
            .iter()
            .zip(&landmark_px)
            .map(|(lm, px)| LandmarkMeta {
                name: lm.name.clone(),
                px: *px,
                visible: px.is_some(),
            })
            .collect(),
    };
    Ok(RadiographSample {
        image: drr.image,
        seg_mask,
        heatmaps,
        landmark_px,
        meta,
    })
}

/// File names (relative to the sample directory) of an exported sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFiles {
    pub image_png: String,
    pub image_raw: String,
    pub seg_png: String,
    pub heatmaps_raw: String,
    pub meta_json: String,
}

impl SampleFiles {
    pub fn for_stem(stem: &str) -> Self {
        Self {
            image_png: format!("{stem}.png"),
            image_raw: format!("{stem}.f32"),
            seg_png: format!("{stem}.seg.png"),
            heatmaps_raw: format!("{stem}.heatmaps.f32"),
            meta_json: format!("{stem}.json"),
        }
    }

    pub fn all(&self) -> [&str; 5] {
        [
            &self.image_png,
            &self.image_raw,
            &self.seg_png,
            &self.heatmaps_raw,
            &self.meta_json,
        ]
    }
}

impl RadiographSample {
    /// Writes a 16-bit PNG and float32 raw image, an 8-bit mask PNG, the
    /// heatmap float32 stack (landmark order) and the metadata JSON.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<SampleFiles> {
        let files = SampleFiles::for_stem(stem);
        self.image.write_png16(&dir.join(&files.image_png))?;
        write_raw_f32(&dir.join(&files.image_raw), [&self.image])?;
        self.seg_mask.write_png8(&dir.join(&files.seg_png))?;
        write_raw_f32(&dir.join(&files.heatmaps_raw), self.heatmaps.iter().map(|h| &h.values))?;
        let meta_path = dir.join(&files.meta_json);
        let text = serde_json::to_string_pretty(&self.meta).map_err(|e| Error::json(&meta_path, e))?;
        fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
        Ok(files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{CameraModel, RigidTransform};

    fn small_camera() -> CameraModel {
        CameraModel {
            detector_dims: [32, 32],
            pixel_spacing: 2.0,
            source_to_detector: 1000.0,
            principal_point: [15.5, 15.5],
        }
    }

    fn looking_down_z(sid: f64) -> ProjectionGeometry {
        // Camera at (0, 0, -sid) looking along +z toward the world origin.
        ProjectionGeometry::new(
            small_camera(),
            RigidTransform::from_translation(Vector3::new(0.0, 0.0, -sid)),
            1,
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_step() {
        let v = Volume::new(VolumeGeometry::centered([2, 2, 2], [1.0; 3]), vec![0.0; 8]).unwrap();
        assert!(raycast(&v, &looking_down_z(500.0), |_| 1.0, 0.0).is_err());
        assert!(raycast(&v, &looking_down_z(500.0), |_| 1.0, -1.0).is_err());
    }

    #[test]
    fn missing_ray_is_zero() {
        let g = VolumeGeometry::axis_aligned([4, 4, 4], [1.0; 3], [1000.0, 1000.0, 0.0]);
        let v = Volume::new(g, vec![0.0; 64]).unwrap();
        let r = raycast(&v, &looking_down_z(500.0), |_| 1.0, 0.5).unwrap();
        assert!(r.channel_image(0).as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn source_inside_volume_is_clipped() {
        let v = Volume::new(VolumeGeometry::centered([20, 20, 20], [5.0; 3]), vec![0.0; 8000]).unwrap();
        let g = looking_down_z(10.0);
        let r = raycast(&v, &g, |_| 1.0, 1.0).unwrap();
        // Center ray from z = -10 to the far face at z = 50.
        let center = r.at(15, 15)[0];
        assert!(center > 59.0 && center < 61.0, "{center}");
    }

    #[test]
    fn unit_box_chord() {
        // 100 mm cube of ones; the central ray crosses exactly 100 mm.
        let v = Volume::new(VolumeGeometry::centered([50, 50, 50], [2.0; 3]), vec![0.0; 125_000]).unwrap();
        let g = looking_down_z(600.0);
        let r = raycast(&v, &g, |_| 1.0, 1.0).unwrap();
        // Pixel (15,15) is 0.5 px off axis: still well inside the box.
        let len = r.at(15, 15)[0];
        assert!((len - 100.0).abs() < 0.05, "{len}");
    }

    #[test]
    fn labels_empty_and_full() {
        let geom = VolumeGeometry::centered([30, 30, 30], [4.0; 3]);
        let empty = LabelVolume::empty(geom.clone()).unwrap();
        let g = looking_down_z(600.0);
        let m = project_labels(&empty, &g, 1.0, 2.0).unwrap();
        assert!(m.as_slice().iter().all(|&c| c == 0));

        let names = std::collections::BTreeMap::from([(4u8, "bone".to_string())]);
        let full = LabelVolume::new(geom, vec![4; 27_000], names).unwrap();
        let m = project_labels(&full, &g, 1.0, 2.0).unwrap();
        assert!(m.as_slice().iter().all(|&c| c == 4));
    }

    #[test]
    fn landmark_visibility() {
        let g = looking_down_z(600.0);
        let ls = LandmarkSet3D::new(vec![
            crate::volume::Landmark3 { name: "iso".into(), position: [0.0, 0.0, 0.0] },
            crate::volume::Landmark3 { name: "behind".into(), position: [0.0, 0.0, -700.0] },
        ])
        .unwrap();
        let px = project_landmarks(&ls, &g);
        assert_eq!(px[0], Some([15.5, 15.5]));
        assert_eq!(px[1], None);
    }

    #[test]
    fn simulator_serde() {
        let s = Simulator::Heuristic { air_threshold_hu: -300.0 };
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"kind":"heuristic","air_threshold_hu":-300.0}"#);
        let back: Simulator = serde_json::from_str(r#"{"kind":"heuristic"}"#).unwrap();
        assert_eq!(back, s);
        let r: Simulator = serde_json::from_str(&serde_json::to_string(&Simulator::Realistic(Box::default())).unwrap()).unwrap();
        assert_eq!(r.tag(), "realistic");
    }
}
