//! Pinhole C-arm model, rigid transforms and the per-task pose samplers.
//!
//! Camera frame: the X-ray source sits at the origin, the detector plane is
//! `z = source_to_detector`, and detector x/y run along camera x/y. Detector
//! pixel `(u, v)` has its center at continuous coordinate `(u, v)`.
//!
//! Rotations are parameterized by intrinsic XYZ Euler angles,
//! `R = Rx(a) * Ry(b) * Rz(c)`.
//!
//! Anatomical translation axes map to volume axes as L/R -> x, I/S -> y and
//! A/P -> z.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix4, Rotation3, Vector2, Vector3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::check_rotation;

const RIGID_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation, RIGID_TOL)?;
        if translation.iter().any(|t| !t.is_finite()) {
            return Err(Error::Format("translation must be finite".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Rotation from intrinsic XYZ Euler angles in degrees.
    pub fn from_euler_xyz_deg(angles: [f64; 3], translation: Vector3<f64>) -> Self {
        Self {
            rotation: euler_xyz_deg_to_matrix(angles),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn rotation_row_major(&self) -> [f64; 9] {
        row_major(&self.rotation)
    }

    /// Intrinsic XYZ Euler angles of the rotation, in degrees.
    pub fn euler_xyz_deg(&self) -> [f64; 3] {
        matrix_to_euler_xyz_deg(&self.rotation)
    }
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(a: &RigidTransform) -> RigidTransform {
    a.inverse()
}

pub(crate) fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    [
        m[(0, 0)],
        m[(0, 1)],
        m[(0, 2)],
        m[(1, 0)],
        m[(1, 1)],
        m[(1, 2)],
        m[(2, 0)],
        m[(2, 1)],
        m[(2, 2)],
    ]
}

pub fn euler_xyz_deg_to_matrix(angles: [f64; 3]) -> Matrix3<f64> {
    let [a, b, c] = angles.map(f64::to_radians);
    let rx = Rotation3::from_axis_angle(&Vector3::x_axis(), a);
    let ry = Rotation3::from_axis_angle(&Vector3::y_axis(), b);
    let rz = Rotation3::from_axis_angle(&Vector3::z_axis(), c);
    (rx * ry * rz).into_inner()
}

pub fn matrix_to_euler_xyz_deg(r: &Matrix3<f64>) -> [f64; 3] {
    let b = r[(0, 2)].clamp(-1.0, 1.0).asin();
    let a = (-r[(1, 2)]).atan2(r[(2, 2)]);
    let c = (-r[(0, 1)]).atan2(r[(0, 0)]);
    [a, b, c].map(f64::to_degrees)
}

/// Pinhole intrinsics of a flat-panel C-arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub detector_dims: [usize; 2],
    /// Isotropic, mm per pixel.
    pub pixel_spacing: f64,
    pub source_to_detector: f64,
    pub principal_point: [f64; 2],
}

/// 1536 x 1536 flat-panel C-arm at 0.194 mm pixels, 1020 mm source to detector.
pub fn default_carm() -> CameraModel {
    CameraModel {
        detector_dims: [1536, 1536],
        pixel_spacing: 0.194,
        source_to_detector: 1020.0,
        principal_point: [767.5, 767.5],
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        let [w, h] = self.detector_dims;
        let [cx, cy] = self.principal_point;
        if w == 0 || h == 0 || !(self.pixel_spacing > 0.0) || !(self.source_to_detector > 0.0) {
            return Err(Error::DegenerateGeometry(format!(
                "camera parameters must be positive: {self:?}"
            )));
        }
        if !(cx >= -0.5 && cx <= w as f64 - 0.5 && cy >= -0.5 && cy <= h as f64 - 0.5) {
            return Err(Error::DegenerateGeometry(format!(
                "principal point {:?} outside detector",
                self.principal_point
            )));
        }
        Ok(())
    }

    /// Focal length in pixels.
    pub fn focal_px(&self) -> f64 {
        self.source_to_detector / self.pixel_spacing
    }

    /// The same physical detector read out at `width` pixels across: the pixel
    /// pitch grows by `detector_width / width` and the principal point keeps its
    /// physical position.
    pub fn at_resolution(&self, width: usize) -> CameraModel {
        let scale = width as f64 / self.detector_dims[0] as f64;
        let height = (self.detector_dims[1] as f64 * scale).round() as usize;
        CameraModel {
            detector_dims: [width, height],
            pixel_spacing: self.pixel_spacing / scale,
            source_to_detector: self.source_to_detector,
            principal_point: self.principal_point.map(|c| (c + 0.5) * scale - 0.5),
        }
    }

    /// Pixel binning by an integer factor.
    pub fn binned(&self, factor: usize) -> CameraModel {
        let mut cam = self.at_resolution(self.detector_dims[0] / factor);
        cam.detector_dims[1] = self.detector_dims[1] / factor;
        cam
    }

    pub fn intrinsic_matrix(&self) -> Matrix3<f64> {
        let f = self.focal_px();
        Matrix3::new(
            f,
            0.0,
            self.principal_point[0],
            0.0,
            f,
            self.principal_point[1],
            0.0,
            0.0,
            1.0,
        )
    }

    /// Whether continuous pixel coordinate `px` lies on the detector.
    pub fn contains(&self, px: &Vector2<f64>) -> bool {
        px.x >= -0.5
            && px.y >= -0.5
            && px.x < self.detector_dims[0] as f64 - 0.5
            && px.y < self.detector_dims[1] as f64 - 0.5
    }
}

/// Affine pre-warp of volume content about a center point (used for shear).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeWarp {
    pub matrix: Matrix3<f64>,
    pub center: Vector3<f64>,
}

impl VolumeWarp {
    pub fn new(matrix: Matrix3<f64>, center: Vector3<f64>) -> Result<Self> {
        if matrix.try_inverse().is_none() {
            return Err(Error::DegenerateGeometry("singular volume warp".into()));
        }
        Ok(Self { matrix, center })
    }

    /// Where content at `p` ends up after warping.
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.center + self.matrix * (p - self.center)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        self.matrix.try_inverse().expect("checked at construction")
    }
}

/// Full projection setup for one rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionGeometry {
    pub camera: CameraModel,
    pub world_from_camera: RigidTransform,
    /// Output binning factor; must divide both detector dimensions.
    pub downsample: usize,
    pub warp: Option<VolumeWarp>,
}

impl ProjectionGeometry {
    pub fn new(
        camera: CameraModel,
        world_from_camera: RigidTransform,
        downsample: usize,
    ) -> Result<Self> {
        camera.validate()?;
        if downsample == 0
            || !camera.detector_dims[0].is_multiple_of(downsample)
            || !camera.detector_dims[1].is_multiple_of(downsample)
        {
            return Err(Error::DegenerateGeometry(format!(
                "downsample {downsample} does not divide detector {:?}",
                camera.detector_dims
            )));
        }
        Ok(Self {
            camera,
            world_from_camera,
            downsample,
            warp: None,
        })
    }

    pub fn with_warp(mut self, warp: Option<VolumeWarp>) -> Self {
        self.warp = warp;
        self
    }

    /// Camera at the output (binned) resolution.
    pub fn output_camera(&self) -> CameraModel {
        if self.downsample == 1 {
            self.camera
        } else {
            self.camera.binned(self.downsample)
        }
    }

    /// `(width, height)` of rendered images.
    pub fn output_dims(&self) -> (usize, usize) {
        let [w, h] = self.output_camera().detector_dims;
        (w, h)
    }

    pub fn camera_from_world(&self) -> RigidTransform {
        self.world_from_camera.inverse()
    }

    pub fn source_position(&self) -> Vector3<f64> {
        *self.world_from_camera.translation()
    }

    /// World position of the detector point at output pixel coordinate `(u, v)`.
    pub fn detector_point(&self, u: f64, v: f64) -> Vector3<f64> {
        let cam = self.output_camera();
        let p = Vector3::new(
            (u - cam.principal_point[0]) * cam.pixel_spacing,
            (v - cam.principal_point[1]) * cam.pixel_spacing,
            cam.source_to_detector,
        );
        self.world_from_camera.apply(&p)
    }

    /// Output pixel coordinate of world point `p` and whether it is visible
    /// (on the detector and strictly between source and detector plane).
    pub fn project_point(&self, p: &Vector3<f64>) -> Result<(Vector2<f64>, bool)> {
        let cam = self.output_camera();
        let c = self.world_from_camera.inverse().apply(p);
        if c.norm() < 1e-12 {
            return Err(Error::DegenerateGeometry(
                "point coincides with the X-ray source".into(),
            ));
        }
        if c.z.abs() < 1e-12 {
            // In the source plane: the ray never reaches the detector.
            return Ok((Vector2::new(f64::NAN, f64::NAN), false));
        }
        let f = cam.focal_px();
        let px = Vector2::new(
            f * c.x / c.z + cam.principal_point[0],
            f * c.y / c.z + cam.principal_point[1],
        );
        let visible = c.z > 0.0 && c.z < cam.source_to_detector && cam.contains(&px);
        Ok((px, visible))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Hip,
    Tool,
    Covid,
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hip" => Ok(Task::Hip),
            "tool" => Ok(Task::Tool),
            "covid" => Ok(Task::Covid),
            _ => Err(Error::UnknownTask(s.to_string())),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Hip => "hip",
            Task::Tool => "tool",
            Task::Covid => "covid",
        })
    }
}

/// Closed interval for uniform sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn symmetric(half_width: f64) -> Self {
        Self {
            lo: -half_width,
            hi: half_width,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !(self.lo <= self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Precondition(format!(
                "range `{name}` is not ordered: [{}, {}]",
                self.lo, self.hi
            )));
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HipRanges {
    /// Applied independently to each of the three axes.
    pub rotation_deg: Interval,
    pub left_right_mm: Interval,
    pub inferior_superior_mm: Interval,
    pub anterior_posterior_mm: Interval,
    pub source_to_isocenter_mm: Interval,
}

impl Default for HipRanges {
    fn default() -> Self {
        Self {
            rotation_deg: Interval::symmetric(45.0),
            left_right_mm: Interval::symmetric(50.0),
            inferior_superior_mm: Interval::symmetric(20.0),
            anterior_posterior_mm: Interval::symmetric(100.0),
            source_to_isocenter_mm: Interval::new(750.0, 750.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolRanges {
    pub lao_rao_deg: Interval,
    pub cran_caud_deg: Interval,
    pub source_to_isocenter_mm: Interval,
    /// Standard deviation of the zero-mean x/y translation.
    pub translation_sigma_mm: f64,
}

impl Default for ToolRanges {
    fn default() -> Self {
        Self {
            lao_rao_deg: Interval::symmetric(30.0),
            cran_caud_deg: Interval::symmetric(10.0),
            source_to_isocenter_mm: Interval::new(600.0, 900.0),
            translation_sigma_mm: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CovidRanges {
    pub rotation_deg: Interval,
    pub source_to_isocenter_mm: Interval,
    pub shear_deg: Interval,
}

impl Default for CovidRanges {
    fn default() -> Self {
        Self {
            rotation_deg: Interval::symmetric(5.0),
            source_to_isocenter_mm: Interval::new(350.0, 650.0),
            shear_deg: Interval::symmetric(30.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseSamplerConfig {
    pub task: Task,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hip: HipRanges,
    #[serde(default)]
    pub tool: ToolRanges,
    #[serde(default)]
    pub covid: CovidRanges,
}

impl PoseSamplerConfig {
    pub fn new(task: Task, seed: u64) -> Self {
        Self {
            task,
            seed,
            hip: HipRanges::default(),
            tool: ToolRanges::default(),
            covid: CovidRanges::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.hip;
        h.rotation_deg.validate("hip.rotation_deg")?;
        h.left_right_mm.validate("hip.left_right_mm")?;
        h.inferior_superior_mm.validate("hip.inferior_superior_mm")?;
        h.anterior_posterior_mm.validate("hip.anterior_posterior_mm")?;
        h.source_to_isocenter_mm.validate("hip.source_to_isocenter_mm")?;
        let t = &self.tool;
        t.lao_rao_deg.validate("tool.lao_rao_deg")?;
        t.cran_caud_deg.validate("tool.cran_caud_deg")?;
        t.source_to_isocenter_mm.validate("tool.source_to_isocenter_mm")?;
        if !(t.translation_sigma_mm >= 0.0) {
            return Err(Error::Precondition("tool.translation_sigma_mm must be >= 0".into()));
        }
        let c = &self.covid;
        c.rotation_deg.validate("covid.rotation_deg")?;
        c.source_to_isocenter_mm.validate("covid.source_to_isocenter_mm")?;
        c.shear_deg.validate("covid.shear_deg")?;
        if c.shear_deg.lo <= -90.0 || c.shear_deg.hi >= 90.0 {
            return Err(Error::Precondition("covid.shear_deg must lie in (-90, 90)".into()));
        }
        Ok(())
    }
}

/// One sampled view: the volume's rigid motion about its center, the source
/// distance, and an optional shear.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledPose {
    /// Maps volume-centered coordinates into the isocenter frame.
    pub transform: RigidTransform,
    pub source_to_isocenter_mm: f64,
    /// Shear angle (degrees) of `x += tan(angle) * y` about the volume center.
    pub shear_deg: Option<f64>,
}

impl SampledPose {
    pub fn shear_matrix(&self) -> Option<Matrix3<f64>> {
        self.shear_deg.map(|deg| {
            let mut m = Matrix3::identity();
            m[(0, 1)] = deg.to_radians().tan();
            m
        })
    }

    /// Extrinsics for a volume whose center sits at `volume_center` (world mm).
    pub fn camera_from_world(&self, volume_center: &Vector3<f64>) -> RigidTransform {
        let r = self.transform.rotation();
        let iso = Vector3::new(0.0, 0.0, self.source_to_isocenter_mm);
        RigidTransform {
            rotation: *r,
            translation: self.transform.translation() + iso - r * volume_center,
        }
    }

    pub fn geometry(
        &self,
        camera: CameraModel,
        volume_center: &Vector3<f64>,
        downsample: usize,
    ) -> Result<ProjectionGeometry> {
        let warp = self
            .shear_matrix()
            .map(|m| VolumeWarp::new(m, *volume_center))
            .transpose()?;
        Ok(ProjectionGeometry::new(
            camera,
            self.camera_from_world(volume_center).inverse(),
            downsample,
        )?
        .with_warp(warp))
    }
}

/// Draws one pose for `cfg.task` from `rng`. The config seed is not used here;
/// see [`PoseSampler`] for a self-seeded stream.
pub fn sample_pose<R: Rng + ?Sized>(cfg: &PoseSamplerConfig, rng: &mut R) -> Result<SampledPose> {
    cfg.validate()?;
    let pose = match cfg.task {
        Task::Hip => {
            let h = &cfg.hip;
            let angles = [(); 3].map(|_| h.rotation_deg.sample(rng));
            let t = Vector3::new(
                h.left_right_mm.sample(rng),
                h.inferior_superior_mm.sample(rng),
                h.anterior_posterior_mm.sample(rng),
            );
            SampledPose {
                transform: RigidTransform::from_euler_xyz_deg(angles, t),
                source_to_isocenter_mm: h.source_to_isocenter_mm.sample(rng),
                shear_deg: None,
            }
        }
        Task::Tool => {
            let t = &cfg.tool;
            let lao = t.lao_rao_deg.sample(rng);
            let cran = t.cran_caud_deg.sample(rng);
            let sid = t.source_to_isocenter_mm.sample(rng);
            let normal = Normal::new(0.0, t.translation_sigma_mm)
                .map_err(|e| Error::Precondition(e.to_string()))?;
            let translation = Vector3::new(normal.sample(rng), normal.sample(rng), 0.0);
            SampledPose {
                transform: RigidTransform::from_euler_xyz_deg([cran, lao, 0.0], translation),
                source_to_isocenter_mm: sid,
                shear_deg: None,
            }
        }
        Task::Covid => {
            let c = &cfg.covid;
            let angles = [(); 3].map(|_| c.rotation_deg.sample(rng));
            let sid = c.source_to_isocenter_mm.sample(rng);
            let shear = c.shear_deg.sample(rng);
            SampledPose {
                transform: RigidTransform::from_euler_xyz_deg(angles, Vector3::zeros()),
                source_to_isocenter_mm: sid,
                shear_deg: Some(shear),
            }
        }
    };
    check_rotation(pose.transform.rotation(), RIGID_TOL)?;
    Ok(pose)
}

/// Deterministic pose stream seeded from the config.
#[derive(Debug, Clone)]
pub struct PoseSampler {
    cfg: PoseSamplerConfig,
    rng: ChaCha8Rng,
}

impl PoseSampler {
    pub fn new(cfg: PoseSamplerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
        })
    }

    pub fn next_pose(&mut self) -> Result<SampledPose> {
        sample_pose(&self.cfg, &mut self.rng)
    }
}

/// One line of the JSON Lines pose log. `rotation`/`translation_mm` are the
/// world-to-camera extrinsics, so a view can be re-rendered from the record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub index: usize,
    pub rotation: [f64; 9],
    pub translation_mm: [f64; 3],
    pub shear: Option<[f64; 9]>,
    pub seed: u64,
}

impl PoseRecord {
    pub fn from_geometry(index: usize, g: &ProjectionGeometry, seed: u64) -> Self {
        let e = g.camera_from_world();
        Self {
            index,
            rotation: e.rotation_row_major(),
            translation_mm: [e.translation.x, e.translation.y, e.translation.z],
            shear: g.warp.map(|w| row_major(&w.matrix)),
            seed,
        }
    }

    pub fn camera_from_world(&self) -> Result<RigidTransform> {
        RigidTransform::new(
            Matrix3::from_row_slice(&self.rotation),
            Vector3::from(self.translation_mm),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
        let angles = [(); 3].map(|_| rng.random_range(-180.0..180.0));
        let t = Vector3::new(
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
            rng.random_range(-500.0..500.0),
        );
        RigidTransform::from_euler_xyz_deg(angles, t)
    }

    #[test]
    fn carm_defaults() {
        let c = default_carm();
        assert_eq!(c.detector_dims, [1536, 1536]);
        assert_eq!(c.pixel_spacing, 0.194);
        assert_eq!(c.source_to_detector, 1020.0);
        assert_eq!(c.principal_point, [767.5, 767.5]);
    }

    #[test]
    fn compose_identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let t = random_transform(&mut rng);
            let id = RigidTransform::identity();
            assert_eq!(compose(&id, &t), t);
            let back = compose(&t, &invert(&t));
            assert!((back.rotation - Matrix3::identity()).abs().max() < 1e-9);
            assert!(back.translation.norm() < 1e-9);
        }
    }

    #[test]
    fn compose_matches_homogeneous_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let a = random_transform(&mut rng);
            let b = random_transform(&mut rng);
            let expected = a.to_homogeneous() * b.to_homogeneous();
            let got = compose(&a, &b).to_homogeneous();
            assert!((expected - got).abs().max() < 1e-9);
        }
    }

    #[test]
    fn euler_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let angles = [(); 3].map(|_| rng.random_range(-80.0..80.0));
            let back = matrix_to_euler_xyz_deg(&euler_xyz_deg_to_matrix(angles));
            for a in 0..3 {
                assert!((angles[a] - back[a]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn isocenter_projects_to_principal_point() {
        let cam = default_carm();
        let g = ProjectionGeometry::new(cam, RigidTransform::identity(), 1).unwrap();
        let (px, vis) = g.project_point(&Vector3::new(0.0, 0.0, 600.0)).unwrap();
        assert!(vis);
        assert!((px - Vector2::new(767.5, 767.5)).norm() < 1e-12);

        let (_, vis) = g.project_point(&Vector3::new(0.0, 0.0, -10.0)).unwrap();
        assert!(!vis, "behind the source");
        let (_, vis) = g.project_point(&Vector3::new(0.0, 0.0, 1500.0)).unwrap();
        assert!(!vis, "beyond the detector");
        assert!(g.project_point(&Vector3::zeros()).is_err());
    }

    #[test]
    fn downsample_must_divide() {
        let cam = default_carm();
        assert!(ProjectionGeometry::new(cam, RigidTransform::identity(), 5).is_err());
        let g = ProjectionGeometry::new(cam, RigidTransform::identity(), 4).unwrap();
        assert_eq!(g.output_dims(), (384, 384));
    }

    #[test]
    fn downsample_scales_coordinates() {
        let cam = default_carm();
        let g1 = ProjectionGeometry::new(cam, RigidTransform::identity(), 2).unwrap();
        let g2 = ProjectionGeometry::new(cam, RigidTransform::identity(), 4).unwrap();
        let pp1 = Vector2::from(g1.output_camera().principal_point);
        let pp2 = Vector2::from(g2.output_camera().principal_point);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let p = Vector3::new(
                rng.random_range(-80.0..80.0),
                rng.random_range(-80.0..80.0),
                rng.random_range(300.0..900.0),
            );
            let (a, _) = g1.project_point(&p).unwrap();
            let (b, _) = g2.project_point(&p).unwrap();
            assert!(((a - pp1) * 0.5 - (b - pp2)).norm() < 1e-6);
        }
    }

    #[test]
    fn task_parsing() {
        assert_eq!("HIP".parse::<Task>().unwrap(), Task::Hip);
        assert!(matches!("knee".parse::<Task>(), Err(Error::UnknownTask(_))));
    }

    #[test]
    fn samplers_are_deterministic() {
        for task in [Task::Hip, Task::Tool, Task::Covid] {
            let cfg = PoseSamplerConfig::new(task, 99);
            let mut a = PoseSampler::new(cfg).unwrap();
            let mut b = PoseSampler::new(cfg).unwrap();
            for _ in 0..20 {
                assert_eq!(a.next_pose().unwrap(), b.next_pose().unwrap());
            }
        }
    }

    #[test]
    fn inverted_range_rejected() {
        let mut cfg = PoseSamplerConfig::new(Task::Hip, 0);
        cfg.hip.left_right_mm = Interval::new(5.0, -5.0);
        assert!(PoseSampler::new(cfg).is_err());
    }

    #[test]
    fn pose_record_roundtrip() {
        let cfg = PoseSamplerConfig::new(Task::Covid, 5);
        let pose = PoseSampler::new(cfg).unwrap().next_pose().unwrap();
        let center = Vector3::new(1.0, 2.0, 3.0);
        let g = pose.geometry(default_carm(), &center, 1).unwrap();
        let rec = PoseRecord::from_geometry(0, &g, 7);
        let json = serde_json::to_string(&rec).unwrap();
        let back: PoseRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rec);
        let e = back.camera_from_world().unwrap();
        assert!((e.to_homogeneous() - g.camera_from_world().to_homogeneous()).abs().max() < 1e-12);
    }
}
