//! Annotated CT volumes: intensity grid, label grid and 3D landmarks.
//!
//! On disk a volume is a JSON sidecar plus a headerless raw voxel file with
//! the same stem (`ct.json` + `ct.raw`). Voxels are stored x-fastest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const VOLUME_FORMAT: &str = "synthex-vol-v1";
pub const SCAN_ORDER: &str = "x-fastest";

/// Default plausible CT range. Values outside only produce warnings.
pub const DEFAULT_HU_WINDOW: (f32, f32) = (-1024.0, 3071.0);

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Voxel grid placement in world (mm) coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGeometry {
    pub dims: [usize; 3],
    pub spacing: [f64; 3],
    /// World position of the center of voxel (0, 0, 0).
    pub origin: [f64; 3],
    /// Columns are the voxel axes expressed in world coordinates.
    pub orientation: Matrix3<f64>,
}

impl VolumeGeometry {
    /// Axis-aligned geometry.
    pub fn axis_aligned(dims: [usize; 3], spacing: [f64; 3], origin: [f64; 3]) -> Self {
        Self {
            dims,
            spacing,
            origin,
            orientation: Matrix3::identity(),
        }
    }

    /// Axis-aligned geometry whose voxel grid is centered on the world origin.
    pub fn centered(dims: [usize; 3], spacing: [f64; 3]) -> Self {
        let origin = [0, 1, 2].map(|a| -0.5 * (dims[a] as f64 - 1.0) * spacing[a]);
        Self::axis_aligned(dims, spacing, origin)
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::Format(format!("zero-sized dims {:?}", self.dims)));
        }
        if self.spacing.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Format(format!(
                "spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        if self.origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::Format("origin must be finite".into()));
        }
        check_rotation(&self.orientation, ORTHONORMAL_TOL)
    }

    #[inline]
    pub fn linear_index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// World position of the center of voxel `(i, j, k)`; accepts fractional
    /// indices.
    pub fn index_to_world(&self, index: [f64; 3]) -> Vector3<f64> {
        let scaled = Vector3::new(
            index[0] * self.spacing[0],
            index[1] * self.spacing[1],
            index[2] * self.spacing[2],
        );
        Vector3::from(self.origin) + self.orientation * scaled
    }

    /// Continuous voxel index of a world point.
    pub fn world_to_index(&self, p: &Vector3<f64>) -> [f64; 3] {
        let local = self.orientation.transpose() * (p - Vector3::from(self.origin));
        [0, 1, 2].map(|a| local[a] / self.spacing[a])
    }

    /// World position of the grid center.
    pub fn center(&self) -> Vector3<f64> {
        self.index_to_world(self.dims.map(|d| 0.5 * (d as f64 - 1.0)))
    }

    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        let mut g = self.clone();
        for a in 0..3 {
            g.origin[a] += offset[a];
        }
        g
    }
}

/// Checks that `m` is orthonormal with determinant +1.
pub(crate) fn check_rotation(m: &Matrix3<f64>, tol: f64) -> Result<()> {
    let det = m.determinant();
    let err = (m.transpose() * m - Matrix3::identity()).abs().max();
    if !det.is_finite() || (det - 1.0).abs() > tol || err > tol {
        return Err(Error::NotOrthonormal { det, err });
    }
    Ok(())
}

/// CT intensity volume in Hounsfield units.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    geometry: VolumeGeometry,
    voxels: Vec<f32>,
}

impl Volume {
    pub fn new(geometry: VolumeGeometry, voxels: Vec<f32>) -> Result<Self> {
        geometry.validate()?;
        if voxels.len() != geometry.voxel_count() {
            return Err(Error::SizeMismatch {
                expected: geometry.voxel_count(),
                found: voxels.len(),
            });
        }
        if let Some(bad) = voxels.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(bad));
        }
        Ok(Self { geometry, voxels })
    }

    /// Volume filled by evaluating `hu` at every voxel center (world mm).
    pub fn from_world_fn(geometry: VolumeGeometry, hu: impl Fn(Vector3<f64>) -> f32) -> Result<Self> {
        let [nx, ny, nz] = geometry.dims;
        let mut voxels = Vec::with_capacity(geometry.voxel_count());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    voxels.push(hu(geometry.index_to_world([i as f64, j as f64, k as f64])));
                }
            }
        }
        Self::new(geometry, voxels)
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn dims(&self) -> [usize; 3] {
        self.geometry.dims
    }

    pub fn voxels(&self) -> &[f32] {
        &self.voxels
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f32 {
        self.voxels[self.geometry.linear_index(i, j, k)]
    }

    /// Same voxels, grid moved by `offset` mm in world space.
    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        Self {
            geometry: self.geometry.translated(offset),
            voxels: self.voxels.clone(),
        }
    }

    /// Applies `f` to every voxel value.
    pub fn map_voxels(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        Self::new(self.geometry.clone(), self.voxels.iter().map(|&v| f(v)).collect())
    }
}

/// Per-voxel anatomical class ids aligned with a [`Volume`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    geometry: VolumeGeometry,
    labels: Vec<u8>,
    class_names: BTreeMap<u8, String>,
}

impl LabelVolume {
    pub fn new(
        geometry: VolumeGeometry,
        labels: Vec<u8>,
        class_names: BTreeMap<u8, String>,
    ) -> Result<Self> {
        geometry.validate()?;
        if labels.len() != geometry.voxel_count() {
            return Err(Error::SizeMismatch {
                expected: geometry.voxel_count(),
                found: labels.len(),
            });
        }
        if class_names.contains_key(&0) {
            return Err(Error::Format("class id 0 is reserved for background".into()));
        }
        let mut seen = [false; 256];
        for &l in &labels {
            seen[l as usize] = true;
        }
        if let Some(missing) = (1..256).find(|&id| seen[id] && !class_names.contains_key(&(id as u8))) {
            return Err(Error::Format(format!("label id {missing} has no class name")));
        }
        Ok(Self {
            geometry,
            labels,
            class_names,
        })
    }

    /// Background-only label volume for `geometry`.
    pub fn empty(geometry: VolumeGeometry) -> Result<Self> {
        let n = geometry.voxel_count();
        Self::new(geometry, vec![0; n], BTreeMap::new())
    }

    pub fn geometry(&self) -> &VolumeGeometry {
        &self.geometry
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn class_names(&self) -> &BTreeMap<u8, String> {
        &self.class_names
    }

    pub fn max_class(&self) -> u8 {
        self.class_names.keys().copied().max().unwrap_or(0)
    }

    /// Errors unless this label grid is bit-identical in placement to `v`.
    pub fn check_aligned(&self, v: &Volume) -> Result<()> {
        if &self.geometry != v.geometry() {
            return Err(Error::DimMismatch(
                "label volume geometry differs from its CT volume".into(),
            ));
        }
        Ok(())
    }

    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        Self {
            geometry: self.geometry.translated(offset),
            labels: self.labels.clone(),
            class_names: self.class_names.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Landmark3 {
    pub name: String,
    #[serde(rename = "pos_mm")]
    pub position: [f64; 3],
}

/// Named 3D landmarks in world mm.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LandmarkSet3D {
    #[serde(rename = "landmarks")]
    entries: Vec<Landmark3>,
}

impl LandmarkSet3D {
    pub fn new(entries: Vec<Landmark3>) -> Result<Self> {
        let set = Self { entries };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        let mut names = std::collections::HashSet::new();
        for lm in &self.entries {
            if !names.insert(lm.name.as_str()) {
                return Err(Error::Format(format!("duplicate landmark name `{}`", lm.name)));
            }
            if lm.position.iter().any(|c| !c.is_finite()) {
                return Err(Error::Format(format!("landmark `{}` is not finite", lm.name)));
            }
        }
        Ok(())
    }

    pub fn entries(&self) -> &[Landmark3] {
        &self.entries
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|l| l.name.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn translated(&self, offset: Vector3<f64>) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|l| Landmark3 {
                    name: l.name.clone(),
                    position: [0, 1, 2].map(|a| l.position[a] + offset[a]),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Sidecar {
    format: String,
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    origin_mm: [f64; 3],
    orientation_row_major: [f64; 9],
    dtype: String,
    scan_order: String,
    units: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_names: Option<BTreeMap<String, String>>,
}

impl Sidecar {
    fn from_geometry(g: &VolumeGeometry, dtype: &str, units: &str) -> Self {
        let o = &g.orientation;
        Self {
            format: VOLUME_FORMAT.into(),
            dims: g.dims,
            spacing_mm: g.spacing,
            origin_mm: g.origin,
            orientation_row_major: [
                o[(0, 0)],
                o[(0, 1)],
                o[(0, 2)],
                o[(1, 0)],
                o[(1, 1)],
                o[(1, 2)],
                o[(2, 0)],
                o[(2, 1)],
                o[(2, 2)],
            ],
            dtype: dtype.into(),
            scan_order: SCAN_ORDER.into(),
            units: units.into(),
            class_names: None,
        }
    }

    fn geometry(&self) -> VolumeGeometry {
        VolumeGeometry {
            dims: self.dims,
            spacing: self.spacing_mm,
            origin: self.origin_mm,
            orientation: Matrix3::from_row_slice(&self.orientation_row_major),
        }
    }

    fn expect(&self, dtype: &str, units: &str) -> Result<()> {
        if self.format != VOLUME_FORMAT {
            return Err(Error::Format(format!("unsupported format `{}`", self.format)));
        }
        if self.scan_order != SCAN_ORDER {
            return Err(Error::Format(format!("unsupported scan order `{}`", self.scan_order)));
        }
        if self.dtype != dtype || self.units != units {
            return Err(Error::Format(format!(
                "expected dtype `{dtype}` / units `{units}`, found `{}` / `{}`",
                self.dtype, self.units
            )));
        }
        Ok(())
    }
}

/// Path of the raw voxel file that belongs to a sidecar.
pub fn raw_path(sidecar: &Path) -> PathBuf {
    sidecar.with_extension("raw")
}

fn read_sidecar(path: &Path) -> Result<Sidecar> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads a CT volume from its JSON sidecar (the `.raw` file must sit next to it).
pub fn load_volume(path: &Path) -> Result<Volume> {
    let sidecar = read_sidecar(path)?;
    sidecar.expect("f32le", "HU")?;
    let geometry = sidecar.geometry();
    let raw = raw_path(path);
    let bytes = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    if bytes.len() % 4 != 0 || bytes.len() / 4 != geometry.voxel_count() {
        return Err(Error::SizeMismatch {
            expected: geometry.voxel_count(),
            found: bytes.len() / 4,
        });
    }
    let voxels = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Volume::new(geometry, voxels)
}

pub fn save_volume(v: &Volume, path: &Path) -> Result<()> {
    write_json(path, &Sidecar::from_geometry(v.geometry(), "f32le", "HU"))?;
    let bytes: Vec<u8> = v.voxels.iter().flat_map(|x| x.to_le_bytes()).collect();
    let raw = raw_path(path);
    fs::write(&raw, bytes).map_err(|e| Error::io(&raw, e))
}

pub fn load_label_volume(path: &Path) -> Result<LabelVolume> {
    let sidecar = read_sidecar(path)?;
    sidecar.expect("u8le", "label")?;
    let mut class_names = BTreeMap::new();
    for (id, name) in sidecar.class_names.clone().unwrap_or_default() {
        let id: u8 = id
            .parse()
            .map_err(|_| Error::Format(format!("class id `{id}` is not a u8")))?;
        class_names.insert(id, name);
    }
    let raw = raw_path(path);
    let labels = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    LabelVolume::new(sidecar.geometry(), labels, class_names)
}

pub fn save_label_volume(lv: &LabelVolume, path: &Path) -> Result<()> {
    let mut sidecar = Sidecar::from_geometry(lv.geometry(), "u8le", "label");
    sidecar.class_names = Some(
        lv.class_names
            .iter()
            .map(|(id, name)| (id.to_string(), name.clone()))
            .collect(),
    );
    write_json(path, &sidecar)?;
    let raw = raw_path(path);
    fs::write(&raw, &lv.labels).map_err(|e| Error::io(&raw, e))
}

pub fn load_landmarks(path: &Path) -> Result<LandmarkSet3D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let set: LandmarkSet3D = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    set.validate()?;
    Ok(set)
}

pub fn save_landmarks(ls: &LandmarkSet3D, path: &Path) -> Result<()> {
    write_json(path, ls)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuReport {
    pub fraction_outside: f64,
    pub min: f32,
    pub max: f32,
}

/// Fraction of voxels outside `[lo, hi]` plus the observed HU extremes.
pub fn hu_window_validate(v: &Volume, lo: f32, hi: f32) -> Result<HuReport> {
    if !(lo < hi) {
        return Err(Error::Precondition(format!("HU window requires lo < hi, got [{lo}, {hi}]")));
    }
    let (mut min, mut max, mut outside) = (f32::INFINITY, f32::NEG_INFINITY, 0usize);
    for &h in &v.voxels {
        min = min.min(h);
        max = max.max(h);
        if h < lo || h > hi {
            outside += 1;
        }
    }
    let report = HuReport {
        fraction_outside: outside as f64 / v.voxels.len() as f64,
        min,
        max,
    };
    Ok(report)
}

/// Runs [`hu_window_validate`] against [`DEFAULT_HU_WINDOW`] and logs a warning
/// when any voxel falls outside it.
pub fn warn_outside_default_window(v: &Volume) -> HuReport {
    let (lo, hi) = DEFAULT_HU_WINDOW;
    let report = hu_window_validate(v, lo, hi).expect("default window is ordered");
    if report.fraction_outside > 0.0 {
        log::warn!(
            "{:.3}% of voxels outside [{lo}, {hi}] HU (min {}, max {})",
            100.0 * report.fraction_outside,
            report.min,
            report.max
        );
    }
    report
}
