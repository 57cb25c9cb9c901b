//! Synthetic annotated CT volumes for tests, examples and smoke runs.

use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::volume::{Landmark3, LabelVolume, LandmarkSet3D, Volume, VolumeGeometry};

pub const AIR_HU: f32 = -1000.0;
pub const SOFT_TISSUE_HU: f32 = 40.0;
pub const BONE_HU: f32 = 900.0;

/// A CT volume with aligned labels and landmarks.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub volume: Volume,
    pub labels: LabelVolume,
    pub landmarks: LandmarkSet3D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhantomKind {
    /// Soft-tissue body with two femoral heads and a pelvic bone bar.
    Hip,
    /// Soft-tissue sphere with a bone core.
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    /// Voxels along each axis.
    #[serde(default = "default_voxels")]
    pub voxels: usize,
    #[serde(default = "default_spacing")]
    pub spacing_mm: f64,
    /// Uniform anatomy scale, to vary subjects.
    #[serde(default = "default_scale")]
    pub scale: f64,
}

fn default_voxels() -> usize {
    64
}

fn default_spacing() -> f64 {
    4.0
}

fn default_scale() -> f64 {
    1.0
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind) -> Self {
        Self {
            kind,
            voxels: default_voxels(),
            spacing_mm: default_spacing(),
            scale: default_scale(),
        }
    }

    pub fn build(&self) -> Result<Phantom> {
        let g = VolumeGeometry::centered([self.voxels; 3], [self.spacing_mm; 3]);
        match self.kind {
            PhantomKind::Hip => hip_phantom(g, self.scale),
            PhantomKind::Sphere => sphere_phantom(g, self.scale),
        }
    }
}

/// A labeled solid: voxels inside get `hu` and `label` (0 keeps the label).
struct Solid {
    hu: f32,
    label: u8,
    inside: Box<dyn Fn(&Vector3<f64>) -> bool>,
}

fn ellipsoid(c: Vector3<f64>, r: Vector3<f64>) -> Box<dyn Fn(&Vector3<f64>) -> bool> {
    Box::new(move |p| {
        let d = (p - c).component_div(&r);
        d.norm_squared() <= 1.0
    })
}

fn cuboid(lo: Vector3<f64>, hi: Vector3<f64>) -> Box<dyn Fn(&Vector3<f64>) -> bool> {
    Box::new(move |p| (0..3).all(|i| p[i] >= lo[i] && p[i] <= hi[i]))
}

/// Rasterizes solids in order (later ones overwrite) at voxel centers.
fn rasterize(
    g: VolumeGeometry,
    solids: &[Solid],
    classes: BTreeMap<u8, String>,
    landmarks: Vec<Landmark3>,
) -> Result<Phantom> {
    let [nx, ny, nz] = g.dims;
    let mut hu = vec![AIR_HU; g.voxel_count()];
    let mut labels = vec![0u8; g.voxel_count()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let p = g.index_to_world([i as f64, j as f64, k as f64]);
                let idx = g.linear_index(i, j, k);
                for s in solids {
                    if (s.inside)(&p) {
                        hu[idx] = s.hu;
                        if s.label != 0 {
                            labels[idx] = s.label;
                        }
                    }
                }
            }
        }
    }
    Ok(Phantom {
        volume: Volume::new(g.clone(), hu)?,
        labels: LabelVolume::new(g, labels, classes)?,
        landmarks: LandmarkSet3D::new(landmarks)?,
    })
}

fn landmark(name: &str, p: Vector3<f64>) -> Landmark3 {
    Landmark3 {
        name: name.to_string(),
        position: [p.x, p.y, p.z],
    }
}

/// Hip-like phantom centered on the volume. Axes: x left-right,
/// y inferior-superior, z anterior-posterior.
pub fn hip_phantom(g: VolumeGeometry, scale: f64) -> Result<Phantom> {
    let c = g.center();
    let v = |x: f64, y: f64, z: f64| c + Vector3::new(x, y, z) * scale;
    let head_r = 22.0 * scale;
    let left = v(45.0, -10.0, 0.0);
    let right = v(-45.0, -10.0, 0.0);
    let solids = [
        Solid {
            hu: SOFT_TISSUE_HU,
            label: 0,
            inside: ellipsoid(c, Vector3::new(110.0, 90.0, 80.0) * scale),
        },
        Solid {
            hu: BONE_HU,
            label: 3,
            inside: cuboid(v(-75.0, 22.0, -20.0), v(75.0, 42.0, 20.0)),
        },
        Solid {
            hu: BONE_HU,
            label: 1,
            inside: ellipsoid(left, Vector3::repeat(head_r)),
        },
        Solid {
            hu: BONE_HU,
            label: 2,
            inside: ellipsoid(right, Vector3::repeat(head_r)),
        },
    ];
    let classes = BTreeMap::from([
        (1, "left_femur".to_string()),
        (2, "right_femur".to_string()),
        (3, "pelvis".to_string()),
    ]);
    let landmarks = vec![
        landmark("left_femoral_head", left),
        landmark("right_femoral_head", right),
        landmark("left_iliac", v(60.0, 32.0, 0.0)),
        landmark("right_iliac", v(-60.0, 32.0, 0.0)),
    ];
    rasterize(g, &solids, classes, landmarks)
}

/// Soft-tissue sphere (radius 80 mm x scale) with a bone core of half that
/// radius; landmark at the center.
pub fn sphere_phantom(g: VolumeGeometry, scale: f64) -> Result<Phantom> {
    let c = g.center();
    let solids = [
        Solid {
            hu: SOFT_TISSUE_HU,
            label: 1,
            inside: ellipsoid(c, Vector3::repeat(80.0 * scale)),
        },
        Solid {
            hu: BONE_HU,
            label: 2,
            inside: ellipsoid(c, Vector3::repeat(40.0 * scale)),
        },
    ];
    let classes = BTreeMap::from([(1, "tissue".to_string()), (2, "core".to_string())]);
    rasterize(g, &solids, classes, vec![landmark("center", c)])
}
