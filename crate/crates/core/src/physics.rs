//! X-ray physics for the realistic simulator: source spectrum, threshold
//! material decomposition, energy-integrating detection, a scatter surrogate,
//! photon/readout noise with saturation, and neg-log display normalization.
//!
//! Attenuation tables hold linear attenuation at unit density scale (1/mm);
//! a voxel contributes `mu(material, E) * density_scale` where
//! `density_scale = max(0, 1 + HU / 1000)`.
//!
//! The scatter model is a constant-fraction Gaussian blur of the primary
//! image, added before noise. It is a low-frequency surrogate, not a transport
//! model.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{gaussian_blur, Image};
use crate::projector::RayIntegral;
use crate::volume::Volume;

/// Mono-energetic water attenuation used by the naive and heuristic
/// simulators (1/mm, roughly 60 keV).
pub const REFERENCE_WATER_MU: f64 = 0.02;

const SHIPPED_SPECTRUM: &str = include_str!("../data/spectrum_90kvp.csv");
const SHIPPED_MU: &str = include_str!("../data/mu_materials.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    Air = 0,
    SoftTissue = 1,
    Bone = 2,
}

impl Material {
    pub const ALL: [Material; 3] = [Material::Air, Material::SoftTissue, Material::Bone];

    pub fn name(self) -> &'static str {
        match self {
            Material::Air => "air",
            Material::SoftTissue => "soft_tissue",
            Material::Bone => "bone",
        }
    }
}

/// Photon fluence per energy bin at the detector without an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    energies_kev: Vec<f64>,
    fluence: Vec<f64>,
}

impl Spectrum {
    pub fn new(energies_kev: Vec<f64>, fluence: Vec<f64>) -> Result<Self> {
        let s = Self {
            energies_kev,
            fluence,
        };
        s.validate()?;
        Ok(s)
    }

    /// Single-energy beam.
    pub fn mono(energy_kev: f64, fluence: f64) -> Result<Self> {
        Self::new(vec![energy_kev], vec![fluence])
    }

    /// The bundled 90 kVp tungsten spectrum (20-90 keV, 10 keV bins).
    pub fn shipped_90kvp() -> Self {
        Self::parse_csv(SHIPPED_SPECTRUM.as_bytes()).expect("bundled spectrum is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.energies_kev.is_empty() || self.energies_kev.len() != self.fluence.len() {
            return Err(Error::Format("spectrum needs equal, non-empty energy/fluence arrays".into()));
        }
        if self.energies_kev.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Format("spectrum energies must be strictly ascending".into()));
        }
        if self.energies_kev.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::Format("spectrum energies must be positive".into()));
        }
        if self.fluence.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return Err(Error::Format("fluence must be finite and non-negative".into()));
        }
        if !(self.fluence.iter().sum::<f64>() > 0.0) {
            return Err(Error::Format("total fluence must be positive".into()));
        }
        Ok(())
    }

    pub fn energies_kev(&self) -> &[f64] {
        &self.energies_kev
    }

    pub fn fluence(&self) -> &[f64] {
        &self.fluence
    }

    pub fn len(&self) -> usize {
        self.energies_kev.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies_kev.is_empty()
    }

    /// `sum fluence(E) * E`, the detected energy with nothing in the beam.
    pub fn unattenuated_energy(&self) -> f64 {
        self.energies_kev
            .iter()
            .zip(&self.fluence)
            .map(|(e, f)| e * f)
            .sum()
    }

    /// Reads `energy_kev,fluence` CSV (lines starting with `#` are ignored).
    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(file)
    }

    fn parse_csv(reader: impl std::io::Read) -> Result<Self> {
        let rows = read_numeric_csv(reader, &["energy_kev", "fluence"])?;
        Self::new(
            rows.iter().map(|r| r[0]).collect(),
            rows.iter().map(|r| r[1]).collect(),
        )
    }
}

fn read_numeric_csv(reader: impl std::io::Read, columns: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h == *c)
                .ok_or_else(|| Error::Format(format!("missing CSV column `{c}`")))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Format(e.to_string()))?;
        let row = idx
            .iter()
            .map(|&i| {
                record
                    .get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::Format(format!("bad number in CSV row {record:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// Per-material attenuation over a set of energy bins plus the HU thresholds
/// used for decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialLUT {
    energies_kev: Vec<f64>,
    /// Indexed by `Material as usize`, then by energy bin.
    mu: [Vec<f64>; 3],
    pub air_max_hu: f32,
    pub bone_min_hu: f32,
}

impl MaterialLUT {
    pub fn new(energies_kev: Vec<f64>, mu: [Vec<f64>; 3], air_max_hu: f32, bone_min_hu: f32) -> Result<Self> {
        let lut = Self {
            energies_kev,
            mu,
            air_max_hu,
            bone_min_hu,
        };
        lut.validate()?;
        Ok(lut)
    }

    /// Bundled table: NIST-derived air, water (soft tissue) and cortical bone,
    /// thresholds air < -800 HU, bone > 350 HU.
    pub fn shipped() -> Self {
        Self::parse_csv(SHIPPED_MU.as_bytes(), -800.0, 350.0).expect("bundled table is valid")
    }

    /// A table with the same `mu` for every material and energy, useful to
    /// collapse the realistic simulator onto the mono-energetic case.
    pub fn uniform(energies_kev: Vec<f64>, mu: f64) -> Result<Self> {
        let n = energies_kev.len();
        Self::new(energies_kev, [vec![mu; n], vec![mu; n], vec![mu; n]], -800.0, 350.0)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.energies_kev.len();
        if n == 0 || self.mu.iter().any(|m| m.len() != n) {
            return Err(Error::Format("attenuation table arrays must match energy bins".into()));
        }
        if self.energies_kev.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Format("table energies must be strictly ascending".into()));
        }
        for (m, values) in Material::ALL.iter().zip(&self.mu) {
            if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(Error::Format(format!("negative mu for {}", m.name())));
            }
            if values.windows(2).any(|w| w[1] > w[0]) {
                return Err(Error::Format(format!("mu for {} must not increase with energy", m.name())));
            }
        }
        if !(self.air_max_hu < self.bone_min_hu) {
            return Err(Error::Format("air_max_hu must be below bone_min_hu".into()));
        }
        Ok(())
    }

    pub fn energies_kev(&self) -> &[f64] {
        &self.energies_kev
    }

    pub fn mu(&self, material: Material, bin: usize) -> f64 {
        self.mu[material as usize][bin]
    }

    /// Restricts the table to the listed energies (each must be present).
    pub fn select_energies(&self, energies_kev: &[f64]) -> Result<Self> {
        let bins: Vec<usize> = energies_kev
            .iter()
            .map(|e| {
                self.energies_kev
                    .iter()
                    .position(|x| (x - e).abs() < 1e-9)
                    .ok_or_else(|| Error::SpectrumMismatch(format!("no table entry at {e} keV")))
            })
            .collect::<Result<_>>()?;
        let pick = |m: usize| bins.iter().map(|&b| self.mu[m][b]).collect::<Vec<_>>();
        Self::new(
            energies_kev.to_vec(),
            [pick(0), pick(1), pick(2)],
            self.air_max_hu,
            self.bone_min_hu,
        )
    }

    /// Errors unless the table's bins are exactly the spectrum's bins.
    pub fn check_matches(&self, spectrum: &Spectrum) -> Result<()> {
        let same = self.energies_kev.len() == spectrum.energies_kev.len()
            && self
                .energies_kev
                .iter()
                .zip(&spectrum.energies_kev)
                .all(|(a, b)| (a - b).abs() < 1e-9);
        if !same {
            return Err(Error::SpectrumMismatch(format!(
                "table bins {:?} vs spectrum bins {:?}",
                self.energies_kev, spectrum.energies_kev
            )));
        }
        Ok(())
    }

    /// Reads `energy_kev,mu_air,mu_soft,mu_bone` CSV.
    pub fn load_csv(path: &Path, air_max_hu: f32, bone_min_hu: f32) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(file, air_max_hu, bone_min_hu)
    }

    fn parse_csv(reader: impl std::io::Read, air_max_hu: f32, bone_min_hu: f32) -> Result<Self> {
        let rows = read_numeric_csv(reader, &["energy_kev", "mu_air", "mu_soft", "mu_bone"])?;
        let col = |c: usize| rows.iter().map(|r| r[c]).collect::<Vec<_>>();
        Self::new(col(0), [col(1), col(2), col(3)], air_max_hu, bone_min_hu)
    }
}

/// Settings for the realistic simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicsConfig {
    pub spectrum: Spectrum,
    pub lut: MaterialLUT,
    /// Expected photon count of an unattenuated pixel (primary only).
    pub photons_per_pixel: f64,
    pub scatter_fraction: f64,
    pub scatter_kernel_sigma_px: f64,
    pub readout_noise_sigma: f64,
    /// Saturation level as a fraction of `photons_per_pixel`.
    pub saturation_fraction: f64,
    /// Poisson photon noise on/off.
    #[serde(default = "default_true")]
    pub photon_noise: bool,
}

fn default_true() -> bool {
    true
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            spectrum: Spectrum::shipped_90kvp(),
            lut: MaterialLUT::shipped(),
            photons_per_pixel: 5e4,
            scatter_fraction: 0.1,
            scatter_kernel_sigma_px: 32.0,
            readout_noise_sigma: 10.0,
            saturation_fraction: 0.95,
            photon_noise: true,
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        self.spectrum.validate()?;
        self.lut.validate()?;
        self.lut.check_matches(&self.spectrum)?;
        let bad = |what: &str| Err(Error::Precondition(format!("physics config: {what}")));
        if !(self.photons_per_pixel > 0.0 && self.photons_per_pixel.is_finite()) {
            return bad("photons_per_pixel must be positive");
        }
        if !(0.0..1.0).contains(&self.scatter_fraction) {
            return bad("scatter_fraction must lie in [0, 1)");
        }
        if !(self.scatter_kernel_sigma_px >= 0.0) {
            return bad("scatter_kernel_sigma_px must be >= 0");
        }
        if !(self.readout_noise_sigma >= 0.0) {
            return bad("readout_noise_sigma must be >= 0");
        }
        if !(self.saturation_fraction > 0.0 && self.saturation_fraction <= 1.0) {
            return bad("saturation_fraction must lie in (0, 1]");
        }
        Ok(())
    }

    /// Copy with the scatter kernel rescaled from the 360 px reference width.
    pub fn scaled_to_width(&self, width: usize) -> Self {
        let mut c = self.clone();
        c.scatter_kernel_sigma_px *= width as f64 / 360.0;
        c
    }

    /// Noise-free, scatter-free, saturation-free variant.
    pub fn ideal(spectrum: Spectrum, lut: MaterialLUT) -> Self {
        Self {
            spectrum,
            lut,
            photons_per_pixel: 1e6,
            scatter_fraction: 0.0,
            scatter_kernel_sigma_px: 0.0,
            readout_noise_sigma: 0.0,
            saturation_fraction: 1.0,
            photon_noise: false,
        }
    }

    pub fn saturation_level(&self) -> f64 {
        self.saturation_fraction * self.photons_per_pixel
    }
}

/// Voxel-wise threshold decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialDecomposition {
    pub materials: Vec<Material>,
    pub density: Vec<f32>,
}

impl MaterialDecomposition {
    /// `density * [material == m]` for every voxel.
    pub fn channel(&self, m: Material) -> Vec<f32> {
        self.materials
            .iter()
            .zip(&self.density)
            .map(|(&mat, &d)| if mat == m { d } else { 0.0 })
            .collect()
    }
}

#[inline]
pub fn density_scale(hu: f32) -> f32 {
    (1.0 + hu / 1000.0).max(0.0)
}

#[inline]
pub fn classify(hu: f32, lut: &MaterialLUT) -> Material {
    if hu < lut.air_max_hu {
        Material::Air
    } else if hu > lut.bone_min_hu {
        Material::Bone
    } else {
        Material::SoftTissue
    }
}

pub fn decompose_materials(v: &Volume, lut: &MaterialLUT) -> MaterialDecomposition {
    MaterialDecomposition {
        materials: v.voxels().iter().map(|&h| classify(h, lut)).collect(),
        density: v.voxels().iter().map(|&h| density_scale(h)).collect(),
    }
}

/// Detected energy behind per-material path lengths (mm x density):
/// `sum_E fluence(E) * E * exp(-sum_m mu(m, E) * path_m)`.
pub fn detected_energy(paths: &[f64], spectrum: &Spectrum, lut: &MaterialLUT) -> f64 {
    debug_assert_eq!(paths.len(), Material::ALL.len());
    spectrum
        .energies_kev
        .iter()
        .zip(&spectrum.fluence)
        .enumerate()
        .map(|(bin, (e, f))| {
            let line: f64 = Material::ALL
                .iter()
                .zip(paths)
                .map(|(&m, p)| lut.mu(m, bin) * p)
                .sum();
            f * e * (-line).exp()
        })
        .sum()
}

/// Applies [`detected_energy`] to every pixel of a three-material ray integral
/// (channels ordered as [`Material::ALL`]).
pub fn polychromatic_integral(paths: &RayIntegral, spectrum: &Spectrum, lut: &MaterialLUT) -> Result<Image> {
    lut.check_matches(spectrum)?;
    if paths.channels() != Material::ALL.len() {
        return Err(Error::DimMismatch(format!(
            "expected {} material channels, got {}",
            Material::ALL.len(),
            paths.channels()
        )));
    }
    let (w, h) = paths.dims();
    let data = (0..w * h)
        .map(|i| detected_energy(paths.pixel(i), spectrum, lut))
        .collect();
    Image::from_vec(w, h, data)
}

/// `scatter_fraction * GaussianBlur(primary, scatter_kernel_sigma_px)`.
pub fn scatter_estimate(primary: &Image, cfg: &PhysicsConfig) -> Image {
    if cfg.scatter_fraction == 0.0 {
        return Image::filled(primary.width(), primary.height(), 0.0);
    }
    let mut s = gaussian_blur(primary, cfg.scatter_kernel_sigma_px);
    s.as_mut_slice().iter_mut().for_each(|v| *v *= cfg.scatter_fraction);
    s
}

/// Converts detected energy into expected photon counts: an unattenuated
/// primary pixel maps to `photons_per_pixel`.
pub fn expected_counts(energy: &Image, cfg: &PhysicsConfig) -> Image {
    let scale = cfg.photons_per_pixel / cfg.spectrum.unattenuated_energy();
    energy.map(|e| e * scale)
}

/// Poisson photon noise plus Gaussian readout noise on an expected-count
/// image, clamped to `[0, saturation_level]`.
pub fn sample_counts<R: Rng + ?Sized>(expected: &Image, cfg: &PhysicsConfig, rng: &mut R) -> Image {
    let readout = Normal::new(0.0, cfg.readout_noise_sigma).expect("sigma validated");
    let level = cfg.saturation_level();
    expected.map(|&lambda| {
        let mut n = if cfg.photon_noise && lambda > 0.0 {
            Poisson::new(lambda).map(|p| p.sample(rng)).unwrap_or(lambda)
        } else {
            lambda.max(0.0)
        };
        if cfg.readout_noise_sigma > 0.0 {
            n += readout.sample(rng);
        }
        n.clamp(0.0, level)
    })
}

/// Noisy, saturated photon counts for a detected-energy image.
pub fn noise_apply<R: Rng + ?Sized>(energy: &Image, cfg: &PhysicsConfig, rng: &mut R) -> Image {
    sample_counts(&expected_counts(energy, cfg), cfg, rng)
}

/// Display polarity of normalized attenuation images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    /// More attenuation is brighter (bone bright).
    #[default]
    AttenuationBright,
    AttenuationDark,
}

/// `-log(detected / max_detected)`, min-max normalized to `[0, 1]`.
///
/// Non-positive pixels are floored at the smallest positive value in the
/// image. Images without contrast (or without any positive pixel) map to all
/// zeros.
pub fn neglog_normalize(detected: &Image, polarity: Polarity) -> Image {
    let (w, h) = detected.dims();
    let floor = detected
        .as_slice()
        .iter()
        .copied()
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !floor.is_finite() {
        return Image::filled(w, h, 0.0);
    }
    let max = detected.min_max().1;
    let att = detected.map(|&d| -(d.max(floor) / max).ln());
    let (lo, hi) = att.min_max();
    let range = hi - lo;
    if !(range > 0.0) {
        return Image::filled(w, h, 0.0);
    }
    att.map(|&a| {
        let n = (a - lo) / range;
        match polarity {
            Polarity::AttenuationBright => n,
            Polarity::AttenuationDark => 1.0 - n,
        }
    })
}
