use nalgebra::Vector3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synthex_forge::geometry::{CameraModel, ProjectionGeometry, RigidTransform};
use synthex_forge::phantom::{PhantomKind, PhantomSpec};
use synthex_forge::physics::{
    classify, detected_energy, expected_counts, neglog_normalize, sample_counts, scatter_estimate, Material,
    MaterialLUT, PhysicsConfig, Polarity, Spectrum,
};
use synthex_forge::projector::realistic_drr_with;
use synthex_forge::Image;

/// `-ln(E(path) / E(0)) / path` for a single-material slab of `mm` millimetres.
fn effective_mu(m: Material, mm: f64, spectrum: &Spectrum, lut: &MaterialLUT) -> f64 {
    let mut paths = [0.0; 3];
    paths[m as usize] = mm;
    -(detected_energy(&paths, spectrum, lut) / detected_energy(&[0.0; 3], spectrum, lut)).ln() / mm
}

#[test]
fn polychromatic_beam_hardens() {
    let lut = MaterialLUT::shipped();
    let spectrum = Spectrum::shipped_90kvp();
    // Harder beam behind thicker bone.
    let thin = effective_mu(Material::Bone, 5.0, &spectrum, &lut);
    let thick = effective_mu(Material::Bone, 50.0, &spectrum, &lut);
    assert!(thick < thin, "{thick} vs {thin}");

    let poly_ratio =
        effective_mu(Material::Bone, 20.0, &spectrum, &lut) / effective_mu(Material::SoftTissue, 20.0, &spectrum, &lut);
    let bin40 = lut.energies_kev().iter().position(|&e| e == 40.0).unwrap();
    let mono_ratio = lut.mu(Material::Bone, bin40) / lut.mu(Material::SoftTissue, bin40);
    assert!(poly_ratio < mono_ratio, "{poly_ratio} vs {mono_ratio}");

    // A mono-energetic beam at 40 keV does not harden.
    let mono = Spectrum::mono(40.0, 1.0).unwrap();
    let lut40 = lut.select_energies(&[40.0]).unwrap();
    let a = effective_mu(Material::Bone, 5.0, &mono, &lut40);
    let b = effective_mu(Material::Bone, 50.0, &mono, &lut40);
    assert!((a - b).abs() < 1e-12 && (a - lut.mu(Material::Bone, bin40)).abs() < 1e-12);
}

#[test]
fn detected_energy_matches_hand_sum() {
    let lut = MaterialLUT::shipped();
    let s = Spectrum::shipped_90kvp();
    let paths = [3.0, 41.5, 12.25];
    let mut oracle = 0.0;
    for bin in 0..s.len() {
        let line = lut.mu(Material::Air, bin) * paths[0]
            + lut.mu(Material::SoftTissue, bin) * paths[1]
            + lut.mu(Material::Bone, bin) * paths[2];
        oracle += s.fluence()[bin] * s.energies_kev()[bin] * (-line).exp();
    }
    assert!((detected_energy(&paths, &s, &lut) - oracle).abs() <= 1e-12 * oracle);
}

#[test]
fn scatter_of_a_delta_is_the_scaled_kernel() {
    let (n, c) = (101usize, 50usize);
    let mut primary = Image::filled(n, n, 0.0);
    *primary.get_mut(c, c) = 1.0;
    let cfg = PhysicsConfig { scatter_fraction: 0.25, scatter_kernel_sigma_px: 4.0, ..PhysicsConfig::default() };
    let s = scatter_estimate(&primary, &cfg);
    let r = 12i64;
    let norm: f64 = (-r..=r).map(|i| (-(i * i) as f64 / 32.0).exp()).sum();
    let g = |d: i64| if d.abs() > r { 0.0 } else { (-(d * d) as f64 / 32.0).exp() / norm };
    for y in 0..n {
        for x in 0..n {
            let oracle = 0.25 * g(x as i64 - c as i64) * g(y as i64 - c as i64);
            assert!((s.get(x, y) - oracle).abs() < 1e-15, "({x}, {y})");
        }
    }
    let total: f64 = s.as_slice().iter().sum();
    assert!((total - 0.25).abs() < 1e-12);
}

#[test]
fn no_scatter_when_fraction_is_zero() {
    let primary = Image::from_fn(16, 16, |x, y| (x + y) as f64);
    let cfg = PhysicsConfig { scatter_fraction: 0.0, ..PhysicsConfig::default() };
    assert!(scatter_estimate(&primary, &cfg).as_slice().iter().all(|&v| v == 0.0));
}

proptest! {
    #[test]
    fn classification_follows_thresholds(hu in -1500.0f32..3000.0) {
        let lut = MaterialLUT::shipped();
        let m = classify(hu, &lut);
        let expect = if hu < -800.0 { Material::Air } else if hu > 350.0 { Material::Bone } else { Material::SoftTissue };
        prop_assert_eq!(m, expect);
    }

    #[test]
    fn counts_respect_saturation(seed in any::<u64>(), level in 0.1f64..1.0) {
        let cfg = PhysicsConfig { saturation_fraction: level, photons_per_pixel: 1e3, ..PhysicsConfig::default() };
        let expected = Image::from_fn(20, 20, |x, y| 50.0 * (x + y) as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let counts = sample_counts(&expected, &cfg, &mut rng);
        prop_assert!(counts.as_slice().iter().all(|&c| (0.0..=level * 1e3).contains(&c)));
    }

    #[test]
    fn neglog_normalize_lands_in_unit_range(values in prop::collection::vec(0.0f64..10.0, 16)) {
        let img = Image::from_vec(4, 4, values).unwrap();
        let out = neglog_normalize(&img, Polarity::AttenuationBright);
        prop_assert!(out.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let dark = neglog_normalize(&img, Polarity::AttenuationDark);
        for (a, b) in out.as_slice().iter().zip(dark.as_slice()) {
            if out.min_max() != (0.0, 0.0) {
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn noise_free_counts_are_the_expectation() {
    let cfg = PhysicsConfig {
        photon_noise: false,
        readout_noise_sigma: 0.0,
        saturation_fraction: 1.0,
        ..PhysicsConfig::default()
    };
    let energy = Image::from_fn(8, 8, |x, _| cfg.spectrum.unattenuated_energy() * (x as f64 + 1.0) / 8.0);
    let expected = expected_counts(&energy, &cfg);
    assert!((expected.get(7, 0) - cfg.photons_per_pixel).abs() < 1e-9);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(sample_counts(&expected, &cfg, &mut rng), expected);
}

#[test]
fn realistic_render_is_seeded() {
    let p = PhantomSpec { voxels: 32, spacing_mm: 8.0, ..PhantomSpec::new(PhantomKind::Sphere) }.build().unwrap();
    let cam = CameraModel {
        detector_dims: [40, 40],
        pixel_spacing: 8.0,
        source_to_detector: 1000.0,
        principal_point: [19.5, 19.5],
    };
    let g = ProjectionGeometry::new(cam, RigidTransform::from_translation(Vector3::new(0.0, 0.0, -600.0)), 1).unwrap();
    let cfg = PhysicsConfig::default();
    let run = |seed| realistic_drr_with(&p.volume, &g, &cfg, 4.0, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let a = run(17);
    assert_eq!(run(17), a);
    assert_ne!(run(18).transmission, a.transmission);
    assert!(a.transmission.as_slice().iter().all(|&t| (0.0..=cfg.saturation_fraction).contains(&t)));
}
