//! Shows the bundled 90 kVp spectrum and attenuation table, beam hardening
//! behind bone, and the detector noise model on a flat field.
//!
//! `cargo run --release --example physics_spectrum`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use synthex_forge::grid::Image;
use synthex_forge::physics::{detected_energy, expected_counts, sample_counts, Material, MaterialLUT, PhysicsConfig, Spectrum};

fn main() -> anyhow::Result<()> {
    let spectrum = Spectrum::shipped_90kvp();
    let lut = MaterialLUT::shipped();
    println!("  keV   fluence   mu_tissue   mu_bone  (1/mm)");
    for (bin, (e, f)) in spectrum.energies_kev().iter().zip(spectrum.fluence()).enumerate() {
        println!(
            "{e:5.0} {f:9.4} {:11.4} {:9.4}",
            lut.mu(Material::SoftTissue, bin),
            lut.mu(Material::Bone, bin)
        );
    }

    let open = detected_energy(&[0.0; 3], &spectrum, &lut);
    println!("\nbone thickness -> effective mu");
    for mm in [1.0, 5.0, 10.0, 20.0, 50.0] {
        let t = detected_energy(&[0.0, 0.0, mm], &spectrum, &lut) / open;
        println!("{mm:6.0} mm  transmission {t:.4}  mu_eff {:.4}", -t.ln() / mm);
    }

    let cfg = PhysicsConfig::default();
    let flat = Image::filled(256, 256, open * 0.3);
    let expected = expected_counts(&flat, &cfg);
    let counts = sample_counts(&expected, &cfg, &mut ChaCha8Rng::seed_from_u64(1));
    let n = counts.len() as f64;
    let mean = counts.as_slice().iter().sum::<f64>() / n;
    let var = counts.as_slice().iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
    println!(
        "\nflat field at 30% transmission: expected {:.0}, mean {mean:.1}, variance {var:.1}",
        expected.get(0, 0)
    );
    Ok(())
}
