//! Scores noisy segmentation and landmark predictions: Dice, confusion
//! rates, and the landmark error versus activation curve.
//!
//! `cargo run --release --example evaluate_metrics -- out_dir`

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synthex_forge::grid::Mask;
use synthex_forge::labels2d::LandmarkPrediction;
use synthex_forge::metrics::{confusion, default_phi_grid, dice, landmark_curve, summarize};

fn main() -> anyhow::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "metrics_out".into()));
    std::fs::create_dir_all(&out)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let gt = Mask::from_fn(64, 64, |x, y| u8::from((x as i64 - 32).pow(2) + (y as i64 - 32).pow(2) < 300));
    let mut dices = Vec::new();
    for flip in [0.0, 0.02, 0.05, 0.1] {
        let pred = gt.map(|&c| if rng.random::<f64>() < flip { 1 - c } else { c });
        let d = dice(&pred, &gt, 1)?;
        let m = confusion(&pred, &gt)?.metrics();
        println!(
            "flip {flip:4.2}: dice {d:.3}  sensitivity {:.3}  specificity {:.3}  f1 {:.3}",
            m.sensitivity, m.specificity, m.f1
        );
        dices.push(d);
    }
    let s = summarize(&dices)?;
    println!("dice {:.3} +- {:.3} over {} masks", s.mean, s.std, s.n);

    // Confident predictions land closer to the truth.
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for _ in 0..200 {
        let truth = [rng.random_range(20.0..340.0), rng.random_range(20.0..340.0)];
        let confidence: f64 = rng.random();
        let spread = 2.0 + 30.0 * (1.0 - confidence);
        let pixel = truth.map(|t: f64| (t + rng.random_range(-spread..spread)).round().clamp(0.0, 359.0) as usize);
        preds.push(vec![LandmarkPrediction { pixel, confidence }]);
        gts.push(vec![Some(truth)]);
    }
    let curve = landmark_curve(&preds, &gts, 0.5, &default_phi_grid())?;
    for p in curve.samples.iter().step_by(20) {
        match p.e_ld_mm {
            Some(e) => println!("phi {:.2}: {:5.1}% activated, error {e:.2} mm", p.phi, 100.0 * p.p),
            None => println!("phi {:.2}: nothing activated", p.phi),
        }
    }
    if let Some(p) = curve.at_activation(0.9) {
        println!("at 90% activation: phi {:.2}, error {:.2} mm", p.phi, p.e_ld_mm.unwrap_or(f64::NAN));
    }
    curve.write_csv(&out.join("landmark_curve.csv"))?;
    curve.write_svg(&out.join("landmark_curve.svg"))?;
    println!("wrote {}", out.display());
    Ok(())
}
