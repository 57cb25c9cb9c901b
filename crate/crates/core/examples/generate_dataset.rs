//! Generates a small two-subject hip dataset, validates it, builds
//! leave-one-subject-out folds and scores perfect predictions.
//!
//! `cargo run --release --example generate_dataset -- out_dir`

use std::fs;
use std::path::PathBuf;

use synthex_forge::dataset::{
    evaluate, generate, make_folds, validate, FoldMode, GenerationConfig, Role, VolumeSource,
};
use synthex_forge::geometry::Task;
use synthex_forge::phantom::{PhantomKind, PhantomSpec};
use synthex_forge::projector::Simulator;

fn main() -> anyhow::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "dataset_out".into()));
    let spec = PhantomSpec::new(PhantomKind::Hip);
    let volumes = vec![
        VolumeSource::phantom("hip_a", "subject_a", spec),
        VolumeSource::phantom("hip_b", "subject_b", PhantomSpec { scale: 1.1, ..spec }),
    ];
    let mut cfg = GenerationConfig::new(Task::Hip, volumes, Simulator::Realistic(Box::default()), 8);
    cfg.n_val = 2;
    cfg.resolution = 128;
    cfg.seed = 2024;

    let m = generate(&cfg, &out)?;
    println!("generated {} samples into {}", m.samples.len(), out.display());
    let report = validate(&m, &out);
    println!("validation: {} violations", report.violations.len());

    for fold in make_folds(&m, FoldMode::LeaveOneSubjectOut)?.folds {
        println!(
            "fold {}: test {:?}, {} train / {} val / {} test",
            fold.index,
            fold.test_subjects,
            fold.ids(Role::Train).len(),
            fold.ids(Role::Val).len(),
            fold.ids(Role::Test).len()
        );
    }

    // Ground truth copied as predictions scores perfectly.
    let pred = out.join("perfect_predictions");
    fs::create_dir_all(&pred)?;
    for rec in &m.samples {
        fs::copy(out.join(&rec.files.seg_png), pred.join(format!("{}.seg.png", rec.id)))?;
        fs::copy(out.join(&rec.files.heatmaps_raw), pred.join(format!("{}.heatmaps.f32", rec.id)))?;
    }
    let r = evaluate(&m, &out, &pred)?;
    for c in &r.classes {
        println!("{:<12} dice {:.3}", c.name, c.dice.mean);
    }
    if let Some(e) = r.landmark_error_mm {
        println!("landmark error {:.3} +- {:.3} mm (grid rounding only)", e.mean, e.std);
    }
    r.write(&out.join("evaluation"))?;
    Ok(())
}
