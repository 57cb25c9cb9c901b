use std::fs;
use std::path::Path;

use nalgebra::Matrix3;
use synthex_forge::augment::Level;
use synthex_forge::commands;
use synthex_forge::dataset::{
    generate, load_sample, make_folds, read_pose_log, validate, DatasetManifest, FoldMode, GenerationConfig, Role,
    VolumeSource, ViolationKind, MANIFEST_FILE, POSE_LOG_FILE,
};
use synthex_forge::geometry::{matrix_to_euler_xyz_deg, Task};
use synthex_forge::phantom::{PhantomKind, PhantomSpec};
use synthex_forge::projector::Simulator;

fn small_hip_config(subjects: usize, n_train: usize, n_val: usize, seed: u64) -> GenerationConfig {
    let spec = PhantomSpec {
        voxels: 32,
        spacing_mm: 8.0,
        ..PhantomSpec::new(PhantomKind::Hip)
    };
    let volumes = (0..subjects)
        .map(|i| VolumeSource::phantom(&format!("vol{i}"), &format!("subj{i}"), spec))
        .collect();
    let mut cfg = GenerationConfig::new(Task::Hip, volumes, Simulator::Naive, n_train);
    cfg.n_val = n_val;
    cfg.resolution = 64;
    cfg.seed = seed;
    cfg
}

fn generated(dir: &Path, subjects: usize) -> DatasetManifest {
    generate(&small_hip_config(subjects, 8, 4, 11), dir).unwrap()
}

#[test]
fn generated_dataset_validates_clean() {
    let dir = tempfile::tempdir().unwrap();
    let m = generated(dir.path(), 2);
    assert_eq!(m.samples.len(), 12);
    assert_eq!(m.samples.iter().filter(|s| s.split == synthex_forge::dataset::Split::Val).count(), 4);
    let report = validate(&m, dir.path());
    assert!(report.is_ok(), "{:?}", report.violations);
    assert_eq!(report.samples, 12);
}

#[test]
fn deleted_file_is_one_violation() {
    let dir = tempfile::tempdir().unwrap();
    let m = generated(dir.path(), 2);
    fs::remove_file(dir.path().join(&m.samples[3].files.seg_png)).unwrap();
    let report = validate(&m, dir.path());
    assert_eq!(report.violations.len(), 1, "{:?}", report.violations);
    assert_eq!(report.count(ViolationKind::MissingFile), 1);
    assert_eq!(report.violations[0].sample_id.as_deref(), Some(m.samples[3].id.as_str()));
}

#[test]
fn duplicated_id_is_one_violation() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = generated(dir.path(), 2);
    let dup = m.samples[0].id.clone();
    m.samples[1].id = dup.clone();
    let report = validate(&m, dir.path());
    assert_eq!(report.violations.len(), 1, "{:?}", report.violations);
    assert_eq!(report.count(ViolationKind::DuplicateId), 1);
    assert_eq!(report.violations[0].sample_id.as_deref(), Some(dup.as_str()));
}

#[test]
fn landmark_order_mismatch_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = generated(dir.path(), 1);
    m.samples[2].landmark_names.reverse();
    let report = validate(&m, dir.path());
    assert_eq!(report.count(ViolationKind::LandmarkOrder), 1);
    assert_eq!(report.violations.len(), 1);
}

#[test]
fn manifest_roundtrips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let m = generated(dir.path(), 2);
    let back = DatasetManifest::load(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(back, m);
    let copy = dir.path().join("copy.json");
    back.save(&copy).unwrap();
    assert_eq!(DatasetManifest::load(&copy).unwrap(), m);
}

#[test]
fn samples_reload_with_manifest_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let m = generated(dir.path(), 1);
    for rec in &m.samples {
        let s = load_sample(dir.path(), rec).unwrap();
        assert_eq!(s.image.dims(), (64, 64));
        assert_eq!(s.seg_mask.dims(), (64, 64));
        assert_eq!(s.heatmaps.len(), m.landmark_names.len());
        assert!(s.image.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn hip_pose_log_stays_in_range() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(&small_hip_config(1, 40, 0, 3), dir.path()).unwrap();
    let poses = read_pose_log(&dir.path().join(POSE_LOG_FILE)).unwrap();
    assert_eq!(poses.len(), m.samples.len());
    for (i, p) in poses.iter().enumerate() {
        assert_eq!(p.index, i);
        assert!(p.shear.is_none());
        let angles = matrix_to_euler_xyz_deg(&Matrix3::from_row_slice(&p.rotation));
        assert!(angles.iter().all(|a| a.abs() <= 45.0 + 1e-9), "{angles:?}");
    }
    for rec in &m.samples {
        assert_eq!(poses[rec.pose_index].seed, rec.seed);
    }
}

#[test]
fn generation_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_hip_config(2, 5, 2, 99);
    let ma = generate(&cfg, a.path()).unwrap();
    let mb = generate(&cfg, b.path()).unwrap();
    assert_eq!(ma, mb);
    for rec in &ma.samples {
        for f in rec.files.all() {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }
}

#[test]
fn kfold_over_ten_subjects() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(&small_hip_config(10, 20, 0, 5), dir.path()).unwrap();
    assert_eq!(m.subjects().len(), 10);
    let spec = make_folds(&m, FoldMode::KFold { k: 5 }).unwrap();
    assert_eq!(spec.folds.len(), 5);
    assert!(spec.leaked_subjects(&m).is_empty());
    let mut tested: Vec<String> = spec.folds.iter().flat_map(|f| f.test_subjects.clone()).collect();
    tested.sort();
    assert_eq!(tested, m.subjects());
    for f in &spec.folds {
        assert_eq!(f.test_subjects.len(), 2);
        assert_eq!(f.assignments.len(), m.samples.len());
        for id in f.ids(Role::Test) {
            assert!(f.test_subjects.contains(&m.sample(id).unwrap().subject_id));
        }
    }
}

#[test]
fn loso_needs_two_subjects() {
    let dir = tempfile::tempdir().unwrap();
    let m = generated(dir.path(), 1);
    assert!(make_folds(&m, FoldMode::LeaveOneSubjectOut).is_err());
    assert!(make_folds(&m, FoldMode::KFold { k: 2 }).is_err());
    let two = tempfile::tempdir().unwrap();
    let m2 = generated(two.path(), 2);
    assert_eq!(make_folds(&m2, FoldMode::LeaveOneSubjectOut).unwrap().folds.len(), 2);
}

#[test]
fn perfect_predictions_score_perfectly() {
    let data = tempfile::tempdir().unwrap();
    let pred = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let m = generated(data.path(), 2);
    let mut expected = Vec::new();
    for rec in &m.samples {
        fs::copy(data.path().join(&rec.files.seg_png), pred.path().join(format!("{}.seg.png", rec.id))).unwrap();
        fs::copy(
            data.path().join(&rec.files.heatmaps_raw),
            pred.path().join(format!("{}.heatmaps.f32", rec.id)),
        )
        .unwrap();
        // The argmax of a grid-sampled Gaussian is the nearest pixel to its center.
        let s = load_sample(data.path(), rec).unwrap();
        for [x, y] in s.landmark_px.iter().flatten() {
            let (dx, dy) = (x.round() - x, y.round() - y);
            expected.push((dx * dx + dy * dy).sqrt() * m.camera.pixel_spacing);
        }
    }
    let manifest = data.path().join(MANIFEST_FILE);
    let report = commands::evaluate(pred.path(), &manifest, out.path()).unwrap();
    assert_eq!(report.samples, m.samples.len());
    assert!(report.missing_predictions.is_empty());
    for c in &report.classes {
        assert_eq!(c.dice.mean, 1.0, "class {}", c.name);
        assert_eq!(c.confusion.fp + c.confusion.fn_, 0);
    }
    let lm = report.landmark_error_mm.unwrap();
    let oracle = expected.iter().sum::<f64>() / expected.len() as f64;
    assert_eq!(lm.n, expected.len());
    assert!((lm.mean - oracle).abs() < 1e-9, "{} vs {oracle}", lm.mean);
    assert!(lm.mean <= 0.5f64.sqrt() * m.camera.pixel_spacing);
    for f in ["metrics.json", "landmark_curve.csv", "landmark_curve.svg"] {
        assert!(out.path().join(f).is_file(), "{f}");
    }
    let csv = fs::read_to_string(out.path().join("landmark_curve.csv")).unwrap();
    assert!(csv.starts_with("phi,p,e_ld_mm"));
}

#[test]
fn missing_predictions_are_listed() {
    let data = tempfile::tempdir().unwrap();
    let pred = tempfile::tempdir().unwrap();
    let m = generated(data.path(), 1);
    let rec = &m.samples[0];
    fs::copy(data.path().join(&rec.files.seg_png), pred.path().join(format!("{}.seg.png", rec.id))).unwrap();
    let report = synthex_forge::dataset::evaluate(&m, data.path(), pred.path()).unwrap();
    assert_eq!(report.samples, 1);
    assert_eq!(report.missing_predictions.len(), m.samples.len() - 1);
    assert!(report.landmark_error_mm.is_none() && report.curve.is_none());
}

#[test]
fn augment_command_writes_a_valid_dataset() {
    let data = tempfile::tempdir().unwrap();
    let out = tempfile::tempdir().unwrap();
    let m = generated(data.path(), 1);
    let aug = commands::augment(&data.path().join(MANIFEST_FILE), Level::Strong, out.path(), 4).unwrap();
    assert_eq!(aug.samples.len(), m.samples.len());
    let report = validate(&aug, out.path());
    assert!(report.is_ok(), "{:?}", report.violations);
    let plans = fs::read_to_string(out.path().join("plans.jsonl")).unwrap();
    assert_eq!(plans.lines().count(), m.samples.len());
    for (line, rec) in plans.lines().zip(&m.samples) {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["id"], rec.id.as_str());
        assert_eq!(v["plan"]["level"], "strong");
    }
    for rec in &aug.samples {
        let s = load_sample(out.path(), rec).unwrap();
        assert_eq!(s.image.dims(), (rec.width, rec.height));
        assert!(s.image.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn val_count_does_not_change_train_samples() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ma = generate(&small_hip_config(1, 4, 0, 8), a.path()).unwrap();
    let mb = generate(&small_hip_config(1, 4, 3, 8), b.path()).unwrap();
    for (ra, rb) in ma.samples.iter().zip(&mb.samples) {
        assert_eq!((&ra.id, ra.seed), (&rb.id, rb.seed));
        assert_eq!(fs::read(a.path().join(&ra.files.image_raw)).unwrap(), fs::read(b.path().join(&rb.files.image_raw)).unwrap());
    }
}

#[test]
fn realistic_simulator_config_falls_back_to_defaults() {
    let sim: Simulator = serde_json::from_str(r#"{"kind": "realistic", "photons_per_pixel": 1000}"#).unwrap();
    let Simulator::Realistic(phys) = sim else { panic!("expected realistic") };
    assert_eq!(phys.photons_per_pixel, 1000.0);
    let defaults = synthex_forge::physics::PhysicsConfig::default();
    assert_eq!(phys.spectrum, defaults.spectrum);
    assert_eq!(phys.scatter_fraction, defaults.scatter_fraction);
}
