//! Implementations behind the `synthex-forge` subcommands.

use std::fs;
use std::path::Path;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::augment::{apply_labeled, plan_with, AugmentKnobs, AugmentationPlan, Labeled, Level};
use crate::dataset::{
    self, evaluate as run_evaluation, load_sample, make_folds, manifest_root, DatasetManifest, EvaluationReport,
    FoldMode, FoldSpec, GenerationConfig, SampleRecord, ValidationReport, MANIFEST_FILE, SAMPLES_DIR,
};
use crate::error::{Error, Result};
use crate::labels2d::encode;
use crate::projector::{LandmarkMeta, RadiographSample};

/// Exit status for a failed command: 2 for unusable input configuration,
/// 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::Json { .. } | Error::UnknownTask(_) | Error::Folds(_) => 2,
        _ => 1,
    }
}

/// Renders a dataset; `seed` overrides the config's master seed.
pub fn generate(config: &Path, out: &Path, seed: Option<u64>) -> Result<DatasetManifest> {
    let mut cfg = GenerationConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    dataset::generate(&cfg, out)
}

#[derive(Serialize)]
struct PlanLine<'a> {
    id: &'a str,
    plan: &'a AugmentationPlan,
}

fn augment_one(root: &Path, out: &Path, rec: &SampleRecord, plan: &AugmentationPlan) -> Result<SampleRecord> {
    let s = load_sample(root, rec)?;
    let aug = apply_labeled(
        &Labeled {
            image: s.image,
            mask: Some(s.seg_mask),
            landmarks: s.landmark_px,
        },
        plan,
    )?;
    let (w, h) = aug.image.dims();
    let heatmaps = rec
        .landmark_names
        .iter()
        .zip(&aug.landmarks)
        .map(|(name, px)| encode(*px, w, h, rec.heatmap_sigma_px).map(|m| m.named(name)))
        .collect::<Result<Vec<_>>>()?;
    let mut meta = s.meta;
    meta.landmarks = meta
        .landmarks
        .iter()
        .zip(&aug.landmarks)
        .map(|(l, px)| LandmarkMeta {
            name: l.name.clone(),
            px: *px,
            visible: px.is_some(),
        })
        .collect();
    let sample = RadiographSample {
        image: aug.image,
        seg_mask: aug.mask.expect("mask carried through"),
        heatmaps,
        landmark_px: aug.landmarks,
        meta,
    };
    let files = sample.write(out, &format!("{SAMPLES_DIR}/{}", rec.id))?;
    Ok(SampleRecord { files, ..rec.clone() })
}

/// Writes an augmented copy of every sample plus `plans.jsonl` with the plan
/// used for each, and a manifest for the new dataset.
pub fn augment(manifest: &Path, level: Level, out: &Path, seed: u64) -> Result<DatasetManifest> {
    let m = DatasetManifest::load(manifest)?;
    let root = manifest_root(manifest);
    let samples_dir = out.join(SAMPLES_DIR);
    fs::create_dir_all(&samples_dir).map_err(|e| Error::io(&samples_dir, e))?;
    let knobs = AugmentKnobs::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let plans: Vec<AugmentationPlan> = m
        .samples
        .iter()
        .map(|_| plan_with(level, rng.next_u64(), &knobs))
        .collect();
    let records: Vec<SampleRecord> = m
        .samples
        .par_iter()
        .zip(&plans)
        .map(|(rec, plan)| augment_one(&root, out, rec, plan))
        .collect::<Result<_>>()?;

    let plan_path = out.join("plans.jsonl");
    let mut text = String::new();
    for (rec, plan) in m.samples.iter().zip(&plans) {
        text += &serde_json::to_string(&PlanLine { id: &rec.id, plan }).map_err(|e| Error::json(&plan_path, e))?;
        text.push('\n');
    }
    fs::write(&plan_path, text).map_err(|e| Error::io(&plan_path, e))?;
    let log_src = root.join(&m.pose_log);
    let log_dst = out.join(&m.pose_log);
    fs::copy(&log_src, &log_dst).map_err(|e| Error::io(&log_src, e))?;

    let augmented = DatasetManifest {
        samples: records,
        config: serde_json::json!({
            "source": m.config,
            "augmentation": { "level": level, "seed": seed, "knobs": knobs },
        }),
        ..m
    };
    augmented.save(&out.join(MANIFEST_FILE))?;
    Ok(augmented)
}

/// Builds folds and refuses any assignment that leaks a subject.
pub fn split(manifest: &Path, mode: FoldMode) -> Result<FoldSpec> {
    let m = DatasetManifest::load(manifest)?;
    let spec = make_folds(&m, mode)?;
    if let Some((fold, subject)) = spec.leaked_subjects(&m).into_iter().next() {
        return Err(Error::Folds(format!("subject `{subject}` leaks across fold {fold}")));
    }
    Ok(spec)
}

pub fn evaluate(pred: &Path, manifest: &Path, out: &Path) -> Result<EvaluationReport> {
    let m = DatasetManifest::load(manifest)?;
    let report = run_evaluation(&m, &manifest_root(manifest), pred)?;
    report.write(out)?;
    Ok(report)
}

pub fn validate(manifest: &Path) -> Result<ValidationReport> {
    let m = DatasetManifest::load(manifest)?;
    Ok(dataset::validate(&m, &manifest_root(manifest)))
}
