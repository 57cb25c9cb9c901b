//! Dataset generation, manifests, folds, validation and evaluation.
//!
//! A dataset directory holds `manifest.json`, a JSON Lines pose log and a
//! `samples/` directory with one file set per sample. All paths in the
//! manifest are relative to the manifest's directory.

mod evaluate;
mod folds;
mod generate;
mod validate;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Task};
use crate::grid::{read_raw_f32, Image, Mask};
use crate::labels2d::Heatmap;
use crate::projector::{RadiographSample, SampleFiles, SampleMeta};

pub use evaluate::{evaluate, load_predictions, ClassReport, EvaluationReport, Prediction};
pub use folds::{make_folds, Fold, FoldMode, FoldSpec, Role};
pub use generate::{generate, read_pose_log, GenerationConfig, VolumeSource};
pub use validate::{validate, ValidationReport, Violation, ViolationKind};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const POSE_LOG_FILE: &str = "poses.jsonl";
pub const SAMPLES_DIR: &str = "samples";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    pub split: Split,
    pub subject_id: String,
    pub volume_id: String,
    /// Line index in the pose log.
    pub pose_index: usize,
    pub simulator: String,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub heatmap_sigma_px: f64,
    pub landmark_names: Vec<String>,
    pub files: SampleFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub task: Task,
    /// Output-resolution camera the samples were rendered with.
    pub camera: CameraModel,
    pub landmark_names: Vec<String>,
    pub class_names: BTreeMap<u8, String>,
    pub pose_log: String,
    pub samples: Vec<SampleRecord>,
    /// Configuration the dataset was produced from.
    pub config: serde_json::Value,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn sample(&self, id: &str) -> Option<&SampleRecord> {
        self.samples.iter().find(|s| s.id == id)
    }

    pub fn subjects(&self) -> Vec<String> {
        let mut s: Vec<String> = self.samples.iter().map(|r| r.subject_id.clone()).collect();
        s.sort();
        s.dedup();
        s
    }

    /// Detector millimetres per output pixel.
    pub fn mm_per_px(&self) -> f64 {
        self.camera.pixel_spacing
    }
}

/// Directory containing the manifest at `path`.
pub fn manifest_root(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Reads one exported sample back from disk.
pub fn load_sample(root: &Path, rec: &SampleRecord) -> Result<RadiographSample> {
    let (w, h) = (rec.width, rec.height);
    let image = read_raw_f32(&root.join(&rec.files.image_raw), w, h, 1)?
        .pop()
        .expect("one image read");
    let seg_mask = Mask::read_png8(&root.join(&rec.files.seg_png))?;
    if seg_mask.dims() != (w, h) {
        return Err(Error::DimMismatch(format!("{}: mask {:?}", rec.id, seg_mask.dims())));
    }
    let maps = read_raw_f32(&root.join(&rec.files.heatmaps_raw), w, h, rec.landmark_names.len())?;
    let heatmaps = rec
        .landmark_names
        .iter()
        .zip(maps)
        .map(|(name, values)| Heatmap {
            name: name.clone(),
            values,
        })
        .collect();
    let meta_path = root.join(&rec.files.meta_json);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: SampleMeta = serde_json::from_str(&text).map_err(|e| Error::json(&meta_path, e))?;
    let landmark_px = meta.landmarks.iter().map(|l| l.px).collect();
    Ok(RadiographSample {
        image,
        seg_mask,
        heatmaps,
        landmark_px,
        meta,
    })
}

/// Image-only convenience loader.
pub fn load_image(root: &Path, rec: &SampleRecord) -> Result<Image> {
    Ok(read_raw_f32(&root.join(&rec.files.image_raw), rec.width, rec.height, 1)?
        .pop()
        .expect("one image read"))
}
