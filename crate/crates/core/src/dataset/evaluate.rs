use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{load_sample, DatasetManifest, SampleRecord};
use crate::error::{Error, Result};
use crate::grid::{read_raw_f32, Mask};
use crate::labels2d::{decode_image, LandmarkPrediction};
use crate::metrics::{
    confusion, default_phi_grid, dice, landmark_curve, summarize, summarize_errors, ConfusionMetrics,
    ConfusionStats, CurvePoint, ErrorGrouping, LandmarkCurve, Summary,
};

/// Model output for one sample. Files in the prediction directory:
/// `<id>.seg.png` (8-bit class ids), and either `<id>.heatmaps.f32`
/// (float32 maps in manifest landmark order) or `<id>.landmarks.json`
/// (array of `{"pixel": [x, y], "confidence": c}`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Prediction {
    pub seg: Option<Mask>,
    pub landmarks: Option<Vec<LandmarkPrediction>>,
}

fn load_prediction(dir: &Path, rec: &SampleRecord) -> Result<Prediction> {
    let seg_path = dir.join(format!("{}.seg.png", rec.id));
    let seg = if seg_path.is_file() {
        Some(Mask::read_png8(&seg_path)?)
    } else {
        None
    };
    let hm_path = dir.join(format!("{}.heatmaps.f32", rec.id));
    let json_path = dir.join(format!("{}.landmarks.json", rec.id));
    let landmarks = if hm_path.is_file() {
        let maps = read_raw_f32(&hm_path, rec.width, rec.height, rec.landmark_names.len())?;
        Some(maps.iter().map(decode_image).collect())
    } else if json_path.is_file() {
        let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
        let lms: Vec<LandmarkPrediction> = serde_json::from_str(&text).map_err(|e| Error::json(&json_path, e))?;
        if lms.len() != rec.landmark_names.len() {
            return Err(Error::DimMismatch(format!(
                "{}: {} landmark predictions for {} landmarks",
                rec.id,
                lms.len(),
                rec.landmark_names.len()
            )));
        }
        Some(lms)
    } else {
        None
    };
    Ok(Prediction { seg, landmarks })
}

/// Loads predictions for every manifest sample that has at least one file.
pub fn load_predictions(dir: &Path, m: &DatasetManifest) -> Result<Vec<(String, Prediction)>> {
    let preds: Vec<(String, Prediction)> = m
        .samples
        .par_iter()
        .map(|rec| Ok((rec.id.clone(), load_prediction(dir, rec)?)))
        .collect::<Result<_>>()?;
    Ok(preds
        .into_iter()
        .filter(|(_, p)| p.seg.is_some() || p.landmarks.is_some())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class_id: u8,
    pub name: String,
    /// Per-image Dice.
    pub dice: Summary,
    /// Pixel counts pooled over images.
    pub confusion: ConfusionStats,
    pub metrics: ConfusionMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub samples: usize,
    pub missing_predictions: Vec<String>,
    pub mm_per_px: f64,
    pub classes: Vec<ClassReport>,
    /// Error over all visible landmarks, without thresholding.
    pub landmark_error_mm: Option<Summary>,
    /// Curve sample at 90% activation.
    pub at_90: Option<CurvePoint>,
    #[serde(skip)]
    pub curve: Option<LandmarkCurve>,
}

/// Scores predictions in `pred_dir` against the dataset at `root`.
pub fn evaluate(m: &DatasetManifest, root: &Path, pred_dir: &Path) -> Result<EvaluationReport> {
    let preds = load_predictions(pred_dir, m)?;
    let found: std::collections::HashSet<&str> = preds.iter().map(|(id, _)| id.as_str()).collect();
    let missing_predictions: Vec<String> = m
        .samples
        .iter()
        .filter(|s| !found.contains(s.id.as_str()))
        .map(|s| s.id.clone())
        .collect();

    struct Scored {
        per_class: Vec<(f64, ConfusionStats)>,
        landmarks: Option<(Vec<LandmarkPrediction>, Vec<Option<[f64; 2]>>)>,
    }
    let class_ids: Vec<u8> = m.class_names.keys().copied().collect();
    let scored: Vec<Scored> = preds
        .par_iter()
        .map(|(id, p)| {
            let rec = m.sample(id).expect("prediction ids come from the manifest");
            let gt = load_sample(root, rec)?;
            let per_class = match &p.seg {
                Some(seg) => class_ids
                    .iter()
                    .map(|&c| {
                        let a = seg.map(|&v| u8::from(v == c));
                        let b = gt.seg_mask.map(|&v| u8::from(v == c));
                        Ok((dice(seg, &gt.seg_mask, c)?, confusion(&a, &b)?))
                    })
                    .collect::<Result<Vec<_>>>()?,
                None => Vec::new(),
            };
            let landmarks = p.landmarks.clone().map(|l| (l, gt.landmark_px.clone()));
            Ok(Scored { per_class, landmarks })
        })
        .collect::<Result<_>>()?;

    let with_seg: Vec<&Scored> = scored.iter().filter(|s| !s.per_class.is_empty()).collect();
    let classes = if with_seg.is_empty() {
        Vec::new()
    } else {
        class_ids
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let dices: Vec<f64> = with_seg.iter().map(|s| s.per_class[k].0).collect();
                let conf = with_seg
                    .iter()
                    .fold(ConfusionStats::default(), |acc, s| acc + s.per_class[k].1);
                Ok(ClassReport {
                    class_id: c,
                    name: m.class_names[&c].clone(),
                    dice: summarize(&dices)?,
                    confusion: conf,
                    metrics: conf.metrics(),
                })
            })
            .collect::<Result<Vec<_>>>()?
    };

    let mm_per_px = m.mm_per_px();
    let (lm_pred, lm_gt): (Vec<_>, Vec<_>) = scored.iter().filter_map(|s| s.landmarks.clone()).unzip();
    let (curve, landmark_error_mm) = if lm_pred.is_empty() {
        (None, None)
    } else {
        let curve = landmark_curve(&lm_pred, &lm_gt, mm_per_px, &default_phi_grid())?;
        let errors: Vec<Vec<Option<f64>>> = lm_pred
            .iter()
            .zip(&lm_gt)
            .map(|(p, g)| {
                p.iter()
                    .zip(g)
                    .map(|(p, g)| {
                        g.map(|[gx, gy]| {
                            let (dx, dy) = (p.pixel[0] as f64 - gx, p.pixel[1] as f64 - gy);
                            (dx * dx + dy * dy).sqrt() * mm_per_px
                        })
                    })
                    .collect()
            })
            .collect();
        (Some(curve), summarize_errors(&errors, ErrorGrouping::PerLandmark).ok())
    };
    Ok(EvaluationReport {
        samples: scored.len(),
        missing_predictions,
        mm_per_px,
        classes,
        landmark_error_mm,
        at_90: curve.as_ref().and_then(|c| c.at_activation(0.9)),
        curve,
    })
}

impl EvaluationReport {
    /// Writes `metrics.json`, and when landmarks were scored,
    /// `landmark_curve.csv` and `landmark_curve.svg`.
    pub fn write(&self, out: &Path) -> Result<()> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join("metrics.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        if let Some(c) = &self.curve {
            c.write_csv(&out.join("landmark_curve.csv"))?;
            c.write_svg(&out.join("landmark_curve.svg"))?;
        }
        Ok(())
    }
}
