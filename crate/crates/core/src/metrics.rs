//! Segmentation and landmark evaluation metrics.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::CameraModel;
use crate::grid::Mask;
use crate::labels2d::LandmarkPrediction;

/// Dice overlap of `class_id` between two masks. Both empty counts as 1.0.
pub fn dice(pred: &Mask, gt: &Mask, class_id: u8) -> Result<f64> {
    check_dims(pred, gt)?;
    let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        let (ip, ig) = (p == class_id, g == class_id);
        a += ip as usize;
        b += ig as usize;
        both += (ip && ig) as usize;
    }
    if a + b == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (a + b) as f64)
}

fn check_dims(a: &Mask, b: &Mask) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::DimMismatch(format!("masks {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// Pixel-wise confusion counts of a binary segmentation (non-zero = positive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionStats {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

/// Derived confusion-matrix rates. A ratio with an empty denominator is 1.0
/// (nothing could go wrong); F-scores are 0 when precision and recall are.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMetrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub precision: f64,
    pub f1: f64,
    pub f2: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionStats {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    fn f_beta(&self, beta2: f64) -> f64 {
        let (p, r) = (self.precision(), self.sensitivity());
        let den = beta2 * p + r;
        if den == 0.0 {
            0.0
        } else {
            (1.0 + beta2) * p * r / den
        }
    }

    pub fn f1(&self) -> f64 {
        self.f_beta(1.0)
    }

    pub fn f2(&self) -> f64 {
        self.f_beta(4.0)
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn metrics(&self) -> ConfusionMetrics {
        ConfusionMetrics {
            sensitivity: self.sensitivity(),
            specificity: self.specificity(),
            precision: self.precision(),
            f1: self.f1(),
            f2: self.f2(),
            accuracy: self.accuracy(),
        }
    }
}

impl std::ops::Add for ConfusionStats {
    type Output = ConfusionStats;

    fn add(self, o: ConfusionStats) -> ConfusionStats {
        ConfusionStats {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

pub fn confusion(pred: &Mask, gt: &Mask) -> Result<ConfusionStats> {
    check_dims(pred, gt)?;
    let mut s = ConfusionStats::default();
    for (&p, &g) in pred.as_slice().iter().zip(gt.as_slice()) {
        match (p != 0, g != 0) {
            (true, true) => s.tp += 1,
            (true, false) => s.fp += 1,
            (false, true) => s.fn_ += 1,
            (false, false) => s.tn += 1,
        }
    }
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub phi: f64,
    /// Activated fraction of visible ground-truth landmarks, in `[0, 1]`.
    pub p: f64,
    /// Mean error over activated landmarks (mm); absent when none activated.
    pub e_ld_mm: Option<f64>,
}

/// Landmark error as a function of activation percentage, parameterized by
/// the confidence threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkCurve {
    pub samples: Vec<CurvePoint>,
}

/// `n` thresholds evenly spaced on `[0, 1]`.
pub fn phi_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn default_phi_grid() -> Vec<f64> {
    phi_grid(101)
}

/// Millimetres per output pixel on the detector plane when `camera` is read
/// out at `width` pixels.
pub fn detector_mm_per_px(camera: &CameraModel, width: usize) -> f64 {
    camera.pixel_spacing * camera.detector_dims[0] as f64 / width as f64
}

/// Builds the activation/error curve.
///
/// `preds[i][l]` and `gts[i][l]` refer to landmark `l` of image `i`. A
/// landmark is activated at threshold `phi` when its confidence exceeds `phi`
/// and its ground truth is visible.
pub fn landmark_curve(
    preds: &[Vec<LandmarkPrediction>],
    gts: &[Vec<Option<[f64; 2]>>],
    mm_per_px: f64,
    phis: &[f64],
) -> Result<LandmarkCurve> {
    if preds.len() != gts.len() || preds.iter().zip(gts).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::DimMismatch("predictions and ground truth are not aligned".into()));
    }
    if !(mm_per_px > 0.0) {
        return Err(Error::Precondition("mm_per_px must be positive".into()));
    }
    // Visible landmarks as (confidence, error) in input order.
    let scored: Vec<(f64, f64)> = preds
        .iter()
        .flatten()
        .zip(gts.iter().flatten())
        .filter_map(|(p, g)| {
            g.map(|[gx, gy]| {
                let dx = p.pixel[0] as f64 - gx;
                let dy = p.pixel[1] as f64 - gy;
                (p.confidence, (dx * dx + dy * dy).sqrt() * mm_per_px)
            })
        })
        .collect();
    let visible = scored.len();
    let samples = phis
        .iter()
        .map(|&phi| {
            let (activated, sum) = scored
                .iter()
                .filter(|(c, _)| *c > phi)
                .fold((0usize, 0.0), |(n, s), (_, e)| (n + 1, s + e));
            CurvePoint {
                phi,
                p: if visible == 0 { 0.0 } else { activated as f64 / visible as f64 },
                e_ld_mm: (activated > 0).then(|| sum / activated as f64),
            }
        })
        .collect();
    Ok(LandmarkCurve { samples })
}

impl LandmarkCurve {
    /// The sample with the largest threshold that still activates at least
    /// `p_min` of the landmarks.
    pub fn at_activation(&self, p_min: f64) -> Option<CurvePoint> {
        self.samples
            .iter()
            .filter(|s| s.p >= p_min)
            .max_by(|a, b| a.phi.total_cmp(&b.phi))
            .copied()
    }

    /// `phi,p,e_ld_mm` CSV; `p` in percent, missing errors left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phi,p,e_ld_mm\n");
        for s in &self.samples {
            let e = s.e_ld_mm.map(|e| format!("{e:.6}")).unwrap_or_default();
            let _ = writeln!(out, "{:.4},{:.4},{}", s.phi, 100.0 * s.p, e);
        }
        out
    }

    /// Error (y) against activation percentage (x) as a standalone SVG.
    pub fn to_svg(&self) -> String {
        let (w, h, m) = (480.0, 360.0, 48.0);
        let pts: Vec<(f64, f64)> = self
            .samples
            .iter()
            .filter_map(|s| s.e_ld_mm.map(|e| (100.0 * s.p, e)))
            .collect();
        let e_max = pts.iter().map(|p| p.1).fold(0.0f64, f64::max).max(1e-9) * 1.1;
        let sx = |p: f64| m + p / 100.0 * (w - 2.0 * m);
        let sy = |e: f64| h - m - e / e_max * (h - 2.0 * m);
        let mut svg = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
        );
        let _ = writeln!(svg, "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>");
        let _ = writeln!(
            svg,
            "<line x1=\"{m}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n<line x1=\"{m}\" y1=\"{m}\" x2=\"{m}\" y2=\"{y0}\" stroke=\"black\"/>",
            y0 = h - m,
            x1 = w - m
        );
        for tick in [0.0, 25.0, 50.0, 75.0, 100.0] {
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{tick}</text>",
                sx(tick),
                h - m + 16.0
            );
        }
        for i in 0..=4 {
            let e = e_max * i as f64 / 4.0;
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{e:.1}</text>",
                m - 6.0,
                sy(e) + 4.0
            );
        }
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">activation percentage p (%)</text>",
            w / 2.0,
            h - 10.0
        );
        let _ = writeln!(
            svg,
            "<text x=\"14\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">mean landmark error (mm)</text>",
            h / 2.0,
            h / 2.0
        );
        let poly: Vec<String> = pts.iter().map(|&(p, e)| format!("{:.2},{:.2}", sx(p), sy(e))).collect();
        let _ = writeln!(
            svg,
            "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"{}\"/>",
            poly.join(" ")
        );
        svg.push_str("</svg>\n");
        svg
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn write_svg(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_svg()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.is_empty() {
        return Err(Error::Precondition("cannot summarize an empty set".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok(Summary {
        mean,
        std: var.sqrt(),
        n: values.len(),
    })
}

/// How per-landmark errors are pooled before summarizing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorGrouping {
    /// Every landmark error is one observation.
    #[default]
    PerLandmark,
    /// Each image's mean error is one observation.
    PerImage,
}

/// Summarizes `errors[image][landmark]` (absent entries skipped).
pub fn summarize_errors(errors: &[Vec<Option<f64>>], grouping: ErrorGrouping) -> Result<Summary> {
    let values: Vec<f64> = match grouping {
        ErrorGrouping::PerLandmark => errors.iter().flatten().flatten().copied().collect(),
        ErrorGrouping::PerImage => errors
            .iter()
            .filter_map(|img| {
                let e: Vec<f64> = img.iter().flatten().copied().collect();
                (!e.is_empty()).then(|| e.iter().sum::<f64>() / e.len() as f64)
            })
            .collect(),
    };
    summarize(&values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8], w: usize) -> Mask {
        Mask::from_vec(w, bits.len() / w, bits.to_vec()).unwrap()
    }

    #[test]
    fn dice_cases() {
        let a = mask(&[1, 1, 1, 1, 0, 0, 0, 0], 4);
        let b = mask(&[0, 0, 1, 1, 1, 1, 0, 0], 4);
        let c = mask(&[0, 0, 0, 0, 1, 1, 1, 1], 4);
        assert_eq!(dice(&a, &a, 1).unwrap(), 1.0);
        assert_eq!(dice(&a, &c, 1).unwrap(), 0.0);
        assert_eq!(dice(&a, &b, 1).unwrap(), 0.5);
        assert_eq!(dice(&a, &b, 7).unwrap(), 1.0);
        assert!(dice(&a, &mask(&[0; 6], 3), 1).is_err());
    }

    #[test]
    fn confusion_hand_count() {
        let s = ConfusionStats { tp: 3, fp: 1, fn_: 2, tn: 10 };
        assert!((s.sensitivity() - 0.6).abs() < 1e-15);
        assert!((s.precision() - 0.75).abs() < 1e-15);
        assert!((s.accuracy() - 0.8125).abs() < 1e-15);
        let (p, r) = (0.75, 0.6);
        assert!((s.f1() - 2.0 * p * r / (p + r)).abs() < 1e-15);
        assert!((s.f2() - 5.0 * p * r / (4.0 * p + r)).abs() < 1e-15);
    }

    #[test]
    fn confusion_extremes() {
        let gt = mask(&[1, 0, 1, 0, 0, 1], 3);
        let s = confusion(&gt, &gt).unwrap();
        assert_eq!((s.sensitivity(), s.specificity(), s.accuracy()), (1.0, 1.0, 1.0));
        let inv = gt.map(|&v| u8::from(v == 0));
        let s = confusion(&inv, &gt).unwrap();
        assert_eq!((s.sensitivity(), s.specificity()), (0.0, 0.0));
        assert_eq!(s.total(), 6);
    }

    #[test]
    fn summarize_cases() {
        assert_eq!(summarize(&[1.0, 1.0, 1.0]).unwrap(), Summary { mean: 1.0, std: 0.0, n: 3 });
        assert_eq!(summarize(&[0.0, 1.0]).unwrap(), Summary { mean: 0.5, std: 0.5, n: 2 });
        assert_eq!(summarize(&[3.5]).unwrap(), Summary { mean: 3.5, std: 0.0, n: 1 });
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn error_grouping() {
        let errs = vec![vec![Some(1.0), Some(3.0)], vec![Some(5.0), None]];
        let per_lm = summarize_errors(&errs, ErrorGrouping::PerLandmark).unwrap();
        assert_eq!(per_lm.mean, 3.0);
        let per_img = summarize_errors(&errs, ErrorGrouping::PerImage).unwrap();
        assert_eq!((per_img.mean, per_img.n), (3.5, 2));
    }

    #[test]
    fn perfect_predictions_curve() {
        let preds = vec![vec![LandmarkPrediction { pixel: [4, 5], confidence: 1.0 }; 3]; 2];
        let gts = vec![vec![Some([4.0, 5.0]); 3]; 2];
        let curve = landmark_curve(&preds, &gts, 0.5, &default_phi_grid()).unwrap();
        for s in &curve.samples[..100] {
            assert_eq!((s.p, s.e_ld_mm), (1.0, Some(0.0)));
        }
        let last = curve.samples.last().unwrap();
        assert_eq!((last.phi, last.p, last.e_ld_mm), (1.0, 0.0, None));
    }

    #[test]
    fn reporting_point() {
        let curve = LandmarkCurve {
            samples: vec![
                CurvePoint { phi: 0.0, p: 1.0, e_ld_mm: Some(9.0) },
                CurvePoint { phi: 0.3, p: 0.95, e_ld_mm: Some(7.0) },
                CurvePoint { phi: 0.6, p: 0.9, e_ld_mm: Some(5.0) },
                CurvePoint { phi: 0.9, p: 0.4, e_ld_mm: Some(2.0) },
            ],
        };
        assert_eq!(curve.at_activation(0.9).unwrap().phi, 0.6);
        assert!(curve.at_activation(1.1).is_none());
        assert!(curve.to_csv().starts_with("phi,p,e_ld_mm\n0.0000,100.0000,9.000000"));
        assert!(curve.to_svg().contains("<polyline"));
    }

    #[test]
    fn misaligned_curve_inputs() {
        let preds = vec![vec![LandmarkPrediction { pixel: [0, 0], confidence: 0.5 }]];
        let gts = vec![vec![Some([0.0, 0.0]), None]];
        assert!(landmark_curve(&preds, &gts, 1.0, &[0.5]).is_err());
    }

    #[test]
    fn mm_conversion() {
        let cam = crate::geometry::default_carm();
        assert!((detector_mm_per_px(&cam, 360) - 0.194 * 1536.0 / 360.0).abs() < 1e-15);
    }
}
