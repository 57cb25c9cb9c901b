use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, SampleRecord, Split, MANIFEST_FILE, MANIFEST_VERSION, POSE_LOG_FILE, SAMPLES_DIR};
use crate::error::{Error, Result};
use crate::geometry::{default_carm, sample_pose, CameraModel, CovidRanges, HipRanges, PoseRecord, PoseSamplerConfig, SampledPose, Task, ToolRanges};
use crate::labels2d::default_sigma_px;
use crate::phantom::{Phantom, PhantomSpec};
use crate::projector::{render_sample, RenderInputs, RenderSettings, Simulator, DEFAULT_MIN_LABEL_PATH_MM};
use crate::volume::{load_label_volume, load_landmarks, load_volume, warn_outside_default_window, LabelVolume, LandmarkSet3D};

/// One annotated CT. Either `volume` (with optional `labels`/`landmarks`
/// sidecars) or `phantom` must be given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeSource {
    pub id: String,
    pub subject_id: String,
    /// Relative share of the samples.
    #[serde(default = "default_weight")]
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub volume: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phantom: Option<PhantomSpec>,
}

fn default_weight() -> f64 {
    1.0
}

fn default_resolution() -> usize {
    360
}

fn default_min_path() -> f64 {
    DEFAULT_MIN_LABEL_PATH_MM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub task: Task,
    pub volumes: Vec<VolumeSource>,
    pub simulator: Simulator,
    /// Output width and height in pixels.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    pub n_train: usize,
    #[serde(default)]
    pub n_val: usize,
    /// Defaults to the resolution-scaled standard width.
    #[serde(default)]
    pub heatmap_sigma_px: Option<f64>,
    #[serde(default)]
    pub step_mm: Option<f64>,
    #[serde(default = "default_min_path")]
    pub min_label_path_mm: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_carm")]
    pub camera: CameraModel,
    #[serde(default)]
    pub hip: HipRanges,
    #[serde(default)]
    pub tool: ToolRanges,
    #[serde(default)]
    pub covid: CovidRanges,
}

impl GenerationConfig {
    pub fn new(task: Task, volumes: Vec<VolumeSource>, simulator: Simulator, n_train: usize) -> Self {
        Self {
            task,
            volumes,
            simulator,
            resolution: default_resolution(),
            n_train,
            n_val: 0,
            heatmap_sigma_px: None,
            step_mm: None,
            min_label_path_mm: default_min_path(),
            seed: 0,
            camera: default_carm(),
            hip: HipRanges::default(),
            tool: ToolRanges::default(),
            covid: CovidRanges::default(),
        }
    }

    /// Reads a config; relative volume paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: GenerationConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for v in &mut cfg.volumes {
            for p in [&mut v.volume, &mut v.labels, &mut v.landmarks].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn pose_config(&self) -> PoseSamplerConfig {
        PoseSamplerConfig {
            task: self.task,
            seed: self.seed,
            hip: self.hip,
            tool: self.tool,
            covid: self.covid,
        }
    }

    pub fn sigma_px(&self) -> f64 {
        self.heatmap_sigma_px.unwrap_or_else(|| default_sigma_px(self.resolution))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.volumes.is_empty() {
            return bad("no volumes given".into());
        }
        if self.n_train + self.n_val == 0 {
            return bad("n_train + n_val must be positive".into());
        }
        if self.resolution == 0 {
            return bad("resolution must be positive".into());
        }
        if !(self.sigma_px() > 0.0) {
            return bad("heatmap_sigma_px must be positive".into());
        }
        if let Some(s) = self.step_mm {
            if !(s > 0.0) {
                return bad("step_mm must be positive".into());
            }
        }
        let mut ids = std::collections::HashSet::new();
        for v in &self.volumes {
            if !ids.insert(&v.id) {
                return bad(format!("duplicate volume id `{}`", v.id));
            }
            if !(v.weight > 0.0 && v.weight.is_finite()) {
                return bad(format!("volume `{}`: weight must be positive", v.id));
            }
            if v.volume.is_some() == v.phantom.is_some() {
                return bad(format!("volume `{}`: give exactly one of `volume` or `phantom`", v.id));
            }
        }
        self.camera.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.pose_config().validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Simulator::Realistic(p) = &self.simulator {
            p.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

impl VolumeSource {
    pub fn phantom(id: &str, subject_id: &str, spec: PhantomSpec) -> Self {
        Self {
            id: id.to_string(),
            subject_id: subject_id.to_string(),
            weight: 1.0,
            volume: None,
            labels: None,
            landmarks: None,
            phantom: Some(spec),
        }
    }

    fn load(&self) -> Result<Phantom> {
        if let Some(spec) = &self.phantom {
            return spec.build();
        }
        let path = self.volume.as_ref().expect("validated");
        let volume = load_volume(path)?;
        warn_outside_default_window(&volume);
        let labels = match &self.labels {
            Some(p) => load_label_volume(p)?,
            None => LabelVolume::empty(volume.geometry().clone())?,
        };
        labels.check_aligned(&volume)?;
        let landmarks = match &self.landmarks {
            Some(p) => load_landmarks(p)?,
            None => LandmarkSet3D::default(),
        };
        Ok(Phantom {
            volume,
            labels,
            landmarks,
        })
    }
}

/// Splits `n` samples over weights by largest remainder; ties go to the
/// earlier volume.
fn allocate(n: usize, weights: &[f64]) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| n as f64 * w / total).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let missing = n - counts.iter().sum::<usize>();
    for &i in order.iter().take(missing) {
        counts[i] += 1;
    }
    counts
}

struct Job {
    id: String,
    split: Split,
    volume: usize,
    pose: SampledPose,
    pose_index: usize,
    seed: u64,
}

fn plan_jobs(cfg: &GenerationConfig) -> Result<Vec<Job>> {
    let pose_cfg = cfg.pose_config();
    let weights: Vec<f64> = cfg.volumes.iter().map(|v| v.weight).collect();
    let mut jobs = Vec::with_capacity(cfg.n_train + cfg.n_val);
    for (split, n, stream) in [(Split::Train, cfg.n_train, 1u64), (Split::Val, cfg.n_val, 2u64)] {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(stream);
        let counts = allocate(n, &weights);
        let volumes = counts.iter().enumerate().flat_map(|(v, &c)| std::iter::repeat_n(v, c));
        for (i, volume) in volumes.enumerate() {
            let pose = sample_pose(&pose_cfg, &mut rng)?;
            let seed = rng.next_u64();
            let name = match split {
                Split::Train => "train",
                Split::Val => "val",
            };
            jobs.push(Job {
                id: format!("{name}_{i:05}"),
                split,
                volume,
                pose,
                pose_index: jobs.len(),
                seed,
            });
        }
    }
    Ok(jobs)
}

/// Renders the configured dataset into `out` and returns its manifest.
/// Output is a pure function of the config (including its seed).
pub fn generate(cfg: &GenerationConfig, out: &Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    let phantoms = cfg.volumes.iter().map(VolumeSource::load).collect::<Result<Vec<_>>>()?;
    let landmark_names = phantoms[0].landmarks.names();
    let class_names = phantoms[0].labels.class_names().clone();
    for (src, p) in cfg.volumes.iter().zip(&phantoms) {
        if p.landmarks.names() != landmark_names {
            return Err(Error::Config(format!("volume `{}`: landmark names/order differ", src.id)));
        }
        if p.labels.class_names() != &class_names {
            return Err(Error::Config(format!("volume `{}`: class names differ", src.id)));
        }
    }
    let samples_dir = out.join(SAMPLES_DIR);
    fs::create_dir_all(&samples_dir).map_err(|e| Error::io(&samples_dir, e))?;

    let camera = cfg.camera.at_resolution(cfg.resolution);
    let mut settings = RenderSettings::new(cfg.simulator.clone(), cfg.sigma_px());
    settings.step_mm = cfg.step_mm;
    settings.min_label_path_mm = cfg.min_label_path_mm;
    let jobs = plan_jobs(cfg)?;
    log::info!(
        "rendering {} samples at {}x{} with the {} simulator",
        jobs.len(),
        camera.detector_dims[0],
        camera.detector_dims[1],
        settings.simulator.tag()
    );

    let rendered: Vec<(SampleRecord, PoseRecord)> = jobs
        .par_iter()
        .map(|job| {
            let src = &cfg.volumes[job.volume];
            let p = &phantoms[job.volume];
            let center = p.volume.geometry().center();
            let g = job.pose.geometry(camera, &center, 1)?;
            let inputs = RenderInputs {
                volume: &p.volume,
                labels: &p.labels,
                landmarks: &p.landmarks,
                volume_id: &src.id,
                subject_id: &src.subject_id,
            };
            let sample = render_sample(&inputs, &g, &settings, job.pose_index, job.seed)?;
            let files = sample.write(out, &format!("{SAMPLES_DIR}/{}", job.id))?;
            log::debug!("wrote {}", job.id);
            let record = SampleRecord {
                id: job.id.clone(),
                split: job.split,
                subject_id: src.subject_id.clone(),
                volume_id: src.id.clone(),
                pose_index: job.pose_index,
                simulator: settings.simulator.tag().to_string(),
                seed: job.seed,
                width: sample.meta.width,
                height: sample.meta.height,
                heatmap_sigma_px: settings.heatmap_sigma_px,
                landmark_names: landmark_names.clone(),
                files,
            };
            Ok((record, sample.meta.pose))
        })
        .collect::<Result<_>>()?;

    let log_path = out.join(POSE_LOG_FILE);
    let mut log = Vec::new();
    for (_, pose) in &rendered {
        serde_json::to_writer(&mut log, pose).map_err(|e| Error::json(&log_path, e))?;
        log.write_all(b"\n").map_err(|e| Error::io(&log_path, e))?;
    }
    fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        task: cfg.task,
        camera,
        landmark_names,
        class_names,
        pose_log: POSE_LOG_FILE.to_string(),
        samples: rendered.into_iter().map(|(r, _)| r).collect(),
        config: serde_json::to_value(cfg).expect("config serializes"),
    };
    manifest.save(&out.join(MANIFEST_FILE))?;
    log::info!("wrote {}", out.join(MANIFEST_FILE).display());
    Ok(manifest)
}

/// Reads the JSON Lines pose log.
pub fn read_pose_log(path: &Path) -> Result<Vec<PoseRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::json(path, e)))
        .collect()
}
