use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, MANIFEST_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Version,
    DuplicateId,
    LandmarkOrder,
    MissingFile,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub sample_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, kind: ViolationKind) -> usize {
        self.violations.iter().filter(|v| v.kind == kind).count()
    }
}

/// Checks manifest invariants and file presence under `root`.
pub fn validate(m: &DatasetManifest, root: &Path) -> ValidationReport {
    let mut violations = Vec::new();
    if m.version != MANIFEST_VERSION {
        violations.push(Violation {
            kind: ViolationKind::Version,
            sample_id: None,
            message: format!("format version {} (expected {MANIFEST_VERSION})", m.version),
        });
    }
    if !root.join(&m.pose_log).is_file() {
        violations.push(Violation {
            kind: ViolationKind::MissingFile,
            sample_id: None,
            message: format!("pose log `{}` not found", m.pose_log),
        });
    }
    let mut seen = HashSet::new();
    for s in &m.samples {
        if !seen.insert(s.id.as_str()) {
            violations.push(Violation {
                kind: ViolationKind::DuplicateId,
                sample_id: Some(s.id.clone()),
                message: format!("sample id `{}` appears more than once", s.id),
            });
        }
        if s.landmark_names != m.landmark_names {
            violations.push(Violation {
                kind: ViolationKind::LandmarkOrder,
                sample_id: Some(s.id.clone()),
                message: "landmark names differ from the manifest order".into(),
            });
        }
    }
    let missing: Vec<Violation> = m
        .samples
        .par_iter()
        .flat_map_iter(|s| {
            s.files
                .all()
                .into_iter()
                .filter(|f| !root.join(f).is_file())
                .map(|f| Violation {
                    kind: ViolationKind::MissingFile,
                    sample_id: Some(s.id.clone()),
                    message: format!("`{f}` not found"),
                })
                .collect::<Vec<_>>()
        })
        .collect();
    violations.extend(missing);
    ValidationReport {
        samples: m.samples.len(),
        violations,
    }
}
