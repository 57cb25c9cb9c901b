use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{DatasetManifest, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum FoldMode {
    LeaveOneSubjectOut,
    KFold { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fold {
    pub index: usize,
    pub test_subjects: Vec<String>,
    /// Sample id to role; every manifest sample appears once.
    pub assignments: BTreeMap<String, Role>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub mode: FoldMode,
    pub folds: Vec<Fold>,
}

impl Fold {
    pub fn ids(&self, role: Role) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, r)| **r == role)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

impl FoldSpec {
    /// Subjects that appear both in a fold's test set and in its train or
    /// val sets, per fold.
    pub fn leaked_subjects(&self, m: &DatasetManifest) -> Vec<(usize, String)> {
        let subject: BTreeMap<&str, &str> =
            m.samples.iter().map(|s| (s.id.as_str(), s.subject_id.as_str())).collect();
        let mut out = Vec::new();
        for f in &self.folds {
            let mut test = BTreeSet::new();
            let mut rest = BTreeSet::new();
            for (id, role) in &f.assignments {
                let s = subject.get(id.as_str()).copied().unwrap_or_default();
                if *role == Role::Test {
                    test.insert(s);
                } else {
                    rest.insert(s);
                }
            }
            out.extend(test.intersection(&rest).map(|s| (f.index, s.to_string())));
        }
        out
    }
}

/// Builds cross-validation folds over subjects.
///
/// Leave-one-subject-out makes one fold per subject whose samples form the
/// test set; every other sample keeps its generated train/val split. k-fold
/// assigns sorted subjects to folds round-robin.
pub fn make_folds(m: &DatasetManifest, mode: FoldMode) -> Result<FoldSpec> {
    let subjects = m.subjects();
    let groups: Vec<Vec<String>> = match mode {
        FoldMode::LeaveOneSubjectOut => {
            if subjects.len() < 2 {
                return Err(Error::Folds(format!(
                    "leave-one-subject-out needs at least 2 subjects, found {}",
                    subjects.len()
                )));
            }
            subjects.iter().map(|s| vec![s.clone()]).collect()
        }
        FoldMode::KFold { k } => {
            if k < 2 {
                return Err(Error::Folds(format!("k must be at least 2, got {k}")));
            }
            if subjects.len() < k {
                return Err(Error::Folds(format!("{k} folds need at least {k} subjects, found {}", subjects.len())));
            }
            let mut g = vec![Vec::new(); k];
            for (i, s) in subjects.iter().enumerate() {
                g[i % k].push(s.clone());
            }
            g
        }
    };
    let folds = groups
        .into_iter()
        .enumerate()
        .map(|(index, test_subjects)| {
            let assignments = m
                .samples
                .iter()
                .map(|s| {
                    let role = if test_subjects.contains(&s.subject_id) {
                        Role::Test
                    } else {
                        match s.split {
                            Split::Train => Role::Train,
                            Split::Val => Role::Val,
                        }
                    };
                    (s.id.clone(), role)
                })
                .collect();
            Fold {
                index,
                test_subjects,
                assignments,
            }
        })
        .collect();
    Ok(FoldSpec { mode, folds })
}
