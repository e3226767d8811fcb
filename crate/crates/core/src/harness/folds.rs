use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::SplitRatios;
use crate::error::{Error, Result};
use crate::volume::DatasetManifest;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Per-fold study ids, keyed by fold index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FoldAssignment {
    pub folds: BTreeMap<usize, FoldSplit>,
}

impl FoldAssignment {
    pub fn len(&self) -> usize {
        self.folds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.folds.is_empty()
    }

    pub fn fold(&self, index: usize) -> Result<&FoldSplit> {
        self.folds
            .get(&index)
            .ok_or_else(|| Error::InvalidConfig(format!("fold {index} not in 0..{}", self.folds.len())))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|s| s + "\n")
            .map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    /// Checks that test sets partition `ids` and that each fold's parts are disjoint.
    pub fn verify(&self, ids: &[String]) -> Result<()> {
        let all: BTreeSet<&String> = ids.iter().collect();
        let mut seen = BTreeSet::new();
        for (k, f) in &self.folds {
            for id in &f.test {
                if !seen.insert(id) {
                    return Err(Error::InvalidConfig(format!("{id} is tested in more than one fold")));
                }
            }
            let parts = [&f.train, &f.val, &f.test];
            let total: usize = parts.iter().map(|p| p.len()).sum();
            let union: BTreeSet<&String> = parts.iter().flat_map(|p| p.iter()).collect();
            if union.len() != total || union != all {
                return Err(Error::InvalidConfig(format!("fold {k} does not partition the dataset")));
            }
        }
        if seen.len() != all.len() {
            return Err(Error::InvalidConfig("test sets do not cover the dataset".into()));
        }
        Ok(())
    }
}

/// Sizes of `k` near-equal chunks of `n`, larger chunks first.
pub fn chunk_sizes(n: usize, k: usize) -> Vec<usize> {
    (0..k).map(|i| n / k + usize::from(i < n % k)).collect()
}

/// Validation count for `remaining` non-test studies: nearest integer, train takes the rest.
pub fn val_count(remaining: usize, ratios: &SplitRatios) -> usize {
    ((remaining as f64 * ratios.val_fraction()).round() as usize).min(remaining.saturating_sub(1))
}

/// Shuffled `k`-fold assignment of a dataset's studies.
///
/// Study ids are shuffled with a ChaCha8 generator seeded by `seed` and cut
/// into `k` consecutive test chunks whose sizes differ by at most one. The
/// rest of each fold is split into validation (the first [`val_count`] ids
/// in shuffled order) and training. With `patient_grouped`, whole patients
/// are shuffled and dealt instead, so no patient spans two parts of a fold.
pub fn make_folds(
    manifest: &DatasetManifest,
    k: usize,
    ratios: &SplitRatios,
    seed: u64,
    patient_grouped: bool,
) -> Result<FoldAssignment> {
    ratios.validate()?;
    let n = manifest.len();
    if k < 2 || n < k {
        return Err(Error::DatasetTooSmall { size: n, folds: k });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // groups of study ids that must stay together
    let mut groups: Vec<Vec<String>> = if patient_grouped {
        let mut by_patient: BTreeMap<&str, Vec<String>> = BTreeMap::new();
        for e in &manifest.entries {
            by_patient.entry(&e.patient_id).or_default().push(e.study_id.clone());
        }
        if by_patient.len() < k {
            return Err(Error::DatasetTooSmall {
                size: by_patient.len(),
                folds: k,
            });
        }
        by_patient.into_values().collect()
    } else {
        manifest.entries.iter().map(|e| vec![e.study_id.clone()]).collect()
    };
    groups.shuffle(&mut rng);

    let chunks: Vec<Vec<usize>> = if patient_grouped {
        // deal each patient to the currently smallest chunk
        let mut chunks = vec![Vec::new(); k];
        let mut load = vec![0usize; k];
        for (g, members) in groups.iter().enumerate() {
            let target = (0..k).min_by_key(|&c| (load[c], c)).expect("k >= 2");
            chunks[target].push(g);
            load[target] += members.len();
        }
        chunks
    } else {
        let mut start = 0;
        chunk_sizes(groups.len(), k)
            .into_iter()
            .map(|size| {
                let c = (start..start + size).collect();
                start += size;
                c
            })
            .collect()
    };

    let mut folds = BTreeMap::new();
    for (i, test_groups) in chunks.iter().enumerate() {
        let in_test: BTreeSet<usize> = test_groups.iter().copied().collect();
        let rest: Vec<usize> = (0..groups.len()).filter(|g| !in_test.contains(g)).collect();
        let remaining: usize = rest.iter().map(|&g| groups[g].len()).sum();
        let want_val = val_count(remaining, ratios);
        let (mut train, mut val) = (Vec::new(), Vec::new());
        for &g in &rest {
            if val.len() < want_val {
                val.extend(groups[g].iter().cloned());
            } else {
                train.extend(groups[g].iter().cloned());
            }
        }
        let test = test_groups.iter().flat_map(|&g| groups[g].iter().cloned()).collect();
        folds.insert(i, FoldSplit { train, val, test });
    }
    let out = FoldAssignment { folds };
    out.verify(&manifest.study_ids())?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::ManifestEntry;

    fn manifest(n: usize, patients: usize) -> DatasetManifest {
        DatasetManifest {
            entries: (0..n)
                .map(|i| ManifestEntry {
                    study_id: format!("s{i:03}"),
                    patient_id: format!("p{:02}", i % patients),
                    t1: None,
                    t2: None,
                    t1c: Some("x".into()),
                    fl: None,
                    gtv: None,
                })
                .collect(),
            base_dir: ".".into(),
        }
    }

    #[test]
    fn eighty_two_into_five() {
        let f = make_folds(&manifest(82, 23), 5, &SplitRatios::default(), 18, false).unwrap();
        let sizes: Vec<usize> = f.folds.values().map(|s| s.test.len()).collect();
        assert_eq!(sizes, vec![17, 17, 16, 16, 16]);
        // 65 remaining -> val round(65/8) = 8
        let first = f.fold(0).unwrap();
        assert_eq!((first.train.len(), first.val.len()), (57, 8));
        let last = f.fold(4).unwrap();
        assert_eq!((last.train.len(), last.val.len()), (58, 8));
        let again = make_folds(&manifest(82, 23), 5, &SplitRatios::default(), 18, false).unwrap();
        assert_eq!(f.to_json().unwrap(), again.to_json().unwrap());
        let other = make_folds(&manifest(82, 23), 5, &SplitRatios::default(), 19, false).unwrap();
        assert_ne!(f, other);
    }

    #[test]
    fn patient_grouping_keeps_patients_together() {
        let m = manifest(82, 23);
        let f = make_folds(&m, 5, &SplitRatios::default(), 18, true).unwrap();
        let patient = |id: &String| m.entries.iter().find(|e| &e.study_id == id).unwrap().patient_id.clone();
        for s in f.folds.values() {
            let parts: Vec<BTreeSet<String>> =
                [&s.train, &s.val, &s.test].iter().map(|p| p.iter().map(patient).collect()).collect();
            assert!(parts[0].is_disjoint(&parts[1]));
            assert!(parts[0].is_disjoint(&parts[2]));
            assert!(parts[1].is_disjoint(&parts[2]));
        }
    }

    #[test]
    fn json_round_trip_and_errors() {
        let f = make_folds(&manifest(10, 10), 5, &SplitRatios::default(), 1, false).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a/folds.json");
        f.save(&p).unwrap();
        assert_eq!(FoldAssignment::load(&p).unwrap(), f);
        assert!(f.to_json().unwrap().starts_with("{\n  \"0\": {"));
        assert!(matches!(
            make_folds(&manifest(4, 4), 5, &SplitRatios::default(), 1, false),
            Err(Error::DatasetTooSmall { size: 4, folds: 5 })
        ));
        assert!(f.fold(7).is_err());
    }

    #[test]
    fn chunk_arithmetic() {
        assert_eq!(chunk_sizes(82, 5), vec![17, 17, 16, 16, 16]);
        assert_eq!(chunk_sizes(60, 4), vec![15; 4]);
        let desk = SplitRatios {
            train: 40.0 / 60.0,
            val: 5.0 / 60.0,
            test: 15.0 / 60.0,
        };
        assert_eq!(val_count(45, &desk), 5);
    }
}
