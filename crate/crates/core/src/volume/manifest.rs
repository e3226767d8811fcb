use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::pair_paths;
use super::{load_mask, load_volume, validate_study, Sequence, Study};
use crate::error::{Error, Result};

/// One manifest row. Paths are relative to the manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub study_id: String,
    pub patient_id: String,
    pub t1: Option<PathBuf>,
    pub t2: Option<PathBuf>,
    pub t1c: Option<PathBuf>,
    pub fl: Option<PathBuf>,
    pub gtv: Option<PathBuf>,
}

impl ManifestEntry {
    pub fn sequence_path(&self, seq: Sequence) -> Option<&Path> {
        match seq {
            Sequence::T1 => self.t1.as_deref(),
            Sequence::T2 => self.t2.as_deref(),
            Sequence::T1C => self.t1c.as_deref(),
            Sequence::FL => self.fl.as_deref(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    /// Directory relative paths are resolved against.
    pub base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn study_ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.study_id.clone()).collect()
    }

    pub fn entry(&self, study_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.study_id == study_id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

fn volume_exists(p: &Path) -> bool {
    let (json, raw) = pair_paths(p);
    json.is_file() && raw.is_file()
}

/// Parses and validates a manifest; file order is preserved.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let manifest = DatasetManifest {
        entries,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };

    let mut seen = HashSet::new();
    for e in &manifest.entries {
        if !seen.insert(e.study_id.as_str()) {
            return Err(Error::DuplicateStudyId(e.study_id.clone()));
        }
        let Some(t1c) = &e.t1c else {
            return Err(Error::MissingSequenceFile {
                study_id: e.study_id.clone(),
                what: "T1C".into(),
                path: None,
            });
        };
        let named = [
            ("T1C", Some(t1c)),
            ("T1", e.t1.as_ref()),
            ("T2", e.t2.as_ref()),
            ("FL", e.fl.as_ref()),
            ("gtv", e.gtv.as_ref()),
        ];
        for (what, p) in named {
            if let Some(p) = p {
                let full = manifest.resolve(p);
                if !volume_exists(&full) {
                    return Err(Error::MissingSequenceFile {
                        study_id: e.study_id.clone(),
                        what: what.into(),
                        path: Some(full),
                    });
                }
            }
        }
    }
    Ok(manifest)
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(&manifest.entries)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads every volume of one manifest entry and checks the study invariants.
pub fn load_study(manifest: &DatasetManifest, entry: &ManifestEntry) -> Result<Study> {
    let mut sequences = BTreeMap::new();
    for seq in Sequence::ALL {
        if let Some(p) = entry.sequence_path(seq) {
            sequences.insert(seq, load_volume(manifest.resolve(p))?);
        }
    }
    let gtv = match &entry.gtv {
        Some(p) => Some(load_mask(manifest.resolve(p))?),
        None => None,
    };
    let study = Study {
        study_id: entry.study_id.clone(),
        patient_id: entry.patient_id.clone(),
        sequences,
        gtv,
    };
    let violations = validate_study(&study);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(Error::InvalidVolume(format!(
            "study {}: {}",
            study.study_id,
            text.join("; ")
        )));
    }
    Ok(study)
}
