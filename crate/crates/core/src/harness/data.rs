use std::collections::BTreeMap;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::preprocess::prepare_study;
use crate::volume::{load_manifest, load_study, DatasetManifest, Study};

/// Preprocessed studies keyed by study id.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub studies: BTreeMap<String, Study>,
}

impl Dataset {
    pub fn from_studies(studies: impl IntoIterator<Item = Study>) -> Self {
        Dataset {
            studies: studies.into_iter().map(|s| (s.study_id.clone(), s)).collect(),
        }
    }

    pub fn get(&self, id: &str) -> Result<&Study> {
        self.studies
            .get(id)
            .ok_or_else(|| Error::InvalidConfig(format!("study {id} is not in the dataset")))
    }

    pub fn select(&self, ids: &[String]) -> Result<Vec<&Study>> {
        ids.iter().map(|id| self.get(id)).collect()
    }

    pub fn len(&self) -> usize {
        self.studies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.studies.is_empty()
    }
}

/// Reads the configured manifest and preprocesses every study.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<(DatasetManifest, Dataset)> {
    let manifest = load_manifest(&cfg.manifest)?;
    let studies = manifest
        .entries
        .iter()
        .map(|e| load_study(&manifest, e).and_then(|s| prepare_study(&s, &cfg.preprocess)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, Dataset::from_studies(studies)))
}
