use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::arch::name::validate_subset;
use crate::arch::{ArchitectureSpec, Family, ModelName};
use crate::error::{Error, Result};
use crate::nn::OptimizerConfig;
use crate::phantom::PhantomSpec;
use crate::preprocess::{PatchSampling, PreprocessConfig};
use crate::volume::Sequence;

/// Fractions of the dataset assigned to training, validation and testing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.70,
            val: 0.10,
            test: 0.20,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|p| !(0.0..=1.0).contains(p)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("split ratios must be in [0,1] and sum to 1: {self:?}")));
        }
        if self.train <= 0.0 {
            return Err(Error::InvalidConfig("train ratio must be positive".into()));
        }
        Ok(())
    }

    /// Validation share of the non-test remainder.
    pub fn val_fraction(&self) -> f64 {
        self.val / (self.train + self.val)
    }
}

/// Size of a synthetic cohort written by `generate-phantoms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CohortConfig {
    pub spec: PhantomSpec,
    pub n_studies: usize,
    pub n_patients: usize,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            spec: PhantomSpec::default(),
            n_studies: 82,
            n_patients: 23,
        }
    }
}

/// One training/evaluation experiment, read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub manifest: PathBuf,
    pub family: Family,
    /// One subset for BM, two for DM and EM.
    pub subsets: Vec<Vec<Sequence>>,
    pub channels: usize,
    pub depth: usize,
    pub kernel: usize,
    pub optimizer: OptimizerConfig,
    pub patch_size: usize,
    pub patches_per_image: usize,
    /// Sliding-window size at inference; defaults to `patch_size`.
    pub inference_patch_size: Option<usize>,
    /// Sliding-window step; defaults to half the window.
    pub inference_stride: Option<usize>,
    pub sampling: PatchSampling,
    pub folds: usize,
    pub split_ratios: SplitRatios,
    pub patient_grouped: bool,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub preprocess: PreprocessConfig,
    /// Stop after this many epochs without a validation improvement.
    pub early_stopping_patience: Option<usize>,
    /// Models trained and compared by `ablate`.
    pub grid: Vec<ModelName>,
    pub reference: ModelName,
    pub cohort: CohortConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            manifest: PathBuf::from("manifest.json"),
            family: Family::BM,
            subsets: vec![Sequence::ALL.to_vec()],
            channels: 16,
            depth: 3,
            kernel: 3,
            optimizer: OptimizerConfig::default(),
            patch_size: 64,
            patches_per_image: 16,
            inference_patch_size: None,
            inference_stride: None,
            sampling: PatchSampling::Uniform,
            folds: 5,
            split_ratios: SplitRatios::default(),
            patient_grouped: false,
            seed: 18,
            output_dir: PathBuf::from("runs"),
            preprocess: PreprocessConfig {
                target_spacing_mm: Some(0.86),
                ..PreprocessConfig::default()
            },
            early_stopping_patience: None,
            grid: Vec::new(),
            reference: ModelName::baseline(&Sequence::ALL),
            cohort: CohortConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Small-volume profile: 64³ phantoms, depth 2, width 8, up to 12 epochs
    /// on 16³ patches, 64³ inference windows, a 40/5/15 split of 60 studies.
    pub fn desk() -> Self {
        ExperimentConfig {
            channels: 8,
            depth: 2,
            optimizer: OptimizerConfig {
                epochs: 12,
                ..OptimizerConfig::default()
            },
            patch_size: 16,
            early_stopping_patience: Some(4),
            inference_patch_size: Some(64),
            inference_stride: Some(32),
            folds: 4,
            split_ratios: SplitRatios {
                train: 40.0 / 60.0,
                val: 5.0 / 60.0,
                test: 15.0 / 60.0,
            },
            preprocess: PreprocessConfig::default(),
            cohort: CohortConfig {
                n_studies: 60,
                n_patients: 20,
                ..CohortConfig::default()
            },
            ..ExperimentConfig::default()
        }
    }

    /// Full-size profile: 256×256×208 grid, depth 3, width 16, 200 epochs.
    pub fn full_scale() -> Self {
        ExperimentConfig {
            preprocess: PreprocessConfig {
                target_spacing_mm: Some(0.86),
                target_dims: Some([256, 256, 208]),
                normalize: true,
            },
            ..ExperimentConfig::default()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "full" => Ok(Self::full_scale()),
            _ => Err(Error::InvalidConfig(format!("unknown preset {name:?} (expected desk or full)"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// The model this config trains or evaluates.
    pub fn model_name(&self) -> Result<ModelName> {
        let bad = || {
            Error::InvalidConfig(format!(
                "{} needs {} subset(s), got {}",
                self.family,
                if self.family == Family::BM { 1 } else { 2 },
                self.subsets.len()
            ))
        };
        match (self.family, self.subsets.as_slice()) {
            (Family::BM, [a]) => Ok(ModelName::Baseline(a.clone())),
            (Family::DM, [a, b]) => Ok(ModelName::Double(a.clone(), b.clone())),
            (Family::EM, [a, b]) => Ok(ModelName::Ensemble(a.clone(), b.clone())),
            _ => Err(bad()),
        }
    }

    /// A copy configured for `model`.
    pub fn with_model(&self, model: &ModelName) -> Self {
        let (family, subsets) = match model {
            ModelName::Baseline(a) => (Family::BM, vec![a.clone()]),
            ModelName::Double(a, b) => (Family::DM, vec![a.clone(), b.clone()]),
            ModelName::Ensemble(a, b) => (Family::EM, vec![a.clone(), b.clone()]),
        };
        ExperimentConfig {
            family,
            subsets,
            ..self.clone()
        }
    }

    pub fn architecture(&self) -> Result<ArchitectureSpec> {
        let mut spec = ArchitectureSpec::for_model(&self.model_name()?, self.channels, self.depth)?;
        match &mut spec {
            ArchitectureSpec::Pocket(c) => c.kernel = self.kernel,
            ArchitectureSpec::Double(c) => {
                c.branch_a.kernel = self.kernel;
                c.branch_b.kernel = self.kernel;
            }
        }
        Ok(spec)
    }

    pub fn window(&self) -> (usize, usize) {
        let size = self.inference_patch_size.unwrap_or(self.patch_size);
        (size, self.inference_stride.unwrap_or((size / 2).max(1)))
    }

    pub fn validate(&self) -> Result<()> {
        self.split_ratios.validate()?;
        self.optimizer.validate()?;
        for s in &self.subsets {
            validate_subset(s)?;
        }
        self.model_name()?;
        if self.folds < 2 {
            return Err(Error::InvalidConfig(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.patch_size == 0 || self.patches_per_image == 0 || self.channels == 0 {
            return Err(Error::InvalidConfig("patch_size, patches_per_image and channels must be positive".into()));
        }
        let (size, stride) = self.window();
        if stride == 0 || stride > size {
            return Err(Error::InvalidConfig(format!("inference stride {stride} outside [1, {size}]")));
        }
        if let ModelName::Baseline(_) | ModelName::Double(..) = self.model_name()? {
            let spec = self.architecture()?;
            let unet = match &spec {
                ArchitectureSpec::Pocket(c) => c,
                ArchitectureSpec::Double(c) => &c.branch_a,
            };
            unet.validate()?;
            unet.check_dims([self.patch_size; 3])?;
        }
        self.cohort.spec.validate()
    }

    /// Directory holding every fold of `model`.
    pub fn model_dir(&self, model: &ModelName) -> PathBuf {
        self.output_dir.join(model.slug())
    }

    pub fn fold_dir(&self, model: &ModelName, fold: usize) -> PathBuf {
        self.model_dir(model).join(format!("fold_{fold}"))
    }

    pub fn checkpoint_path(&self, model: &ModelName, fold: usize) -> PathBuf {
        self.fold_dir(model, fold).join("best.ckpt")
    }

    pub fn folds_path(&self) -> PathBuf {
        self.output_dir.join("folds.json")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.optimizer.learning_rate, 0.02);
        assert_eq!(cfg.optimizer.batch_size, 16);
        assert_eq!(cfg.optimizer.epochs, 200);
        assert_eq!((cfg.patch_size, cfg.patches_per_image, cfg.folds, cfg.seed), (64, 16, 5, 18));
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ExperimentConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.window(), (64, 32));
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg: ExperimentConfig =
            serde_json::from_str(r#"{"family":"DM","subsets":[["T1","T1C","FL"],["T2","T1C"]],"seed":3}"#).unwrap();
        assert_eq!(cfg.model_name().unwrap().to_string(), "DM[T1,T1C,FL+T2,T1C]");
        assert_eq!(cfg.seed, 3);
        cfg.validate().unwrap();
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"sede":3}"#).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let bad = |f: fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig::default();
            f(&mut c);
            c.validate().is_err()
        };
        assert!(bad(|c| c.split_ratios.test = 0.3));
        assert!(bad(|c| c.subsets = vec![vec![Sequence::T1]]));
        assert!(bad(|c| c.family = Family::DM));
        assert!(bad(|c| c.patch_size = 20));
        assert!(bad(|c| c.inference_stride = Some(65)));
        assert!(bad(|c| c.optimizer.momentum = 1.0));
    }

    #[test]
    fn desk_preset() {
        let d = ExperimentConfig::preset("desk").unwrap();
        d.validate().unwrap();
        assert_eq!((d.channels, d.depth, d.optimizer.epochs), (8, 2, 12));
        assert_eq!(d.cohort.spec.dims, [64; 3]);
        assert!(ExperimentConfig::preset("huge").is_err());
        ExperimentConfig::full_scale().validate().unwrap();
    }
}
