use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::checkpoint::{load_checkpoint, TrainedModel};
use super::name::ModelName;
use crate::error::{Error, Result};
use crate::preprocess::{sliding_window_predict, ProbabilityVolume};
use crate::volume::Study;

fn equal_weights() -> [f64; 2] {
    [0.5, 0.5]
}

/// Two trained baseline checkpoints and their blend weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub model_a: PathBuf,
    pub model_b: PathBuf,
    #[serde(default = "equal_weights")]
    pub weights: [f64; 2],
}

impl EnsembleConfig {
    pub fn new(model_a: impl Into<PathBuf>, model_b: impl Into<PathBuf>) -> Self {
        EnsembleConfig {
            model_a: model_a.into(),
            model_b: model_b.into(),
            weights: equal_weights(),
        }
    }
}

fn check_weights(w: [f64; 2]) -> Result<()> {
    if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || (w[0] + w[1] - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "ensemble weights {w:?} must be non-negative and sum to 1"
        )));
    }
    Ok(())
}

/// Weighted voxelwise mean of two probability volumes on the same grid.
pub fn average_probabilities(
    a: &ProbabilityVolume,
    b: &ProbabilityVolume,
    weights: [f64; 2],
) -> Result<ProbabilityVolume> {
    check_weights(weights)?;
    if a.dims() != b.dims() || a.classes() != b.classes() {
        return Err(Error::ShapeMismatch(format!(
            "ensemble members disagree: {:?}x{} vs {:?}x{}",
            a.dims(),
            a.classes(),
            b.dims(),
            b.classes()
        )));
    }
    let planes = a
        .planes()
        .iter()
        .zip(b.planes())
        .map(|(pa, pb)| {
            pa.iter()
                .zip(pb)
                .map(|(&x, &y)| (weights[0] * x as f64 + weights[1] * y as f64) as f32)
                .collect()
        })
        .collect();
    ProbabilityVolume::new(a.dims(), a.spacing_mm(), planes)
}

/// Two frozen baselines, each fed its own sequence subset.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub member_a: TrainedModel,
    pub member_b: TrainedModel,
    pub weights: [f64; 2],
}

impl Ensemble {
    pub fn from_members(member_a: TrainedModel, member_b: TrainedModel, weights: [f64; 2]) -> Result<Self> {
        check_weights(weights)?;
        for m in [&member_a, &member_b] {
            if !matches!(m.meta.model, ModelName::Baseline(_)) {
                return Err(Error::CheckpointMismatch(format!(
                    "ensemble members must be baselines, found {}",
                    m.meta.model
                )));
            }
        }
        Ok(Ensemble { member_a, member_b, weights })
    }

    pub fn load(cfg: &EnsembleConfig) -> Result<Self> {
        Self::from_members(load_checkpoint(&cfg.model_a)?, load_checkpoint(&cfg.model_b)?, cfg.weights)
    }

    /// The `EM[a+b]` name this ensemble realises.
    pub fn name(&self) -> ModelName {
        ModelName::Ensemble(self.member_a.meta.subsets.clone(), self.member_b.meta.subsets.clone())
    }

    /// Refuses when the members do not match the expected ensemble name.
    pub fn expect(&self, name: &ModelName) -> Result<()> {
        if &self.name() != name {
            return Err(Error::CheckpointMismatch(format!(
                "members form {}, expected {name}",
                self.name()
            )));
        }
        Ok(())
    }

    pub fn predict(&self, study: &Study, patch_size: usize, stride: usize) -> Result<ProbabilityVolume> {
        let pa = self.member_a.predict(study, patch_size, stride)?;
        let pb = self.member_b.predict(study, patch_size, stride)?;
        average_probabilities(&pa, &pb, self.weights)
    }
}

impl TrainedModel {
    /// Sliding-window probabilities on the model's own sequence subset.
    pub fn predict(&self, study: &Study, patch_size: usize, stride: usize) -> Result<ProbabilityVolume> {
        sliding_window_predict(&self.network, study, &self.meta.subsets, patch_size, stride)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arch::{ArchitectureSpec, CheckpointMeta, Network, PocketUNetConfig};
    use crate::volume::{Sequence, Volume3D};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn pv(fg: &[f32]) -> ProbabilityVolume {
        let bg = fg.iter().map(|p| 1.0 - p).collect();
        ProbabilityVolume::new([fg.len(), 1, 1], [1.0; 3], vec![bg, fg.to_vec()]).unwrap()
    }

    fn member(subsets: &[Sequence], seed: u64) -> TrainedModel {
        let spec = ArchitectureSpec::Pocket(PocketUNetConfig::new(subsets.len(), 2, 1));
        TrainedModel {
            meta: CheckpointMeta {
                model: ModelName::Baseline(subsets.to_vec()),
                subsets: subsets.to_vec(),
                architecture: spec.clone(),
                epoch: 0,
                val_dice: None,
                seed,
            },
            network: Network::build(&spec, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap(),
        }
    }

    fn study() -> Study {
        let seqs = Sequence::ALL
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let v = Volume3D::from_fn([8, 8, 8], [1.0; 3], |x, y, z| ((x * 3 + y * 5 + z * 7 + i) % 13) as f32 / 6.0 - 1.0);
                (s, v.unwrap())
            })
            .collect::<BTreeMap<_, _>>();
        Study {
            study_id: "s".into(),
            patient_id: "p".into(),
            sequences: seqs,
            gtv: None,
        }
    }

    #[test]
    fn arithmetic_mean_example() {
        let avg = average_probabilities(&pv(&[0.8]), &pv(&[0.4]), [0.5, 0.5]).unwrap();
        assert!((avg.get(1, 0, 0, 0) - 0.6).abs() < 1e-7);
        assert!((avg.get(0, 0, 0, 0) - 0.4).abs() < 1e-7);
    }

    #[test]
    fn identical_members_reproduce_the_single_model() {
        let s = study();
        let m = member(&[Sequence::T1C, Sequence::FL], 4);
        let e = Ensemble::from_members(m.clone(), m.clone(), [0.5, 0.5]).unwrap();
        assert_eq!(e.predict(&s, 8, 4).unwrap(), m.predict(&s, 8, 4).unwrap());
    }

    #[test]
    fn members_use_their_own_subsets_and_rows_sum_to_one() {
        let s = study();
        let e = Ensemble::from_members(member(&[Sequence::T1C], 1), member(&[Sequence::T2, Sequence::T1C], 2), [0.5, 0.5]).unwrap();
        assert_eq!(e.name().to_string(), "EM[T1C+T2,T1C]");
        let p = e.predict(&s, 8, 4).unwrap();
        for (a, b) in p.class_plane(0).iter().zip(p.class_plane(1)) {
            assert!((a + b - 1.0).abs() < 1e-5);
        }
        e.expect(&"EM[T1C + T2,T1C]".parse().unwrap()).unwrap();
        assert!(matches!(e.expect(&"EM[T1C + T1C]".parse().unwrap()), Err(Error::CheckpointMismatch(_))));
    }

    #[test]
    fn rejects_bad_weights_and_grids() {
        assert!(average_probabilities(&pv(&[0.5]), &pv(&[0.5]), [0.7, 0.7]).is_err());
        assert!(average_probabilities(&pv(&[0.5]), &pv(&[0.5, 0.1]), [0.5, 0.5]).is_err());
    }
}
