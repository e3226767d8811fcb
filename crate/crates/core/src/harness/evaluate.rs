use super::config::ExperimentConfig;
use super::data::Dataset;
use super::folds::FoldAssignment;
use crate::arch::{load_checkpoint, Ensemble, ModelName, TrainedModel};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_masks, MetricsRow};
use crate::preprocess::ProbabilityVolume;
use crate::volume::Study;

/// Scores `predict` against the ground truth of every study, in order.
pub fn evaluate_with<F>(model: &str, studies: &[&Study], mut predict: F) -> Result<Vec<MetricsRow>>
where
    F: FnMut(&Study) -> Result<ProbabilityVolume>,
{
    studies
        .iter()
        .map(|s| {
            let mask = predict(s)?.argmax_mask();
            evaluate_masks(&s.study_id, model, &mask, s.gtv()?)
        })
        .collect()
}

/// Loads the trained model of `fold`; ensembles are assembled from their baseline members.
pub fn load_fold_model(cfg: &ExperimentConfig, model: &ModelName, fold: usize) -> Result<FoldModel> {
    match model.members() {
        Some((a, b)) => {
            let load = |m: &ModelName| {
                let path = cfg.checkpoint_path(m, fold);
                if !path.exists() {
                    return Err(Error::MissingDependency(format!(
                        "{model} needs {m} trained on fold {fold} ({})",
                        path.display()
                    )));
                }
                let member = load_checkpoint(&path)?;
                member.expect(m, &cfg.with_model(m).architecture()?)?;
                Ok(member)
            };
            let ens = Ensemble::from_members(load(&a)?, load(&b)?, [0.5, 0.5])?;
            ens.expect(model)?;
            Ok(FoldModel::Ensemble(Box::new(ens)))
        }
        None => {
            let trained = load_checkpoint(&cfg.checkpoint_path(model, fold))?;
            trained.expect(model, &cfg.with_model(model).architecture()?)?;
            Ok(FoldModel::Single(Box::new(trained)))
        }
    }
}

pub enum FoldModel {
    Single(Box<TrainedModel>),
    Ensemble(Box<Ensemble>),
}

impl FoldModel {
    pub fn predict(&self, study: &Study, window: (usize, usize)) -> Result<ProbabilityVolume> {
        match self {
            FoldModel::Single(m) => m.predict(study, window.0, window.1),
            FoldModel::Ensemble(e) => e.predict(study, window.0, window.1),
        }
    }
}

/// Per-case metrics of the configured model on the test studies of `fold`.
pub fn evaluate(cfg: &ExperimentConfig, data: &Dataset, folds: &FoldAssignment, fold: usize) -> Result<Vec<MetricsRow>> {
    let model = cfg.model_name()?;
    let trained = load_fold_model(cfg, &model, fold)?;
    let test = data.select(&folds.fold(fold)?.test)?;
    let window = cfg.window();
    evaluate_with(&model.to_string(), &test, |s| trained.predict(s, window))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::train::tests::tiny_studies;

    fn oracle(s: &Study, fg: bool) -> ProbabilityVolume {
        let m = s.gtv().unwrap();
        let on: Vec<f32> = m.values().iter().map(|&v| if fg { v as f32 } else { 0.0 }).collect();
        let off = on.iter().map(|v| 1.0 - v).collect();
        ProbabilityVolume::new(m.dims(), m.spacing_mm(), vec![off, on]).unwrap()
    }

    #[test]
    fn oracle_and_background_predictors() {
        let studies = tiny_studies(3);
        let refs: Vec<&Study> = studies.iter().collect();
        let perfect = evaluate_with("oracle", &refs, |s| Ok(oracle(s, true))).unwrap();
        assert_eq!(perfect.len(), 3);
        for r in &perfect {
            assert_eq!((r.dice, r.hd95_mm, r.fpe, r.fne), (1.0, Some(0.0), Some(0.0), Some(0.0)));
        }
        let empty = evaluate_with("background", &refs, |s| Ok(oracle(s, false))).unwrap();
        for r in &empty {
            assert_eq!((r.dice, r.fne, r.fpe, r.hd95_mm), (0.0, Some(1.0), None, None));
        }
    }
}
