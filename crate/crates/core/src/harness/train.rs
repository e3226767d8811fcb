use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::Dataset;
use super::folds::FoldAssignment;
use crate::arch::{save_checkpoint, CheckpointMeta, ModelName, Network};
use crate::error::{Error, Result};
use crate::metrics::dice;
use crate::nn::{dice_ce_loss, sgd_momentum_step, HasParams};
use crate::preprocess::{derive_seed, extract_patch, patches_to_batch, sample_origins, sliding_window_predict, SeededRng};
use crate::volume::{Sequence, Study};

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Mean validation Dice; absent without validation studies.
    pub val_dice: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub model: ModelName,
    pub log: Vec<EpochLog>,
    /// Optimizer steps taken over the whole run.
    pub steps: usize,
    pub best_epoch: usize,
    pub best_val_dice: Option<f64>,
    pub checkpoint: PathBuf,
}

/// Mean Dice of argmax predictions over `studies`.
pub fn mean_dice(net: &Network<f32>, studies: &[&Study], channels: &[Sequence], window: (usize, usize)) -> Result<Option<f64>> {
    if studies.is_empty() {
        return Ok(None);
    }
    let mut total = 0.0;
    for s in studies {
        let probs = sliding_window_predict(net, s, channels, window.0, window.1)?;
        total += dice(&probs.argmax_mask(), s.gtv()?)?;
    }
    Ok(Some(total / studies.len() as f64))
}

pub fn write_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| Error::Parse(e.to_string());
    w.write_record(["epoch", "train_loss", "val_dice"]).map_err(err)?;
    for r in log {
        let val = r.val_dice.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([r.epoch.to_string(), r.train_loss.to_string(), val]).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_log(path: &Path) -> Result<Vec<EpochLog>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("{s:?}: {e}")));
        out.push(EpochLog {
            epoch: field(0).parse().map_err(|e| Error::Parse(format!("epoch: {e}")))?,
            train_loss: num(field(1))?,
            val_dice: match field(2) {
                "" => None,
                s => Some(num(s)?),
            },
        });
    }
    Ok(out)
}

/// Trains `model` on `train`, selecting the epoch with the best validation Dice.
///
/// Every epoch draws `patches_per_image` fresh patch corners per training
/// study, shuffles the pooled patches and takes one SGD step per mini-batch.
/// The best checkpoint and `train_log.csv` are written into `out_dir`.
/// `on_epoch` sees each log row as it is produced.
#[allow(clippy::too_many_arguments)]
pub fn train_on(
    cfg: &ExperimentConfig,
    model: &ModelName,
    train: &[&Study],
    val: &[&Study],
    test_ids: &BTreeSet<String>,
    seed: u64,
    out_dir: &Path,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainReport> {
    let leaked: Vec<&str> = train
        .iter()
        .chain(val)
        .map(|s| s.study_id.as_str())
        .filter(|id| test_ids.contains(*id))
        .collect();
    assert!(leaked.is_empty(), "test studies {leaked:?} reached training or validation");
    if train.is_empty() {
        return Err(Error::InvalidConfig("no training studies".into()));
    }
    let cfg = cfg.with_model(model);
    cfg.validate()?;
    let spec = cfg.architecture()?;
    let channels = model.input_channels();
    let opt = &cfg.optimizer;
    let window = cfg.window();

    let mut rng = SeededRng::new(seed);
    let mut net = Network::<f32>::build(&spec, &mut rng)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let checkpoint = out_dir.join("best.ckpt");
    let log_path = out_dir.join("train_log.csv");

    let mut log = Vec::new();
    let mut steps = 0;
    let mut best: Option<(usize, Option<f64>)> = None;
    let mut since_best = 0;
    for epoch in 1..=opt.epochs {
        let mut draws = Vec::with_capacity(train.len() * cfg.patches_per_image);
        for (i, s) in train.iter().enumerate() {
            let origins = sample_origins(s, &channels, cfg.patches_per_image, cfg.patch_size, cfg.sampling, &mut rng)?;
            draws.extend(origins.into_iter().map(|o| (i, o)));
        }
        draws.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in draws.chunks(opt.batch_size).enumerate() {
            let patches = chunk
                .iter()
                .map(|&(i, o)| extract_patch(train[i], &channels, o, cfg.patch_size))
                .collect::<Result<Vec<_>>>()?;
            let (x, target) = patches_to_batch(&patches)?;
            let target = target.ok_or_else(|| Error::InvalidConfig("training study without a GTV mask".into()))?;
            let probs = net.forward(&x, true)?;
            let out = dice_ce_loss(&probs, &target)?;
            if !out.loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, step: b + 1 });
            }
            net.backward(&out.grad)?;
            sgd_momentum_step(&mut net.params_mut(), opt);
            loss_sum += out.loss;
            batches += 1;
            steps += 1;
        }

        let val_dice = mean_dice(&net, val, &channels, window)?;
        let row = EpochLog {
            epoch,
            train_loss: loss_sum / batches as f64,
            val_dice,
        };
        log.push(row);
        on_epoch(&row);

        let improved = match (best, val_dice) {
            (None, _) | (_, None) => true,
            (Some((_, Some(b))), Some(v)) => v > b,
            (Some((_, None)), Some(_)) => true,
        };
        if improved {
            best = Some((epoch, val_dice));
            since_best = 0;
            let meta = CheckpointMeta {
                model: model.clone(),
                subsets: channels.clone(),
                architecture: spec.clone(),
                epoch,
                val_dice,
                seed,
            };
            save_checkpoint(&checkpoint, &meta, &net)?;
        } else {
            since_best += 1;
        }
        write_log(&log_path, &log)?;
        if cfg.early_stopping_patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }
    let (best_epoch, best_val_dice) = best.expect("at least one epoch ran");
    Ok(TrainReport {
        model: model.clone(),
        log,
        steps,
        best_epoch,
        best_val_dice,
        checkpoint,
    })
}

/// Seed of the network initialisation and patch sampling for one fold.
pub fn fold_seed(cfg: &ExperimentConfig, fold: usize) -> u64 {
    derive_seed(cfg.seed, fold as u64)
}

/// Trains the configured BM or DM model on one fold.
pub fn train_fold(
    cfg: &ExperimentConfig,
    data: &Dataset,
    folds: &FoldAssignment,
    fold: usize,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainReport> {
    let model = cfg.model_name()?;
    let split = folds.fold(fold)?;
    let train = data.select(&split.train)?;
    let val = data.select(&split.val)?;
    let test_ids: BTreeSet<String> = split.test.iter().cloned().collect();
    train_on(cfg, &model, &train, &val, &test_ids, fold_seed(cfg, fold), &cfg.fold_dir(&model, fold), on_epoch)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::phantom::{cohort_member, PhantomSpec, Range};
    use crate::preprocess::{prepare_study, PreprocessConfig};

    pub fn tiny_studies(n: usize) -> Vec<Study> {
        let spec = PhantomSpec {
            dims: [16, 16, 16],
            cavity_radius_mm: Range::new(2.0, 3.0),
            rim_thickness_mm: Range::new(1.0, 1.5),
            edema_extent_mm: Range::new(1.0, 1.5),
            ventricle_probability: 0.0,
            gtv_fraction: Range::new(0.001, 0.5),
            ..PhantomSpec::default()
        };
        (0..n)
            .map(|i| prepare_study(&cohort_member(&spec, i, n).unwrap().study, &PreprocessConfig::default()).unwrap())
            .collect()
    }

    pub fn tiny_config() -> ExperimentConfig {
        ExperimentConfig {
            subsets: vec![vec![Sequence::T1C]],
            channels: 2,
            depth: 1,
            patch_size: 8,
            inference_patch_size: Some(16),
            inference_stride: Some(8),
            optimizer: crate::nn::OptimizerConfig {
                epochs: 1,
                ..Default::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn one_epoch_on_two_studies_takes_two_steps() {
        let studies = tiny_studies(3);
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let model = cfg.model_name().unwrap();
        let mut rows = Vec::new();
        let r = train_on(
            &cfg,
            &model,
            &[&studies[0], &studies[1]],
            &[&studies[2]],
            &BTreeSet::new(),
            7,
            dir.path(),
            &mut |row| rows.push(*row),
        )
        .unwrap();
        assert_eq!(r.steps, 2);
        assert_eq!(rows, r.log);
        assert_eq!(read_log(&dir.path().join("train_log.csv")).unwrap(), r.log);
        assert!(r.checkpoint.exists());
    }

    #[test]
    fn repeated_runs_agree() {
        let studies = tiny_studies(2);
        let cfg = tiny_config();
        let model: ModelName = "DM[T1C+T2,T1C]".parse().unwrap();
        let run = || {
            let dir = tempfile::tempdir().unwrap();
            train_on(&cfg, &model, &[&studies[0]], &[&studies[1]], &BTreeSet::new(), 3, dir.path(), &mut |_| {})
                .unwrap()
                .log
        };
        let (a, b) = (run(), run());
        assert_eq!(a[0].train_loss.to_bits(), b[0].train_loss.to_bits());
        assert_eq!(a, b);
    }

    #[test]
    #[should_panic(expected = "reached training")]
    fn test_studies_never_train() {
        let studies = tiny_studies(2);
        let cfg = tiny_config();
        let test: BTreeSet<String> = [studies[1].study_id.clone()].into();
        let dir = tempfile::tempdir().unwrap();
        let _ = train_on(&cfg, &cfg.model_name().unwrap(), &[&studies[0]], &[&studies[1]], &test, 1, dir.path(), &mut |_| {});
    }

    #[test]
    fn best_checkpoint_reproduces_logged_dice() {
        let studies = tiny_studies(3);
        let mut cfg = tiny_config();
        cfg.optimizer.epochs = 3;
        let model = cfg.model_name().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let r = train_on(&cfg, &model, &[&studies[0], &studies[1]], &[&studies[2]], &BTreeSet::new(), 5, dir.path(), &mut |_| {})
            .unwrap();
        let best = r.log.iter().filter_map(|l| l.val_dice).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best_val_dice, Some(best));
        let loaded = crate::arch::load_checkpoint(&r.checkpoint).unwrap();
        let again = mean_dice(&loaded.network, &[&studies[2]], &loaded.meta.subsets, cfg.window()).unwrap().unwrap();
        assert!((again - best).abs() < 1e-6);
        assert_eq!(loaded.meta.epoch, r.best_epoch);
    }
}
