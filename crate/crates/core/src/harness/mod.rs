//! Experiment configuration, cross-validation folds, training, evaluation
//! and the model-ablation grid.

pub mod ablation;
pub mod config;
pub mod data;
pub mod evaluate;
pub mod folds;
pub mod gradsuite;
pub mod train;

pub use ablation::{build_report, grid_configs, report_from_dir, run_ablation_grid, AblationReport, GridEvent};
pub use config::{CohortConfig, ExperimentConfig, SplitRatios};
pub use data::{load_dataset, Dataset};
pub use evaluate::{evaluate, evaluate_with, load_fold_model, FoldModel};
pub use folds::{chunk_sizes, make_folds, val_count, FoldAssignment, FoldSplit};
pub use gradsuite::{run_gradient_suite, OpResult, SuiteReport, SuiteSettings};
pub use train::{fold_seed, mean_dice, read_log, train_fold, train_on, write_log, EpochLog, TrainReport};
