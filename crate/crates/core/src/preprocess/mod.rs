//! Normalisation, resampling, patch extraction and sliding-window inference.

mod normalize;
mod patch;
mod rng;
mod window;

pub use normalize::{prepare_study, resample_isotropic, resample_mask, zscore_normalize, PreprocessConfig};
pub use patch::{
    extract_patch, patches_to_batch, sample_origins, sample_patches, sample_patches_with, study_to_tensor, subset_volumes, Patch,
    PatchSampling,
};
pub use rng::{derive_seed, splitmix64, SeededRng};
pub use window::{
    coverage_counts, sliding_window_predict, window_lattice, window_starts, PatchPredictor, ProbabilityVolume,
};
