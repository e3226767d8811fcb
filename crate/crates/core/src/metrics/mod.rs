//! Overlap and surface-distance scores, the signed-rank test and report tables.

mod overlap;
mod report;
mod surface;
mod wilcoxon;

pub use overlap::{dice, fne, fpe, overlap_counts};
pub use report::{
    evaluate_masks, read_metrics_csv, render_table, stars, summarize, write_metrics_csv, Comparison, MetricsRow,
    ModelResults, Stats, SummaryRow,
};
pub use surface::{directed_surface_distances, hd95, percentile, squared_distance_map, surface_voxels};
pub use wilcoxon::{average_ranks, wilcoxon_signed_rank, WilcoxonResult, EXACT_MAX_PAIRS, MIN_PAIRS};
