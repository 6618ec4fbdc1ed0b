//! Statistics over explanations: proportions, correlations, landmark
//! frequencies, classification metrics, cross-validation, phase summaries,
//! ablations and continuous-target trends.

mod ablation;
mod age;
mod benchmark;
mod cv;
mod keypoints;
mod metrics;
mod phase;
mod report;
mod stats;

pub use ablation::{ablation_grid, grid_csv, AblationConfig, AblationRow, AblationTables, SizeSpec};
pub use age::{age_group_trends, GroupTrend};
pub use benchmark::{benchmark, raw_features, raw_matrix, threshold, BenchmarkColumn, BenchmarkTable, MAX_RAW_FEATURES};
pub use cv::{cross_validate, make_folds, CvConfig, CvReport};
pub use keypoints::{
    keypoint_frequencies, landmark_ranges, overlap_frequency, qrs_window_frequency, Annotated, FrequencyConfig,
    KeypointTable, Normalization,
};
pub use metrics::{auroc, mean_metrics, metrics, multilabel_metrics, BinaryMetrics, MetricsTable};
pub use phase::{age_bin, age_bin_label, phase_means, phase_of, phase_ranges, uncertainty_by_phase, Phase, PhaseInput, PhaseTable};
pub use report::{correlation_report, masked_proportions, proportions, CorrelationReport};
pub use stats::{inc_beta, least_squares, ln_gamma, pearson, t_two_sided, Line, Pearson};
