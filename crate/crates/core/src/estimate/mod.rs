//! Estimators of the population mean and their variances.

mod compare;
mod multi;
mod single;

pub use compare::{
    compare_combinations, frame_combinations, percentage_deviation, relative_efficiency,
    ComparisonReport, ComparisonRow, EstimateOptions, RowEstimate, HGEWY,
};
pub use multi::{
    mf_estimate, mf_mean, mf_variance_est, mf_variance_population, FrameZStats, MfEstimate, PsuZ,
    VarianceForm, ZStats,
};
pub use single::{
    sf_from_summary, sf_two_stage_mean, sf_two_stage_variance, summarize_frame_sample, SfEstimate,
    SfPsuSummary, SfSummary,
};
