//! Estimators applied to ensembles of coupling times and particle samples.

mod hypothesis;
mod moments;
mod survival;
mod tv;

pub use hypothesis::{
    chi2_independence, chi2_sf, chi2_test, kolmogorov_sf, ks_test, ks_two_sample, merge_sparse_bins, TestResult,
    MIN_EXPECTED, MIN_TEST_SAMPLES,
};
pub use moments::{moment_c0, speed_moment, MomentConstants, RateFunction, DECADES, DIVERGENCE_RATIO};
pub use survival::{
    fit_tail_slope, log_grid, survival_curve, wilson, RateFit, SurvivalCurve, TauSample, MIN_FIT_POINTS,
    MIN_SURVIVAL_SAMPLES, Z95,
};
pub use tv::{tv_histogram, tv_with_sensitivity, Binning, TvEstimate};
