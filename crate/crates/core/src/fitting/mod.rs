//! Scattered-data approximation: least squares with a smoothness term,
//! multilevel B-spline approximation, adaptive refinement and limit surfaces.

mod accuracy;
mod adaptive;
mod config;
mod limits;
mod lsq;
mod mba;
mod refine;

pub use accuracy::{
    compute_accuracy, compute_accuracy_with, point_tolerance, rmse, AccuracyReport, ElementStats, ResidualSet, BANDS,
};
pub use adaptive::{adaptive_fit, FitResult, IterationRecord};
pub use config::{
    depth_threshold, DepthThreshold, FitConfig, Threshold, PRESETS, VARIABLE_TOL_DEEP, VARIABLE_TOL_SHALLOW,
};
pub use limits::{limit_surfaces, weighted_mid_surface, LimitSurfaces};
pub use lsq::{
    assemble, effective_weights, fit_domain, gauss_legendre, initial_fit, least_squares_fit,
    least_squares_fit_weighted, smoothness_energy, NormalEquations,
};
pub use mba::{mba_increments, mba_update, mba_update_weighted};
pub use refine::select_refinements;
