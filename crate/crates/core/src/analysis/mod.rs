//! Contours, extremal points and slope of fitted surfaces.

mod contour;
mod extrema;
mod slope;

pub use contour::{
    clip_to_mask, contour, level_range, merge_across_boundaries, topology_detect, trace_chain, ContourBranch,
    ContourOptions, ContourSet, GuideArc, GuideChain, GuideKind, GuidePoint, Sweep, Topology,
};
pub use extrema::{
    extrema_to_csv, extremal_points, interior, point_in_polygon, trigger_of, write_extrema_csv, ExtremalPoint,
    ExtremumKind, CRITICAL_GRADIENT, EXTREMA_CSV_HEADER,
};
pub use slope::slope_raster;
