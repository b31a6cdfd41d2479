//! Locally refined B-spline surfaces for scattered bathymetry data: fitting,
//! analysis (contours, extremal points, slope, limit surfaces) and export.

pub mod analysis;
pub mod bspline;
pub mod cloud;
pub mod error;
pub mod fitting;
pub mod io;
pub mod lr;
pub mod sparse;

pub use bspline::{GlobalKnotVector, LocalKnots, Rect, ScaledTensorBSpline, TPSurface};
pub use cloud::{DataPoint, PointCloud};
pub use error::{Error, Result};
pub use lr::{Direction, Element, LRSurface, Meshline, OccupancyMask};
