//! Reading and writing point clouds, rasters and surfaces, and splitting LR
//! surfaces into tensor-product patches.

mod idw;
mod lrsurf;
mod raster;
mod split;
mod xyz;

pub use idw::{idw_raster, idw_value, DEFAULT_RADIUS};
pub use lrsurf::{lrsurf_to_string, parse_lrsurf, read_lrsurf, write_lrsurf};
pub(crate) use raster::sample_surface;
pub use raster::{raster_bilinear_eval, raster_from_surface, read_asc, write_asc, Raster, DEFAULT_NODATA};
pub use split::{score_weights, split_to_tp, tp_patch, TPPatch, TPPatchSet};
pub use xyz::{parse_xyz, read_xyz, write_xyz};
