use crate::error::Result;
use crate::io::{sample_surface, Raster};
use crate::lr::{LRSurface, OccupancyMask};

/// Slope `atan |grad F|` in degrees at each cell centre.
pub fn slope_raster(surf: &LRSurface, cellsize: f64, mask: Option<&OccupancyMask>) -> Result<Raster> {
    sample_surface(surf, cellsize, mask, |e, x, y| {
        let fu = surf.eval_in_element(e, x, y, 1, 0);
        let fv = surf.eval_in_element(e, x, y, 0, 1);
        fu.hypot(fv).atan().to_degrees()
    })
}
