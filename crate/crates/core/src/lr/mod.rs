mod mask;
mod mesh;
mod surface;

pub use mask::OccupancyMask;
pub use mesh::{Direction, Meshline};
pub use surface::{Element, LRSurface};
