use super::LRSurface;

/// Elements of one surface revision that contain at least one data point.
/// Stands in for a trimmed valid region.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyMask {
    occupied: Vec<bool>,
}

impl OccupancyMask {
    pub fn from_points(surf: &LRSurface, points: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut occupied = vec![false; surf.elements().len()];
        for (x, y) in points {
            if let Some(e) = surf.element_at(x, y) {
                occupied[e] = true;
            }
        }
        OccupancyMask { occupied }
    }

    /// Every element occupied.
    pub fn full(surf: &LRSurface) -> Self {
        OccupancyMask {
            occupied: vec![true; surf.elements().len()],
        }
    }

    pub fn is_occupied(&self, element: usize) -> bool {
        self.occupied.get(element).copied().unwrap_or(false)
    }

    /// True if `(u, v)` lies in the domain and in an occupied element.
    pub fn contains(&self, surf: &LRSurface, u: f64, v: f64) -> bool {
        debug_assert_eq!(self.occupied.len(), surf.elements().len());
        surf.element_at(u, v).is_some_and(|e| self.is_occupied(e))
    }

    pub fn num_occupied(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn len(&self) -> usize {
        self.occupied.len()
    }

    pub fn is_empty(&self) -> bool {
        self.occupied.is_empty()
    }
}
