use crate::bspline::Rect;
use crate::error::{Error, Result};

/// Scattered sample `(x, y, z)`; `z` is elevation (negative below sea level).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub weight: f64,
    pub significant: bool,
    /// Per-point tolerance overriding the configured threshold.
    pub tol: Option<f64>,
}

impl DataPoint {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        DataPoint {
            x,
            y,
            z,
            weight: 1.0,
            significant: false,
            tol: None,
        }
    }

    pub fn significant(mut self, tol: Option<f64>) -> Self {
        self.significant = true;
        self.tol = tol;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<DataPoint>,
}

impl PointCloud {
    pub fn new(points: Vec<DataPoint>) -> Result<Self> {
        for (k, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
                return Err(Error::InvalidInput(format!("point {k} is not finite")));
            }
            if !(p.weight > 0.0) {
                return Err(Error::InvalidInput(format!("point {k} has weight {}", p.weight)));
            }
            if let Some(t) = p.tol {
                if !(t > 0.0) {
                    return Err(Error::InvalidInput(format!("point {k} has tolerance {t}")));
                }
            }
        }
        Ok(PointCloud { points })
    }

    pub fn from_xyz(xyz: impl IntoIterator<Item = (f64, f64, f64)>) -> Self {
        PointCloud {
            points: xyz.into_iter().map(|(x, y, z)| DataPoint::new(x, y, z)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Append `other`'s points flagged as significant.
    pub fn merge_significant(&mut self, other: &PointCloud, tol: Option<f64>) {
        self.points
            .extend(other.points.iter().map(|p| p.significant(p.tol.or(tol))));
    }

    /// Bounding box of the `x, y` positions.
    pub fn bbox(&self) -> Option<Rect> {
        let first = self.points.first()?;
        let mut r = Rect::new(first.x, first.x, first.y, first.y);
        for p in &self.points[1..] {
            r.u0 = r.u0.min(p.x);
            r.u1 = r.u1.max(p.x);
            r.v0 = r.v0.min(p.y);
            r.v1 = r.v1.max(p.y);
        }
        Some(r)
    }

    pub fn z_range(&self) -> Option<(f64, f64)> {
        let first = self.points.first()?.z;
        Some(
            self.points
                .iter()
                .fold((first, first), |(lo, hi), p| (lo.min(p.z), hi.max(p.z))),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bbox_and_validation() {
        let c = PointCloud::from_xyz([(1.0, 5.0, 0.0), (-2.0, 3.0, 1.0), (4.0, 4.0, -1.0)]);
        assert_eq!(c.bbox().unwrap(), Rect::new(-2.0, 4.0, 3.0, 5.0));
        assert_eq!(c.z_range(), Some((-1.0, 1.0)));
        assert!(PointCloud::default().bbox().is_none());
        let mut bad = DataPoint::new(0.0, 0.0, 0.0);
        bad.weight = 0.0;
        assert!(PointCloud::new(vec![bad]).is_err());
    }

    #[test]
    fn significant_points_keep_own_tolerance() {
        let mut c = PointCloud::from_xyz([(0.0, 0.0, 0.0)]);
        let mut s = PointCloud::from_xyz([(1.0, 1.0, 1.0), (2.0, 2.0, 2.0)]);
        s.points[1].tol = Some(0.1);
        c.merge_significant(&s, Some(0.2));
        assert_eq!(c.len(), 3);
        assert!(c.points[1].significant && c.points[2].significant);
        assert_eq!(c.points[1].tol, Some(0.2));
        assert_eq!(c.points[2].tol, Some(0.1));
    }
}
