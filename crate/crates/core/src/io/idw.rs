use crate::cloud::PointCloud;
use crate::error::{Error, Result};

use super::raster::{Raster, DEFAULT_NODATA};

/// Search radius used for the raster baseline, in metres.
pub const DEFAULT_RADIUS: f64 = 20.0;

/// Distance below which a data point counts as coincident with the query.
pub const COINCIDENT: f64 = 1e-12;

/// Bucket grid over the point positions with bucket size equal to the radius.
struct Buckets {
    x0: f64,
    y0: f64,
    size: f64,
    nx: usize,
    ny: usize,
    start: Vec<usize>,
    items: Vec<usize>,
}

impl Buckets {
    fn new(cloud: &PointCloud, size: f64) -> Buckets {
        let bb = cloud.bbox().expect("non-empty cloud");
        let nx = ((bb.width() / size).floor() as usize + 1).min(4096);
        let ny = ((bb.height() / size).floor() as usize + 1).min(4096);
        let cell = |x: f64, y: f64| {
            let i = (((x - bb.u0) / size) as usize).min(nx - 1);
            let j = (((y - bb.v0) / size) as usize).min(ny - 1);
            j * nx + i
        };
        let mut start = vec![0usize; nx * ny + 1];
        for p in &cloud.points {
            start[cell(p.x, p.y) + 1] += 1;
        }
        for k in 0..nx * ny {
            start[k + 1] += start[k];
        }
        let mut fill = start.clone();
        let mut items = vec![0; cloud.len()];
        for (k, p) in cloud.points.iter().enumerate() {
            let c = cell(p.x, p.y);
            items[fill[c]] = k;
            fill[c] += 1;
        }
        Buckets {
            x0: bb.u0,
            y0: bb.v0,
            size,
            nx,
            ny,
            start,
            items,
        }
    }

    /// Point indices in buckets within `r` of `(x, y)`, in index order per bucket.
    fn near(&self, x: f64, y: f64, r: f64, mut f: impl FnMut(usize)) {
        let lo = |v: f64, o: f64, n: usize| (((v - r - o) / self.size).floor().max(0.0) as usize).min(n);
        let hi = |v: f64, o: f64, n: usize| {
            let h = ((v + r - o) / self.size).floor();
            if h < 0.0 {
                None
            } else {
                Some((h as usize).min(n - 1))
            }
        };
        let (Some(i1), Some(j1)) = (hi(x, self.x0, self.nx), hi(y, self.y0, self.ny)) else {
            return;
        };
        let (i0, j0) = (lo(x, self.x0, self.nx), lo(y, self.y0, self.ny));
        for j in j0..=j1 {
            for i in i0..=i1 {
                let c = j * self.nx + i;
                for &k in &self.items[self.start[c]..self.start[c + 1]] {
                    f(k);
                }
            }
        }
    }
}

/// Weighted mean accumulated as offsets from the first value, so that equal
/// values are reproduced exactly.
#[derive(Default)]
struct WeightedMean {
    reference: Option<f64>,
    num: f64,
    den: f64,
}

impl WeightedMean {
    fn add(&mut self, w: f64, z: f64) {
        if w <= 0.0 {
            return;
        }
        let z0 = *self.reference.get_or_insert(z);
        self.num += w * (z - z0);
        self.den += w;
    }

    fn value(&self) -> Option<f64> {
        self.reference.map(|z0| z0 + self.num / self.den)
    }
}

/// Radius-limited inverse distance weighting at one position; `None` when no
/// point lies within `radius`.
pub fn idw_value(cloud: &PointCloud, x: f64, y: f64, radius: f64) -> Option<f64> {
    let mut mean = WeightedMean::default();
    for p in &cloud.points {
        let d = ((p.x - x).powi(2) + (p.y - y).powi(2)).sqrt();
        if d < COINCIDENT {
            return Some(p.z);
        }
        mean.add(idw_weight(d, radius), p.z);
    }
    mean.value()
}

/// `((R - d)_+ / (R d))^2`.
pub fn idw_weight(d: f64, radius: f64) -> f64 {
    let t = (radius - d).max(0.0) / (radius * d);
    t * t
}

/// Raster over the cloud's bounding box with inverse-distance-weighted cell
/// values.
pub fn idw_raster(cloud: &PointCloud, cellsize: f64, radius: f64) -> Result<Raster> {
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!("IDW radius must be positive, got {radius}")));
    }
    let bb = cloud
        .bbox()
        .ok_or_else(|| Error::InvalidInput("empty point cloud".into()))?;
    let ncols = ((bb.width() / cellsize).ceil() as usize).max(1);
    let nrows = ((bb.height() / cellsize).ceil() as usize).max(1);
    let mut r = Raster::new(ncols, nrows, bb.u0, bb.v0, cellsize, DEFAULT_NODATA)?;
    let buckets = Buckets::new(cloud, radius);
    r.fill(|x, y| {
        let mut mean = WeightedMean::default();
        let mut exact: Option<usize> = None;
        buckets.near(x, y, radius, |k| {
            let p = &cloud.points[k];
            let d = ((p.x - x).powi(2) + (p.y - y).powi(2)).sqrt();
            if d < COINCIDENT {
                exact = Some(exact.map_or(k, |e| e.min(k)));
            } else if d < radius {
                mean.add(idw_weight(d, radius), p.z);
            }
        });
        if let Some(k) = exact {
            return Some(cloud.points[k].z);
        }
        mean.value()
    });
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_field_is_reproduced() {
        let cloud = PointCloud::from_xyz((0..200).map(|k| {
            ((k as f64 * 0.618_033_988_7).fract() * 50.0, (k as f64 * 0.414_213_562_3).fract() * 30.0, 5.0)
        }));
        let r = idw_raster(&cloud, 2.0, DEFAULT_RADIUS).unwrap();
        assert!(r.data_count() > 0);
        for v in &r.values {
            assert!(*v == DEFAULT_NODATA || *v == 5.0, "{v}");
        }
    }

    #[test]
    fn coincident_point_wins() {
        // cell centre of the single cell is (1, 1)
        let cloud = PointCloud::from_xyz([(0.0, 0.0, 7.0), (1.0, 1.0, -3.0), (2.0, 2.0, 7.0)]);
        let r = idw_raster(&cloud, 2.0, DEFAULT_RADIUS).unwrap();
        assert_eq!(r.values, vec![-3.0]);
        assert_eq!(idw_value(&cloud, 1.0, 1.0, 20.0), Some(-3.0));
    }

    #[test]
    fn far_cells_have_no_data() {
        let cloud = PointCloud::from_xyz([(0.0, 0.0, 1.0), (100.0, 0.0, 2.0)]);
        let r = idw_raster(&cloud, 10.0, 8.0).unwrap();
        assert_eq!(r.nrows, 1);
        assert_eq!(r.value(0, 0), Some(1.0));
        assert_eq!(r.value(5, 0), None);
        assert_eq!(r.value(9, 0), Some(2.0));
    }

    #[test]
    fn weight_formula() {
        assert_eq!(idw_weight(20.0, 20.0), 0.0);
        assert_eq!(idw_weight(30.0, 20.0), 0.0);
        assert!((idw_weight(10.0, 20.0) - (10.0f64 / 200.0).powi(2)).abs() < 1e-18);
    }
}
