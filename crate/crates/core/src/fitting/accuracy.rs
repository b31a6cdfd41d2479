use std::fmt;

use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::lr::LRSurface;

use super::config::Threshold;

/// Upper limits of the first two distance bands; the third is open.
pub const BANDS: [f64; 2] = [0.2, 0.5];

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ElementStats {
    pub count: usize,
    pub max_residual: f64,
    pub out_of_tol: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub num_points: usize,
    pub num_coefs: usize,
    pub num_elements: usize,
    pub max_dist: f64,
    pub avg_dist: f64,
    pub rmse: f64,
    /// Points with distance in `[0, 0.2)`, `[0.2, 0.5)` and `[0.5, inf)`.
    pub bands: [usize; 3],
    pub out_of_tol: usize,
    pub outside_domain: usize,
    pub elements: Vec<ElementStats>,
}

impl AccuracyReport {
    pub fn within_tol_fraction(&self) -> f64 {
        if self.num_points == 0 {
            return 1.0;
        }
        1.0 - self.out_of_tol as f64 / self.num_points as f64
    }

    /// Header matching [`AccuracyReport::table_row`].
    pub fn table_header() -> &'static str {
        "coefs\tmax\tavg\t<0.2\t0.2-0.5\t>=0.5"
    }

    pub fn table_row(&self) -> String {
        format!(
            "{}\t{:.4}\t{:.4}\t{}\t{}\t{}",
            self.num_coefs, self.max_dist, self.avg_dist, self.bands[0], self.bands[1], self.bands[2]
        )
    }
}

impl fmt::Display for AccuracyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "points:          {}", self.num_points)?;
        writeln!(f, "coefficients:    {}", self.num_coefs)?;
        writeln!(f, "elements:        {}", self.num_elements)?;
        writeln!(f, "max distance:    {:.6}", self.max_dist)?;
        writeln!(f, "avg distance:    {:.6}", self.avg_dist)?;
        writeln!(f, "rmse:            {:.6}", self.rmse)?;
        writeln!(f, "< 0.2:           {}", self.bands[0])?;
        writeln!(f, "0.2 - 0.5:       {}", self.bands[1])?;
        writeln!(f, ">= 0.5:          {}", self.bands[2])?;
        writeln!(f, "out of tol:      {}", self.out_of_tol)?;
        if self.outside_domain > 0 {
            writeln!(f, "outside domain:  {}", self.outside_domain)?;
        }
        Ok(())
    }
}

/// Signed residuals `r = z - F(x, y)` of one surface revision.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    /// `None` for points outside the surface domain.
    pub residuals: Vec<Option<f64>>,
    pub element: Vec<Option<usize>>,
    /// Number of coefficients of the surface the residuals belong to; a cheap
    /// staleness tag.
    pub num_coefs: usize,
}

impl ResidualSet {
    pub fn compute(surf: &LRSurface, cloud: &PointCloud) -> ResidualSet {
        let (residuals, element): (Vec<_>, Vec<_>) = cloud
            .points
            .par_iter()
            .map(|p| match surf.element_at(p.x, p.y) {
                Some(e) => (Some(p.z - surf.eval_in_element(e, p.x, p.y, 0, 0)), Some(e)),
                None => (None, None),
            })
            .unzip();
        ResidualSet {
            residuals,
            element,
            num_coefs: surf.num_coefs(),
        }
    }

    /// Indices of points strictly above the surface.
    pub fn above(&self) -> Vec<usize> {
        self.select(|r| r > 0.0)
    }

    pub fn below(&self) -> Vec<usize> {
        self.select(|r| r < 0.0)
    }

    fn select(&self, f: impl Fn(f64) -> bool) -> Vec<usize> {
        self.residuals
            .iter()
            .enumerate()
            .filter_map(|(k, r)| r.filter(|&r| f(r)).map(|_| k))
            .collect()
    }

    pub fn rms(&self) -> f64 {
        let (s, n) = self
            .residuals
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), r| (s + r * r, n + 1));
        if n == 0 {
            0.0
        } else {
            (s / n as f64).sqrt()
        }
    }
}

/// Tolerance a point must meet.
pub fn point_tolerance(p: &crate::cloud::DataPoint, threshold: &Threshold, significant_tol: Option<f64>) -> f64 {
    if let Some(t) = p.tol {
        return t;
    }
    if p.significant {
        if let Some(t) = significant_tol {
            return t;
        }
    }
    threshold.tolerance(p.z)
}

pub fn compute_accuracy(
    surf: &LRSurface,
    cloud: &PointCloud,
    threshold: &Threshold,
) -> (AccuracyReport, ResidualSet) {
    compute_accuracy_with(surf, cloud, threshold, None)
}

pub fn compute_accuracy_with(
    surf: &LRSurface,
    cloud: &PointCloud,
    threshold: &Threshold,
    significant_tol: Option<f64>,
) -> (AccuracyReport, ResidualSet) {
    let res = ResidualSet::compute(surf, cloud);
    let mut elements = vec![ElementStats::default(); surf.elements().len()];
    let mut bands = [0usize; 3];
    let (mut max_dist, mut sum, mut sum2) = (0.0f64, 0.0, 0.0);
    let (mut out_of_tol, mut outside, mut n) = (0, 0, 0);
    for (k, p) in cloud.points.iter().enumerate() {
        let (Some(r), Some(e)) = (res.residuals[k], res.element[k]) else {
            outside += 1;
            continue;
        };
        let d = r.abs();
        n += 1;
        max_dist = max_dist.max(d);
        sum += d;
        sum2 += d * d;
        let band = BANDS.iter().position(|&b| d < b).unwrap_or(2);
        bands[band] += 1;
        let st = &mut elements[e];
        st.count += 1;
        st.max_residual = st.max_residual.max(d);
        if d > point_tolerance(p, threshold, significant_tol) {
            st.out_of_tol += 1;
            out_of_tol += 1;
        }
    }
    if outside > 0 {
        log::warn!("{outside} points outside the surface domain were excluded");
    }
    let report = AccuracyReport {
        num_points: n,
        num_coefs: surf.num_coefs(),
        num_elements: elements.len(),
        max_dist,
        avg_dist: if n > 0 { sum / n as f64 } else { 0.0 },
        rmse: if n > 0 { (sum2 / n as f64).sqrt() } else { 0.0 },
        bands,
        out_of_tol,
        outside_domain: outside,
        elements,
    };
    (report, res)
}

/// Root mean square vertical distance between cloud and surface.
pub fn rmse(cloud: &PointCloud, surf: &LRSurface) -> Result<f64> {
    if cloud.is_empty() {
        return Err(Error::InvalidInput("empty point cloud".into()));
    }
    let mut s = 0.0;
    for p in &cloud.points {
        let r = surf.evaluate(p.x, p.y, 0, 0)? - p.z;
        s += r * r;
    }
    Ok((s / cloud.len() as f64).sqrt())
}
