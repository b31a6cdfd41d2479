use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::lr::LRSurface;

use super::lsq::bucket_points;

/// Coefficient increments `q_T` of the residual surface for the residuals
/// `r[k]` (`None` excludes a point) and weights `w[k]`.
pub fn mba_increments(
    surf: &LRSurface,
    cloud: &PointCloud,
    residuals: &[Option<f64>],
    weights: &[f64],
) -> Vec<f64> {
    let n = surf.num_coefs();
    let (offsets, order) = bucket_points(surf, cloud);
    let elements = surf.elements();
    // per element: (B index, sum w N^2 phi, sum w N^2)
    let local: Vec<Vec<(f64, f64)>> = (0..elements.len())
        .into_par_iter()
        .map(|ei| {
            let e = &elements[ei];
            let mut acc = vec![(0.0, 0.0); e.bsplines.len()];
            let mut vals = Vec::with_capacity(e.bsplines.len());
            for &k in &order[offsets[ei]..offsets[ei + 1]] {
                let Some(r) = residuals[k] else { continue };
                let p = &cloud.points[k];
                surf.basis_in_element(ei, p.x, p.y, &mut vals);
                let s2: f64 = vals.iter().map(|v| v * v).sum();
                if s2 == 0.0 {
                    continue;
                }
                for (a, &nb) in vals.iter().enumerate() {
                    let phi = nb * r / s2;
                    let wn2 = weights[k] * nb * nb;
                    acc[a].0 += wn2 * phi;
                    acc[a].1 += wn2;
                }
            }
            acc
        })
        .collect();
    let mut num = vec![0.0; n];
    let mut den = vec![0.0; n];
    for (e, acc) in elements.iter().zip(local) {
        for (&k, (a, b)) in e.bsplines.iter().zip(acc) {
            num[k] += a;
            den[k] += b;
        }
    }
    num.iter()
        .zip(&den)
        .map(|(&a, &b)| if b > 0.0 { a / b } else { 0.0 })
        .collect()
}

/// One multilevel B-spline approximation pass: the surface plus the residual
/// surface of the current residuals.
pub fn mba_update(surf: &LRSurface, cloud: &PointCloud) -> LRSurface {
    let weights = vec![1.0; cloud.len()];
    mba_update_weighted(surf, cloud, &weights)
}

pub fn mba_update_weighted(surf: &LRSurface, cloud: &PointCloud, weights: &[f64]) -> LRSurface {
    let residuals: Vec<Option<f64>> = cloud
        .points
        .par_iter()
        .map(|p| surf.evaluate(p.x, p.y, 0, 0).ok().map(|f| p.z - f))
        .collect();
    let q = mba_increments(surf, cloud, &residuals, weights);
    let c = surf.coefs();
    surf.map_coefs(|k, _| c[k] + q[k])
}
