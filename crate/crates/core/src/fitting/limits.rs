use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::lr::LRSurface;

use super::accuracy::ResidualSet;
use super::mba::mba_increments;

#[derive(Debug, Clone)]
pub struct LimitSurfaces {
    pub lower: LRSurface,
    pub upper: LRSurface,
}

/// Surfaces in the spline space of `surf` bounding the cloud from below and
/// above: `lower(x_P, y_P) <= z_P <= upper(x_P, y_P)` for every point.
pub fn limit_surfaces(surf: &LRSurface, cloud: &PointCloud, passes: usize) -> LimitSurfaces {
    let res = ResidualSet::compute(surf, cloud);
    let up: Vec<Option<f64>> = res.residuals.clone();
    let down: Vec<Option<f64>> = res.residuals.iter().map(|r| r.map(|r| -r)).collect();
    let gu = residual_surface(surf, cloud, &up, passes);
    let gd = residual_surface(surf, cloud, &down, passes);
    let c = surf.coefs();
    let cu = gu.coefs();
    let cd = gd.coefs();
    LimitSurfaces {
        upper: surf.map_coefs(|k, _| c[k] + cu[k]),
        lower: surf.map_coefs(|k, _| c[k] - cd[k]),
    }
}

/// Surface `G` with `G(x_P, y_P) >= target_P` at every point, fitted by MBA
/// to the positive targets and then lifted per B-spline by the largest
/// remaining shortfall in its support.
fn residual_surface(surf: &LRSurface, cloud: &PointCloud, target: &[Option<f64>], passes: usize) -> LRSurface {
    let mut g = surf.map_coefs(|_, _| 0.0);
    let weights = vec![1.0; cloud.len()];
    for _ in 0..passes {
        let r: Vec<Option<f64>> = cloud
            .points
            .par_iter()
            .zip(target)
            .map(|(p, t)| match t {
                Some(t) if *t > 0.0 => Some(t - g.value(p.x, p.y)),
                _ => None,
            })
            .collect();
        let q = mba_increments(&g, cloud, &r, &weights);
        let c = g.coefs();
        g = g.map_coefs(|k, _| c[k] + q[k]);
    }
    // lift: every B-spline nonzero at a point gets at least its shortfall,
    // and the basis sums to one there
    let shortfall: Vec<Option<(f64, usize)>> = cloud
        .points
        .par_iter()
        .zip(target)
        .map(|(p, t)| {
            let t = (*t)?;
            let e = g.element_at(p.x, p.y)?;
            let d = t - g.eval_in_element(e, p.x, p.y, 0, 0);
            (d > 0.0).then_some((d, e))
        })
        .collect();
    let mut lift = vec![0.0f64; g.num_coefs()];
    let mut vals = Vec::new();
    for (k, s) in shortfall.iter().enumerate() {
        let Some((d, e)) = *s else { continue };
        let p = &cloud.points[k];
        g.basis_in_element(e, p.x, p.y, &mut vals);
        for (&b, &v) in g.elements()[e].bsplines.iter().zip(&vals) {
            if v > 0.0 {
                lift[b] = lift[b].max(d);
            }
        }
    }
    let c = g.coefs();
    g.map_coefs(|k, _| c[k] + lift[k])
}

/// Depth-dependent blend of a surface and its upper limit: coefficients
/// follow `source` in deep water (`d <= d1`) and `upper` in shallow water
/// (`d >= d2`), with `d` the mean of both surfaces at the Greville point.
pub fn weighted_mid_surface(source: &LRSurface, upper: &LRSurface, d1: f64, d2: f64) -> Result<LRSurface> {
    if !(d1 < d2) {
        return Err(Error::InvalidInput(format!("transition needs d1 < d2, got {d1} and {d2}")));
    }
    if source.degrees() != upper.degrees() || source.num_coefs() != upper.num_coefs() {
        return Err(Error::Mismatch("different spline spaces".into()));
    }
    for (a, b) in source.bsplines().iter().zip(upper.bsplines()) {
        if a.uknots != b.uknots || a.vknots != b.vknots {
            return Err(Error::Mismatch("B-spline knot vectors differ".into()));
        }
    }
    let cu = upper.coefs();
    let blended: Vec<f64> = source
        .bsplines()
        .par_iter()
        .enumerate()
        .map(|(k, b)| {
            let (gu, gv) = b.greville();
            let d = 0.5 * (source.value(gu, gv) + upper.value(gu, gv));
            let alpha = if d <= d1 {
                1.0
            } else if d >= d2 {
                0.0
            } else {
                (d2 - d) / (d2 - d1)
            };
            if alpha == 1.0 {
                b.coef
            } else if alpha == 0.0 {
                cu[k]
            } else {
                alpha * b.coef + (1.0 - alpha) * cu[k]
            }
        })
        .collect();
    let mut out = source.clone();
    out.set_coefs(&blended)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::{GlobalKnotVector, TPSurface};

    fn constant(c: f64) -> LRSurface {
        let k = GlobalKnotVector::uniform(0.0, 1.0, 2, 5).unwrap();
        LRSurface::from_tensor_product(&TPSurface::new(k.clone(), k, vec![c; 25]).unwrap())
    }

    #[test]
    fn exact_fit_has_identical_limits() {
        let s = constant(-4.0);
        let cloud = PointCloud::from_xyz((0..30).map(|k| ((k as f64 * 0.37).fract(), (k as f64 * 0.71).fract(), -4.0)));
        let l = limit_surfaces(&s, &cloud, 5);
        for ((a, b), c) in l.upper.coefs().iter().zip(l.lower.coefs()).zip(s.coefs()) {
            assert!((a - c).abs() < 1e-12 && (b - c).abs() < 1e-12);
        }
    }

    #[test]
    fn single_point_above() {
        let s = constant(0.0);
        let cloud = PointCloud::from_xyz([(0.3, 0.3, 1.0), (0.8, 0.1, -0.5)]);
        let l = limit_surfaces(&s, &cloud, 5);
        assert!(l.upper.value(0.3, 0.3) >= 1.0);
        assert!(l.lower.value(0.8, 0.1) <= -0.5);
        assert!(l.upper.value(0.8, 0.1) >= -0.5);
        assert!(l.lower.value(0.3, 0.3) <= 1.0);
    }

    #[test]
    fn blend_branches() {
        let s = constant(-30.0);
        let u = constant(-29.0);
        let m = weighted_mid_surface(&s, &u, -20.0, 0.0).unwrap();
        assert_eq!(m.coefs(), s.coefs());
        let s = constant(1.0);
        let u = constant(2.0);
        let m = weighted_mid_surface(&s, &u, -20.0, 0.0).unwrap();
        assert_eq!(m.coefs(), u.coefs());
        let s = constant(-10.0);
        let u = constant(-10.0 + 2.0);
        let m = weighted_mid_surface(&s, &u, -20.0, 0.0).unwrap();
        // d = -9 gives alpha = 0.45
        for c in m.coefs() {
            assert!((c - (0.45 * -10.0 + 0.55 * -8.0)).abs() < 1e-12);
        }
        assert!(weighted_mid_surface(&s, &constant(0.0).map_coefs(|_, _| 0.0), 0.0, -1.0).is_err());
    }

    #[test]
    fn mismatched_spaces_rejected() {
        let a = constant(0.0);
        let k = GlobalKnotVector::uniform(0.0, 1.0, 2, 4).unwrap();
        let b = LRSurface::from_tensor_product(&TPSurface::new(k.clone(), k, vec![0.0; 16]).unwrap());
        assert!(matches!(weighted_mid_surface(&a, &b, -1.0, 0.0), Err(Error::Mismatch(_))));
    }
}
