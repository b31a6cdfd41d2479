use std::f64::consts::PI;

use rayon::prelude::*;

use crate::bspline::{basis_deriv, GlobalKnotVector, Rect, Side, TPSurface};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::lr::LRSurface;
use crate::sparse::{conjugate_gradient, CsrMatrix};

use super::config::FitConfig;

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    assert!(n >= 1);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 1 { x } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.reverse();
    out
}

/// Bilinear smoothness form of the point integrands: the half-circle
/// integrals of the squared second and third directional derivatives.
fn smoothness_pair(w2: f64, w3: f64, a: &[f64; 7], b: &[f64; 7]) -> f64 {
    // [xx, xy, yy, xxx, xxy, xyy, yyy]
    let o2 = 3.0 * a[0] * b[0] + a[0] * b[2] + a[2] * b[0] + 3.0 * a[2] * b[2] + 4.0 * a[1] * b[1];
    let o3 = 5.0 * a[3] * b[3]
        + 9.0 * a[4] * b[4]
        + 9.0 * a[5] * b[5]
        + 5.0 * a[6] * b[6]
        + 3.0 * (a[3] * b[5] + a[5] * b[3])
        + 3.0 * (a[4] * b[6] + a[6] * b[4]);
    w2 * PI / 8.0 * o2 + w3 * PI / 16.0 * o3
}

/// Smoothness energy `J(F)` of a surface.
pub fn smoothness_energy(surf: &LRSurface, w2: f64, w3: f64) -> f64 {
    let (p1, p2) = surf.degrees();
    let gauss = gauss_legendre(p1.max(p2) + 1);
    let bs = surf.bsplines();
    let mut total = 0.0;
    for e in surf.elements() {
        for_each_quad(&e.rect, &gauss, |u, v, w| {
            let mut f = [0.0; 7];
            for &k in &e.bsplines {
                let d = high_derivs(bs[k].uknots.values(), bs[k].vknots.values(), bs[k].scale, u, v);
                for (fi, di) in f.iter_mut().zip(d) {
                    *fi += bs[k].coef * di;
                }
            }
            total += w * smoothness_pair(w2, w3, &f, &f);
        });
    }
    total
}

fn for_each_quad(r: &Rect, gauss: &[(f64, f64)], mut f: impl FnMut(f64, f64, f64)) {
    let (hu, hv) = (0.5 * r.width(), 0.5 * r.height());
    let (cu, cv) = r.center();
    for &(xv, wv) in gauss {
        for &(xu, wu) in gauss {
            f(cu + hu * xu, cv + hv * xv, wu * wv * hu * hv);
        }
    }
}

fn high_derivs(t: &[f64], s: &[f64], scale: f64, u: f64, v: f64) -> [f64; 7] {
    let bu: [f64; 4] = std::array::from_fn(|d| basis_deriv(t, u, d, Side::Right));
    let bv: [f64; 4] = std::array::from_fn(|d| basis_deriv(s, v, d, Side::Right));
    [
        scale * bu[2] * bv[0],
        scale * bu[1] * bv[1],
        scale * bu[0] * bv[2],
        scale * bu[3] * bv[0],
        scale * bu[2] * bv[1],
        scale * bu[1] * bv[2],
        scale * bu[0] * bv[3],
    ]
}

/// Normal equations `A c = b` of the regularized least-squares problem.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Weighted sum of squared data values times the data weight; with it
    /// the objective is `c'Ac - 2b'c + data_const`.
    pub data_const: f64,
}

impl NormalEquations {
    pub fn objective(&self, c: &[f64]) -> f64 {
        let mut ac = vec![0.0; c.len()];
        self.matrix.mul_vec(c, &mut ac);
        let q: f64 = c.iter().zip(&ac).map(|(x, y)| x * y).sum();
        let l: f64 = c.iter().zip(&self.rhs).map(|(x, y)| x * y).sum();
        q - 2.0 * l + self.data_const
    }

    /// Gradient `2 (A c - b)`.
    pub fn gradient(&self, c: &[f64]) -> Vec<f64> {
        let mut ac = vec![0.0; c.len()];
        self.matrix.mul_vec(c, &mut ac);
        ac.iter().zip(&self.rhs).map(|(a, b)| 2.0 * (a - b)).collect()
    }
}

/// Effective weights: point weight times the significant-point factor.
pub fn effective_weights(cloud: &PointCloud, significant_weight: f64) -> Vec<f64> {
    cloud
        .points
        .iter()
        .map(|p| p.weight * if p.significant { significant_weight } else { 1.0 })
        .collect()
}

/// Group points by element: returns `(offsets, order)` such that the points
/// of element `e` are `order[offsets[e]..offsets[e + 1]]`.
pub(crate) fn bucket_points(surf: &LRSurface, cloud: &PointCloud) -> (Vec<usize>, Vec<usize>) {
    let elem: Vec<Option<usize>> = cloud
        .points
        .par_iter()
        .map(|p| surf.element_at(p.x, p.y))
        .collect();
    let ne = surf.elements().len();
    let mut offsets = vec![0usize; ne + 1];
    for e in elem.iter().flatten() {
        offsets[e + 1] += 1;
    }
    for e in 0..ne {
        offsets[e + 1] += offsets[e];
    }
    let mut fill = offsets.clone();
    let mut order = vec![0usize; offsets[ne]];
    for (k, e) in elem.iter().enumerate() {
        if let Some(e) = *e {
            order[fill[e]] = k;
            fill[e] += 1;
        }
    }
    (offsets, order)
}

pub fn assemble(
    surf: &LRSurface,
    cloud: &PointCloud,
    weights: &[f64],
    config: &FitConfig,
) -> NormalEquations {
    assert_eq!(weights.len(), cloud.len());
    let n = surf.num_coefs();
    let a1 = config.alpha1;
    let a2 = 1.0 - a1;
    let elements = surf.elements();
    let mut pattern: Vec<Vec<usize>> = vec![Vec::new(); n];
    for e in elements {
        for &i in &e.bsplines {
            pattern[i].extend_from_slice(&e.bsplines);
        }
    }
    let mut matrix = CsrMatrix::from_pattern(pattern);
    let (offsets, order) = bucket_points(surf, cloud);
    let (p1, p2) = surf.degrees();
    let gauss = gauss_legendre(p1.max(p2) + 1);
    let bs = surf.bsplines();

    let local: Vec<(Vec<f64>, Vec<f64>, f64)> = (0..elements.len())
        .into_par_iter()
        .map(|ei| {
            let e = &elements[ei];
            let m = e.bsplines.len();
            let mut mat = vec![0.0; m * m];
            let mut rhs = vec![0.0; m];
            let mut zz = 0.0;
            let mut vals = Vec::with_capacity(m);
            for &k in &order[offsets[ei]..offsets[ei + 1]] {
                let p = &cloud.points[k];
                let w = a2 * weights[k];
                surf.basis_in_element(ei, p.x, p.y, &mut vals);
                for a in 0..m {
                    let wa = w * vals[a];
                    if wa == 0.0 {
                        continue;
                    }
                    rhs[a] += wa * p.z;
                    for b in 0..m {
                        mat[a * m + b] += wa * vals[b];
                    }
                }
                zz += w * p.z * p.z;
            }
            let mut d: Vec<[f64; 7]> = vec![[0.0; 7]; m];
            for_each_quad(&e.rect, &gauss, |u, v, w| {
                for (a, &k) in e.bsplines.iter().enumerate() {
                    d[a] = high_derivs(bs[k].uknots.values(), bs[k].vknots.values(), bs[k].scale, u, v);
                }
                for a in 0..m {
                    for b in a..m {
                        let val = a1 * w * smoothness_pair(config.w2, config.w3, &d[a], &d[b]);
                        mat[a * m + b] += val;
                        if b != a {
                            mat[b * m + a] += val;
                        }
                    }
                }
            });
            (mat, rhs, zz)
        })
        .collect();

    let mut rhs = vec![0.0; n];
    let mut data_const = 0.0;
    for (e, (mat, lrhs, zz)) in elements.iter().zip(local) {
        let m = e.bsplines.len();
        for (a, &i) in e.bsplines.iter().enumerate() {
            rhs[i] += lrhs[a];
            for (b, &j) in e.bsplines.iter().enumerate() {
                let v = mat[a * m + b];
                if v != 0.0 {
                    matrix.add(i, j, v);
                }
            }
        }
        data_const += zz;
    }
    NormalEquations {
        matrix,
        rhs,
        data_const,
    }
}

/// New coefficients minimizing `alpha1 J(F) + alpha2 sum w (F - z)^2` in the
/// spline space of `surf`.
pub fn least_squares_fit(surf: &LRSurface, cloud: &PointCloud, config: &FitConfig) -> Result<LRSurface> {
    let weights = effective_weights(cloud, config.significant_weight);
    least_squares_fit_weighted(surf, cloud, &weights, config)
}

pub fn least_squares_fit_weighted(
    surf: &LRSurface,
    cloud: &PointCloud,
    weights: &[f64],
    config: &FitConfig,
) -> Result<LRSurface> {
    let ne = assemble(surf, cloud, weights, config);
    let mut c = surf.coefs();
    let n = c.len();
    let out = conjugate_gradient(&ne.matrix, &ne.rhs, &mut c, config.cg_tolerance, 10 * n.max(10))?;
    log::debug!(
        "least squares: {n} unknowns, {} nonzeros, {} CG iterations, residual {:.2e}",
        ne.matrix.nnz(),
        out.iterations,
        out.relative_residual
    );
    let mut s = surf.clone();
    s.set_coefs(&c)?;
    Ok(s)
}

/// Parameter domain for a cloud: its bounding box, widened to unit extent in
/// any direction where it is degenerate.
pub fn fit_domain(cloud: &PointCloud) -> Result<Rect> {
    let mut r = cloud
        .bbox()
        .ok_or_else(|| Error::InvalidInput("empty point cloud".into()))?;
    if r.width() <= 0.0 {
        r.u0 -= 0.5;
        r.u1 += 0.5;
    }
    if r.height() <= 0.0 {
        r.v0 -= 0.5;
        r.v1 += 0.5;
    }
    Ok(r)
}

/// Tensor-product least-squares fit on the cloud's bounding box, returned as
/// an LR surface.
pub fn initial_fit(cloud: &PointCloud, config: &FitConfig) -> Result<LRSurface> {
    config.validate()?;
    let d = fit_domain(cloud)?;
    let (p1, p2) = config.degrees;
    let (n1, n2) = config.initial_grid;
    let uk = GlobalKnotVector::uniform(d.u0, d.u1, p1, n1)?;
    let vk = GlobalKnotVector::uniform(d.v0, d.v1, p2, n2)?;
    let z0 = cloud.points.iter().map(|p| p.z).sum::<f64>() / cloud.len() as f64;
    let tp = TPSurface::new(uk, vk, vec![z0; n1 * n2])?;
    least_squares_fit(&LRSurface::from_tensor_product(&tp), cloud, config)
}
