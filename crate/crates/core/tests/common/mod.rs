//! Generators and oracles shared by the integration tests.
#![allow(dead_code)]

use lrsurf::{GlobalKnotVector, LRSurface, Meshline, PointCloud, Rect, TPSurface};
use rand::Rng;

/// Tensor-product surface with `n x n` uniform-random coefficients in [-1, 1].
pub fn random_tp(rng: &mut impl Rng, n: usize, degree: usize, domain: Rect) -> TPSurface {
    let ku = GlobalKnotVector::uniform(domain.u0, domain.u1, degree, n).unwrap();
    let kv = GlobalKnotVector::uniform(domain.v0, domain.v1, degree, n).unwrap();
    let coefs = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    TPSurface::new(ku, kv, coefs).unwrap()
}

/// A meshline through the middle of one knot interval of a random B-spline,
/// spanning that B-spline's support; it always splits at least that one.
pub fn random_meshline(rng: &mut impl Rng, surf: &LRSurface) -> Meshline {
    let bs = surf.bsplines();
    let b = &bs[rng.gen_range(0..bs.len())];
    let s = b.support();
    let const_u = rng.gen_bool(0.5);
    let knots = if const_u { b.uknots.values() } else { b.vknots.values() };
    let mut distinct = knots.to_vec();
    distinct.dedup();
    let k = rng.gen_range(0..distinct.len() - 1);
    let fixed = 0.5 * (distinct[k] + distinct[k + 1]);
    if const_u {
        Meshline::const_u(fixed, s.v0, s.v1)
    } else {
        Meshline::const_v(fixed, s.u0, s.u1)
    }
}

pub fn random_point(rng: &mut impl Rng, d: Rect) -> (f64, f64) {
    (rng.gen_range(d.u0..=d.u1), rng.gen_range(d.v0..=d.v1))
}

/// Random 8x8 bi-quadratic surface refined by `count` random meshlines.
pub fn random_refined(rng: &mut impl Rng, count: usize) -> LRSurface {
    let tp = random_tp(rng, 8, 2, Rect::new(0.0, 1.0, 0.0, 1.0));
    let mut s = LRSurface::from_tensor_product(&tp);
    for _ in 0..count {
        let m = random_meshline(rng, &s);
        s.insert_meshline(m).unwrap();
    }
    s
}

pub fn gaussian(x: f64, y: f64, cx: f64, cy: f64, sigma: f64) -> f64 {
    (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * sigma * sigma)).exp()
}

/// Three unit-height Gaussian bumps on `[0, 100]^2`.
pub fn three_bumps(x: f64, y: f64) -> f64 {
    gaussian(x, y, 25.0, 30.0, 6.0) + gaussian(x, y, 70.0, 65.0, 8.0) + gaussian(x, y, 60.0, 20.0, 5.0)
}

/// Bounding boxes (3 sigma) of the bumps in [`three_bumps`].
pub fn three_bump_boxes() -> [Rect; 3] {
    [(25.0, 30.0, 6.0), (70.0, 65.0, 8.0), (60.0, 20.0, 5.0)]
        .map(|(cx, cy, s)| Rect::new(cx - 3.0 * s, cx + 3.0 * s, cy - 3.0 * s, cy + 3.0 * s))
}

pub fn sample_cloud(rng: &mut impl Rng, n: usize, domain: Rect, f: impl Fn(f64, f64) -> f64) -> PointCloud {
    PointCloud::from_xyz((0..n).map(|_| {
        let (x, y) = random_point(rng, domain);
        (x, y, f(x, y))
    }))
}

/// Values of `f` on an `n x n` vertex grid over `d`, row-major from `v0`.
pub fn sample_grid(f: impl Fn(f64, f64) -> f64 + Sync, d: Rect, n: usize) -> Vec<f64> {
    use rayon::prelude::*;
    (0..n * n)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k % n, k / n);
            let x = d.u0 + d.width() * i as f64 / (n - 1) as f64;
            let y = d.v0 + d.height() * j as f64 / (n - 1) as f64;
            f(x.min(d.u1), y.min(d.v1))
        })
        .collect()
}

/// Level-set components found by marching squares on a sampled grid:
/// `(open, closed)` counts. Components are traced through the grid's cell
/// edges; a component reaching the grid boundary is open.
pub fn marching_squares_components(grid: &[f64], n: usize, level: f64) -> (usize, usize) {
    // nudge exact hits so every vertex is strictly above or below
    let g: Vec<f64> = grid
        .iter()
        .map(|&z| if z == level { 1e-300 } else { z - level })
        .collect();
    let above = |i: usize, j: usize| g[j * n + i] > 0.0;

    // Edge ids: horizontal edge (i, j)-(i+1, j) and vertical edge (i, j)-(i, j+1).
    let h = |i: usize, j: usize| j * (n - 1) + i;
    let nh = n * (n - 1);
    let v = |i: usize, j: usize| nh + i * (n - 1) + j;
    let ne = 2 * nh;
    let mut uf = UnionFind::new(ne);
    let mut crossed = vec![false; ne];
    for j in 0..n {
        for i in 0..n - 1 {
            crossed[h(i, j)] = above(i, j) != above(i + 1, j);
        }
    }
    for i in 0..n {
        for j in 0..n - 1 {
            crossed[v(i, j)] = above(i, j) != above(i, j + 1);
        }
    }
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let (bottom, top, left, right) = (h(i, j), h(i, j + 1), v(i, j), v(i + 1, j));
            let edges: Vec<usize> = [bottom, right, top, left].into_iter().filter(|&e| crossed[e]).collect();
            match edges.len() {
                2 => uf.union(edges[0], edges[1]),
                4 => {
                    // saddle: decide by the cell-centre average
                    let c = 0.25 * (g[j * n + i] + g[j * n + i + 1] + g[(j + 1) * n + i] + g[(j + 1) * n + i + 1]);
                    if (c > 0.0) == above(i, j) {
                        uf.union(bottom, right);
                        uf.union(top, left);
                    } else {
                        uf.union(bottom, left);
                        uf.union(top, right);
                    }
                }
                _ => {}
            }
        }
    }
    let on_boundary = |e: usize| {
        if e < nh {
            let j = e / (n - 1);
            j == 0 || j == n - 1
        } else {
            let i = (e - nh) / (n - 1);
            i == 0 || i == n - 1
        }
    };
    let mut open = std::collections::HashSet::new();
    let mut all = std::collections::HashSet::new();
    for e in 0..ne {
        if crossed[e] {
            let r = uf.find(e);
            all.insert(r);
            if on_boundary(e) {
                open.insert(r);
            }
        }
    }
    // every crossed edge meets at most two cells, so components are simple
    // paths or cycles and each open one is a single curve
    (open.len(), all.len() - open.len())
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, mut x: usize) -> usize {
        while self.0[x] != x {
            self.0[x] = self.0[self.0[x]];
            x = self.0[x];
        }
        x
    }
    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.0[a] = b;
        }
    }
}
