use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::bspline::{Rect, TPSurface};
use crate::error::{Error, Result};
use crate::io::tp_patch;
use crate::lr::{LRSurface, OccupancyMask};

use super::contour::{split_params, subdivide, ContourBranch, ContourSet};

const MAX_DEPTH: usize = 24;
/// Gradient norm below which a point counts as critical.
pub const CRITICAL_GRADIENT: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Min,
    Max,
}

impl ExtremumKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtremumKind::Min => "min",
            ExtremumKind::Max => "max",
        }
    }

    /// True when `a` is more extreme than `b`.
    fn better(self, a: f64, b: f64) -> bool {
        match self {
            ExtremumKind::Max => a > b,
            ExtremumKind::Min => a < b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremalPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub kind: ExtremumKind,
    /// Index of the triggering branch in the contour set.
    pub trigger: usize,
    pub trigger_level: f64,
    /// Found on the surface boundary rather than at a critical point.
    pub on_boundary: bool,
    pub inside_mask: bool,
}

pub const EXTREMA_CSV_HEADER: &str = "kind,x,y,z,trigger_level";

pub fn extrema_to_csv(points: &[ExtremalPoint]) -> String {
    let mut s = String::from(EXTREMA_CSV_HEADER);
    s.push('\n');
    for p in points {
        let _ = writeln!(s, "{},{},{},{},{}", p.kind.as_str(), p.x, p.y, p.z, p.trigger_level);
    }
    s
}

pub fn write_extrema_csv(points: &[ExtremalPoint], path: &Path) -> Result<()> {
    std::fs::write(path, extrema_to_csv(points)).map_err(|e| Error::io(path, e))
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: (f64, f64), poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.1 > p.1) != (b.1 > p.1) && p.0 < (b.0 - a.0) * (p.1 - a.1) / (b.1 - a.1) + a.0 {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Region enclosed by a trigger candidate.
#[derive(Debug, Clone)]
struct Region {
    polygon: Vec<(f64, f64)>,
    /// Pieces of the polygon on the surface boundary.
    boundary: Vec<((f64, f64), (f64, f64))>,
    kind: ExtremumKind,
    level: f64,
    branch: usize,
    rep: (f64, f64),
}

/// Counter-clockwise perimeter coordinate of a point on the domain boundary.
fn perimeter(d: &Rect, p: (f64, f64)) -> f64 {
    let (w, h) = (d.width(), d.height());
    let dist = [
        (p.1 - d.v0).abs(),
        (p.0 - d.u1).abs(),
        (p.1 - d.v1).abs(),
        (p.0 - d.u0).abs(),
    ];
    let edge = (0..4).min_by(|&a, &b| dist[a].total_cmp(&dist[b])).unwrap();
    match edge {
        0 => (p.0 - d.u0).clamp(0.0, w),
        1 => w + (p.1 - d.v0).clamp(0.0, h),
        2 => w + h + (d.u1 - p.0).clamp(0.0, w),
        _ => (2.0 * w + h + (d.v1 - p.1).clamp(0.0, h)) % (2.0 * (w + h)),
    }
}

/// Boundary path from `from` to `to`, counter-clockwise when `ccw`, as the
/// list of vertices after `from` up to and including `to`.
fn boundary_path(d: &Rect, from: (f64, f64), to: (f64, f64), ccw: bool) -> Vec<(f64, f64)> {
    let total = 2.0 * (d.width() + d.height());
    let corners = [
        (d.width(), (d.u1, d.v0)),
        (d.width() + d.height(), (d.u1, d.v1)),
        (2.0 * d.width() + d.height(), (d.u0, d.v1)),
        (total, (d.u0, d.v0)),
    ];
    let (sa, sb) = (perimeter(d, from), perimeter(d, to));
    // distance travelled from `from` in the walking direction
    let travel = |s: f64| {
        let x = if ccw { s - sa } else { sa - s };
        x.rem_euclid(total)
    };
    let end = travel(sb);
    let mut cs: Vec<(f64, (f64, f64))> = corners
        .iter()
        .map(|&(s, c)| (travel(s % total), c))
        .filter(|&(t, _)| t > 0.0 && t < end)
        .collect();
    cs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = cs.into_iter().map(|c| c.1).collect();
    out.push(to);
    out
}

fn regions(surf: &LRSurface, set: &ContourSet) -> Vec<Region> {
    let d = surf.domain();
    let tol = 1e-7 * d.diameter();
    let on_bd = |p: (f64, f64)| {
        (p.0 - d.u0).abs() <= tol || (p.0 - d.u1).abs() <= tol || (p.1 - d.v0).abs() <= tol || (p.1 - d.v1).abs() <= tol
    };
    let mut out = Vec::new();
    for (k, b) in set.branches.iter().enumerate() {
        if b.points.len() < 2 {
            continue;
        }
        if b.closed {
            // larger values lie to the right: counter-clockwise loops hold
            // lower values inside
            let kind = if b.signed_area2() > 0.0 { ExtremumKind::Min } else { ExtremumKind::Max };
            out.push(Region {
                polygon: b.points.clone(),
                boundary: Vec::new(),
                kind,
                level: b.level,
                branch: k,
                rep: b.points[0],
            });
            continue;
        }
        let (a, z) = (b.first(), b.last());
        if !(on_bd(a) && on_bd(z)) {
            continue;
        }
        // the left side (counter-clockwise closure) is the lower side
        for (ccw, kind) in [(true, ExtremumKind::Min), (false, ExtremumKind::Max)] {
            let walk = boundary_path(&d, z, a, ccw);
            let mut boundary = Vec::new();
            let mut prev = z;
            for &p in &walk {
                boundary.push((prev, p));
                prev = p;
            }
            let mut polygon = b.points.clone();
            polygon.extend_from_slice(&walk);
            out.push(Region {
                polygon,
                boundary,
                kind,
                level: b.level,
                branch: k,
                rep: b.points[b.points.len() / 2],
            });
        }
    }
    out
}

/// Innermost regions: no other region of the same kind lies inside.
fn triggers(regions: &[Region]) -> Vec<&Region> {
    regions
        .iter()
        .filter(|c| {
            !regions
                .iter()
                .any(|d| d.kind == c.kind && d.branch != c.branch && point_in_polygon(d.rep, &c.polygon))
        })
        .collect()
}

fn strictly_signed(c: &[f64]) -> bool {
    c.iter().all(|&x| x > 0.0) || c.iter().all(|&x| x < 0.0)
}

fn direction_changes(seq: impl Iterator<Item = f64>) -> usize {
    let mut prev: Option<f64> = None;
    let mut sign = 0.0;
    let mut changes = 0;
    for x in seq {
        if let Some(p) = prev {
            let s = (x - p).signum();
            if x != p {
                if sign != 0.0 && s != sign {
                    changes += 1;
                }
                sign = s;
            }
        }
        prev = Some(x);
    }
    changes
}

/// Control net changing direction at most once along every row and column.
fn net_unimodal(tp: &TPSurface) -> bool {
    let (n1, n2) = tp.num_coefs();
    let c = tp.coefs();
    (0..n2).all(|j| direction_changes((0..n1).map(|i| c[j * n1 + i])) <= 1)
        && (0..n1).all(|i| direction_changes((0..n2).map(|j| c[j * n1 + i])) <= 1)
}

fn greville(k: &crate::bspline::GlobalKnotVector, i: usize) -> f64 {
    let p = k.degree();
    if p == 0 {
        let t = k.values();
        return 0.5 * (t[i] + t[i + 1]);
    }
    k.values()[i + 1..=i + p].iter().sum::<f64>() / p as f64
}

/// Newton iteration on `grad F = 0` from `(u, v)`; `jet` returns
/// `[F, F_u, F_v, F_uu, F_uv, F_vv]`. Fails when the iterate leaves `bounds`.
fn newton(jet: impl Fn(f64, f64) -> Option<[f64; 6]>, mut u: f64, mut v: f64, bounds: &Rect) -> Option<(f64, f64)> {
    let diam = bounds.diameter();
    for _ in 0..100 {
        let j = jet(u, v)?;
        let det = j[3] * j[5] - j[4] * j[4];
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let mut du = (j[5] * j[1] - j[4] * j[2]) / det;
        let mut dv = (j[3] * j[2] - j[4] * j[1]) / det;
        let len = du.hypot(dv);
        if len > 0.5 * diam {
            du *= 0.5 * diam / len;
            dv *= 0.5 * diam / len;
        }
        u -= du;
        v -= dv;
        if !bounds.contains(u, v) {
            return None;
        }
        if len <= 1e-15 * diam.max(1.0) {
            break;
        }
    }
    Some((u, v))
}

fn kind_matches(kind: ExtremumKind, j: &[f64; 6]) -> bool {
    let det = j[3] * j[5] - j[4] * j[4];
    det > 0.0
        && match kind {
            ExtremumKind::Max => j[3] < 0.0,
            ExtremumKind::Min => j[3] > 0.0,
        }
}

struct Search<'a> {
    surf: &'a LRSurface,
    region: &'a Region,
    best: Option<(f64, f64, f64)>,
}

impl Search<'_> {
    fn bound(&self) -> f64 {
        self.best.map_or(self.region.level, |b| b.2)
    }

    /// Newton on the piece, then polished on the LR surface.
    fn try_point(&mut self, tp: &TPSurface, u: f64, v: f64) -> bool {
        let r = tp.domain();
        let grow = 0.01 * r.diameter();
        let bounds = Rect::new(r.u0 - grow, r.u1 + grow, r.v0 - grow, r.v1 + grow);
        let Some((u, v)) = newton(|u, v| Some(tp.eval_jet(u, v)), u, v, &bounds) else {
            return false;
        };
        self.accept(u, v)
    }

    fn accept(&mut self, u: f64, v: f64) -> bool {
        let d = self.surf.domain();
        let Some((u, v)) = newton(|u, v| self.surf.jet(u, v).ok(), u, v, &d) else {
            return false;
        };
        let Ok(j) = self.surf.jet(u, v) else { return false };
        let kind = self.region.kind;
        if j[1].hypot(j[2]) >= CRITICAL_GRADIENT
            || !kind_matches(kind, &j)
            || !point_in_polygon((u, v), &self.region.polygon)
            || !kind.better(j[0], self.region.level)
        {
            return false;
        }
        if self.best.map_or(true, |b| kind.better(j[0], b.2)) {
            self.best = Some((u, v, j[0]));
        }
        true
    }

    fn recurse(&mut self, tp: TPSurface, depth: usize) {
        let kind = self.region.kind;
        let (lo, hi) = tp.coef_range();
        let reach = match kind {
            ExtremumKind::Max => hi,
            ExtremumKind::Min => lo,
        };
        if !kind.better(reach, self.bound()) {
            return;
        }
        if strictly_signed(tp.derivative_u().coefs()) || strictly_signed(tp.derivative_v().coefs()) {
            return;
        }
        if net_unimodal(&tp) || depth >= MAX_DEPTH {
            let c = tp.coefs();
            let k = (0..c.len())
                .max_by(|&a, &b| match kind {
                    ExtremumKind::Max => c[a].total_cmp(&c[b]),
                    ExtremumKind::Min => c[b].total_cmp(&c[a]),
                })
                .unwrap();
            let n1 = tp.num_coefs().0;
            let r = tp.domain();
            let u = greville(tp.uknots(), k % n1).clamp(r.u0, r.u1);
            let v = greville(tp.vknots(), k / n1).clamp(r.v0, r.v1);
            if self.try_point(&tp, u, v) || self.try_point(&tp, r.center().0, r.center().1) || depth >= MAX_DEPTH {
                return;
            }
        }
        let (su, sv) = split_params(&tp);
        if let Ok(pieces) = subdivide(tp, su, sv) {
            for p in pieces {
                self.recurse(p, depth + 1);
            }
        }
    }

    /// Most extreme point on the boundary part of the region.
    fn boundary_extreme(&mut self) -> Option<(f64, f64, f64)> {
        let kind = self.region.kind;
        let f = |p: (f64, f64)| self.surf.value(p.0, p.1);
        let mut best: Option<(f64, f64, f64)> = None;
        for &(a, b) in &self.region.boundary {
            let at = |t: f64| (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
            let n: usize = 64;
            let k = (0..=n)
                .max_by(|&x, &y| {
                    let (fx, fy) = (f(at(x as f64 / n as f64)), f(at(y as f64 / n as f64)));
                    match kind {
                        ExtremumKind::Max => fx.total_cmp(&fy),
                        ExtremumKind::Min => fy.total_cmp(&fx),
                    }
                })
                .unwrap();
            // golden-section refinement around the best sample
            let (mut lo, mut hi) = (k.saturating_sub(1) as f64 / n as f64, (k + 1).min(n) as f64 / n as f64);
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let x1 = hi - g * (hi - lo);
                let x2 = lo + g * (hi - lo);
                if kind.better(f(at(x1)), f(at(x2))) {
                    hi = x2;
                } else {
                    lo = x1;
                }
            }
            let cands = [0.5 * (lo + hi), k as f64 / n as f64];
            for t in cands {
                let p = at(t);
                let z = f(p);
                if best.map_or(true, |q| kind.better(z, q.2)) {
                    best = Some((p.0, p.1, z));
                }
            }
        }
        best.filter(|b| kind.better(b.2, self.region.level))
    }

    /// Multi-start Newton from sample points inside both region and mask.
    fn masked_fallback(&mut self, rect: &Rect, mask: &OccupancyMask) -> Option<(f64, f64, f64)> {
        let kind = self.region.kind;
        let n = 16;
        let mut samples = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let u = rect.u0 + (i as f64 + 0.5) / n as f64 * rect.width();
                let v = rect.v0 + (j as f64 + 0.5) / n as f64 * rect.height();
                if point_in_polygon((u, v), &self.region.polygon) && mask.contains(self.surf, u, v) {
                    samples.push((u, v, self.surf.value(u, v)));
                }
            }
        }
        samples.sort_by(|a, b| match kind {
            ExtremumKind::Max => b.2.total_cmp(&a.2),
            ExtremumKind::Min => a.2.total_cmp(&b.2),
        });
        for &(u, v, _) in samples.iter().take(8) {
            self.best = None;
            if self.accept(u, v) {
                let b = self.best.unwrap();
                if mask.contains(self.surf, b.0, b.1) {
                    return Some(b);
                }
            }
        }
        None
    }
}

fn bbox(poly: &[(f64, f64)], d: &Rect) -> Option<Rect> {
    let (mut u0, mut u1, mut v0, mut v1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in poly {
        u0 = u0.min(x);
        u1 = u1.max(x);
        v0 = v0.min(y);
        v1 = v1.max(y);
    }
    let r = Rect::new(u0.max(d.u0), u1.min(d.u1), v0.max(d.v0), v1.min(d.v1));
    (r.width() > 0.0 && r.height() > 0.0).then_some(r)
}

/// Extremal points certified by trigger contours: innermost closed loops and
/// boundary-terminated contours with no same-kind region inside. Interior
/// critical points come first; regions without one report their most
/// extreme boundary point. Points whose distance to the trigger level is
/// below `prominence` are dropped.
pub fn extremal_points(
    surf: &LRSurface,
    contours: &ContourSet,
    mask: Option<&OccupancyMask>,
    prominence: f64,
) -> Result<Vec<ExtremalPoint>> {
    let all = regions(surf, contours);
    let trig = triggers(&all);
    let d = surf.domain();
    let found: Vec<Option<(ExtremalPoint, bool)>> = trig
        .par_iter()
        .map(|region| -> Result<Option<(ExtremalPoint, bool)>> {
            let Some(rect) = bbox(&region.polygon, &d) else { return Ok(None) };
            let tp = tp_patch(surf, &rect)?;
            let mut s = Search { surf, region, best: None };
            s.recurse(tp, 0);
            let mut on_boundary = false;
            let mut fallback = false;
            let mut point = s.best;
            if point.is_none() {
                point = s.boundary_extreme();
                on_boundary = true;
            }
            let Some((x, y, z)) = point else { return Ok(None) };
            let mut p = ExtremalPoint {
                x,
                y,
                z,
                kind: region.kind,
                trigger: region.branch,
                trigger_level: region.level,
                on_boundary,
                inside_mask: mask.map_or(true, |m| m.contains(surf, x, y)),
            };
            if let (false, Some(m)) = (p.inside_mask, mask) {
                fallback = true;
                if let Some((x, y, z)) = s.masked_fallback(&rect, m) {
                    p = ExtremalPoint { x, y, z, on_boundary: false, inside_mask: true, ..p };
                }
            }
            Ok(Some((p, fallback)))
        })
        .collect::<Result<_>>()?;
    let fallbacks = found.iter().flatten().filter(|f| f.1).count();
    let mut out: Vec<ExtremalPoint> = found
        .into_iter()
        .flatten()
        .map(|f| f.0)
        .filter(|p| (p.z - p.trigger_level).abs() >= prominence)
        .collect();
    let tol = 1e-9 * d.diameter();
    let mut k = 0;
    while k < out.len() {
        let p = out[k];
        if out[..k]
            .iter()
            .any(|q| q.kind == p.kind && (q.x - p.x).abs() <= tol && (q.y - p.y).abs() <= tol)
        {
            out.remove(k);
        } else {
            k += 1;
        }
    }
    log::info!("{} extremal points, {fallbacks} outside the masked region before fallback", out.len());
    Ok(out)
}

/// Interior extremal points: critical points with `|grad F| < 1e-7`.
pub fn interior(points: &[ExtremalPoint]) -> impl Iterator<Item = &ExtremalPoint> {
    points.iter().filter(|p| !p.on_boundary)
}

/// The trigger contour of an extremal point.
pub fn trigger_of<'a>(set: &'a ContourSet, p: &ExtremalPoint) -> &'a ContourBranch {
    &set.branches[p.trigger]
}
