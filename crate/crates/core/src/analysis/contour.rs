use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::bspline::{GlobalKnotVector, Rect, TPSurface};
use crate::error::{Error, Result};
use crate::io::split_to_tp;
use crate::lr::{LRSurface, OccupancyMask};

const ROOT_DEPTH: usize = 60;
/// Largest tangent turn accepted within one tracing step (radians).
const MAX_TURN: f64 = 0.2;
const MAX_STEPS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GuideKind {
    /// On the boundary of the piece being analysed.
    Boundary,
    /// On an internal line introduced by subdivision.
    Subdivision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuidePoint {
    pub u: f64,
    pub v: f64,
    pub kind: GuideKind,
}

/// Parameter over which a contour piece is a graph: with `Sweep::V` the
/// piece is `u = g(v)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    U,
    V,
}

/// Contour piece between two guide points inside a monotone sub-rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GuideArc {
    pub from: usize,
    pub to: usize,
    pub rect: Rect,
    pub sweep: Sweep,
}

/// Connected guide points of one contour branch.
#[derive(Debug, Clone, PartialEq)]
pub struct GuideChain {
    pub nodes: Vec<usize>,
    /// `arcs[k]` joins `nodes[k]` and `nodes[k + 1]` (wrapping when closed).
    pub arcs: Vec<usize>,
    pub closed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    pub level: f64,
    pub guides: Vec<GuidePoint>,
    pub arcs: Vec<GuideArc>,
    pub chains: Vec<GuideChain>,
    /// Regions left unresolved at the depth cap, or holding tangential
    /// contact that could not be paired.
    pub unresolved: Vec<Rect>,
    pub subdivisions: usize,
}

fn definite(c: &[f64]) -> bool {
    let pos = c.iter().all(|&x| x >= 0.0) && c.iter().any(|&x| x > 0.0);
    let neg = c.iter().all(|&x| x <= 0.0) && c.iter().any(|&x| x < 0.0);
    pos || neg
}

/// Interior knot closest to the middle of the knot vector's domain.
pub(crate) fn middle_knot(k: &GlobalKnotVector) -> Option<f64> {
    let (a, b) = k.domain();
    let m = 0.5 * (a + b);
    k.distinct()
        .into_iter()
        .filter(|&x| x > a && x < b)
        .min_by(|x, y| (x - m).abs().total_cmp(&(y - m).abs()))
}

/// Split parameters for recursive subdivision: the knots nearest the middle,
/// in both directions when both have one; midpoints of a single element.
pub(crate) fn split_params(tp: &TPSurface) -> (Option<f64>, Option<f64>) {
    match (middle_knot(tp.uknots()), middle_knot(tp.vknots())) {
        (None, None) => {
            let (u, v) = tp.domain().center();
            (Some(u), Some(v))
        }
        other => other,
    }
}

pub(crate) fn subdivide(tp: TPSurface, su: Option<f64>, sv: Option<f64>) -> Result<Vec<TPSurface>> {
    let mut pieces = vec![tp];
    if let Some(s) = su {
        let mut next = Vec::with_capacity(2 * pieces.len());
        for p in pieces {
            let (a, b) = p.split_u(s)?;
            next.extend([a, b]);
        }
        pieces = next;
    }
    if let Some(s) = sv {
        let mut next = Vec::with_capacity(2 * pieces.len());
        for p in pieces {
            let (a, b) = p.split_v(s)?;
            next.extend([a, b]);
        }
        pieces = next;
    }
    Ok(pieces)
}

struct Detector {
    level: f64,
    max_depth: usize,
    eps: f64,
    topo: Topology,
}

impl Detector {
    fn add_guide(&mut self, u: f64, v: f64, kind: GuideKind) -> usize {
        self.topo.guides.push(GuidePoint { u, v, kind });
        self.topo.guides.len() - 1
    }

    fn on_boundary(&self, r: &Rect, g: &GuidePoint) -> bool {
        let e = self.eps;
        let inside = g.u >= r.u0 - e && g.u <= r.u1 + e && g.v >= r.v0 - e && g.v <= r.v1 + e;
        inside
            && ((g.u - r.u0).abs() <= e
                || (g.u - r.u1).abs() <= e
                || (g.v - r.v0).abs() <= e
                || (g.v - r.v1).abs() <= e)
    }

    fn detect(&mut self, tp: TPSurface, ids: Vec<usize>, depth: usize) {
        let r = tp.domain();
        // the surface lies within the range of its coefficients
        let (lo, hi) = tp.coef_range();
        if self.level < lo || self.level > hi {
            return;
        }
        if definite(tp.derivative_u().coefs()) {
            self.pair(ids, r, Sweep::V);
            return;
        }
        if definite(tp.derivative_v().coefs()) {
            self.pair(ids, r, Sweep::U);
            return;
        }
        if depth >= self.max_depth {
            log::warn!("contour level {}: unresolved region {r:?}", self.level);
            self.topo.unresolved.push(r);
            return;
        }
        self.topo.subdivisions += 1;
        let (su, sv) = split_params(&tp);
        let mut all = ids;
        let eps = self.eps;
        let inner = |x: f64, a: f64, b: f64| x > a + eps && x < b - eps;
        if let Some(s) = su {
            for t in tp.iso_u(s).roots(self.level, ROOT_DEPTH) {
                if inner(t, r.v0, r.v1) {
                    all.push(self.add_guide(s, t, GuideKind::Subdivision));
                }
            }
        }
        if let Some(s) = sv {
            for t in tp.iso_v(s).roots(self.level, ROOT_DEPTH) {
                let dup = su.is_some_and(|c| (t - c).abs() <= eps);
                if inner(t, r.u0, r.u1) && !dup {
                    all.push(self.add_guide(t, s, GuideKind::Subdivision));
                }
            }
        }
        let pieces = match subdivide(tp, su, sv) {
            Ok(p) => p,
            Err(e) => {
                log::warn!("subdivision of {r:?} failed: {e}");
                self.topo.unresolved.push(r);
                return;
            }
        };
        for p in pieces {
            let pr = p.domain();
            let child: Vec<usize> = all
                .iter()
                .copied()
                .filter(|&g| self.on_boundary(&pr, &self.topo.guides[g]))
                .collect();
            self.detect(p, child, depth + 1);
        }
    }

    /// In a piece where the curve is a graph over one parameter, components
    /// occupy disjoint parameter intervals, so boundary crossings sorted
    /// along that parameter pair up consecutively.
    fn pair(&mut self, mut ids: Vec<usize>, r: Rect, sweep: Sweep) {
        let g = &self.topo.guides;
        ids.sort_by(|&a, &b| {
            let (a, b) = (&g[a], &g[b]);
            match sweep {
                Sweep::V => a.v.total_cmp(&b.v).then(a.u.total_cmp(&b.u)),
                Sweep::U => a.u.total_cmp(&b.u).then(a.v.total_cmp(&b.v)),
            }
        });
        if ids.len() % 2 == 1 {
            log::warn!("contour level {}: odd crossing count in {r:?}", self.level);
            self.topo.unresolved.push(r);
            ids.pop();
        }
        for p in ids.chunks(2) {
            self.topo.arcs.push(GuideArc {
                from: p[0],
                to: p[1],
                rect: r,
                sweep,
            });
        }
    }

    fn chains(&mut self) {
        let n = self.topo.guides.len();
        let mut adj = vec![Vec::new(); n];
        for (k, a) in self.topo.arcs.iter().enumerate() {
            adj[a.from].push(k);
            adj[a.to].push(k);
        }
        let mut used = vec![false; self.topo.arcs.len()];
        let mut chains = Vec::new();
        let walk = |start: usize, used: &mut Vec<bool>| {
            let mut nodes = vec![start];
            let mut arcs = Vec::new();
            let mut cur = start;
            while let Some(&k) = adj[cur].iter().find(|&&k| !used[k]) {
                used[k] = true;
                let a = &self.topo.arcs[k];
                cur = if a.from == cur { a.to } else { a.from };
                arcs.push(k);
                if cur == start {
                    return GuideChain { nodes, arcs, closed: true };
                }
                nodes.push(cur);
            }
            GuideChain { nodes, arcs, closed: false }
        };
        for s in 0..n {
            if adj[s].len() % 2 == 1 && adj[s].iter().any(|&k| !used[k]) {
                chains.push(walk(s, &mut used));
            }
        }
        for k in 0..used.len() {
            if !used[k] {
                chains.push(walk(self.topo.arcs[k].from, &mut used));
            }
        }
        self.topo.chains = chains;
    }
}

/// Guide points and their connectivity for the level set `F = level` of a
/// tensor-product surface, by recursive subdivision until no piece can hold
/// a closed loop.
pub fn topology_detect(tp: &TPSurface, level: f64, max_depth: usize) -> Topology {
    let r = tp.domain();
    let mut d = Detector {
        level,
        max_depth,
        eps: 1e-12 * r.diameter().max(1.0),
        topo: Topology {
            level,
            ..Default::default()
        },
    };
    let mut pts: Vec<(f64, f64)> = Vec::new();
    pts.extend(tp.iso_v(r.v0).roots(level, ROOT_DEPTH).into_iter().map(|t| (t, r.v0)));
    pts.extend(tp.iso_v(r.v1).roots(level, ROOT_DEPTH).into_iter().map(|t| (t, r.v1)));
    pts.extend(tp.iso_u(r.u0).roots(level, ROOT_DEPTH).into_iter().map(|t| (r.u0, t)));
    pts.extend(tp.iso_u(r.u1).roots(level, ROOT_DEPTH).into_iter().map(|t| (r.u1, t)));
    let mut ids = Vec::new();
    for (k, &(u, v)) in pts.iter().enumerate() {
        // corners show up on two edges
        let seen = pts[..k]
            .iter()
            .any(|&(a, b)| (a - u).abs() <= d.eps && (b - v).abs() <= d.eps);
        if !seen {
            ids.push(d.add_guide(u, v, GuideKind::Boundary));
        }
    }
    d.detect(tp.clone(), ids, 0);
    d.chains();
    d.topo
}

struct Tracer<'a> {
    tp: &'a TPSurface,
    level: f64,
    tol: f64,
    hmin: f64,
}

impl Tracer<'_> {
    /// `[F, F_s, F_t, F_ss, F_st, F_tt]` in sweep coordinates.
    fn jet(&self, sweep: Sweep, s: f64, t: f64) -> [f64; 6] {
        match sweep {
            Sweep::V => {
                let j = self.tp.eval_jet(t, s);
                [j[0], j[2], j[1], j[5], j[4], j[3]]
            }
            Sweep::U => self.tp.eval_jet(s, t),
        }
    }

    fn value(&self, sweep: Sweep, s: f64, t: f64, deriv: usize) -> f64 {
        match sweep {
            Sweep::V => self.tp.eval_unchecked(t, s, deriv, 0),
            Sweep::U => self.tp.eval_unchecked(s, t, 0, deriv),
        }
    }

    /// Unit tangent in sweep coordinates, advancing along `dir`.
    fn tangent(&self, sweep: Sweep, s: f64, t: f64, dir: f64) -> (f64, f64) {
        let j = self.jet(sweep, s, t);
        let n = j[1].hypot(j[2]);
        if n == 0.0 {
            return (dir, 0.0);
        }
        let (ts, tt) = (-j[2] / n, j[1] / n);
        if ts * dir < 0.0 {
            (-ts, -tt)
        } else {
            (ts, tt)
        }
    }

    /// Solve `F(s, t) = level` for `t` in `[lo, hi]`, where `F` is monotone.
    fn correct(&self, sweep: Sweep, s: f64, guess: f64, lo: f64, hi: f64) -> Option<f64> {
        let f = |t: f64| self.value(sweep, s, t, 0) - self.level;
        let (mut a, mut b) = (lo, hi);
        let (fa, fb) = (f(a), f(b));
        if fa == 0.0 {
            return Some(a);
        }
        if fb == 0.0 {
            return Some(b);
        }
        if fa.signum() == fb.signum() {
            let (x, fx) = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
            return (fx.abs() <= self.tol).then_some(x);
        }
        let sa = fa.signum();
        let mut x = guess.clamp(a, b);
        for _ in 0..200 {
            let fx = f(x);
            if fx.abs() <= 1e-6 * self.tol {
                return Some(x);
            }
            if fx.signum() == sa {
                a = x;
            } else {
                b = x;
            }
            let d = self.value(sweep, s, x, 1);
            let n = x - fx / d;
            x = if d != 0.0 && n > a && n < b { n } else { 0.5 * (a + b) };
            if b - a <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                break;
            }
        }
        (f(x).abs() <= self.tol).then_some(x)
    }

    /// Predictor-corrector march from guide point `p` to `q` inside the
    /// monotone rectangle `rect`.
    fn arc(&self, p: (f64, f64), q: (f64, f64), rect: &Rect, sweep: Sweep) -> Result<Vec<(f64, f64)>> {
        let st = |(u, v): (f64, f64)| match sweep {
            Sweep::V => (v, u),
            Sweep::U => (u, v),
        };
        let uv = |(s, t): (f64, f64)| match sweep {
            Sweep::V => (t, s),
            Sweep::U => (s, t),
        };
        let (tlo, thi) = match sweep {
            Sweep::V => (rect.u0, rect.u1),
            Sweep::U => (rect.v0, rect.v1),
        };
        let (sp, tp_) = st(p);
        let (sq, tq) = st(q);
        let mut out = vec![p];
        if sp == sq {
            out.push(q);
            return Ok(out);
        }
        let dir = (sq - sp).signum();
        let hmax = rect.diameter();
        let cos_max = MAX_TURN.cos();
        let (mut s, mut t) = (sp, tp_);
        for _ in 0..MAX_STEPS {
            let j = self.jet(sweep, s, t);
            let g = j[1].hypot(j[2]);
            let second = j[3].abs().max(j[4].abs()).max(j[5].abs());
            let mut h = if second > 0.0 { 0.5 * g / second } else { hmax };
            h = h.clamp(self.hmin.min(hmax), hmax);
            let t0 = self.tangent(sweep, s, t, dir);
            loop {
                // near a turning point of the graph the curve advances
                // quadratically in the sweep parameter
                let bend = 0.5 * h * h * j[5].abs() / g.max(f64::MIN_POSITIVE);
                let advance = (h * t0.0.abs()).max(bend).max(1e-9 * h);
                let mut s1 = s + dir * advance;
                let last = dir * (s1 - sq) >= 0.0;
                let t1 = if last {
                    s1 = sq;
                    Some(tq)
                } else {
                    self.correct(sweep, s1, t + h * t0.1, tlo, thi)
                };
                let sm = 0.5 * (s + s1);
                let tm = t1.and_then(|t1| self.correct(sweep, sm, 0.5 * (t + t1), tlo, thi));
                let (Some(t1), Some(tm)) = (t1, tm) else {
                    if h > self.hmin {
                        h *= 0.5;
                        continue;
                    }
                    let (u, v) = uv((s, t));
                    return Err(Error::Trace {
                        u,
                        v,
                        reason: format!("corrector failed in element {rect:?}"),
                    });
                };
                let a = self.tangent(sweep, sm, tm, dir);
                let b = self.tangent(sweep, s1, t1, dir);
                let dot = |x: (f64, f64), y: (f64, f64)| x.0 * y.0 + x.1 * y.1;
                let consistent = dot(t0, a) >= cos_max && dot(a, b) >= cos_max && dot(t0, b) >= cos_max;
                if !consistent && h > self.hmin {
                    h *= 0.5;
                    continue;
                }
                s = s1;
                t = t1;
                break;
            }
            if s == sq {
                out.push(q);
                return Ok(out);
            }
            out.push(uv((s, t)));
        }
        let (u, v) = uv((s, t));
        Err(Error::Trace {
            u,
            v,
            reason: "step limit reached".into(),
        })
    }
}

/// Polyline of a guide chain traced on `tp`; closed chains repeat their
/// first vertex at the end.
pub fn trace_chain(
    tp: &TPSurface,
    topo: &Topology,
    chain: &GuideChain,
    tolerance: f64,
    hmin: f64,
) -> Result<Vec<(f64, f64)>> {
    let tracer = Tracer {
        tp,
        level: topo.level,
        tol: tolerance,
        hmin,
    };
    let node = |k: usize| {
        let g = &topo.guides[chain.nodes[k % chain.nodes.len()]];
        (g.u, g.v)
    };
    let mut out: Vec<(f64, f64)> = vec![node(0)];
    for (k, &a) in chain.arcs.iter().enumerate() {
        let arc = &topo.arcs[a];
        let piece = tracer.arc(node(k), node(k + 1), &arc.rect, arc.sweep)?;
        out.extend_from_slice(&piece[1..]);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourOptions {
    /// Bound on `|F - level|` at every traced vertex.
    pub tolerance: f64,
    /// Passed to [`split_to_tp`] for the tensor-product pieces.
    pub max_segmented: usize,
    /// Recursion depth cap of the topology detection.
    pub max_depth: usize,
}

impl Default for ContourOptions {
    fn default() -> Self {
        ContourOptions {
            tolerance: 1e-9,
            max_segmented: 4,
            max_depth: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourBranch {
    pub level: f64,
    /// Vertices in `(x, y)`; a closed branch ends with a copy of its first
    /// vertex. Larger values lie to the right of the direction of travel.
    pub points: Vec<(f64, f64)>,
    pub closed: bool,
}

impl ContourBranch {
    pub fn length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
            .sum()
    }

    pub fn first(&self) -> (f64, f64) {
        self.points[0]
    }

    pub fn last(&self) -> (f64, f64) {
        *self.points.last().unwrap()
    }

    /// Twice the signed area for closed branches (positive when
    /// counter-clockwise).
    pub fn signed_area2(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[0].0 * w[1].1 - w[1].0 * w[0].1)
            .sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContourSet {
    pub branches: Vec<ContourBranch>,
    /// `(level, region)` pairs the topology detection could not resolve.
    pub unresolved: Vec<(f64, Rect)>,
}

impl ContourSet {
    pub const CSV_HEADER: &'static str = "level,curve_id,closed,seq,x,y";

    pub fn at_level(&self, level: f64) -> impl Iterator<Item = &ContourBranch> {
        self.branches.iter().filter(move |b| b.level == level)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for (id, b) in self.branches.iter().enumerate() {
            for (k, (x, y)) in b.points.iter().enumerate() {
                let _ = writeln!(s, "{},{},{},{},{},{}", b.level, id, b.closed, k, x, y);
            }
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Levels `a, a + step, ...` up to and including `b` (within round-off).
pub fn level_range(a: f64, b: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && a.is_finite() && b.is_finite() && a <= b) {
        return Err(Error::InvalidInput(format!("invalid level range {a}:{b}:{step}")));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| a + k as f64 * step).collect())
}

/// Contour curves of `surf` at each level: split into tensor-product pieces,
/// detect topology and trace per piece, then join across piece interfaces.
pub fn contour(surf: &LRSurface, levels: &[f64], opts: &ContourOptions) -> Result<ContourSet> {
    if let Some(a) = levels.iter().find(|a| !a.is_finite()) {
        return Err(Error::InvalidInput(format!("contour level {a} is not finite")));
    }
    if !(opts.tolerance > 0.0) {
        return Err(Error::InvalidInput(format!("contour tolerance must be positive, got {}", opts.tolerance)));
    }
    let patches = split_to_tp(surf, opts.max_segmented)?;
    let domain = surf.domain();
    let hmin = domain.diameter() * 1e-4;
    let tasks: Vec<(f64, usize)> = levels
        .iter()
        .flat_map(|&a| (0..patches.len()).map(move |k| (a, k)))
        .collect();
    let pieces: Vec<(f64, Vec<ContourBranch>, Vec<Rect>)> = tasks
        .par_iter()
        .map(|&(a, k)| {
            let tp = &patches.patches[k].surface;
            let topo = topology_detect(tp, a, opts.max_depth);
            let tol = opts.tolerance * a.abs().max(1.0);
            let branches = topo
                .chains
                .iter()
                .map(|c| {
                    Ok(ContourBranch {
                        level: a,
                        points: trace_chain(tp, &topo, c, tol, hmin)?,
                        closed: c.closed,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((a, branches, topo.unresolved))
        })
        .collect::<Result<_>>()?;
    let mut unresolved = Vec::new();
    let mut all = Vec::new();
    for (a, b, u) in pieces {
        all.extend(b);
        unresolved.extend(u.into_iter().map(|r| (a, r)));
    }
    let mut branches = merge_across_boundaries(all, domain);
    for b in &mut branches {
        orient(surf, b);
    }
    Ok(ContourSet { branches, unresolved })
}

/// Reverse `b` if needed so that larger values lie to its right.
fn orient(surf: &LRSurface, b: &mut ContourBranch) {
    let mut score = 0.0;
    for w in b.points.windows(2) {
        let (x, y) = (0.5 * (w[0].0 + w[1].0), 0.5 * (w[0].1 + w[1].1));
        let Ok(j) = surf.jet(x, y) else { continue };
        let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
        // right-hand normal is (dy, -dx)
        score += j[1] * dy - j[2] * dx;
    }
    if score < 0.0 {
        b.points.reverse();
    }
}

fn on_domain_boundary(d: &Rect, p: (f64, f64), tol: f64) -> bool {
    (p.0 - d.u0).abs() <= tol || (p.0 - d.u1).abs() <= tol || (p.1 - d.v0).abs() <= tol || (p.1 - d.v1).abs() <= tol
}

/// Join open branches whose endpoints meet on interior piece interfaces
/// (within `1e-7` of the domain size). Branches of different levels are
/// never joined.
pub fn merge_across_boundaries(pieces: Vec<ContourBranch>, domain: Rect) -> Vec<ContourBranch> {
    let mut levels: Vec<f64> = pieces.iter().map(|b| b.level).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut groups: Vec<Vec<ContourBranch>> = vec![Vec::new(); levels.len()];
    for b in pieces {
        let k = levels.binary_search_by(|x| x.total_cmp(&b.level)).unwrap();
        groups[k].push(b);
    }
    groups.into_iter().flat_map(|g| merge_level(g, &domain)).collect()
}

fn merge_level(pieces: Vec<ContourBranch>, domain: &Rect) -> Vec<ContourBranch> {
    let tol = 1e-7 * domain.diameter();
    let (closed, open): (Vec<_>, Vec<_>) = pieces.into_iter().partition(|b| b.closed);
    let end_point = |e: usize| {
        let b = &open[e / 2];
        if e % 2 == 0 {
            b.first()
        } else {
            b.last()
        }
    };
    let mut ends: Vec<usize> = (0..2 * open.len())
        .filter(|&e| !on_domain_boundary(domain, end_point(e), tol))
        .collect();
    ends.sort_by(|&a, &b| end_point(a).0.total_cmp(&end_point(b).0));
    let mut pairs = Vec::new();
    for i in 0..ends.len() {
        let p = end_point(ends[i]);
        for &e in &ends[i + 1..] {
            let q = end_point(e);
            if q.0 - p.0 > tol {
                break;
            }
            let d = (q.0 - p.0).hypot(q.1 - p.1);
            if d <= tol {
                pairs.push((d, ends[i], e));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut partner: Vec<Option<usize>> = vec![None; 2 * open.len()];
    for &(_, a, b) in &pairs {
        if partner[a].is_none() && partner[b].is_none() {
            partner[a] = Some(b);
            partner[b] = Some(a);
        } else {
            let p = end_point(a);
            log::warn!("contour branch point near ({}, {})", p.0, p.1);
        }
    }
    for &e in &ends {
        if partner[e].is_none() {
            let p = end_point(e);
            log::warn!("dangling contour end at ({}, {})", p.0, p.1);
        }
    }

    let mut out = closed;
    let mut visited = vec![false; open.len()];
    let walk = |start_end: usize, visited: &mut Vec<bool>| -> ContourBranch {
        let level = open[start_end / 2].level;
        let mut pts: Vec<(f64, f64)> = Vec::new();
        let mut enter = start_end;
        loop {
            let b = enter / 2;
            visited[b] = true;
            let seg = &open[b].points;
            let skip = usize::from(!pts.is_empty());
            if enter % 2 == 0 {
                pts.extend(seg.iter().skip(skip));
            } else {
                pts.extend(seg.iter().rev().skip(skip));
            }
            let exit = enter ^ 1;
            match partner[exit] {
                Some(next) if next / 2 == start_end / 2 && next == start_end => {
                    pts.pop();
                    pts.push(pts[0]);
                    return ContourBranch { level, points: pts, closed: true };
                }
                Some(next) if !visited[next / 2] => enter = next,
                _ => return ContourBranch { level, points: pts, closed: false },
            }
        }
    };
    for e in 0..2 * open.len() {
        if !visited[e / 2] && partner[e].is_none() {
            out.push(walk(e, &mut visited));
        }
    }
    for b in 0..open.len() {
        if !visited[b] {
            out.push(walk(2 * b, &mut visited));
        }
    }
    out
}

/// Split branches where they leave the occupied elements of `mask`.
pub fn clip_to_mask(set: &ContourSet, surf: &LRSurface, mask: &OccupancyMask) -> ContourSet {
    let mut branches = Vec::new();
    for b in &set.branches {
        let inside: Vec<bool> = b.points.iter().map(|&(x, y)| mask.contains(surf, x, y)).collect();
        if inside.iter().all(|&i| i) {
            branches.push(b.clone());
            continue;
        }
        // for closed branches start the scan at an outside vertex so runs
        // do not wrap
        let order: Vec<usize> = if b.closed {
            let m = b.points.len() - 1;
            let s = inside[..m].iter().position(|&i| !i).unwrap_or(0);
            (0..=m).map(|k| (s + k) % m).collect()
        } else {
            (0..b.points.len()).collect()
        };
        for run in order.split(|&i| !inside[i]) {
            if run.len() >= 2 {
                branches.push(ContourBranch {
                    level: b.level,
                    points: run.iter().map(|&i| b.points[i]).collect(),
                    closed: false,
                });
            }
        }
    }
    ContourSet {
        branches,
        unresolved: set.unresolved.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plane_x() -> TPSurface {
        let k = GlobalKnotVector::uniform(0.0, 1.0, 1, 2).unwrap();
        TPSurface::from_greville_fn(k.clone(), k, |x, _| x)
    }

    /// `x^2 + y^2` exactly: the quadratic blossom gives `x^2` the
    /// coefficients `t[i+1] * t[i+2]`.
    fn bowl_tp() -> TPSurface {
        let k = GlobalKnotVector::uniform(-2.0, 2.0, 2, 6).unwrap();
        let t = k.values().to_vec();
        let n = k.num_basis();
        let sq: Vec<f64> = (0..n).map(|i| t[i + 1] * t[i + 2]).collect();
        let coefs = (0..n * n).map(|k| sq[k % n] + sq[k / n]).collect();
        TPSurface::new(k.clone(), k, coefs).unwrap()
    }

    fn paraboloid() -> LRSurface {
        LRSurface::from_tensor_product(&bowl_tp())
    }

    #[test]
    fn constant_is_rejected() {
        let k = GlobalKnotVector::uniform(0.0, 1.0, 2, 4).unwrap();
        let tp = TPSurface::new(k.clone(), k, vec![3.0; 16]).unwrap();
        let t = topology_detect(&tp, 1.0, 30);
        assert!(t.guides.is_empty() && t.chains.is_empty());
    }

    #[test]
    fn plane_has_one_connection() {
        let t = topology_detect(&plane_x(), 0.5, 30);
        assert_eq!(t.guides.len(), 2);
        assert_eq!(t.subdivisions, 0);
        assert_eq!(t.chains.len(), 1);
        assert!(!t.chains[0].closed);
        let pts = trace_chain(&plane_x(), &t, &t.chains[0], 1e-12, 1e-4).unwrap();
        assert!(pts.len() >= 2);
        for (x, _) in pts {
            assert!((x - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_is_single_closed_branch() {
        let s = paraboloid();
        let set = contour(&s, &[1.0], &ContourOptions::default()).unwrap();
        assert_eq!(set.branches.len(), 1);
        let b = &set.branches[0];
        assert!(b.closed);
        assert_eq!(b.first(), b.last());
        for &(x, y) in &b.points {
            assert!((x.hypot(y) - 1.0).abs() < 1e-9);
        }
        assert!((b.length() / (2.0 * std::f64::consts::PI) - 1.0).abs() < 0.01);
        // larger values outside, kept on the right: counter-clockwise
        assert!(b.signed_area2() > 0.0);
    }

    #[test]
    fn level_above_max_is_empty() {
        let set = contour(&paraboloid(), &[100.0], &ContourOptions::default()).unwrap();
        assert!(set.branches.is_empty());
    }

    #[test]
    fn circle_split_across_pieces_merges() {
        let tp = bowl_tp();
        let mut pieces = Vec::new();
        let (l, r) = tp.split_u(0.0).unwrap();
        for half in [l, r] {
            let (b, t) = half.split_v(0.1).unwrap();
            for q in [b, t] {
                let topo = topology_detect(&q, 1.0, 30);
                for c in &topo.chains {
                    pieces.push(ContourBranch {
                        level: 1.0,
                        points: trace_chain(&q, &topo, c, 1e-12, 1e-4).unwrap(),
                        closed: c.closed,
                    });
                }
            }
        }
        assert_eq!(pieces.len(), 4);
        let before: f64 = pieces.iter().map(|b| b.length()).sum();
        let merged = merge_across_boundaries(pieces, tp.domain());
        assert_eq!(merged.len(), 1);
        assert!(merged[0].closed);
        let after: f64 = merged.iter().map(|b| b.length()).sum();
        assert!((after - before).abs() <= 1e-9 * before);
    }

    #[test]
    fn levels_do_not_merge_and_segments_join() {
        let d = Rect::new(0.0, 2.0, 0.0, 1.0);
        let a = ContourBranch { level: 0.5, points: vec![(0.0, 0.5), (1.0, 0.5)], closed: false };
        let b = ContourBranch { level: 0.5, points: vec![(1.0, 0.5), (2.0, 0.5)], closed: false };
        let c = ContourBranch { level: 0.7, points: vec![(1.0, 0.5), (2.0, 0.7)], closed: false };
        let m = merge_across_boundaries(vec![a, b, c], d);
        assert_eq!(m.len(), 2);
        let joined = m.iter().find(|b| b.level == 0.5).unwrap();
        assert_eq!(joined.points, vec![(0.0, 0.5), (1.0, 0.5), (2.0, 0.5)]);
    }

    #[test]
    fn two_bumps_give_two_loops() {
        let k = GlobalKnotVector::uniform(0.0, 1.0, 3, 40).unwrap();
        let f = |x: f64, y: f64| {
            (-((x - 0.3).powi(2) + (y - 0.5).powi(2)) / 0.01).exp()
                + (-((x - 0.7).powi(2) + (y - 0.5).powi(2)) / 0.01).exp()
        };
        let s = LRSurface::from_tensor_product(&TPSurface::from_greville_fn(k.clone(), k, f));
        let set = contour(&s, &[0.5, 0.9], &ContourOptions::default()).unwrap();
        assert_eq!(set.at_level(0.9).count(), 2);
        assert!(set.branches.iter().all(|b| b.closed));
        for b in &set.branches {
            for &(x, y) in &b.points {
                assert!((s.value(x, y) - b.level).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn csv_layout() {
        let set = contour(&paraboloid(), &[1.0], &ContourOptions::default()).unwrap();
        let csv = set.to_csv();
        assert!(csv.starts_with("level,curve_id,closed,seq,x,y\n1,0,true,0,"));
        assert_eq!(csv.lines().count(), 1 + set.branches[0].points.len());
    }

    #[test]
    fn level_ranges() {
        assert_eq!(level_range(-2.0, 0.0, 1.0).unwrap(), vec![-2.0, -1.0, 0.0]);
        assert_eq!(level_range(0.0, 0.95, 0.5).unwrap().len(), 2);
        assert!(level_range(1.0, 0.0, 1.0).is_err());
        assert!(level_range(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn clipping_splits_at_unoccupied_elements() {
        let s = paraboloid();
        let set = contour(&s, &[1.0], &ContourOptions::default()).unwrap();
        // data only in the left half
        let mask = OccupancyMask::from_points(&s, [(-1.5, -1.5), (-1.5, 1.5), (-0.5, 0.5), (-0.5, -0.5), (-1.2, 0.1), (-1.2, -0.1)]);
        let clipped = clip_to_mask(&set, &s, &mask);
        assert!(!clipped.branches.is_empty());
        for b in &clipped.branches {
            assert!(!b.closed);
            for &(x, y) in &b.points {
                assert!(mask.contains(&s, x, y));
            }
        }
    }
}
