use std::collections::{HashMap, VecDeque};

use crate::bspline::{insert_knot, LocalKnots, Rect, ScaledTensorBSpline, Side, TPSurface};
use crate::error::{Error, Result};

use super::mesh::{min_mult_in, Direction, LineSet, Meshline};

/// Rectangular cell of the LR mesh with the B-splines whose support covers it.
#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub rect: Rect,
    pub bsplines: Vec<usize>,
}

type KnotKey = Box<[u64]>;

fn key_of(b: &ScaledTensorBSpline) -> KnotKey {
    b.uknots
        .values()
        .iter()
        .chain(b.vknots.values())
        .map(|x| x.to_bits())
        .collect()
}

/// Locally refined B-spline surface `F(u,v) = sum c_B N_B(u,v)`.
#[derive(Debug, Clone)]
pub struct LRSurface {
    degrees: (usize, usize),
    bsplines: Vec<ScaledTensorBSpline>,
    mesh_u: LineSet,
    mesh_v: LineSet,
    history: Vec<Meshline>,
    // derived from the mesh, rebuilt after each refinement
    uvals: Vec<f64>,
    vvals: Vec<f64>,
    elements: Vec<Element>,
    cell_elem: Vec<u32>,
}

impl LRSurface {
    /// Collection of all tensor-product B-splines with unit scaling.
    pub fn from_tensor_product(tp: &TPSurface) -> LRSurface {
        let tp = tp.clamped();
        let (p1, p2) = tp.degrees();
        let (n1, n2) = tp.num_coefs();
        let mut bsplines = Vec::with_capacity(n1 * n2);
        for j in 0..n2 {
            let vk = tp.vknots().local(j);
            for i in 0..n1 {
                bsplines.push(ScaledTensorBSpline {
                    uknots: tp.uknots().local(i),
                    vknots: vk.clone(),
                    scale: 1.0,
                    coef: tp.coef(i, j),
                });
            }
        }
        let d = tp.domain();
        let mut mesh_u = LineSet::default();
        let mut mesh_v = LineSet::default();
        for a in tp.uknots().distinct() {
            mesh_u.raise_to(a, d.v0, d.v1, tp.uknots().multiplicity(a));
        }
        for a in tp.vknots().distinct() {
            mesh_v.raise_to(a, d.u0, d.u1, tp.vknots().multiplicity(a));
        }
        let mut s = LRSurface {
            degrees: (p1, p2),
            bsplines,
            mesh_u,
            mesh_v,
            history: Vec::new(),
            uvals: Vec::new(),
            vvals: Vec::new(),
            elements: Vec::new(),
            cell_elem: Vec::new(),
        };
        s.rebuild();
        s
    }

    /// Surface from an explicit B-spline collection. The mesh is taken as the
    /// union of the B-spline knot lines.
    pub fn from_bsplines(
        degrees: (usize, usize),
        bsplines: Vec<ScaledTensorBSpline>,
    ) -> Result<LRSurface> {
        if bsplines.is_empty() {
            return Err(Error::InvalidInput("empty B-spline collection".into()));
        }
        let mut keys = HashMap::with_capacity(bsplines.len());
        for (k, b) in bsplines.iter().enumerate() {
            if b.degree_u() != degrees.0 || b.degree_v() != degrees.1 {
                return Err(Error::InvalidInput(format!(
                    "B-spline {k} has degrees ({}, {}), expected {:?}",
                    b.degree_u(),
                    b.degree_v(),
                    degrees
                )));
            }
            if !(b.scale > 0.0 && b.scale <= 1.0 + 1e-9) {
                return Err(Error::InvalidInput(format!(
                    "B-spline {k} has scaling factor {} outside (0, 1]",
                    b.scale
                )));
            }
            if keys.insert(key_of(b), k).is_some() {
                return Err(Error::InvalidInput(format!("B-spline {k} is a duplicate")));
            }
        }
        let mut mesh_u = LineSet::default();
        let mut mesh_v = LineSet::default();
        for b in &bsplines {
            let s = b.support();
            let uk = b.uknots.values();
            let vk = b.vknots.values();
            for &a in dedup(uk).iter() {
                mesh_u.raise_to(a, s.v0, s.v1, b.uknots.multiplicity(a));
            }
            for &a in dedup(vk).iter() {
                mesh_v.raise_to(a, s.u0, s.u1, b.vknots.multiplicity(a));
            }
        }
        let mut s = LRSurface {
            degrees,
            bsplines,
            mesh_u,
            mesh_v,
            history: Vec::new(),
            uvals: Vec::new(),
            vvals: Vec::new(),
            elements: Vec::new(),
            cell_elem: Vec::new(),
        };
        s.rebuild();
        let total: f64 = s.elements.iter().map(|e| e.rect.area()).sum();
        if (total - s.domain().area()).abs() > 1e-9 * s.domain().area() {
            return Err(Error::InvalidInput("B-spline supports do not tile a rectangle".into()));
        }
        if s.elements.iter().any(|e| e.bsplines.is_empty()) {
            return Err(Error::InvalidInput("part of the domain has no B-spline".into()));
        }
        Ok(s)
    }

    pub fn degrees(&self) -> (usize, usize) {
        self.degrees
    }

    pub fn bsplines(&self) -> &[ScaledTensorBSpline] {
        &self.bsplines
    }

    pub fn num_coefs(&self) -> usize {
        self.bsplines.len()
    }

    pub fn coefs(&self) -> Vec<f64> {
        self.bsplines.iter().map(|b| b.coef).collect()
    }

    pub fn set_coefs(&mut self, coefs: &[f64]) -> Result<()> {
        if coefs.len() != self.bsplines.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} coefficients, got {}",
                self.bsplines.len(),
                coefs.len()
            )));
        }
        for (b, &c) in self.bsplines.iter_mut().zip(coefs) {
            b.coef = c;
        }
        Ok(())
    }

    /// Same spline space with coefficients `f(k, B)`.
    pub fn map_coefs(&self, f: impl Fn(usize, &ScaledTensorBSpline) -> f64) -> LRSurface {
        let mut s = self.clone();
        for (k, b) in s.bsplines.iter_mut().enumerate() {
            b.coef = f(k, &self.bsplines[k]);
        }
        s
    }

    pub fn coef_range(&self) -> (f64, f64) {
        self.bsplines
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), b| {
                (lo.min(b.coef), hi.max(b.coef))
            })
    }

    pub fn domain(&self) -> Rect {
        Rect::new(
            self.uvals[0],
            *self.uvals.last().unwrap(),
            self.vvals[0],
            *self.vvals.last().unwrap(),
        )
    }

    /// Meshlines inserted since construction, in order.
    pub fn history(&self) -> &[Meshline] {
        &self.history
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Distinct knot values in `u` and `v`.
    pub fn global_knots(&self) -> (&[f64], &[f64]) {
        (&self.uvals, &self.vvals)
    }

    /// Every knot line segment of the mesh as `(direction, fixed, start, end, multiplicity)`.
    pub fn mesh_segments(&self) -> Vec<Meshline> {
        let mut out = Vec::new();
        for (dir, set) in [(Direction::ConstU, &self.mesh_u), (Direction::ConstV, &self.mesh_v)] {
            for (fixed, segs) in set.iter() {
                for s in segs {
                    out.push(Meshline {
                        direction: dir,
                        fixed,
                        start: s.start,
                        end: s.end,
                        multiplicity: s.mult,
                    });
                }
            }
        }
        out
    }

    /// Multiplicity of the mesh along `[start, end]` of the line `fixed`
    /// (0 where any part is missing).
    pub fn mesh_multiplicity(&self, dir: Direction, fixed: f64, start: f64, end: f64) -> usize {
        self.lines(dir).min_mult(fixed, start, end)
    }

    fn lines(&self, dir: Direction) -> &LineSet {
        match dir {
            Direction::ConstU => &self.mesh_u,
            Direction::ConstV => &self.mesh_v,
        }
    }

    fn lines_mut(&mut self, dir: Direction) -> &mut LineSet {
        match dir {
            Direction::ConstU => &mut self.mesh_u,
            Direction::ConstV => &mut self.mesh_v,
        }
    }

    /// Index of the element containing `(u, v)`; the upper domain edges
    /// belong to the last row/column of elements.
    pub fn element_at(&self, u: f64, v: f64) -> Option<usize> {
        let (i, j) = self.cell_at(u, v)?;
        Some(self.cell_elem[j * (self.uvals.len() - 1) + i] as usize)
    }

    fn cell_at(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let d = self.domain();
        if !d.contains(u, v) {
            return None;
        }
        let nu = self.uvals.len() - 1;
        let nv = self.vvals.len() - 1;
        let i = self.uvals.partition_point(|&k| k <= u).saturating_sub(1).min(nu - 1);
        let j = self.vvals.partition_point(|&k| k <= v).saturating_sub(1).min(nv - 1);
        Some((i, j))
    }

    fn sides(&self, u: f64, v: f64) -> (Side, Side) {
        let d = self.domain();
        (
            if u >= d.u1 { Side::Left } else { Side::Right },
            if v >= d.v1 { Side::Left } else { Side::Right },
        )
    }

    /// Nonzero `N_B` (or derivatives) at `(u, v)` as `(index, value)` pairs.
    pub fn basis_at(&self, u: f64, v: f64, du: usize, dv: usize, out: &mut Vec<(usize, f64)>) -> Result<()> {
        out.clear();
        let e = self.element_at(u, v).ok_or(Error::OutOfDomain { u, v })?;
        let (su, sv) = self.sides(u, v);
        for &k in &self.elements[e].bsplines {
            let val = self.bsplines[k].eval_side(u, v, du, dv, su, sv);
            if val != 0.0 || du + dv > 0 {
                out.push((k, val));
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, u: f64, v: f64, du: usize, dv: usize) -> Result<f64> {
        let e = self.element_at(u, v).ok_or(Error::OutOfDomain { u, v })?;
        Ok(self.eval_in_element(e, u, v, du, dv))
    }

    pub(crate) fn eval_in_element(&self, e: usize, u: f64, v: f64, du: usize, dv: usize) -> f64 {
        let (su, sv) = self.sides(u, v);
        self.elements[e]
            .bsplines
            .iter()
            .map(|&k| {
                let b = &self.bsplines[k];
                b.coef * b.eval_side(u, v, du, dv, su, sv)
            })
            .sum()
    }

    /// Values `N_B(u, v)` for the B-splines of element `e`, in the order of
    /// `elements()[e].bsplines`.
    pub(crate) fn basis_in_element(&self, e: usize, u: f64, v: f64, out: &mut Vec<f64>) {
        let (su, sv) = self.sides(u, v);
        out.clear();
        out.extend(
            self.elements[e]
                .bsplines
                .iter()
                .map(|&k| self.bsplines[k].eval_side(u, v, 0, 0, su, sv)),
        );
    }

    /// `F(u, v)`; panics outside the domain.
    pub fn value(&self, u: f64, v: f64) -> f64 {
        self.evaluate(u, v, 0, 0).expect("parameter inside domain")
    }

    /// `[F, F_u, F_v, F_uu, F_uv, F_vv]` at a point inside the domain.
    pub fn jet(&self, u: f64, v: f64) -> Result<[f64; 6]> {
        let e = self.element_at(u, v).ok_or(Error::OutOfDomain { u, v })?;
        let (su, sv) = self.sides(u, v);
        let mut out = [0.0; 6];
        for &k in &self.elements[e].bsplines {
            let b = &self.bsplines[k];
            let t = b.uknots.values();
            let s = b.vknots.values();
            let bu = [
                crate::bspline::basis_deriv(t, u, 0, su),
                crate::bspline::basis_deriv(t, u, 1, su),
                crate::bspline::basis_deriv(t, u, 2, su),
            ];
            let bv = [
                crate::bspline::basis_deriv(s, v, 0, sv),
                crate::bspline::basis_deriv(s, v, 1, sv),
                crate::bspline::basis_deriv(s, v, 2, sv),
            ];
            let w = b.coef * b.scale;
            out[0] += w * bu[0] * bv[0];
            out[1] += w * bu[1] * bv[0];
            out[2] += w * bu[0] * bv[1];
            out[3] += w * bu[2] * bv[0];
            out[4] += w * bu[1] * bv[1];
            out[5] += w * bu[0] * bv[2];
        }
        Ok(out)
    }

    /// `sum_B N_B(u, v)`, identically one for a valid surface.
    pub fn partition_of_unity(&self, u: f64, v: f64) -> Result<f64> {
        let e = self.element_at(u, v).ok_or(Error::OutOfDomain { u, v })?;
        let (su, sv) = self.sides(u, v);
        Ok(self.elements[e]
            .bsplines
            .iter()
            .map(|&k| self.bsplines[k].eval_side(u, v, 0, 0, su, sv))
            .sum())
    }

    /// Insert one meshline and restore minimal support. Fails without
    /// modifying the surface if the line splits no B-spline.
    pub fn insert_meshline(&mut self, m: Meshline) -> Result<()> {
        let mut work = Refinement::start(self);
        let res = work.insert(m);
        work.finish();
        res
    }

    /// Insert a batch of meshlines. Lines that no longer split anything when
    /// their turn comes are skipped; returns how many were inserted.
    pub fn insert_meshlines(&mut self, lines: &[Meshline]) -> Result<usize> {
        let mut work = Refinement::start(self);
        let mut inserted = 0;
        for &m in lines {
            match work.insert(m) {
                Ok(()) => inserted += 1,
                Err(Error::MeshlineSplitsNothing) => {}
                Err(e) => {
                    work.finish();
                    return Err(e);
                }
            }
        }
        work.finish();
        Ok(inserted)
    }

    /// Rebuild distinct knot values, the element tiling, the cell index and
    /// per-element B-spline lists from the mesh.
    fn rebuild(&mut self) {
        self.rebuild_tiling();
        self.assign_bsplines();
    }

    fn rebuild_tiling(&mut self) {
        self.uvals = self.mesh_u.keys().collect();
        self.vvals = self.mesh_v.keys().collect();
        let nu = self.uvals.len() - 1;
        let nv = self.vvals.len() - 1;
        let idx_u = |x: f64, vals: &[f64]| vals.partition_point(|&k| k < x);

        // vertical edge between cells (i-1, j) and (i, j) lies on uvals[i]
        let mut vedge = vec![false; (nu + 1) * nv];
        for (i, &a) in self.uvals.iter().enumerate() {
            if let Some(segs) = self.mesh_u.get(a) {
                for s in segs {
                    let j0 = idx_u(s.start, &self.vvals);
                    let j1 = idx_u(s.end, &self.vvals);
                    for j in j0..j1 {
                        vedge[j * (nu + 1) + i] = true;
                    }
                }
            }
        }
        let mut hedge = vec![false; nu * (nv + 1)];
        for (j, &a) in self.vvals.iter().enumerate() {
            if let Some(segs) = self.mesh_v.get(a) {
                for s in segs {
                    let i0 = idx_u(s.start, &self.uvals);
                    let i1 = idx_u(s.end, &self.uvals);
                    for i in i0..i1 {
                        hedge[j * nu + i] = true;
                    }
                }
            }
        }

        // grow rectangles from the lowest unassigned cell in scan order
        const UNSET: u32 = u32::MAX;
        let mut cell_elem = vec![UNSET; nu * nv];
        let mut elements = Vec::new();
        for j in 0..nv {
            for i in 0..nu {
                if cell_elem[j * nu + i] != UNSET {
                    continue;
                }
                let mut i1 = i + 1;
                while i1 < nu && !vedge[j * (nu + 1) + i1] {
                    i1 += 1;
                }
                let mut j1 = j + 1;
                while j1 < nv && !hedge[j1 * nu + i] {
                    j1 += 1;
                }
                let id = elements.len() as u32;
                for jj in j..j1 {
                    for ii in i..i1 {
                        cell_elem[jj * nu + ii] = id;
                    }
                }
                elements.push(Element {
                    rect: Rect::new(self.uvals[i], self.uvals[i1], self.vvals[j], self.vvals[j1]),
                    bsplines: Vec::new(),
                });
            }
        }

        self.elements = elements;
        self.cell_elem = cell_elem;
    }

    fn assign_bsplines(&mut self) {
        let nu = self.uvals.len() - 1;
        let idx_u = |x: f64, vals: &[f64]| vals.partition_point(|&k| k < x);
        let mut stamp = vec![usize::MAX; self.elements.len()];
        let elements = &mut self.elements;
        let cell_elem = &self.cell_elem;
        for (k, b) in self.bsplines.iter().enumerate() {
            let s = b.support();
            let i0 = idx_u(s.u0, &self.uvals);
            let i1 = idx_u(s.u1, &self.uvals);
            let j0 = idx_u(s.v0, &self.vvals);
            let j1 = idx_u(s.v1, &self.vvals);
            for j in j0..j1 {
                for i in i0..i1 {
                    let e = cell_elem[j * nu + i] as usize;
                    if stamp[e] != k {
                        stamp[e] = k;
                        elements[e].bsplines.push(k);
                    }
                }
            }
        }
    }

    fn splits(&self, b: &ScaledTensorBSpline, dir: Direction, fixed: f64) -> bool {
        splits(&self.mesh_u, &self.mesh_v, b, dir, fixed)
    }

    /// True if every mesh line crossing `b`'s support is one of its knots,
    /// counting multiplicity.
    pub fn has_minimal_support(&self, b: &ScaledTensorBSpline) -> bool {
        find_split(&self.mesh_u, &self.mesh_v, b).is_none()
    }
}

fn dedup(v: &[f64]) -> Vec<f64> {
    let mut out = v.to_vec();
    out.dedup();
    out
}

fn splits(mesh_u: &LineSet, mesh_v: &LineSet, b: &ScaledTensorBSpline, dir: Direction, fixed: f64) -> bool {
    let s = b.support();
    match dir {
        Direction::ConstU => {
            fixed > s.u0
                && fixed < s.u1
                && mesh_u.min_mult(fixed, s.v0, s.v1) > b.uknots.multiplicity(fixed)
        }
        Direction::ConstV => {
            fixed > s.v0
                && fixed < s.v1
                && mesh_v.min_mult(fixed, s.u0, s.u1) > b.vknots.multiplicity(fixed)
        }
    }
}

fn find_split(mesh_u: &LineSet, mesh_v: &LineSet, b: &ScaledTensorBSpline) -> Option<(Direction, f64)> {
    let s = b.support();
    for (a, segs) in mesh_u.range_open(s.u0, s.u1) {
        if min_mult_in(segs, s.v0, s.v1) > b.uknots.multiplicity(a) {
            return Some((Direction::ConstU, a));
        }
    }
    for (a, segs) in mesh_v.range_open(s.v0, s.v1) {
        if min_mult_in(segs, s.u0, s.u1) > b.vknots.multiplicity(a) {
            return Some((Direction::ConstV, a));
        }
    }
    None
}

/// Mutable refinement session: B-splines live in a slab with a duplicate
/// index until `finish` compacts them and rebuilds the derived data.
struct Refinement<'a> {
    surf: &'a mut LRSurface,
    slab: Vec<Option<ScaledTensorBSpline>>,
    index: HashMap<KnotKey, usize>,
}

impl<'a> Refinement<'a> {
    fn start(surf: &'a mut LRSurface) -> Self {
        let slab: Vec<_> = std::mem::take(&mut surf.bsplines).into_iter().map(Some).collect();
        let index = slab
            .iter()
            .enumerate()
            .map(|(k, b)| (key_of(b.as_ref().unwrap()), k))
            .collect();
        Refinement { surf, slab, index }
    }

    fn finish(self) {
        self.surf.bsplines = self.slab.into_iter().flatten().collect();
        self.surf.rebuild();
    }

    fn snap(&self, m: &Meshline) -> (f64, f64) {
        // extend the span over every element the line bisects
        let (mut start, mut end) = (m.start, m.end);
        for e in &self.surf.elements {
            let r = e.rect;
            let (lo, hi, olo, ohi) = match m.direction {
                Direction::ConstU => (r.u0, r.u1, r.v0, r.v1),
                Direction::ConstV => (r.v0, r.v1, r.u0, r.u1),
            };
            if m.fixed > lo && m.fixed < hi && olo < end && ohi > start {
                start = start.min(olo);
                end = end.max(ohi);
            }
        }
        (start, end)
    }

    fn insert(&mut self, m: Meshline) -> Result<()> {
        let d = self.surf.domain();
        let (p1, p2) = self.surf.degrees;
        let (lo, hi, olo, ohi, cap) = match m.direction {
            Direction::ConstU => (d.u0, d.u1, d.v0, d.v1, p1 + 1),
            Direction::ConstV => (d.v0, d.v1, d.u0, d.u1, p2 + 1),
        };
        if !(m.fixed > lo && m.fixed < hi) {
            return Err(Error::InvalidInput(format!(
                "meshline at {} is not inside the domain ({lo}, {hi})",
                m.fixed
            )));
        }
        if !(m.start < m.end && m.start >= olo && m.end <= ohi) {
            return Err(Error::InvalidInput(format!(
                "meshline span [{}, {}] is empty or leaves [{olo}, {ohi}]",
                m.start, m.end
            )));
        }
        if m.multiplicity == 0 || m.multiplicity > cap {
            return Err(Error::InvalidInput(format!(
                "meshline multiplicity {} outside 1..={cap}",
                m.multiplicity
            )));
        }
        let (start, end) = self.snap(&m);
        let lines = self.surf.lines_mut(m.direction);
        let prev = lines.get(m.fixed).cloned();
        lines.add(m.fixed, start, end, m.multiplicity, cap);

        let mut queue: VecDeque<usize> = self
            .slab
            .iter()
            .enumerate()
            .filter_map(|(k, b)| {
                let b = b.as_ref()?;
                self.surf.splits(b, m.direction, m.fixed).then_some(k)
            })
            .collect();
        if queue.is_empty() {
            self.surf.lines_mut(m.direction).restore(m.fixed, prev);
            return Err(Error::MeshlineSplitsNothing);
        }
        self.surf.history.push(Meshline { start, end, ..m });

        while let Some(k) = queue.pop_front() {
            let Some(b) = self.slab[k].as_ref() else { continue };
            let Some((dir, a)) = find_split(&self.surf.mesh_u, &self.surf.mesh_v, b) else {
                continue;
            };
            let b = self.slab[k].take().unwrap();
            self.index.remove(&key_of(&b));
            let children = split_bspline(&b, dir, a);
            for (child, alpha) in children {
                let key = key_of(&child);
                match self.index.get(&key) {
                    Some(&d) => {
                        let dup = self.slab[d].as_mut().unwrap();
                        let w = b.scale * alpha;
                        let s = dup.scale + w;
                        dup.coef = (dup.scale * dup.coef + w * b.coef) / s;
                        dup.scale = s;
                    }
                    None => {
                        let id = self.slab.len();
                        self.slab.push(Some(ScaledTensorBSpline {
                            scale: b.scale * alpha,
                            coef: b.coef,
                            ..child
                        }));
                        self.index.insert(key, id);
                        queue.push_back(id);
                    }
                }
            }
        }
        // element rectangles are needed by the next snap in this batch
        self.surf.rebuild_tiling();
        Ok(())
    }
}

fn split_bspline(b: &ScaledTensorBSpline, dir: Direction, a: f64) -> [(ScaledTensorBSpline, f64); 2] {
    let knots: &LocalKnots = match dir {
        Direction::ConstU => &b.uknots,
        Direction::ConstV => &b.vknots,
    };
    let s = insert_knot(knots, a).expect("split knot strictly inside the support");
    let make = |k: LocalKnots| match dir {
        Direction::ConstU => ScaledTensorBSpline {
            uknots: k,
            vknots: b.vknots.clone(),
            scale: 0.0,
            coef: 0.0,
        },
        Direction::ConstV => ScaledTensorBSpline {
            uknots: b.uknots.clone(),
            vknots: k,
            scale: 0.0,
            coef: 0.0,
        },
    };
    [(make(s.first), s.alpha1), (make(s.second), s.alpha2)]
}
