use std::collections::{BTreeMap, HashMap};

use ordered_float::OrderedFloat;

use crate::bspline::{insert_knot, GlobalKnotVector, LocalKnots, Rect, TPSurface};
use crate::error::{Error, Result};
use crate::lr::{Direction, LRSurface};

#[derive(Debug, Clone, PartialEq)]
pub struct TPPatch {
    pub rect: Rect,
    pub surface: TPSurface,
}

/// Tensor-product pieces tiling an LR surface's domain.
#[derive(Debug, Clone, PartialEq)]
pub struct TPPatchSet {
    pub patches: Vec<TPPatch>,
    /// Pairs of patches sharing an interface of positive length.
    pub adjacency: Vec<(usize, usize)>,
    domain: Rect,
}

impl TPPatchSet {
    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    /// Patch owning `(u, v)`: half-open cells, closed at the domain maximum.
    pub fn locate(&self, u: f64, v: f64) -> Option<usize> {
        let d = self.domain;
        let inside = |x: f64, lo: f64, hi: f64, top: f64| lo <= x && (x < hi || (x == hi && hi == top));
        self.patches
            .iter()
            .position(|p| inside(u, p.rect.u0, p.rect.u1, d.u1) && inside(v, p.rect.v0, p.rect.v1, d.v1))
    }

    pub fn evaluate(&self, u: f64, v: f64) -> Result<f64> {
        let k = self.locate(u, v).ok_or(Error::OutOfDomain { u, v })?;
        self.patches[k].surface.eval(u, v)
    }
}

type Lines = BTreeMap<OrderedFloat<f64>, Vec<(f64, f64)>>;

struct MeshIndex {
    u: Lines,
    v: Lines,
}

impl MeshIndex {
    fn new(surf: &LRSurface) -> MeshIndex {
        let mut u = Lines::new();
        let mut v = Lines::new();
        for m in surf.mesh_segments() {
            let map = match m.direction {
                Direction::ConstU => &mut u,
                Direction::ConstV => &mut v,
            };
            map.entry(OrderedFloat(m.fixed)).or_default().push((m.start, m.end));
        }
        for segs in u.values_mut().chain(v.values_mut()) {
            segs.sort_by(|a, b| a.0.total_cmp(&b.0));
        }
        MeshIndex { u, v }
    }

    fn lines(&self, dir: Direction) -> &Lines {
        match dir {
            Direction::ConstU => &self.u,
            Direction::ConstV => &self.v,
        }
    }
}

/// `(fixed lo, fixed hi, span lo, span hi)` of a region for lines in `dir`.
fn axes(r: &Rect, dir: Direction) -> (f64, f64, f64, f64) {
    match dir {
        Direction::ConstU => (r.u0, r.u1, r.v0, r.v1),
        Direction::ConstV => (r.v0, r.v1, r.u0, r.u1),
    }
}

fn covers(segs: &[(f64, f64)], lo: f64, hi: f64) -> bool {
    let mut pos = lo;
    for &(s, e) in segs {
        if e <= pos {
            continue;
        }
        if s > pos {
            return false;
        }
        pos = e;
        if pos >= hi {
            return true;
        }
    }
    false
}

fn touches(segs: &[(f64, f64)], lo: f64, hi: f64) -> bool {
    segs.iter().any(|&(s, e)| s < hi && e > lo)
}

/// Knot lines of `dir` strictly inside the region that reach into it, with
/// whether they cross it completely.
fn region_lines(mesh: &MeshIndex, r: &Rect, dir: Direction) -> Vec<(f64, bool)> {
    use std::ops::Bound::Excluded;
    let (lo, hi, slo, shi) = axes(r, dir);
    mesh.lines(dir)
        .range((Excluded(OrderedFloat(lo)), Excluded(OrderedFloat(hi))))
        .filter(|(_, segs)| touches(segs, slo, shi))
        .map(|(a, segs)| (a.0, covers(segs, slo, shi)))
        .collect()
}

/// Values `a` of `dir`-lines at which some orthogonal line inside the region
/// terminates.
fn t_joints(mesh: &MeshIndex, r: &Rect, dir: Direction) -> Vec<f64> {
    use std::ops::Bound::Excluded;
    let other = dir.other();
    let (lo, hi, slo, shi) = axes(r, dir);
    let mut out = Vec::new();
    for (_, segs) in mesh
        .lines(other)
        .range((Excluded(OrderedFloat(slo)), Excluded(OrderedFloat(shi))))
    {
        for &(s, e) in segs {
            if s < hi && e > lo {
                for end in [s, e] {
                    if end > lo && end < hi {
                        out.push(end);
                    }
                }
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    // a T-joint needs the stem line to exist at that value
    let present: Vec<f64> = region_lines(mesh, r, dir).into_iter().map(|x| x.0).collect();
    out.retain(|a| present.binary_search_by(|p| p.total_cmp(a)).is_ok());
    out
}

fn split_rect(r: &Rect, dir: Direction, a: f64) -> (Rect, Rect) {
    match dir {
        Direction::ConstU => (Rect::new(r.u0, a, r.v0, r.v1), Rect::new(a, r.u1, r.v0, r.v1)),
        Direction::ConstV => (Rect::new(r.u0, r.u1, r.v0, a), Rect::new(r.u0, r.u1, a, r.v1)),
    }
}

/// Number of knot lines inside the region that stop before crossing it.
fn segmented_count(mesh: &MeshIndex, r: &Rect) -> usize {
    [Direction::ConstU, Direction::ConstV]
        .iter()
        .map(|&d| region_lines(mesh, r, d).iter().filter(|x| !x.1).count())
        .sum()
}

/// Weights of the crossing and balance criteria at a recursion depth.
pub fn score_weights(depth: usize) -> (f64, f64) {
    let t = depth.min(8) as f64 / 8.0;
    (1.0 - 0.8 * t, 0.2 + 0.8 * t)
}

fn choose_split(surf: &LRSurface, mesh: &MeshIndex, r: &Rect, depth: usize) -> Option<(Direction, f64)> {
    let elems: Vec<Rect> = surf
        .elements()
        .iter()
        .map(|e| e.rect)
        .filter(|e| r.contains_rect(e))
        .collect();
    let (wa, wb) = score_weights(depth);
    let mut best: Option<(f64, Direction, f64)> = None;
    for dir in [Direction::ConstU, Direction::ConstV] {
        let lines: Vec<f64> = region_lines(mesh, r, dir).into_iter().map(|x| x.0).collect();
        for a in t_joints(mesh, r, dir) {
            let crossed = elems
                .iter()
                .filter(|e| {
                    let (lo, hi, _, _) = axes(e, dir);
                    lo < a && a < hi
                })
                .count();
            let left = lines.iter().filter(|&&x| x < a).count();
            let right = lines.iter().filter(|&&x| x > a).count();
            let imbalance = left.abs_diff(right) as f64 / (left + right).max(1) as f64;
            let score = wa * crossed as f64 / elems.len().max(1) as f64 + wb * imbalance;
            if best.map_or(true, |b| score < b.0) {
                best = Some((score, dir, a));
            }
        }
    }
    best.map(|b| (b.1, b.2))
}

/// Recursively split the surface into tensor-product pieces until each piece
/// has at most `max_segmented` knot lines that end inside it, then complete
/// every piece to a tensor-product surface by knot insertion.
pub fn split_to_tp(surf: &LRSurface, max_segmented: usize) -> Result<TPPatchSet> {
    let mesh = MeshIndex::new(surf);
    let mut regions = Vec::new();
    let mut stack = vec![(surf.domain(), 0usize)];
    while let Some((r, depth)) = stack.pop() {
        if segmented_count(&mesh, &r) <= max_segmented {
            regions.push(r);
            continue;
        }
        match choose_split(surf, &mesh, &r, depth) {
            Some((dir, a)) => {
                let (lo, hi) = split_rect(&r, dir, a);
                stack.push((hi, depth + 1));
                stack.push((lo, depth + 1));
            }
            None => {
                log::info!("no T-joint candidate in {r:?}; completing it directly");
                regions.push(r);
            }
        }
    }
    let patches = regions
        .into_iter()
        .map(|rect| Ok(TPPatch { rect, surface: tp_patch(surf, &rect)? }))
        .collect::<Result<Vec<_>>>()?;
    let mut adjacency = Vec::new();
    for i in 0..patches.len() {
        for j in i + 1..patches.len() {
            let (a, b) = (&patches[i].rect, &patches[j].rect);
            let share_u = (a.u1 == b.u0 || b.u1 == a.u0) && a.v0.max(b.v0) < a.v1.min(b.v1);
            let share_v = (a.v1 == b.v0 || b.v1 == a.v0) && a.u0.max(b.u0) < a.u1.min(b.u1);
            if share_u || share_v {
                adjacency.push((i, j));
            }
        }
    }
    Ok(TPPatchSet {
        patches,
        adjacency,
        domain: surf.domain(),
    })
}

/// The LR surface on a sub-rectangle as a tensor-product surface over the
/// union of all knot lines meeting the rectangle, with clamped ends.
pub fn tp_patch(surf: &LRSurface, r: &Rect) -> Result<TPSurface> {
    let (p1, p2) = surf.degrees();
    let d = surf.domain();
    if !(d.contains_rect(r) && r.width() > 0.0 && r.height() > 0.0) {
        return Err(Error::InvalidInput(format!("{r:?} is not a sub-rectangle of {d:?}")));
    }
    let active: Vec<_> = surf
        .bsplines()
        .iter()
        .filter(|b| {
            let s = b.support();
            s.u0 < r.u1 && s.u1 > r.u0 && s.v0 < r.v1 && s.v1 > r.v0
        })
        .collect();
    let uk = completed_knots(active.iter().map(|b| &b.uknots), r.u0, r.u1, p1)?;
    let vk = completed_knots(active.iter().map(|b| &b.vknots), r.v0, r.v1, p2)?;
    let mut ucache = Restrictor::new(&uk);
    let mut vcache = Restrictor::new(&vk);
    let n1 = uk.num_basis();
    let mut coefs = vec![0.0; n1 * vk.num_basis()];
    for b in active {
        let bu = ucache.restrict(&b.uknots)?.to_vec();
        let bv = vcache.restrict(&b.vknots)?;
        let w = b.scale * b.coef;
        for &(j, bj) in bv {
            for &(i, bi) in &bu {
                coefs[j * n1 + i] += w * bi * bj;
            }
        }
    }
    TPSurface::new(uk, vk, coefs)
}

fn completed_knots<'a>(
    locals: impl Iterator<Item = &'a LocalKnots>,
    lo: f64,
    hi: f64,
    p: usize,
) -> Result<GlobalKnotVector> {
    let mut mult: BTreeMap<OrderedFloat<f64>, usize> = BTreeMap::new();
    for k in locals {
        let vals = k.values();
        let mut i = 0;
        while i < vals.len() {
            let a = vals[i];
            let mut j = i;
            while j < vals.len() && vals[j] == a {
                j += 1;
            }
            if a > lo && a < hi {
                let m = mult.entry(OrderedFloat(a)).or_default();
                *m = (*m).max(j - i);
            }
            i = j;
        }
    }
    let mut values = vec![lo; p + 1];
    for (a, m) in mult {
        values.extend(std::iter::repeat(a.0).take(m));
    }
    values.extend(std::iter::repeat(hi).take(p + 1));
    GlobalKnotVector::new(values, p)
}

/// Expresses univariate B-splines restricted to a knot vector's domain in that
/// knot vector's basis.
struct Restrictor<'a> {
    target: &'a GlobalKnotVector,
    distinct: Vec<f64>,
    index: HashMap<Vec<u64>, usize>,
    cache: HashMap<Vec<u64>, Vec<(usize, f64)>>,
}

fn key(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

impl<'a> Restrictor<'a> {
    fn new(target: &'a GlobalKnotVector) -> Self {
        let p = target.degree();
        let index = (0..target.num_basis())
            .map(|i| (key(&target.values()[i..i + p + 2]), i))
            .collect();
        Restrictor {
            target,
            distinct: target.distinct(),
            index,
            cache: HashMap::new(),
        }
    }

    fn target_mult(&self, a: f64) -> usize {
        self.target.multiplicity(a)
    }

    fn restrict(&mut self, b: &LocalKnots) -> Result<&[(usize, f64)]> {
        let k = key(b.values());
        if !self.cache.contains_key(&k) {
            let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
            self.refine(b.clone(), 1.0, &mut acc)?;
            self.cache.insert(k.clone(), acc.into_iter().collect());
        }
        Ok(&self.cache[&k])
    }

    fn refine(&self, b: LocalKnots, w: f64, acc: &mut BTreeMap<usize, f64>) -> Result<()> {
        let (lo, hi) = self.target.domain();
        let (t0, t1) = (b.first(), b.last());
        let start = self.distinct.partition_point(|&x| x <= t0);
        let missing = self.distinct[start..]
            .iter()
            .take_while(|&&x| x < t1)
            .find(|&&x| b.multiplicity(x) < self.target_mult(x));
        match missing {
            Some(&a) => {
                let s = insert_knot(&b, a)?;
                if s.alpha1 != 0.0 {
                    self.refine(s.first, w * s.alpha1, acc)?;
                }
                if s.alpha2 != 0.0 {
                    self.refine(s.second, w * s.alpha2, acc)?;
                }
                Ok(())
            }
            None => {
                if t0 >= lo && t1 <= hi {
                    let i = *self.index.get(&key(b.values())).ok_or_else(|| {
                        Error::Mismatch(format!("refined knots {:?} missing from patch basis", b.values()))
                    })?;
                    *acc.entry(i).or_default() += w;
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lr::Meshline;

    fn refined() -> LRSurface {
        let k = GlobalKnotVector::uniform(0.0, 4.0, 2, 6).unwrap();
        let tp = TPSurface::from_greville_fn(k.clone(), k, |x, y| (x * 0.9).sin() * (1.0 + y * y * 0.1));
        let mut s = LRSurface::from_tensor_product(&tp);
        s.insert_meshline(Meshline::const_u(0.5, 0.0, 2.0)).unwrap();
        s.insert_meshline(Meshline::const_v(0.5, 0.0, 2.0)).unwrap();
        s.insert_meshline(Meshline::const_u(3.5, 2.0, 4.0)).unwrap();
        s.insert_meshline(Meshline::const_v(3.25, 1.0, 4.0)).unwrap();
        s
    }

    fn check_fidelity(s: &LRSurface, set: &TPPatchSet) {
        for k in 0..300 {
            let u = 4.0 * (k as f64 * 0.618_033_988_7).fract();
            let v = 4.0 * (k as f64 * 0.414_213_562_3).fract();
            let a = s.value(u, v);
            let b = set.evaluate(u, v).unwrap();
            assert!((a - b).abs() < 1e-12, "({u}, {v}): {a} vs {b}");
        }
        let area: f64 = set.patches.iter().map(|p| p.rect.area()).sum();
        assert!((area - s.domain().area()).abs() < 1e-12);
    }

    #[test]
    fn tensor_product_is_one_patch() {
        let k = GlobalKnotVector::uniform(0.0, 1.0, 2, 5).unwrap();
        let tp = TPSurface::from_greville_fn(k.clone(), k, |x, y| x * y);
        let s = LRSurface::from_tensor_product(&tp);
        let set = split_to_tp(&s, 0).unwrap();
        assert_eq!(set.len(), 1);
        assert_eq!(set.patches[0].surface, tp);
    }

    #[test]
    fn whole_domain_completion_matches() {
        let s = refined();
        let set = split_to_tp(&s, usize::MAX).unwrap();
        assert_eq!(set.len(), 1);
        check_fidelity(&s, &set);
    }

    #[test]
    fn split_pieces_match_and_count_is_monotone() {
        let s = refined();
        let mut last = usize::MAX;
        for m in 0..6 {
            let set = split_to_tp(&s, m).unwrap();
            check_fidelity(&s, &set);
            assert!(set.len() <= last);
            last = set.len();
        }
        assert!(split_to_tp(&s, 0).unwrap().len() > 1);
    }

    #[test]
    fn weights_shift_with_depth() {
        assert_eq!(score_weights(0), (1.0, 0.2));
        let (a, b) = score_weights(8);
        assert!((a - 0.2).abs() < 1e-15 && (b - 1.0).abs() < 1e-15);
        assert_eq!(score_weights(20), score_weights(8));
    }
}
