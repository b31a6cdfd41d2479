use std::collections::BTreeMap;

use ordered_float::OrderedFloat;

/// Orientation of a meshline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Line of constant `u`, spanning an interval in `v`.
    ConstU,
    /// Line of constant `v`, spanning an interval in `u`.
    ConstV,
}

impl Direction {
    pub fn other(self) -> Direction {
        match self {
            Direction::ConstU => Direction::ConstV,
            Direction::ConstV => Direction::ConstU,
        }
    }
}

/// Axis-parallel knot line segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Meshline {
    pub direction: Direction,
    pub fixed: f64,
    pub start: f64,
    pub end: f64,
    pub multiplicity: usize,
}

impl Meshline {
    pub fn const_u(fixed: f64, start: f64, end: f64) -> Self {
        Meshline {
            direction: Direction::ConstU,
            fixed,
            start,
            end,
            multiplicity: 1,
        }
    }

    pub fn const_v(fixed: f64, start: f64, end: f64) -> Self {
        Meshline {
            direction: Direction::ConstV,
            fixed,
            start,
            end,
            multiplicity: 1,
        }
    }

    pub fn with_multiplicity(mut self, m: usize) -> Self {
        self.multiplicity = m;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Seg {
    pub start: f64,
    pub end: f64,
    pub mult: usize,
}

/// Parallel knot lines keyed by their fixed parameter; each line is a sorted
/// list of disjoint segments with piecewise-constant multiplicity.
#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct LineSet {
    lines: BTreeMap<OrderedFloat<f64>, Vec<Seg>>,
}

impl LineSet {
    pub fn keys(&self) -> impl Iterator<Item = f64> + '_ {
        self.lines.keys().map(|k| k.0)
    }

    pub fn get(&self, fixed: f64) -> Option<&Vec<Seg>> {
        self.lines.get(&OrderedFloat(fixed))
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &Vec<Seg>)> {
        self.lines.iter().map(|(k, v)| (k.0, v))
    }

    /// Lines with fixed value strictly between `lo` and `hi`.
    pub fn range_open(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, &Vec<Seg>)> {
        use std::ops::Bound::Excluded;
        let it = if lo < hi {
            Some(
                self.lines
                    .range((Excluded(OrderedFloat(lo)), Excluded(OrderedFloat(hi))))
                    .map(|(k, v)| (k.0, v)),
            )
        } else {
            None
        };
        it.into_iter().flatten()
    }

    pub fn restore(&mut self, fixed: f64, prev: Option<Vec<Seg>>) {
        match prev {
            Some(v) => {
                self.lines.insert(OrderedFloat(fixed), v);
            }
            None => {
                self.lines.remove(&OrderedFloat(fixed));
            }
        }
    }

    /// Apply `f` to the multiplicity over `[start, end]` (0 where uncovered).
    fn update(&mut self, fixed: f64, start: f64, end: f64, f: impl Fn(usize) -> usize) {
        let segs = self.lines.entry(OrderedFloat(fixed)).or_default();
        let mut cuts: Vec<f64> = vec![start, end];
        for s in segs.iter() {
            cuts.push(s.start);
            cuts.push(s.end);
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        let mult_at = |segs: &[Seg], a: f64, b: f64| {
            segs.iter()
                .find(|s| s.start <= a && b <= s.end)
                .map_or(0, |s| s.mult)
        };
        let mut out: Vec<Seg> = Vec::with_capacity(cuts.len());
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mut m = mult_at(segs, a, b);
            if a >= start && b <= end {
                m = f(m);
            }
            if m == 0 {
                continue;
            }
            match out.last_mut() {
                Some(last) if last.end == a && last.mult == m => last.end = b,
                _ => out.push(Seg {
                    start: a,
                    end: b,
                    mult: m,
                }),
            }
        }
        *segs = out;
    }

    /// Add `m` to the multiplicity over `[start, end]`, capped at `cap`.
    pub fn add(&mut self, fixed: f64, start: f64, end: f64, m: usize, cap: usize) {
        self.update(fixed, start, end, |old| (old + m).min(cap));
    }

    /// Raise multiplicity over `[start, end]` to at least `m`.
    pub fn raise_to(&mut self, fixed: f64, start: f64, end: f64, m: usize) {
        self.update(fixed, start, end, |old| old.max(m));
    }

    /// Minimum multiplicity over `[start, end]`; 0 if any part is uncovered.
    pub fn min_mult(&self, fixed: f64, start: f64, end: f64) -> usize {
        match self.get(fixed) {
            Some(segs) => min_mult_in(segs, start, end),
            None => 0,
        }
    }
}

pub(crate) fn min_mult_in(segs: &[Seg], start: f64, end: f64) -> usize {
    let mut pos = start;
    let mut m = usize::MAX;
    for s in segs {
        if s.end <= pos {
            continue;
        }
        if s.start > pos {
            return 0;
        }
        m = m.min(s.mult);
        pos = s.end;
        if pos >= end {
            return m;
        }
    }
    0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_and_coverage() {
        let mut l = LineSet::default();
        l.add(1.0, 0.0, 2.0, 1, 3);
        assert_eq!(l.min_mult(1.0, 0.0, 2.0), 1);
        assert_eq!(l.min_mult(1.0, 0.0, 2.5), 0);
        l.add(1.0, 1.0, 3.0, 1, 3);
        assert_eq!(l.min_mult(1.0, 1.0, 2.0), 2);
        assert_eq!(l.min_mult(1.0, 0.0, 3.0), 1);
        assert_eq!(l.get(1.0).unwrap().len(), 3);
        l.add(1.0, 0.0, 3.0, 5, 3);
        assert_eq!(l.min_mult(1.0, 0.0, 3.0), 3);
        assert_eq!(l.get(1.0).unwrap().len(), 1);
    }

    #[test]
    fn raise_merges_adjacent() {
        let mut l = LineSet::default();
        l.raise_to(0.5, 0.0, 1.0, 1);
        l.raise_to(0.5, 1.0, 2.0, 1);
        assert_eq!(l.get(0.5).unwrap().len(), 1);
        l.raise_to(0.5, 0.5, 1.5, 1);
        assert_eq!(l.get(0.5).unwrap().len(), 1);
        assert_eq!(l.range_open(0.0, 1.0).count(), 1);
        assert_eq!(l.range_open(0.5, 1.0).count(), 0);
    }
}
