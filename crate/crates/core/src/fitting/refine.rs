use std::collections::BTreeMap;

use ordered_float::OrderedFloat;

use crate::bspline::Rect;
use crate::lr::{Direction, LRSurface, Meshline};

use super::accuracy::AccuracyReport;
use super::config::FitConfig;

/// Meshlines refining every element with points out of tolerance.
///
/// Each such element is halved across its longer side (the other side if the
/// minimum element size forbids it). The line spans the support of the
/// overlapping B-spline with the shortest extent along the line, so it
/// traverses at least one support completely.
pub fn select_refinements(surf: &LRSurface, report: &AccuracyReport, config: &FitConfig) -> Vec<Meshline> {
    assert_eq!(report.elements.len(), surf.elements().len(), "stale accuracy report");
    let min = config.min_element_size.unwrap_or((0.0, 0.0));
    let mut accepted: Vec<Meshline> = Vec::new();
    for (ei, st) in report.elements.iter().enumerate() {
        if st.out_of_tol == 0 {
            continue;
        }
        let e = &surf.elements()[ei];
        let r = e.rect;
        let order = if r.width() >= r.height() {
            [Direction::ConstU, Direction::ConstV]
        } else {
            [Direction::ConstV, Direction::ConstU]
        };
        for dir in order {
            if let Some(m) = candidate(surf, ei, dir) {
                if respects_min_size(surf, &m, &accepted, min) {
                    accepted.push(m);
                    break;
                }
            }
        }
    }
    coalesce(accepted)
}

fn candidate(surf: &LRSurface, ei: usize, dir: Direction) -> Option<Meshline> {
    let e = &surf.elements()[ei];
    let (cu, cv) = e.rect.center();
    let bs = surf.bsplines();
    let best = e
        .bsplines
        .iter()
        .map(|&k| bs[k].support())
        .min_by(|a, b| {
            let ea = extent_along(a, dir);
            let eb = extent_along(b, dir);
            ea.total_cmp(&eb)
                .then(a.u0.total_cmp(&b.u0))
                .then(a.v0.total_cmp(&b.v0))
        })?;
    Some(match dir {
        Direction::ConstU => Meshline::const_u(cu, best.v0, best.v1),
        Direction::ConstV => Meshline::const_v(cv, best.u0, best.u1),
    })
}

fn extent_along(r: &Rect, dir: Direction) -> f64 {
    match dir {
        Direction::ConstU => r.height(),
        Direction::ConstV => r.width(),
    }
}

/// `(fixed-axis lo, hi, span-axis lo, hi)` of a rectangle for lines in `dir`.
fn axes(r: &Rect, dir: Direction) -> (f64, f64, f64, f64) {
    match dir {
        Direction::ConstU => (r.u0, r.u1, r.v0, r.v1),
        Direction::ConstV => (r.v0, r.v1, r.u0, r.u1),
    }
}

fn respects_min_size(surf: &LRSurface, m: &Meshline, accepted: &[Meshline], min: (f64, f64)) -> bool {
    let limit = match m.direction {
        Direction::ConstU => min.0,
        Direction::ConstV => min.1,
    };
    if limit <= 0.0 {
        return true;
    }
    for e in surf.elements() {
        let (lo, hi, slo, shi) = axes(&e.rect, m.direction);
        if !(m.fixed > lo && m.fixed < hi && slo < m.end && shi > m.start) {
            continue;
        }
        let mut cuts = vec![lo, hi, m.fixed];
        for a in accepted {
            if a.direction == m.direction && a.fixed > lo && a.fixed < hi && slo < a.end && shi > a.start {
                cuts.push(a.fixed);
            }
        }
        cuts.sort_by(f64::total_cmp);
        // tolerate rounding in halving
        if cuts.windows(2).any(|w| w[1] - w[0] < limit * (1.0 - 1e-12)) {
            return false;
        }
    }
    true
}

/// Merge lines on the same knot line whose spans overlap or touch.
fn coalesce(lines: Vec<Meshline>) -> Vec<Meshline> {
    let mut groups: BTreeMap<(u8, OrderedFloat<f64>), Vec<(f64, f64)>> = BTreeMap::new();
    for m in &lines {
        let d = match m.direction {
            Direction::ConstU => 0,
            Direction::ConstV => 1,
        };
        groups.entry((d, OrderedFloat(m.fixed))).or_default().push((m.start, m.end));
    }
    let mut out = Vec::new();
    for ((d, fixed), mut spans) in groups {
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cur = spans[0];
        let mut push = |s: (f64, f64)| {
            out.push(if d == 0 {
                Meshline::const_u(fixed.0, s.0, s.1)
            } else {
                Meshline::const_v(fixed.0, s.0, s.1)
            })
        };
        for &s in &spans[1..] {
            if s.0 <= cur.1 {
                cur.1 = cur.1.max(s.1);
            } else {
                push(cur);
                cur = s;
            }
        }
        push(cur);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::{GlobalKnotVector, TPSurface};
    use crate::fitting::accuracy::ElementStats;

    fn report_for(surf: &LRSurface, bad: &[usize]) -> AccuracyReport {
        let mut elements = vec![ElementStats::default(); surf.elements().len()];
        for &e in bad {
            elements[e].out_of_tol = 1;
            elements[e].count = 1;
        }
        AccuracyReport {
            num_points: 0,
            num_coefs: surf.num_coefs(),
            num_elements: elements.len(),
            max_dist: 0.0,
            avg_dist: 0.0,
            rmse: 0.0,
            bands: [0; 3],
            out_of_tol: bad.len(),
            outside_domain: 0,
            elements,
        }
    }

    fn surface(w: f64, h: f64, n: usize) -> LRSurface {
        let u = GlobalKnotVector::uniform(0.0, w, 2, n).unwrap();
        let v = GlobalKnotVector::uniform(0.0, h, 2, n).unwrap();
        LRSurface::from_tensor_product(&TPSurface::new(u, v, vec![0.0; n * n]).unwrap())
    }

    #[test]
    fn nothing_to_refine() {
        let s = surface(1.0, 1.0, 5);
        assert!(select_refinements(&s, &report_for(&s, &[]), &FitConfig::default()).is_empty());
    }

    #[test]
    fn line_traverses_a_support() {
        let s = surface(2.0, 1.0, 6);
        let e = s.element_at(0.9, 0.6).unwrap();
        let lines = select_refinements(&s, &report_for(&s, &[e]), &FitConfig::default());
        assert_eq!(lines.len(), 1);
        let m = lines[0];
        assert_eq!(m.direction, Direction::ConstU);
        let r = s.elements()[e].rect;
        assert_eq!(m.fixed, r.center().0);
        assert!(s.elements()[e].bsplines.iter().any(|&k| {
            let sp = s.bsplines()[k].support();
            m.start <= sp.v0 && m.end >= sp.v1 && sp.u0 < m.fixed && m.fixed < sp.u1
        }));
        let mut t = s.clone();
        assert_eq!(t.insert_meshlines(&lines).unwrap(), 1);
        assert!(t.num_coefs() > s.num_coefs());
    }

    #[test]
    fn minimum_element_size_is_respected() {
        let s = surface(16.0, 16.0, 6);
        let cfg = FitConfig {
            min_element_size: Some((2.0, 2.0)),
            ..FitConfig::default()
        };
        let mut t = s.clone();
        for _ in 0..6 {
            let all: Vec<usize> = (0..t.elements().len()).collect();
            let lines = select_refinements(&t, &report_for(&t, &all), &cfg);
            if lines.is_empty() {
                break;
            }
            t.insert_meshlines(&lines).unwrap();
        }
        for e in t.elements() {
            assert!(e.rect.width() >= 2.0 - 1e-9 && e.rect.height() >= 2.0 - 1e-9, "{:?}", e.rect);
        }
        assert!(t.elements().len() > s.elements().len());
    }

    #[test]
    fn duplicate_lines_coalesce() {
        let lines = coalesce(vec![
            Meshline::const_u(0.5, 0.0, 0.5),
            Meshline::const_u(0.5, 0.4, 1.0),
            Meshline::const_u(0.5, 2.0, 3.0),
            Meshline::const_v(0.5, 0.0, 1.0),
        ]);
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], Meshline::const_u(0.5, 0.0, 1.0));
    }
}
