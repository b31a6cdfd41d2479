use std::fmt::Write as _;
use std::path::Path;

use crate::bspline::{LocalKnots, ScaledTensorBSpline};
use crate::error::{Error, Result};
use crate::lr::LRSurface;

const MAGIC: &str = "LRSURF";
const VERSION: u32 = 1;

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Text form: header, global knot values, then one line per B-spline with
/// knot indices, scaling factor and coefficient.
pub fn lrsurf_to_string(surf: &LRSurface) -> String {
    let bs = surf.bsplines();
    let uvals = distinct(bs.iter().flat_map(|b| b.uknots.values().iter().copied()));
    let vvals = distinct(bs.iter().flat_map(|b| b.vknots.values().iter().copied()));
    let (p1, p2) = surf.degrees();
    let mut s = String::with_capacity(64 + bs.len() * (16 + 4 * (p1 + p2 + 4)));
    let _ = writeln!(s, "{MAGIC} {VERSION}");
    let _ = writeln!(s, "{p1} {p2} 1");
    for vals in [&uvals, &vvals] {
        let _ = write!(s, "{}", vals.len());
        for v in vals.iter() {
            let _ = write!(s, " {v:?}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "{}", bs.len());
    let index = |vals: &[f64], x: f64| vals.binary_search_by(|k| k.total_cmp(&x)).unwrap();
    for b in bs {
        let mut first = true;
        for (vals, knots) in [(&uvals, &b.uknots), (&vvals, &b.vknots)] {
            for &k in knots.values() {
                if !first {
                    s.push(' ');
                }
                first = false;
                let _ = write!(s, "{}", index(vals, k));
            }
        }
        let _ = writeln!(s, " {:?} {:?}", b.scale, b.coef);
    }
    s
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    origin: &'a str,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<Vec<&'a str>> {
        for (n, l) in self.it.by_ref() {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            self.line = n + 1;
            return Ok(t.split_whitespace().collect());
        }
        Err(Error::parse(self.origin, self.line + 1, "unexpected end of file"))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::parse(self.origin, self.line, msg)
    }

    fn num<T: std::str::FromStr>(&self, tok: &str) -> Result<T> {
        tok.parse().map_err(|_| self.err(format!("cannot parse '{tok}'")))
    }
}

pub fn parse_lrsurf(text: &str, origin: &str) -> Result<LRSurface> {
    let mut l = Lines {
        it: text.lines().enumerate(),
        origin,
        line: 0,
    };
    let head = l.next()?;
    if head.len() != 2 || head[0] != MAGIC {
        return Err(l.err("not an LRSURF file"));
    }
    let version: u32 = l.num(head[1])?;
    if version != VERSION {
        return Err(l.err(format!("unsupported version {version}")));
    }
    let dims = l.next()?;
    if dims.len() != 3 {
        return Err(l.err("expected 'p1 p2 dim'"));
    }
    let p1: usize = l.num(dims[0])?;
    let p2: usize = l.num(dims[1])?;
    let dim: usize = l.num(dims[2])?;
    if dim != 1 {
        return Err(l.err(format!("only scalar surfaces are supported, found dim {dim}")));
    }
    let mut knots = Vec::new();
    for _ in 0..2 {
        let toks = l.next()?;
        let n: usize = l.num(toks.first().copied().unwrap_or(""))?;
        if toks.len() != n + 1 {
            return Err(l.err(format!("expected {n} knot values, found {}", toks.len() - 1)));
        }
        let vals: Vec<f64> = toks[1..].iter().map(|t| l.num(t)).collect::<Result<_>>()?;
        if vals.iter().any(|v| !v.is_finite()) || vals.windows(2).any(|w| w[1] <= w[0]) {
            return Err(l.err("knot values must be finite and strictly increasing"));
        }
        knots.push(vals);
    }
    let toks = l.next()?;
    if toks.len() != 1 {
        return Err(l.err("expected the number of B-splines"));
    }
    let nb: usize = l.num(toks[0])?;
    let mut bsplines = Vec::with_capacity(nb);
    let width = p1 + p2 + 4 + 2;
    for _ in 0..nb {
        let toks = l.next()?;
        if toks.len() != width {
            return Err(l.err(format!("expected {width} fields, found {}", toks.len())));
        }
        let mut local = Vec::new();
        for (vals, range) in [(&knots[0], 0..p1 + 2), (&knots[1], p1 + 2..p1 + p2 + 4)] {
            let idx: Vec<usize> = toks[range].iter().map(|t| l.num(t)).collect::<Result<_>>()?;
            if idx.iter().any(|&i| i >= vals.len()) {
                return Err(l.err("knot index out of range"));
            }
            if idx.windows(2).any(|w| w[1] < w[0]) {
                return Err(l.err("knot indices must be non-decreasing"));
            }
            let lk = LocalKnots::new(idx.iter().map(|&i| vals[i]).collect()).map_err(|e| l.err(e.to_string()))?;
            local.push(lk);
        }
        let scale: f64 = l.num(toks[width - 2])?;
        let coef: f64 = l.num(toks[width - 1])?;
        let vk = local.pop().unwrap();
        let uk = local.pop().unwrap();
        let b = ScaledTensorBSpline::new(uk, vk, scale, coef).map_err(|e| l.err(e.to_string()))?;
        bsplines.push(b);
    }
    if let Ok(extra) = l.next() {
        return Err(l.err(format!("unexpected trailing content '{}'", extra.join(" "))));
    }
    LRSurface::from_bsplines((p1, p2), bsplines).map_err(|e| Error::parse(origin, 0, e.to_string()))
}

pub fn write_lrsurf(surf: &LRSurface, path: &Path) -> Result<()> {
    std::fs::write(path, lrsurf_to_string(surf)).map_err(|e| Error::io(path, e))
}

pub fn read_lrsurf(path: &Path) -> Result<LRSurface> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lrsurf(&text, &path.display().to_string())
}
