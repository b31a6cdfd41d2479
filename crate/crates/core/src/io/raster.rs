use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lr::{LRSurface, OccupancyMask};

pub const DEFAULT_NODATA: f64 = -9999.0;

/// Regular grid of values; row 0 is the northernmost row.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub ncols: usize,
    pub nrows: usize,
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn new(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64, nodata: f64) -> Result<Raster> {
        if ncols == 0 || nrows == 0 {
            return Err(Error::InvalidInput("raster needs at least one row and column".into()));
        }
        if !(cellsize > 0.0 && cellsize.is_finite()) {
            return Err(Error::InvalidInput(format!("invalid cell size {cellsize}")));
        }
        Ok(Raster {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata,
            values: vec![nodata; ncols * nrows],
        })
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        self.values[row * self.ncols + col] = v;
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        v == self.nodata || v.is_nan()
    }

    pub fn value(&self, col: usize, row: usize) -> Option<f64> {
        let v = self.get(col, row);
        (!self.is_nodata(v)).then_some(v)
    }

    /// Centre of a cell.
    pub fn center(&self, col: usize, row: usize) -> (f64, f64) {
        (
            self.xll + (col as f64 + 0.5) * self.cellsize,
            self.yll + ((self.nrows - row) as f64 - 0.5) * self.cellsize,
        )
    }

    pub fn extent(&self) -> crate::bspline::Rect {
        crate::bspline::Rect::new(
            self.xll,
            self.xll + self.ncols as f64 * self.cellsize,
            self.yll,
            self.yll + self.nrows as f64 * self.cellsize,
        )
    }

    /// Number of cells holding data.
    pub fn data_count(&self) -> usize {
        self.values.iter().filter(|&&v| !self.is_nodata(v)).count()
    }

    /// Fill every cell from its centre; `None` marks no data.
    pub fn fill(&mut self, f: impl Fn(f64, f64) -> Option<f64> + Sync) {
        let ncols = self.ncols;
        let nodata = self.nodata;
        let this = &*self;
        let vals: Vec<f64> = (0..self.values.len())
            .into_par_iter()
            .map(|k| {
                let (x, y) = this.center(k % ncols, k / ncols);
                f(x, y).unwrap_or(nodata)
            })
            .collect();
        self.values = vals;
    }

    /// Bilinear interpolation of the four cell centres around `(x, y)`.
    /// Inside the outer half cells the nearest patch is extended linearly.
    pub fn bilinear(&self, x: f64, y: f64) -> Option<f64> {
        raster_bilinear_eval(self, x, y)
    }

    pub fn to_asc_string(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 8 + 128);
        let _ = writeln!(s, "ncols {}", self.ncols);
        let _ = writeln!(s, "nrows {}", self.nrows);
        let _ = writeln!(s, "xllcorner {}", self.xll);
        let _ = writeln!(s, "yllcorner {}", self.yll);
        let _ = writeln!(s, "cellsize {}", self.cellsize);
        let _ = writeln!(s, "NODATA_value {}", self.nodata);
        for row in self.values.chunks(self.ncols) {
            for (i, v) in row.iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn parse_asc(text: &str, origin: &str) -> Result<Raster> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let keys = ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"];
        let mut header = [0.0f64; 6];
        for (slot, key) in header.iter_mut().zip(keys) {
            let (n, line) = lines
                .next()
                .ok_or_else(|| Error::parse(origin, 0, format!("missing header line '{key}'")))?;
            let mut it = line.split_whitespace();
            let k = it.next().unwrap_or("");
            if !k.eq_ignore_ascii_case(key) {
                return Err(Error::parse(origin, n + 1, format!("expected '{key}', found '{k}'")));
            }
            let v = it
                .next()
                .ok_or_else(|| Error::parse(origin, n + 1, format!("'{key}' has no value")))?;
            *slot = v
                .parse()
                .map_err(|_| Error::parse(origin, n + 1, format!("cannot parse '{v}'")))?;
        }
        let [nc, nr, xll, yll, cs, nodata] = header;
        if nc < 1.0 || nr < 1.0 || nc.fract() != 0.0 || nr.fract() != 0.0 {
            return Err(Error::parse(origin, 1, "ncols and nrows must be positive integers"));
        }
        let mut r = Raster::new(nc as usize, nr as usize, xll, yll, cs, nodata)
            .map_err(|e| Error::parse(origin, 5, e.to_string()))?;
        let mut k = 0;
        for (n, line) in lines {
            for tok in line.split_whitespace() {
                if k >= r.values.len() {
                    return Err(Error::parse(origin, n + 1, "more values than ncols * nrows"));
                }
                r.values[k] = tok
                    .parse()
                    .map_err(|_| Error::parse(origin, n + 1, format!("cannot parse '{tok}'")))?;
                k += 1;
            }
        }
        if k != r.values.len() {
            return Err(Error::parse(
                origin,
                0,
                format!("expected {} values, found {k}", r.values.len()),
            ));
        }
        Ok(r)
    }
}

pub fn write_asc(r: &Raster, path: &Path) -> Result<()> {
    std::fs::write(path, r.to_asc_string()).map_err(|e| Error::io(path, e))
}

pub fn read_asc(path: &Path) -> Result<Raster> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Raster::parse_asc(&text, &path.display().to_string())
}

/// Sample `F` at cell centres on a grid anchored at the lower-left corner of
/// the surface domain. Cells whose centre lies outside the domain, or in an
/// unoccupied element when a mask is given, hold no data.
pub fn raster_from_surface(surf: &LRSurface, cellsize: f64, mask: Option<&OccupancyMask>) -> Result<Raster> {
    sample_surface(surf, cellsize, mask, |e, x, y| surf.eval_in_element(e, x, y, 0, 0))
}

pub(crate) fn sample_surface(
    surf: &LRSurface,
    cellsize: f64,
    mask: Option<&OccupancyMask>,
    f: impl Fn(usize, f64, f64) -> f64 + Sync,
) -> Result<Raster> {
    if !(cellsize > 0.0 && cellsize.is_finite()) {
        return Err(Error::InvalidInput(format!("invalid cell size {cellsize}")));
    }
    let d = surf.domain();
    let ncols = ((d.width() / cellsize).ceil() as usize).max(1);
    let nrows = ((d.height() / cellsize).ceil() as usize).max(1);
    let mut r = Raster::new(ncols, nrows, d.u0, d.v0, cellsize, DEFAULT_NODATA)?;
    r.fill(|x, y| {
        let e = surf.element_at(x, y)?;
        if let Some(m) = mask {
            if !m.is_occupied(e) {
                return None;
            }
        }
        Some(f(e, x, y))
    });
    Ok(r)
}

pub fn raster_bilinear_eval(r: &Raster, x: f64, y: f64) -> Option<f64> {
    let ext = r.extent();
    if !ext.contains(x, y) {
        return None;
    }
    let fx = (x - r.xll) / r.cellsize - 0.5;
    let fy = (y - r.yll) / r.cellsize - 0.5;
    let axis = |f: f64, n: usize| -> (usize, usize, f64) {
        if n == 1 {
            return (0, 0, 0.0);
        }
        let i = (f.floor().max(0.0) as usize).min(n - 2);
        (i, i + 1, f - i as f64)
    };
    let (i0, i1, tx) = axis(fx, r.ncols);
    let (j0, j1, ty) = axis(fy, r.nrows);
    // j counts rows from the south
    let at = |i: usize, j: usize| r.value(i, r.nrows - 1 - j);
    let (a, b, c, d) = (at(i0, j0)?, at(i1, j0)?, at(i0, j1)?, at(i1, j1)?);
    Some((1.0 - ty) * ((1.0 - tx) * a + tx * b) + ty * ((1.0 - tx) * c + tx * d))
}
