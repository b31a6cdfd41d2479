use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// Piecewise-linear map from elevation to tolerance. Breakpoints are sorted
/// by elevation; outside them the end tolerances are held constant.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthThreshold {
    breakpoints: Vec<(f64, f64)>,
}

impl DepthThreshold {
    pub fn new(mut breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(Error::InvalidInput("depth threshold needs a breakpoint".into()));
        }
        if breakpoints
            .iter()
            .any(|&(z, t)| !z.is_finite() || !(t > 0.0) || !t.is_finite())
        {
            return Err(Error::InvalidInput(
                "depth threshold breakpoints must be finite with positive tolerance".into(),
            ));
        }
        breakpoints.sort_by(|a, b| a.0.total_cmp(&b.0));
        if breakpoints.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidInput("repeated depth breakpoint".into()));
        }
        Ok(DepthThreshold { breakpoints })
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn tolerance(&self, z: f64) -> f64 {
        depth_threshold(z, self)
    }

    pub fn min(&self) -> f64 {
        self.breakpoints.iter().map(|b| b.1).fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.breakpoints.iter().map(|b| b.1).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Tolerance `eps(z)` by linear interpolation between breakpoints.
pub fn depth_threshold(z: f64, spec: &DepthThreshold) -> f64 {
    let b = &spec.breakpoints;
    let k = b.partition_point(|&(bz, _)| bz <= z);
    if k == 0 {
        return b[0].1;
    }
    if k == b.len() {
        return b[k - 1].1;
    }
    let (z0, t0) = b[k - 1];
    let (z1, t1) = b[k];
    t0 + (t1 - t0) * (z - z0) / (z1 - z0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Threshold {
    Fixed(f64),
    Depth(DepthThreshold),
}

impl Threshold {
    pub fn tolerance(&self, z: f64) -> f64 {
        match self {
            Threshold::Fixed(t) => *t,
            Threshold::Depth(d) => d.tolerance(z),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub degrees: (usize, usize),
    pub max_iterations: usize,
    pub threshold: Threshold,
    /// Number of coefficients of the initial tensor-product surface.
    pub initial_grid: (usize, usize),
    /// Weight of the smoothness term; the data term gets `1 - alpha1`.
    pub alpha1: f64,
    pub w2: f64,
    pub w3: f64,
    pub ls_iterations: usize,
    pub mba_passes_per_iteration: usize,
    pub min_element_size: Option<(f64, f64)>,
    pub significant_weight: f64,
    pub significant_final_weight: f64,
    /// Tolerance for significant points without their own.
    pub significant_tol: Option<f64>,
    /// Passes used for residual surfaces of limit surfaces.
    pub limit_passes: usize,
    pub weighted_mid: bool,
    pub mid_d1: f64,
    pub mid_d2: f64,
    /// Relative residual at which the conjugate gradient solver stops.
    pub cg_tolerance: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            degrees: (2, 2),
            max_iterations: 7,
            threshold: Threshold::Fixed(0.5),
            initial_grid: (10, 10),
            alpha1: 1.0e-9,
            w2: 0.5,
            w3: 0.5,
            ls_iterations: 3,
            mba_passes_per_iteration: 2,
            min_element_size: None,
            significant_weight: 5.0,
            significant_final_weight: 50.0,
            significant_tol: None,
            limit_passes: 5,
            weighted_mid: false,
            mid_d1: -20.0,
            mid_d2: 0.0,
            cg_tolerance: 1.0e-10,
        }
    }
}

/// Tolerance range of the variable-threshold setups, from the shallowest to
/// the deepest part of the survey area.
pub const VARIABLE_TOL_SHALLOW: (f64, f64) = (-0.55, 0.20022);
pub const VARIABLE_TOL_DEEP: (f64, f64) = (-27.94, 0.31176);

pub const PRESETS: [&str; 8] = ["F7", "V7", "V9", "V9E1", "V9E2", "WM7", "FS7", "FS9"];

impl FitConfig {
    pub fn preset(name: &str) -> Result<FitConfig> {
        let variable = || {
            Threshold::Depth(
                DepthThreshold::new(vec![VARIABLE_TOL_DEEP, VARIABLE_TOL_SHALLOW])
                    .expect("valid preset"),
            )
        };
        let base = FitConfig::default();
        let cfg = match name.to_ascii_uppercase().as_str() {
            "F7" => base,
            "V7" => FitConfig {
                threshold: variable(),
                ..base
            },
            "V9" => FitConfig {
                threshold: variable(),
                max_iterations: 9,
                ..base
            },
            "V9E1" => FitConfig {
                threshold: variable(),
                max_iterations: 9,
                min_element_size: Some((1.0, 1.0)),
                ..base
            },
            "V9E2" => FitConfig {
                threshold: variable(),
                max_iterations: 9,
                min_element_size: Some((2.0, 2.0)),
                ..base
            },
            "WM7" => FitConfig {
                weighted_mid: true,
                ..base
            },
            "FS7" => FitConfig {
                significant_tol: Some(0.2),
                ..base
            },
            "FS9" => FitConfig {
                significant_tol: Some(0.2),
                max_iterations: 9,
                ..base
            },
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown preset '{other}' (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.degrees.0 < 1 || self.degrees.1 < 1 || self.degrees.0 > 9 || self.degrees.1 > 9 {
            return bad("degrees must lie in 1..=9");
        }
        if !(self.alpha1 > 0.0 && self.alpha1 < 1.0) {
            return bad("alpha1 must lie in (0, 1)");
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1");
        }
        if let Threshold::Fixed(t) = self.threshold {
            if !(t > 0.0) {
                return bad("threshold must be positive");
            }
        }
        if self.initial_grid.0 <= self.degrees.0 || self.initial_grid.1 <= self.degrees.1 {
            return bad("initial grid must exceed the degree in each direction");
        }
        if !(self.w2 >= 0.0 && self.w3 >= 0.0 && self.w2 + self.w3 > 0.0) {
            return bad("smoothness weights must be nonnegative and not both zero");
        }
        if !(self.significant_weight > 0.0 && self.significant_final_weight > 0.0) {
            return bad("significant point weights must be positive");
        }
        if let Some(t) = self.significant_tol {
            if !(t > 0.0) {
                return bad("significant tolerance must be positive");
            }
        }
        if let Some((dx, dy)) = self.min_element_size {
            if !(dx >= 0.0 && dy >= 0.0) {
                return bad("minimum element size must be nonnegative");
            }
        }
        if !(self.mid_d1 < self.mid_d2) {
            return bad("mid-surface transition needs d1 < d2");
        }
        if !(self.cg_tolerance > 0.0) {
            return bad("cg_tolerance must be positive");
        }
        Ok(())
    }

    /// Parse a flat `key = value` file; unset keys keep the values of
    /// `preset` (or the defaults). `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<FitConfig> {
        let mut cfg = FitConfig::default();
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, n + 1, "expected key = value"))?;
            let (k, v) = (k.trim().to_ascii_lowercase(), v.trim().to_string());
            if k == "preset" {
                cfg = FitConfig::preset(&v).map_err(|e| Error::parse(origin, n + 1, e.to_string()))?;
            } else {
                pairs.push((n + 1, k, v));
            }
        }
        for (n, k, v) in pairs {
            cfg.set(&k, &v).map_err(|m| Error::parse(origin, n, m))?;
        }
        cfg.validate()
            .map_err(|e| Error::parse(origin, 0, e.to_string()))?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<FitConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FitConfig::parse(&text, &path.display().to_string())
    }

    fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse '{v}'"))
        }
        fn pair<T: std::str::FromStr + Copy>(v: &str) -> std::result::Result<(T, T), String> {
            let parts: Vec<&str> = v.split([',', ' ']).filter(|s| !s.is_empty()).collect();
            match parts.as_slice() {
                [a] => {
                    let a = num(a)?;
                    Ok((a, a))
                }
                [a, b] => Ok((num(a)?, num(b)?)),
                _ => Err(format!("expected one or two values, got '{v}'")),
            }
        }
        match key {
            "degree" | "degrees" => self.degrees = pair(value)?,
            "max_iterations" | "iterations" => self.max_iterations = num(value)?,
            "threshold" | "tolerance" => self.threshold = Threshold::Fixed(num(value)?),
            "depth_threshold" => {
                // z:tol pairs separated by commas
                let mut bps = Vec::new();
                for item in value.split(',') {
                    let (z, t) = item
                        .split_once(':')
                        .ok_or_else(|| format!("expected depth:tolerance, got '{item}'"))?;
                    bps.push((num(z.trim())?, num(t.trim())?));
                }
                self.threshold = Threshold::Depth(DepthThreshold::new(bps).map_err(|e| e.to_string())?);
            }
            "initial_grid" => self.initial_grid = pair(value)?,
            "alpha1" => self.alpha1 = num(value)?,
            "w2" => self.w2 = num(value)?,
            "w3" => self.w3 = num(value)?,
            "ls_iterations" => self.ls_iterations = num(value)?,
            "mba_passes" | "mba_passes_per_iteration" => self.mba_passes_per_iteration = num(value)?,
            "min_element_size" => {
                self.min_element_size = if value.eq_ignore_ascii_case("none") {
                    None
                } else {
                    Some(pair(value)?)
                }
            }
            "significant_weight" => self.significant_weight = num(value)?,
            "significant_final_weight" => self.significant_final_weight = num(value)?,
            "significant_tol" => self.significant_tol = Some(num(value)?),
            "limit_passes" => self.limit_passes = num(value)?,
            "weighted_mid" => self.weighted_mid = parse_bool(value)?,
            "d1" | "mid_d1" => self.mid_d1 = num(value)?,
            "d2" | "mid_d2" => self.mid_d2 = num(value)?,
            "cg_tolerance" => self.cg_tolerance = num(value)?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Serialize to the `key = value` form read by [`FitConfig::parse`].
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "degrees = {}, {}", self.degrees.0, self.degrees.1);
        let _ = writeln!(s, "max_iterations = {}", self.max_iterations);
        match &self.threshold {
            Threshold::Fixed(t) => {
                let _ = writeln!(s, "threshold = {t:?}");
            }
            Threshold::Depth(d) => {
                let items: Vec<String> = d
                    .breakpoints()
                    .iter()
                    .map(|(z, t)| format!("{z:?}:{t:?}"))
                    .collect();
                let _ = writeln!(s, "depth_threshold = {}", items.join(", "));
            }
        }
        let _ = writeln!(s, "initial_grid = {}, {}", self.initial_grid.0, self.initial_grid.1);
        let _ = writeln!(s, "alpha1 = {:?}", self.alpha1);
        let _ = writeln!(s, "w2 = {:?}", self.w2);
        let _ = writeln!(s, "w3 = {:?}", self.w3);
        let _ = writeln!(s, "ls_iterations = {}", self.ls_iterations);
        let _ = writeln!(s, "mba_passes = {}", self.mba_passes_per_iteration);
        match self.min_element_size {
            Some((dx, dy)) => {
                let _ = writeln!(s, "min_element_size = {dx:?}, {dy:?}");
            }
            None => {
                let _ = writeln!(s, "min_element_size = none");
            }
        }
        let _ = writeln!(s, "significant_weight = {:?}", self.significant_weight);
        let _ = writeln!(s, "significant_final_weight = {:?}", self.significant_final_weight);
        if let Some(t) = self.significant_tol {
            let _ = writeln!(s, "significant_tol = {t:?}");
        }
        let _ = writeln!(s, "limit_passes = {}", self.limit_passes);
        let _ = writeln!(s, "weighted_mid = {}", self.weighted_mid);
        let _ = writeln!(s, "d1 = {:?}", self.mid_d1);
        let _ = writeln!(s, "d2 = {:?}", self.mid_d2);
        let _ = writeln!(s, "cg_tolerance = {:?}", self.cg_tolerance);
        s
    }
}

fn parse_bool(v: &str) -> std::result::Result<bool, String> {
    match v.to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got '{v}'")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variable_threshold_range() {
        let cfg = FitConfig::preset("V7").unwrap();
        let Threshold::Depth(d) = &cfg.threshold else { panic!() };
        assert_eq!(d.tolerance(-0.55), 0.20022);
        assert_eq!(d.tolerance(-27.94), 0.31176);
        assert_eq!(d.tolerance(5.0), 0.20022);
        assert_eq!(d.tolerance(-100.0), 0.31176);
        assert_eq!(d.min(), 0.20022);
        assert_eq!(d.max(), 0.31176);
    }

    #[test]
    fn interpolation_between_breakpoints() {
        let d = DepthThreshold::new(vec![(0.0, 1.0), (-10.0, 2.0)]).unwrap();
        assert!((d.tolerance(-2.5) - 1.25).abs() < 1e-15);
        let c = DepthThreshold::new(vec![(0.0, 0.3)]).unwrap();
        assert_eq!(c.tolerance(-7.0), 0.3);
        assert_eq!(c.tolerance(7.0), 0.3);
    }

    #[test]
    fn presets_follow_table() {
        let f7 = FitConfig::preset("F7").unwrap();
        assert_eq!(f7.threshold, Threshold::Fixed(0.5));
        assert_eq!(f7.max_iterations, 7);
        assert_eq!(FitConfig::preset("V9").unwrap().max_iterations, 9);
        assert_eq!(FitConfig::preset("V9E2").unwrap().min_element_size, Some((2.0, 2.0)));
        assert_eq!(FitConfig::preset("FS7").unwrap().significant_tol, Some(0.2));
        assert!(FitConfig::preset("WM7").unwrap().weighted_mid);
        assert!(FitConfig::preset("X1").is_err());
        for p in PRESETS {
            FitConfig::preset(p).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn text_round_trip() {
        for p in PRESETS {
            let cfg = FitConfig::preset(p).unwrap();
            let back = FitConfig::parse(&cfg.to_text(), "mem").unwrap();
            assert_eq!(back, cfg, "{p}");
        }
    }

    #[test]
    fn parse_overrides_preset() {
        let cfg = FitConfig::parse("preset = V9E1\n# comment\nmax_iterations = 3\n", "mem").unwrap();
        assert_eq!(cfg.max_iterations, 3);
        assert_eq!(cfg.min_element_size, Some((1.0, 1.0)));
        let err = FitConfig::parse("bogus = 1\n", "cfg.txt").unwrap_err();
        assert!(err.to_string().contains("cfg.txt:1"), "{err}");
        assert!(FitConfig::parse("alpha1 = 2\n", "m").is_err());
    }
}
