use std::fmt::Write as _;
use std::path::Path;

use crate::cloud::{DataPoint, PointCloud};
use crate::error::{Error, Result};

/// Parse whitespace-separated `x y z` lines; blank lines and `#` comments are
/// skipped.
pub fn parse_xyz(text: &str, origin: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                origin,
                n + 1,
                format!("expected 3 values, found {}", fields.len()),
            ));
        }
        let mut v = [0.0; 3];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .ok()
                .filter(|x: &f64| x.is_finite())
                .ok_or_else(|| Error::parse(origin, n + 1, format!("invalid number '{f}'")))?;
        }
        points.push(DataPoint::new(v[0], v[1], v[2]));
    }
    Ok(PointCloud { points })
}

pub fn read_xyz(path: &Path) -> Result<PointCloud> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cloud = parse_xyz(&text, &path.display().to_string())?;
    log::info!("read {} points from {}", cloud.len(), path.display());
    Ok(cloud)
}

pub fn write_xyz(cloud: &PointCloud, path: &Path) -> Result<()> {
    let mut s = String::with_capacity(cloud.len() * 40);
    for p in &cloud.points {
        let _ = writeln!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_points_and_comments() {
        let c = parse_xyz("1 2 3\n", "m").unwrap();
        assert_eq!(c.points, vec![DataPoint::new(1.0, 2.0, 3.0)]);
        let c = parse_xyz("# c\n\n1 2 3\n", "m").unwrap();
        assert_eq!(c.len(), 1);
        let c = parse_xyz("  4.5\t-2e1  -0.25  # trailing\n", "m").unwrap();
        assert_eq!(c.points[0], DataPoint::new(4.5, -20.0, -0.25));
    }

    #[test]
    fn reports_line_numbers() {
        let err = parse_xyz("1 2\n", "pts.xyz").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
        let err = parse_xyz("1 2 3\n\n1 x 3\n", "pts.xyz").unwrap_err();
        assert!(err.to_string().starts_with("pts.xyz:3:"), "{err}");
        assert!(parse_xyz("1 2 nan\n", "m").is_err());
    }
}
