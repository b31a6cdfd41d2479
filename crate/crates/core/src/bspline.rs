//! Univariate and tensor-product B-spline primitives.
//!
//! A single B-spline is defined by its local knot vector of `p + 2` values and
//! evaluated with the Cox–de Boor recursion. Derivatives use the usual
//! degree-reduction formula. Tensor-product surfaces ([`TPSurface`]) are built
//! on global knot vectors with the minimal-support basis.
//!
//! Evaluation is right-continuous (`u_i <= u < u_{i+1}` for the piecewise
//! constants). Callers that need the value at the right end of a closed domain
//! request [`Side::Left`], which evaluates the left limit instead.

use crate::error::{Error, Result};

/// Which one-sided limit to take at a knot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Right-continuous, the default half-open convention.
    Right,
    /// Left limit; used at the upper end of a closed domain.
    Left,
}

/// Local knot vector `u_0 <= ... <= u_{p+1}` of one univariate B-spline.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalKnots(Vec<f64>);

impl LocalKnots {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidKnots(format!(
                "a local knot vector needs at least 2 values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKnots("non-finite knot value".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots(format!("decreasing knots {values:?}")));
        }
        if values[values.len() - 1] <= values[0] {
            return Err(Error::InvalidKnots(format!("degenerate knots {values:?}")));
        }
        Ok(LocalKnots(values))
    }

    pub fn degree(&self) -> usize {
        self.0.len() - 2
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn first(&self) -> f64 {
        self.0[0]
    }

    pub fn last(&self) -> f64 {
        self.0[self.0.len() - 1]
    }

    /// Number of occurrences of `a` (exact comparison).
    pub fn multiplicity(&self, a: f64) -> usize {
        self.0.iter().filter(|&&k| k == a).count()
    }

    pub fn eval(&self, u: f64, deriv: usize) -> f64 {
        basis_deriv(&self.0, u, deriv, Side::Right)
    }

    pub fn eval_side(&self, u: f64, deriv: usize, side: Side) -> f64 {
        basis_deriv(&self.0, u, deriv, side)
    }

    /// Greville abscissa: mean of the interior knots `u_1..u_p`.
    pub fn greville(&self) -> f64 {
        let p = self.degree();
        if p == 0 {
            return 0.5 * (self.0[0] + self.0[1]);
        }
        self.0[1..=p].iter().sum::<f64>() / p as f64
    }
}

/// Value (or `deriv`-th derivative) of the B-spline `B[knots]` at `u`.
pub fn eval_univariate(knots: &LocalKnots, u: f64, deriv: usize) -> f64 {
    knots.eval(u, deriv)
}

/// Cox–de Boor on raw knots; zero-denominator terms vanish.
pub(crate) fn basis(t: &[f64], u: f64, side: Side) -> f64 {
    let p = t.len() - 2;
    if u < t[0] || u > t[p + 1] {
        return 0.0;
    }
    let mut n: smallbuf::Buf = smallbuf::Buf::zeros(p + 1);
    for i in 0..=p {
        let inside = match side {
            Side::Right => t[i] <= u && u < t[i + 1],
            Side::Left => t[i] < u && u <= t[i + 1],
        };
        n[i] = if inside { 1.0 } else { 0.0 };
    }
    for k in 1..=p {
        for i in 0..=(p - k) {
            let d1 = t[i + k] - t[i];
            let d2 = t[i + k + 1] - t[i + 1];
            let left = if d1 != 0.0 { (u - t[i]) / d1 * n[i] } else { 0.0 };
            let right = if d2 != 0.0 {
                (t[i + k + 1] - u) / d2 * n[i + 1]
            } else {
                0.0
            };
            n[i] = left + right;
        }
    }
    n[0]
}

pub(crate) fn basis_deriv(t: &[f64], u: f64, deriv: usize, side: Side) -> f64 {
    let p = t.len() - 2;
    if deriv == 0 {
        return basis(t, u, side);
    }
    if deriv > p {
        return 0.0;
    }
    let d1 = t[p] - t[0];
    let d2 = t[p + 1] - t[1];
    let mut acc = 0.0;
    if d1 != 0.0 {
        acc += basis_deriv(&t[..=p], u, deriv - 1, side) / d1;
    }
    if d2 != 0.0 {
        acc -= basis_deriv(&t[1..], u, deriv - 1, side) / d2;
    }
    p as f64 * acc
}

/// Result of splitting one B-spline by inserting a knot.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotSplit {
    pub first: LocalKnots,
    pub second: LocalKnots,
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Boehm insertion of `a` into the local knots: `B = alpha1 B1 + alpha2 B2`.
pub fn insert_knot(knots: &LocalKnots, a: f64) -> Result<KnotSplit> {
    let t = knots.values();
    let p = knots.degree();
    let (lo, hi) = (t[0], t[p + 1]);
    if !(a > lo && a < hi) {
        return Err(Error::KnotOutsideSupport { value: a, lo, hi });
    }
    let alpha1 = if a < t[p] { (a - t[0]) / (t[p] - t[0]) } else { 1.0 };
    let alpha2 = if a <= t[1] {
        1.0
    } else {
        (t[p + 1] - a) / (t[p + 1] - t[1])
    };
    let mut merged = Vec::with_capacity(p + 3);
    let pos = t.partition_point(|&k| k <= a);
    merged.extend_from_slice(&t[..pos]);
    merged.push(a);
    merged.extend_from_slice(&t[pos..]);
    Ok(KnotSplit {
        first: LocalKnots(merged[..p + 2].to_vec()),
        second: LocalKnots(merged[1..].to_vec()),
        alpha1,
        alpha2,
    })
}

/// Axis-parallel parameter rectangle `[u0, u1] x [v0, v1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub u0: f64,
    pub u1: f64,
    pub v0: f64,
    pub v1: f64,
}

impl Rect {
    pub fn new(u0: f64, u1: f64, v0: f64, v1: f64) -> Self {
        Rect { u0, u1, v0, v1 }
    }

    pub fn width(&self) -> f64 {
        self.u1 - self.u0
    }

    pub fn height(&self) -> f64 {
        self.v1 - self.v0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= self.u0 && u <= self.u1 && v >= self.v0 && v <= self.v1
    }

    /// True when `other` lies inside `self` (boundaries may touch).
    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.u0 >= self.u0 && other.u1 <= self.u1 && other.v0 >= self.v0 && other.v1 <= self.v1
    }

    /// Interiors overlap.
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.u0 < other.u1 && other.u0 < self.u1 && self.v0 < other.v1 && other.v0 < self.v1
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.u0 + self.u1), 0.5 * (self.v0 + self.v1))
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }
}

/// One tensor-product B-spline with a scaling factor and a coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledTensorBSpline {
    pub uknots: LocalKnots,
    pub vknots: LocalKnots,
    pub scale: f64,
    pub coef: f64,
}

impl ScaledTensorBSpline {
    pub fn new(uknots: LocalKnots, vknots: LocalKnots, scale: f64, coef: f64) -> Result<Self> {
        if !(scale > 0.0 && scale <= 1.0 + 1e-9) {
            return Err(Error::InvalidInput(format!(
                "scaling factor {scale} outside (0, 1]"
            )));
        }
        Ok(ScaledTensorBSpline {
            uknots,
            vknots,
            scale,
            coef,
        })
    }

    pub fn degree_u(&self) -> usize {
        self.uknots.degree()
    }

    pub fn degree_v(&self) -> usize {
        self.vknots.degree()
    }

    pub fn support(&self) -> Rect {
        Rect::new(
            self.uknots.first(),
            self.uknots.last(),
            self.vknots.first(),
            self.vknots.last(),
        )
    }

    /// `scale * B(u) * B(v)` with the requested partial derivative orders.
    pub fn eval(&self, u: f64, v: f64, du: usize, dv: usize) -> f64 {
        self.eval_side(u, v, du, dv, Side::Right, Side::Right)
    }

    pub fn eval_side(&self, u: f64, v: f64, du: usize, dv: usize, su: Side, sv: Side) -> f64 {
        let bu = self.uknots.eval_side(u, du, su);
        if bu == 0.0 {
            return 0.0;
        }
        self.scale * bu * self.vknots.eval_side(v, dv, sv)
    }

    pub fn greville(&self) -> (f64, f64) {
        (self.uknots.greville(), self.vknots.greville())
    }
}

/// Evaluate `N_B` (scale included).
pub fn eval_tensor(b: &ScaledTensorBSpline, u: f64, v: f64, du: usize, dv: usize) -> f64 {
    b.eval(u, v, du, dv)
}

/// Global knot vector with its polynomial degree.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalKnotVector {
    values: Vec<f64>,
    degree: usize,
}

impl GlobalKnotVector {
    pub fn new(values: Vec<f64>, degree: usize) -> Result<Self> {
        if values.len() < degree + 2 {
            return Err(Error::InvalidKnots(format!(
                "{} knots cannot carry a degree {degree} basis",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidKnots("non-finite knot value".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidKnots("knot vector is decreasing".into()));
        }
        let n = values.len() - degree - 1;
        for i in 0..n {
            if values[i + degree + 1] <= values[i] {
                return Err(Error::InvalidKnots(format!(
                    "knot value {} repeated more than {} times",
                    values[i],
                    degree + 1
                )));
            }
        }
        Ok(GlobalKnotVector { values, degree })
    }

    /// Clamped uniform knot vector with `n` basis functions on `[a, b]`.
    pub fn uniform(a: f64, b: f64, degree: usize, n: usize) -> Result<Self> {
        if n < degree + 1 {
            return Err(Error::InvalidKnots(format!(
                "need at least {} basis functions for degree {degree}",
                degree + 1
            )));
        }
        if !(b > a) {
            return Err(Error::InvalidKnots(format!("empty interval [{a}, {b}]")));
        }
        let segments = n - degree;
        let mut values = vec![a; degree + 1];
        for k in 1..segments {
            values.push(a + (b - a) * k as f64 / segments as f64);
        }
        values.extend(std::iter::repeat(b).take(degree + 1));
        GlobalKnotVector::new(values, degree)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_basis(&self) -> usize {
        self.values.len() - self.degree - 1
    }

    /// Parameter interval `[u_p, u_N]` where the basis sums to one.
    pub fn domain(&self) -> (f64, f64) {
        (self.values[self.degree], self.values[self.num_basis()])
    }

    pub fn local(&self, i: usize) -> LocalKnots {
        LocalKnots(self.values[i..i + self.degree + 2].to_vec())
    }

    /// Distinct knot values in increasing order.
    pub fn distinct(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &k in &self.values {
            if out.last() != Some(&k) {
                out.push(k);
            }
        }
        out
    }

    pub fn multiplicity(&self, a: f64) -> usize {
        self.values.iter().filter(|&&k| k == a).count()
    }

    /// Index range of basis functions that may be nonzero at `u`.
    fn active_range(&self, u: f64, side: Side) -> std::ops::Range<usize> {
        let p = self.degree;
        let n = self.num_basis();
        // interval index mu with t_mu <= u < t_{mu+1} (or t_mu < u <= t_{mu+1})
        let mu = match side {
            Side::Right => self.values.partition_point(|&k| k <= u).saturating_sub(1),
            Side::Left => self.values.partition_point(|&k| k < u).saturating_sub(1),
        };
        let mu = mu.clamp(p, n - 1);
        (mu - p)..(mu + 1)
    }

    /// Nonzero basis values (or derivatives) at `u` as `(index, value)`.
    pub fn eval_basis(&self, u: f64, deriv: usize, side: Side) -> Vec<(usize, f64)> {
        let p = self.degree;
        self.active_range(u, side)
            .map(|i| {
                (
                    i,
                    basis_deriv(&self.values[i..i + p + 2], u, deriv, side),
                )
            })
            .collect()
    }

    /// Boehm insertion of one knot into every curve of `curves`, each holding
    /// `num_basis` coefficients on this knot vector.
    fn insert_in_curves(&self, a: f64, curves: &[Vec<f64>]) -> Result<(GlobalKnotVector, Vec<Vec<f64>>)> {
        let p = self.degree;
        let (lo, hi) = self.domain();
        if !(a >= lo && a < hi) {
            return Err(Error::KnotOutsideSupport { value: a, lo, hi });
        }
        if self.multiplicity(a) >= p + 1 {
            return Err(Error::InvalidKnots(format!(
                "knot {a} already has multiplicity {}",
                p + 1
            )));
        }
        let t = &self.values;
        let k = t.partition_point(|&x| x <= a) - 1;
        let mut out = Vec::with_capacity(curves.len());
        for c in curves {
            let n = c.len();
            let mut q = Vec::with_capacity(n + 1);
            for i in 0..=n {
                let val = if i + p <= k {
                    c[i]
                } else if i > k {
                    c[i - 1]
                } else {
                    let denom = t[i + p] - t[i];
                    let alpha = if denom != 0.0 { (a - t[i]) / denom } else { 0.0 };
                    (1.0 - alpha) * c[i - 1] + alpha * c[i]
                };
                q.push(val);
            }
            out.push(q);
        }
        let mut values = t.clone();
        values.insert(k + 1, a);
        Ok((GlobalKnotVector::new(values, p)?, out))
    }
}

/// Tensor-product spline surface `sum c_ij B_i(u) B_j(v)`.
///
/// Coefficients are stored with `u` running fastest: `coefs[j * n1 + i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TPSurface {
    uknots: GlobalKnotVector,
    vknots: GlobalKnotVector,
    coefs: Vec<f64>,
}

impl TPSurface {
    pub fn new(uknots: GlobalKnotVector, vknots: GlobalKnotVector, coefs: Vec<f64>) -> Result<Self> {
        let expected = uknots.num_basis() * vknots.num_basis();
        if coefs.len() != expected {
            return Err(Error::InvalidInput(format!(
                "expected {expected} coefficients, got {}",
                coefs.len()
            )));
        }
        Ok(TPSurface {
            uknots,
            vknots,
            coefs,
        })
    }

    /// Surface whose coefficients are `f` evaluated at the Greville points.
    pub fn from_greville_fn(
        uknots: GlobalKnotVector,
        vknots: GlobalKnotVector,
        f: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let (n1, n2) = (uknots.num_basis(), vknots.num_basis());
        let mut coefs = Vec::with_capacity(n1 * n2);
        for j in 0..n2 {
            let gv = vknots.local(j).greville();
            for i in 0..n1 {
                coefs.push(f(uknots.local(i).greville(), gv));
            }
        }
        TPSurface {
            uknots,
            vknots,
            coefs,
        }
    }

    pub fn uknots(&self) -> &GlobalKnotVector {
        &self.uknots
    }

    pub fn vknots(&self) -> &GlobalKnotVector {
        &self.vknots
    }

    pub fn degrees(&self) -> (usize, usize) {
        (self.uknots.degree(), self.vknots.degree())
    }

    pub fn num_coefs(&self) -> (usize, usize) {
        (self.uknots.num_basis(), self.vknots.num_basis())
    }

    pub fn coefs(&self) -> &[f64] {
        &self.coefs
    }

    pub fn coef(&self, i: usize, j: usize) -> f64 {
        self.coefs[j * self.uknots.num_basis() + i]
    }

    pub fn domain(&self) -> Rect {
        let (u0, u1) = self.uknots.domain();
        let (v0, v1) = self.vknots.domain();
        Rect::new(u0, u1, v0, v1)
    }

    pub fn coef_range(&self) -> (f64, f64) {
        self.coefs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
                (lo.min(c), hi.max(c))
            })
    }

    pub fn eval(&self, u: f64, v: f64) -> Result<f64> {
        self.eval_deriv(u, v, 0, 0)
    }

    pub fn eval_deriv(&self, u: f64, v: f64, du: usize, dv: usize) -> Result<f64> {
        let d = self.domain();
        if !(d.contains(u, v)) {
            return Err(Error::OutOfDomain { u, v });
        }
        Ok(self.eval_unchecked(u, v, du, dv))
    }

    /// Evaluation without the domain check; parameters are clamped.
    pub fn eval_unchecked(&self, u: f64, v: f64, du: usize, dv: usize) -> f64 {
        let d = self.domain();
        let u = u.clamp(d.u0, d.u1);
        let v = v.clamp(d.v0, d.v1);
        let su = if u >= d.u1 { Side::Left } else { Side::Right };
        let sv = if v >= d.v1 { Side::Left } else { Side::Right };
        let bu = self.uknots.eval_basis(u, du, su);
        let bv = self.vknots.eval_basis(v, dv, sv);
        let n1 = self.uknots.num_basis();
        let mut acc = 0.0;
        for &(j, wv) in &bv {
            if wv == 0.0 {
                continue;
            }
            let row = &self.coefs[j * n1..];
            let mut s = 0.0;
            for &(i, wu) in &bu {
                s += row[i] * wu;
            }
            acc += s * wv;
        }
        acc
    }

    /// Value and first/second partial derivatives:
    /// `[F, F_u, F_v, F_uu, F_uv, F_vv]`.
    pub fn eval_jet(&self, u: f64, v: f64) -> [f64; 6] {
        [
            self.eval_unchecked(u, v, 0, 0),
            self.eval_unchecked(u, v, 1, 0),
            self.eval_unchecked(u, v, 0, 1),
            self.eval_unchecked(u, v, 2, 0),
            self.eval_unchecked(u, v, 1, 1),
            self.eval_unchecked(u, v, 0, 2),
        ]
    }

    fn columns(&self) -> Vec<Vec<f64>> {
        // curves along u: one per j
        let n1 = self.uknots.num_basis();
        self.coefs.chunks(n1).map(|c| c.to_vec()).collect()
    }

    fn rows_v(&self) -> Vec<Vec<f64>> {
        // curves along v: one per i
        let (n1, n2) = self.num_coefs();
        (0..n1)
            .map(|i| (0..n2).map(|j| self.coefs[j * n1 + i]).collect())
            .collect()
    }

    pub fn insert_knot_u(&self, a: f64) -> Result<TPSurface> {
        let (knots, curves) = self.uknots.insert_in_curves(a, &self.columns())?;
        let coefs = curves.into_iter().flatten().collect();
        TPSurface::new(knots, self.vknots.clone(), coefs)
    }

    pub fn insert_knot_v(&self, a: f64) -> Result<TPSurface> {
        let (knots, curves) = self.vknots.insert_in_curves(a, &self.rows_v())?;
        let n1 = self.uknots.num_basis();
        let n2 = knots.num_basis();
        let mut coefs = vec![0.0; n1 * n2];
        for (i, c) in curves.iter().enumerate() {
            for (j, &val) in c.iter().enumerate() {
                coefs[j * n1 + i] = val;
            }
        }
        TPSurface::new(self.uknots.clone(), knots, coefs)
    }

    /// Split at `u = a` (strictly inside the domain) into left and right pieces.
    pub fn split_u(&self, a: f64) -> Result<(TPSurface, TPSurface)> {
        let (lo, hi) = self.uknots.domain();
        if !(a > lo && a < hi) {
            return Err(Error::KnotOutsideSupport { value: a, lo, hi });
        }
        let p = self.uknots.degree();
        let mut s = self.clone();
        while s.uknots.multiplicity(a) < p + 1 {
            s = s.insert_knot_u(a)?;
        }
        let m = s.uknots.values.partition_point(|&k| k < a);
        let n1 = s.uknots.num_basis();
        let n2 = s.vknots.num_basis();
        let left_knots = GlobalKnotVector::new(s.uknots.values[..m + p + 1].to_vec(), p)?;
        let right_knots = GlobalKnotVector::new(s.uknots.values[m..].to_vec(), p)?;
        let mut left = Vec::with_capacity(m * n2);
        let mut right = Vec::with_capacity((n1 - m) * n2);
        for j in 0..n2 {
            left.extend_from_slice(&s.coefs[j * n1..j * n1 + m]);
            right.extend_from_slice(&s.coefs[j * n1 + m..(j + 1) * n1]);
        }
        Ok((
            TPSurface::new(left_knots, s.vknots.clone(), left)?,
            TPSurface::new(right_knots, s.vknots.clone(), right)?,
        ))
    }

    pub fn split_v(&self, a: f64) -> Result<(TPSurface, TPSurface)> {
        let t = self.transposed();
        let (a_, b_) = t.split_u(a)?;
        Ok((a_.transposed(), b_.transposed()))
    }

    /// Equivalent surface whose knot vectors have `p + 1` end knots.
    pub fn clamped(&self) -> TPSurface {
        if self.is_clamped() {
            return self.clone();
        }
        let s = self.clamp_u_left().reflect_u().clamp_u_left().reflect_u();
        s.transposed()
            .clamp_u_left()
            .reflect_u()
            .clamp_u_left()
            .reflect_u()
            .transposed()
    }

    fn clamp_u_left(&self) -> TPSurface {
        let p = self.uknots.degree();
        let (lo, _) = self.uknots.domain();
        let mut s = self.clone();
        while s.uknots.multiplicity(lo) < p + 1 {
            s = s.insert_knot_u(lo).expect("domain start is a valid knot");
        }
        let m = s.uknots.values.partition_point(|&k| k < lo);
        if m == 0 {
            return s;
        }
        let (n1, n2) = s.num_coefs();
        let coefs = (0..n2)
            .flat_map(|j| s.coefs[j * n1 + m..(j + 1) * n1].to_vec())
            .collect();
        TPSurface {
            uknots: GlobalKnotVector {
                values: s.uknots.values[m..].to_vec(),
                degree: p,
            },
            vknots: s.vknots,
            coefs,
        }
    }

    /// Mirror `u -> -u`.
    fn reflect_u(&self) -> TPSurface {
        let (n1, n2) = self.num_coefs();
        let values = self.uknots.values.iter().rev().map(|&k| -k).collect();
        let coefs = (0..n2)
            .flat_map(|j| (0..n1).rev().map(move |i| (j, i)))
            .map(|(j, i)| self.coefs[j * n1 + i])
            .collect();
        TPSurface {
            uknots: GlobalKnotVector {
                values,
                degree: self.uknots.degree(),
            },
            vknots: self.vknots.clone(),
            coefs,
        }
    }

    /// Swap the roles of `u` and `v`.
    pub fn transposed(&self) -> TPSurface {
        let (n1, n2) = self.num_coefs();
        let mut coefs = vec![0.0; n1 * n2];
        for j in 0..n2 {
            for i in 0..n1 {
                coefs[i * n2 + j] = self.coefs[j * n1 + i];
            }
        }
        TPSurface {
            uknots: self.vknots.clone(),
            vknots: self.uknots.clone(),
            coefs,
        }
    }

    /// Restriction to a sub-rectangle of the domain, clamped at its edges.
    pub fn restrict(&self, r: &Rect) -> Result<TPSurface> {
        let d = self.domain();
        if !d.contains_rect(r) || r.width() <= 0.0 || r.height() <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "restriction {r:?} is not a sub-rectangle of {d:?}"
            )));
        }
        let mut s = self.clone();
        if r.u0 > d.u0 {
            s = s.split_u(r.u0)?.1;
        }
        if r.u1 < d.u1 {
            s = s.split_u(r.u1)?.0;
        }
        if r.v0 > d.v0 {
            s = s.split_v(r.v0)?.1;
        }
        if r.v1 < d.v1 {
            s = s.split_v(r.v1)?.0;
        }
        Ok(s)
    }

    /// Partial derivative in `u` as a spline of degree `p1 - 1`.
    pub fn derivative_u(&self) -> TPSurface {
        let p = self.uknots.degree();
        let (n1, n2) = self.num_coefs();
        let t = &self.uknots.values;
        if p == 0 {
            return TPSurface {
                uknots: self.uknots.clone(),
                vknots: self.vknots.clone(),
                coefs: vec![0.0; n1 * n2],
            };
        }
        let knots = GlobalKnotVector {
            values: t[1..t.len() - 1].to_vec(),
            degree: p - 1,
        };
        let mut coefs = Vec::with_capacity((n1 - 1) * n2);
        for j in 0..n2 {
            for i in 0..n1 - 1 {
                let denom = t[i + p + 1] - t[i + 1];
                let d = if denom != 0.0 {
                    p as f64 * (self.coefs[j * n1 + i + 1] - self.coefs[j * n1 + i]) / denom
                } else {
                    0.0
                };
                coefs.push(d);
            }
        }
        TPSurface {
            uknots: knots,
            vknots: self.vknots.clone(),
            coefs,
        }
    }

    pub fn derivative_v(&self) -> TPSurface {
        self.transposed().derivative_u().transposed()
    }

    /// True when both knot vectors carry `p + 1` end knots, so the boundary
    /// rows of the coefficient grid are the boundary curves.
    pub fn is_clamped(&self) -> bool {
        let check = |k: &GlobalKnotVector| {
            let p = k.degree();
            let (a, b) = k.domain();
            k.values[..=p].iter().all(|&x| x == a)
                && k.values[k.values.len() - p - 1..].iter().all(|&x| x == b)
        };
        check(&self.uknots) && check(&self.vknots)
    }

    /// Isocurve `F(a, v)` as a univariate spline over the `v` knots.
    pub fn iso_u(&self, a: f64) -> UniSpline {
        let (n1, n2) = self.num_coefs();
        let d = self.domain();
        let side = if a >= d.u1 { Side::Left } else { Side::Right };
        let bu = self.uknots.eval_basis(a.clamp(d.u0, d.u1), 0, side);
        let coefs = (0..n2)
            .map(|j| bu.iter().map(|&(i, w)| w * self.coefs[j * n1 + i]).sum())
            .collect();
        UniSpline {
            knots: self.vknots.clone(),
            coefs,
        }
    }

    /// Isocurve `F(u, a)` as a univariate spline over the `u` knots.
    pub fn iso_v(&self, a: f64) -> UniSpline {
        let (n1, _) = self.num_coefs();
        let d = self.domain();
        let side = if a >= d.v1 { Side::Left } else { Side::Right };
        let bv = self.vknots.eval_basis(a.clamp(d.v0, d.v1), 0, side);
        let coefs = (0..n1)
            .map(|i| bv.iter().map(|&(j, w)| w * self.coefs[j * n1 + i]).sum())
            .collect();
        UniSpline {
            knots: self.uknots.clone(),
            coefs,
        }
    }
}

/// Evaluate a tensor-product surface, rejecting out-of-domain parameters.
pub fn eval_tp_surface(s: &TPSurface, u: f64, v: f64) -> Result<f64> {
    s.eval(u, v)
}

/// Scalar spline curve on a global knot vector.
#[derive(Debug, Clone, PartialEq)]
pub struct UniSpline {
    pub knots: GlobalKnotVector,
    pub coefs: Vec<f64>,
}

impl UniSpline {
    pub fn domain(&self) -> (f64, f64) {
        self.knots.domain()
    }

    pub fn eval(&self, t: f64, deriv: usize) -> f64 {
        let (a, b) = self.domain();
        let t = t.clamp(a, b);
        let side = if t >= b { Side::Left } else { Side::Right };
        self.knots
            .eval_basis(t, deriv, side)
            .into_iter()
            .map(|(i, w)| w * self.coefs[i])
            .sum()
    }

    pub fn coef_range(&self) -> (f64, f64) {
        self.coefs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| {
                (lo.min(c), hi.max(c))
            })
    }

    pub fn split(&self, a: f64) -> Result<(UniSpline, UniSpline)> {
        let p = self.knots.degree();
        let mut knots = self.knots.clone();
        let mut coefs = vec![self.coefs.clone()];
        while knots.multiplicity(a) < p + 1 {
            let (k, c) = knots.insert_in_curves(a, &coefs)?;
            knots = k;
            coefs = c;
        }
        let c = &coefs[0];
        let m = knots.values.partition_point(|&k| k < a);
        Ok((
            UniSpline {
                knots: GlobalKnotVector::new(knots.values[..m + p + 1].to_vec(), p)?,
                coefs: c[..m].to_vec(),
            },
            UniSpline {
                knots: GlobalKnotVector::new(knots.values[m..].to_vec(), p)?,
                coefs: c[m..].to_vec(),
            },
        ))
    }

    /// Coefficients of the derivative spline (degree `p - 1`).
    pub fn derivative_coefs(&self) -> Vec<f64> {
        let p = self.knots.degree();
        if p == 0 {
            return vec![0.0; self.coefs.len()];
        }
        let t = self.knots.values();
        (0..self.coefs.len() - 1)
            .map(|i| {
                let denom = t[i + p + 1] - t[i + 1];
                if denom != 0.0 {
                    p as f64 * (self.coefs[i + 1] - self.coefs[i]) / denom
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// All parameters in the domain where the curve equals `level`.
    ///
    /// Recursive subdivision with the convex-hull test; a segment whose
    /// derivative coefficients have one strict sign holds at most one root,
    /// which is isolated by safeguarded Newton iteration.
    pub fn roots(&self, level: f64, max_depth: usize) -> Vec<f64> {
        let mut out = Vec::new();
        self.roots_rec(level, 0, max_depth, &mut out);
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let (a, b) = self.domain();
        let tol = 1e-12 * (b - a).max(1.0);
        out.dedup_by(|x, y| (*x - *y).abs() <= tol);
        out
    }

    fn roots_rec(&self, level: f64, depth: usize, max_depth: usize, out: &mut Vec<f64>) {
        let (lo, hi) = self.coef_range();
        if lo > level || hi < level {
            return;
        }
        let (a, b) = self.domain();
        if lo == hi {
            // identically at the level: report the ends only
            out.extend([a, b]);
            return;
        }
        let fa = self.eval(a, 0) - level;
        let fb = self.eval(b, 0) - level;
        let d = self.derivative_coefs();
        let monotone = d.iter().all(|&x| x > 0.0) || d.iter().all(|&x| x < 0.0);
        if monotone || self.knots.degree() == 0 {
            if fa == 0.0 {
                out.push(a);
            } else if fb == 0.0 {
                out.push(b);
            } else if fa.signum() != fb.signum() {
                out.push(self.bracketed_root(level, a, b, fa));
            }
            return;
        }
        if depth >= max_depth || b - a <= 1e-13 * b.abs().max(a.abs()).max(1.0) {
            // tangential contact or unresolved: keep the point if it touches
            let m = 0.5 * (a + b);
            if (self.eval(m, 0) - level).abs() <= 1e-10 * level.abs().max(1.0) {
                out.push(m);
            }
            return;
        }
        // split at an interior knot near the middle, else at the midpoint
        let mid = 0.5 * (a + b);
        let inner: Vec<f64> = self
            .knots
            .distinct()
            .into_iter()
            .filter(|&k| k > a && k < b)
            .collect();
        let at = inner
            .iter()
            .copied()
            .min_by(|x, y| (x - mid).abs().partial_cmp(&(y - mid).abs()).unwrap())
            .unwrap_or(mid);
        if let Ok((l, r)) = self.split(at) {
            l.roots_rec(level, depth + 1, max_depth, out);
            r.roots_rec(level, depth + 1, max_depth, out);
        }
    }

    fn bracketed_root(&self, level: f64, mut a: f64, mut b: f64, fa: f64) -> f64 {
        let sa = fa.signum();
        let mut x = 0.5 * (a + b);
        for _ in 0..200 {
            let f = self.eval(x, 0) - level;
            if f == 0.0 {
                return x;
            }
            if f.signum() == sa {
                a = x;
            } else {
                b = x;
            }
            let df = self.eval(x, 1);
            let newton = x - f / df;
            x = if df != 0.0 && newton > a && newton < b {
                newton
            } else {
                0.5 * (a + b)
            };
            if b - a <= 4.0 * f64::EPSILON * x.abs().max(1.0) {
                break;
            }
        }
        x
    }
}

mod smallbuf {
    //! Fixed stack buffer for the recursion table; spills to the heap for
    //! unusually high degrees.
    use std::ops::{Index, IndexMut};

    const INLINE: usize = 12;

    pub enum Buf {
        Inline([f64; INLINE]),
        Heap(Vec<f64>),
    }

    impl Buf {
        pub fn zeros(n: usize) -> Self {
            if n <= INLINE {
                Buf::Inline([0.0; INLINE])
            } else {
                Buf::Heap(vec![0.0; n])
            }
        }
    }

    impl Index<usize> for Buf {
        type Output = f64;
        fn index(&self, i: usize) -> &f64 {
            match self {
                Buf::Inline(a) => &a[i],
                Buf::Heap(v) => &v[i],
            }
        }
    }

    impl IndexMut<usize> for Buf {
        fn index_mut(&mut self, i: usize) -> &mut f64 {
            match self {
                Buf::Inline(a) => &mut a[i],
                Buf::Heap(v) => &mut v[i],
            }
        }
    }
}
