//! Sampling grids, fields, the parabolic metric and the two extension operators.
//!
//! Fields are stored row by row: one row per x₂ slice, `n1` samples per row.
//! Three layouts exist:
//!
//! * `Torus`: x₁, x₂ ∈ [0,1), doubly periodic, `n2` rows.
//! * `HalfPlane`: x₁ ∈ [0,1) periodic, x₂ ∈ [0, t_max], `n2 + 1` rows including x₂ = 0.
//! * `TwoSided`: x₁ ∈ [0,1) periodic, x₂ ∈ [−t_max, t_max), `2 n2` rows; spectral
//!   operations treat it as periodic with period 2 t_max.

use serde::{Deserialize, Serialize};

use crate::error::{domain, param, Result};
use crate::fft;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    Torus,
    HalfPlane,
    TwoSided,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n1: usize,
    pub n2: usize,
    pub kind: DomainKind,
    pub t_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x1: f64,
    pub x2: f64,
}

impl Point {
    pub fn new(x1: f64, x2: f64) -> Self {
        Point { x1, x2 }
    }
}

/// |x₁−y₁| + |x₂−y₂|^{1/2} on ℝ².
pub fn parabolic_distance(x: Point, y: Point) -> f64 {
    (x.x1 - y.x1).abs() + (x.x2 - y.x2).abs().sqrt()
}

/// Minimal-image representative of `d` modulo `period`.
pub fn wrap(d: f64, period: f64) -> f64 {
    d - period * (d / period).round()
}

/// Parabolic distance with the spatial difference reduced modulo 1.
pub fn torus_distance(x: Point, y: Point) -> f64 {
    wrap(x.x1 - y.x1, 1.0).abs() + (x.x2 - y.x2).abs().sqrt()
}

fn check_pow2(n: usize, what: &str) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return param(format!("{what} = {n} must be a power of two ≥ 2"));
    }
    Ok(())
}

impl GridSpec {
    pub fn torus(n1: usize, n2: usize) -> Result<Self> {
        check_pow2(n1, "n1")?;
        check_pow2(n2, "n2")?;
        Ok(GridSpec { n1, n2, kind: DomainKind::Torus, t_max: 1.0 })
    }

    pub fn half_plane(n1: usize, n2: usize, t_max: f64) -> Result<Self> {
        check_pow2(n1, "n1")?;
        check_pow2(n2, "n2")?;
        if !(t_max > 0.0 && t_max.is_finite()) {
            return param(format!("t_max = {t_max} must be positive"));
        }
        Ok(GridSpec { n1, n2, kind: DomainKind::HalfPlane, t_max })
    }

    pub fn two_sided(n1: usize, n2: usize, t_max: f64) -> Result<Self> {
        let mut g = Self::half_plane(n1, n2, t_max)?;
        g.kind = DomainKind::TwoSided;
        Ok(g)
    }

    /// The half-plane grid whose even reflection lives on `self` (and vice versa).
    pub fn as_half_plane(&self) -> Self {
        GridSpec { kind: DomainKind::HalfPlane, ..*self }
    }

    pub fn as_two_sided(&self) -> Self {
        GridSpec { kind: DomainKind::TwoSided, ..*self }
    }

    pub fn rows(&self) -> usize {
        match self.kind {
            DomainKind::Torus => self.n2,
            DomainKind::HalfPlane => self.n2 + 1,
            DomainKind::TwoSided => 2 * self.n2,
        }
    }

    pub fn len(&self) -> usize {
        self.n1 * self.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx1(&self) -> f64 {
        1.0 / self.n1 as f64
    }

    pub fn dx2(&self) -> f64 {
        match self.kind {
            DomainKind::Torus => 1.0 / self.n2 as f64,
            _ => self.t_max / self.n2 as f64,
        }
    }

    pub fn x1(&self, i: usize) -> f64 {
        i as f64 * self.dx1()
    }

    pub fn x2(&self, j: usize) -> f64 {
        match self.kind {
            DomainKind::TwoSided => -self.t_max + j as f64 * self.dx2(),
            _ => j as f64 * self.dx2(),
        }
    }

    /// Row index of x₂ = 0.
    pub fn zero_row(&self) -> usize {
        match self.kind {
            DomainKind::TwoSided => self.n2,
            _ => 0,
        }
    }

    /// Period in x₂ used by spectral operations, if any.
    pub fn period2(&self) -> Option<f64> {
        match self.kind {
            DomainKind::Torus => Some(1.0),
            DomainKind::TwoSided => Some(2.0 * self.t_max),
            DomainKind::HalfPlane => None,
        }
    }

    pub fn is_periodic2(&self) -> bool {
        self.period2().is_some()
    }

    pub fn point(&self, i: usize, j: usize) -> Point {
        Point::new(self.x1(i), self.x2(j))
    }

    /// Parabolic distance between two grid nodes. x₁ is always reduced modulo 1;
    /// x₂ is reduced only on the torus, whose fields are doubly periodic.
    pub fn node_distance(&self, a: (usize, usize), b: (usize, usize)) -> f64 {
        let d1 = self.offset1(a.0, b.0).abs();
        let d2 = self.offset2(a.1, b.1).abs();
        d1 + d2.sqrt()
    }

    /// Signed minimal-image x₁ offset from node column `i` to `k`.
    pub fn offset1(&self, i: usize, k: usize) -> f64 {
        wrap((k as f64 - i as f64) * self.dx1(), 1.0)
    }

    pub fn offset2(&self, j: usize, l: usize) -> f64 {
        let d = (l as f64 - j as f64) * self.dx2();
        match self.kind {
            DomainKind::Torus => wrap(d, 1.0),
            _ => d,
        }
    }

    pub fn same_shape(&self, other: &GridSpec) -> bool {
        self.n1 == other.n1
            && self.n2 == other.n2
            && self.kind == other.kind
            && (self.kind == DomainKind::Torus || (self.t_max - other.t_max).abs() < 1e-14)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl Field {
    pub fn zeros(grid: GridSpec) -> Self {
        Field { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Field { grid, values: vec![c; grid.len()] }
    }

    pub fn from_values(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return param(format!("expected {} values, got {}", grid.len(), values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return param("field values must be finite");
        }
        Ok(Field { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.rows() {
            let x2 = grid.x2(j);
            for i in 0..grid.n1 {
                values.push(f(grid.x1(i), x2));
            }
        }
        Field { grid, values }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.n1 + i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let n1 = self.grid.n1;
        &self.values[j * n1..(j + 1) * n1]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_with(&self, other: &Field, f: impl Fn(f64, f64) -> f64) -> Result<Field> {
        if !self.grid.same_shape(&other.grid) {
            return domain("fields live on different grids");
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Field { grid: self.grid, values })
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Field {
        self.map(|v| c * v)
    }

    pub fn axpy(&mut self, c: f64, other: &Field) -> Result<()> {
        if !self.grid.same_shape(&other.grid) {
            return domain("fields live on different grids");
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn sup_diff(&self, other: &Field) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    /// Replace rows with x₂ in the given half-open index range by zeros.
    pub fn with_zero_rows(mut self, rows: std::ops::Range<usize>) -> Field {
        let n1 = self.grid.n1;
        for j in rows {
            self.values[j * n1..(j + 1) * n1].iter_mut().for_each(|v| *v = 0.0);
        }
        self
    }
}

fn require_half(f: &Field, op: &str) -> Result<()> {
    if f.grid.kind != DomainKind::HalfPlane {
        return domain(format!("{op} requires a half-plane field, got {:?}", f.grid.kind));
    }
    Ok(())
}

/// f̃(x₁,x₂) = f(x₁,|x₂|) on the two-sided grid.
pub fn even_reflection(f: &Field) -> Result<Field> {
    require_half(f, "even_reflection")?;
    let g = f.grid.as_two_sided();
    let n2 = g.n2 as isize;
    let mut values = Vec::with_capacity(g.len());
    for j in 0..g.rows() {
        let src = (j as isize - n2).unsigned_abs();
        values.extend_from_slice(f.row(src));
    }
    Ok(Field { grid: g, values })
}

/// f^E = f on x₂ ≥ 0 and 0 on x₂ < 0, on the two-sided grid.
pub fn trivial_extension(f: &Field) -> Result<Field> {
    require_half(f, "trivial_extension")?;
    let g = f.grid.as_two_sided();
    let mut values = vec![0.0; g.n2 * g.n1];
    for j in 0..g.n2 {
        values.extend_from_slice(f.row(j));
    }
    Ok(Field { grid: g, values })
}

/// Restriction of a two-sided field to the half-plane. The row x₂ = t_max is taken
/// from the periodic wrap (row x₂ = −t_max).
pub fn restrict_to_half_plane(f: &Field) -> Result<Field> {
    if f.grid.kind != DomainKind::TwoSided {
        return domain("restrict_to_half_plane requires a two-sided field");
    }
    let g = f.grid.as_half_plane();
    let mut values = Vec::with_capacity(g.len());
    for j in 0..=g.n2 {
        let src = (g.n2 + j) % (2 * g.n2);
        values.extend_from_slice(f.row(src));
    }
    Ok(Field { grid: g, values })
}

/// Resample a periodic field (torus or two-sided) onto another grid with matching
/// spacings, using periodicity in x₂.
pub fn periodic_resample(f: &Field, target: GridSpec) -> Result<Field> {
    if !f.grid.is_periodic2() {
        return domain("periodic_resample requires a periodic source field");
    }
    if target.n1 != f.grid.n1 || (target.dx2() - f.grid.dx2()).abs() > 1e-12 {
        return domain("periodic_resample needs equal spacings");
    }
    let rows = f.grid.rows() as i64;
    let origin = f.grid.x2(0);
    let mut values = Vec::with_capacity(target.len());
    for j in 0..target.rows() {
        let idx = ((target.x2(j) - origin) / f.grid.dx2()).round() as i64;
        values.extend_from_slice(f.row(idx.rem_euclid(rows) as usize));
    }
    Ok(Field { grid: target, values })
}

/// Exact Fourier-multiplier derivative (ik)^order in direction `dir`.
/// x₁ is periodic on every grid; x₂ derivatives need a periodic grid
/// (half-plane fields must use [`fd_derivative_x2`]).
pub fn spectral_derivative(f: &Field, dir: u8, order: u32) -> Result<Field> {
    match dir {
        1 => Ok(fft::derivative_x1(f, order)),
        2 => {
            if !f.grid.is_periodic2() {
                return domain("x₂ spectral derivative of a half-plane field; use fd_derivative_x2");
            }
            fft::derivative_x2(f, order)
        }
        _ => param(format!("direction {dir} must be 1 or 2")),
    }
}

/// Second-order finite differences in x₂ (central inside, one-sided at the ends).
pub fn fd_derivative_x2(f: &Field, order: u32) -> Result<Field> {
    let g = f.grid;
    let rows = g.rows();
    let h = g.dx2();
    let n1 = g.n1;
    if rows < 4 {
        return param("finite differences need at least four rows");
    }
    let v = |i: usize, j: usize| f.values[j * n1 + i];
    let mut out = vec![0.0; g.len()];
    for j in 0..rows {
        for i in 0..n1 {
            let d = match order {
                1 => {
                    if j == 0 {
                        (-3.0 * v(i, 0) + 4.0 * v(i, 1) - v(i, 2)) / (2.0 * h)
                    } else if j == rows - 1 {
                        (3.0 * v(i, j) - 4.0 * v(i, j - 1) + v(i, j - 2)) / (2.0 * h)
                    } else {
                        (v(i, j + 1) - v(i, j - 1)) / (2.0 * h)
                    }
                }
                2 => {
                    if j == 0 {
                        (2.0 * v(i, 0) - 5.0 * v(i, 1) + 4.0 * v(i, 2) - v(i, 3)) / (h * h)
                    } else if j == rows - 1 {
                        (2.0 * v(i, j) - 5.0 * v(i, j - 1) + 4.0 * v(i, j - 2) - v(i, j - 3))
                            / (h * h)
                    } else {
                        (v(i, j + 1) - 2.0 * v(i, j) + v(i, j - 1)) / (h * h)
                    }
                }
                _ => return param("finite differences support orders 1 and 2"),
            };
            out[j * n1 + i] = d;
        }
    }
    Ok(Field { grid: g, values: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn distance_examples() {
        let o = Point::new(0.0, 0.0);
        assert_eq!(parabolic_distance(o, Point::new(1.0, 0.0)), 1.0);
        assert_eq!(parabolic_distance(o, Point::new(0.0, 1.0)), 1.0);
        assert_eq!(parabolic_distance(o, Point::new(0.5, 0.25)), 1.0);
        assert!((torus_distance(o, Point::new(0.9, 0.0)) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn extensions() {
        let h = GridSpec::half_plane(8, 8, 1.0).unwrap();
        let one = Field::constant(h, 1.0);
        let r = even_reflection(&one).unwrap();
        assert!(r.values.iter().all(|&v| v == 1.0));
        let lin = Field::from_fn(h, |_, x2| x2);
        let r = even_reflection(&lin).unwrap();
        for j in 0..r.grid.rows() {
            assert!((r.at(3, j) - r.grid.x2(j).abs()).abs() < 1e-15);
        }
        let e = trivial_extension(&one).unwrap();
        for j in 0..e.grid.rows() {
            let expect = if e.grid.x2(j) >= 0.0 { 1.0 } else { 0.0 };
            assert_eq!(e.at(0, j), expect);
        }
        let jm = e.grid.n2 / 2;
        assert_eq!(e.grid.x2(jm), -0.5);
        assert_eq!(e.at(2, jm), 0.0);
        assert!(trivial_extension(&Field::zeros(h)).unwrap().max_abs() == 0.0);
        let t = GridSpec::torus(8, 8).unwrap();
        assert!(even_reflection(&Field::zeros(t)).is_err());
        assert!(trivial_extension(&Field::zeros(t)).is_err());
    }

    #[test]
    fn reflection_then_restriction_is_identity() {
        let h = GridSpec::half_plane(16, 8, 0.5).unwrap();
        let f = Field::from_fn(h, |x1, x2| (2.0 * PI * x1).sin() + x2 * x2);
        let back = restrict_to_half_plane(&even_reflection(&f).unwrap()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn reflection_does_not_increase_holder_quotients() {
        let h = GridSpec::half_plane(8, 8, 1.0).unwrap();
        let f = Field::from_fn(h, |x1, x2| (2.0 * PI * x1).cos() * (1.0 + x2).sqrt());
        let r = even_reflection(&f).unwrap();
        let alpha = 0.75;
        let sup = |fld: &Field| {
            let g = fld.grid;
            let mut m = 0.0f64;
            for a in 0..g.len() {
                for b in (a + 1)..g.len() {
                    let pa = (a % g.n1, a / g.n1);
                    let pb = (b % g.n1, b / g.n1);
                    let d = g.node_distance(pa, pb);
                    m = m.max((fld.values[a] - fld.values[b]).abs() / d.powf(alpha));
                }
            }
            m
        };
        assert!(sup(&r) <= sup(&f) * (1.0 + 1e-12));
    }

    #[test]
    fn derivative_single_modes() {
        let g = GridSpec::torus(32, 32).unwrap();
        let f = Field::from_fn(g, |x1, _| (2.0 * PI * x1).cos());
        let d = spectral_derivative(&f, 1, 1).unwrap();
        let e = Field::from_fn(g, |x1, _| -2.0 * PI * (2.0 * PI * x1).sin());
        assert!(d.sup_diff(&e).unwrap() < 1e-12);
        let f2 = Field::from_fn(g, |_, x2| (2.0 * PI * x2).cos());
        let d2 = spectral_derivative(&f2, 2, 1).unwrap();
        let e2 = Field::from_fn(g, |_, x2| -2.0 * PI * (2.0 * PI * x2).sin());
        assert!(d2.sup_diff(&e2).unwrap() < 1e-12);
        let c = Field::constant(g, 3.0);
        assert!(spectral_derivative(&c, 1, 2).unwrap().max_abs() < 1e-12);
        let h = GridSpec::half_plane(32, 32, 1.0).unwrap();
        assert!(spectral_derivative(&Field::zeros(h), 2, 1).is_err());
    }

    #[test]
    fn mixed_derivatives_commute() {
        let g = GridSpec::torus(16, 16).unwrap();
        let f = Field::from_fn(g, |x1, x2| (2.0 * PI * (x1 + 2.0 * x2)).sin());
        let a = spectral_derivative(&spectral_derivative(&f, 1, 1).unwrap(), 2, 1).unwrap();
        let b = spectral_derivative(&spectral_derivative(&f, 2, 1).unwrap(), 1, 1).unwrap();
        assert!(a.sup_diff(&b).unwrap() <= 1e-12 * a.max_abs());
    }

    #[test]
    fn finite_differences_second_order() {
        let err = |n2: usize| {
            let h = GridSpec::half_plane(4, n2, 1.0).unwrap();
            let f = Field::from_fn(h, |_, x2| (-2.0 * x2).exp());
            let d = fd_derivative_x2(&f, 1).unwrap();
            let e = Field::from_fn(h, |_, x2| -2.0 * (-2.0 * x2).exp());
            d.sup_diff(&e).unwrap()
        };
        let r = err(32) / err(64);
        assert!(r > 3.5 && r < 4.5, "ratio {r}");
    }

    #[test]
    fn resample_and_offsets() {
        let t = GridSpec::torus(8, 8).unwrap();
        let f = Field::from_fn(t, |x1, x2| x1 + 10.0 * x2);
        let two = GridSpec::two_sided(8, 4, 0.5).unwrap();
        let r = periodic_resample(&f, two).unwrap();
        assert_eq!(r.at(1, 0), f.at(1, 4));
        assert_eq!(r.at(1, 4), f.at(1, 0));
        assert_eq!(periodic_resample(&r, t).unwrap().values, f.values);
        assert!((t.offset1(0, 7) + 0.125).abs() < 1e-15);
        assert!((t.offset2(0, 7) + 0.125).abs() < 1e-15);
        let h = GridSpec::half_plane(8, 8, 1.0).unwrap();
        assert!((h.offset2(0, 7) - 0.875).abs() < 1e-15);
    }
}
