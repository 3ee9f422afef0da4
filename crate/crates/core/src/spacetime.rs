//! Minkowski vectors, Lorentz matrices and particle configurations.
//!
//! Vectors carry `d` components (time first) with metric `diag(1, -1, ...)`.
//! Only `d = 2` and `d = 4` are used by the rest of the crate, but nothing in
//! this module depends on that restriction beyond the fixed 4-slot storage.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const MAX_DIM: usize = 4;

/// A spacetime vector with `dim` components, time first.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourVector {
    dim: usize,
    c: [f64; MAX_DIM],
}

impl FourVector {
    pub fn new(components: &[f64]) -> Result<Self> {
        let dim = components.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let mut c = [0.0; MAX_DIM];
        c[..dim].copy_from_slice(components);
        Ok(Self { dim, c })
    }

    pub fn zero(dim: usize) -> Self {
        assert!(dim <= MAX_DIM);
        Self { dim, c: [0.0; MAX_DIM] }
    }

    /// Unit vector along axis `mu`.
    pub fn basis(dim: usize, mu: usize) -> Self {
        let mut v = Self::zero(dim);
        v.c[mu] = 1.0;
        v
    }

    /// Future-pointing time axis `(1, 0, ..., 0)`.
    pub fn time_axis(dim: usize) -> Self {
        Self::basis(dim, 0)
    }

    /// Builds `(t, x...)` from a time and spatial components.
    pub fn from_time_space(t: f64, space: &[f64]) -> Self {
        let mut v = Self::zero(space.len() + 1);
        v.c[0] = t;
        v.c[1..=space.len()].copy_from_slice(space);
        v
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.c[..self.dim]
    }

    pub fn time(&self) -> f64 {
        self.c[0]
    }

    pub fn space(&self) -> &[f64] {
        &self.c[1..self.dim]
    }

    /// Metric contraction `x·y = x⁰y⁰ - Σ xⁱyⁱ`, panicking on mismatched dimensions.
    pub fn dot(&self, other: &Self) -> f64 {
        assert_eq!(self.dim, other.dim, "dimension mismatch in Minkowski product");
        let mut s = self.c[0] * other.c[0];
        for i in 1..self.dim {
            s -= self.c[i] * other.c[i];
        }
        s
    }

    /// Squared Minkowski norm.
    pub fn norm2(&self) -> f64 {
        self.dot(self)
    }

    /// Components with the index lowered, `x_μ = g_μν x^ν`.
    pub fn lowered(&self) -> [f64; MAX_DIM] {
        let mut out = self.c;
        for v in out.iter_mut().take(self.dim).skip(1) {
            *v = -*v;
        }
        out
    }

    /// Largest absolute component difference.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.as_slice()
            .iter()
            .zip(other.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Checks that the vector is a unit, future-oriented timelike vector.
    pub fn check_unit_future(&self, tol: f64) -> Result<()> {
        let n2 = self.norm2();
        if !n2.is_finite() || (n2 - 1.0).abs() > tol || self.c[0] <= 0.0 {
            return Err(Error::InvalidNormal(format!("{self:?} (n·n = {n2})")));
        }
        Ok(())
    }
}

impl fmt::Debug for FourVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.as_slice())
    }
}

impl Index<usize> for FourVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        debug_assert!(i < self.dim);
        &self.c[i]
    }
}

impl IndexMut<usize> for FourVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        debug_assert!(i < self.dim);
        &mut self.c[i]
    }
}

impl Add for FourVector {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            self.c[i] += rhs.c[i];
        }
        self
    }
}

impl Sub for FourVector {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        debug_assert_eq!(self.dim, rhs.dim);
        for i in 0..self.dim {
            self.c[i] -= rhs.c[i];
        }
        self
    }
}

impl Mul<f64> for FourVector {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        for v in self.c.iter_mut().take(self.dim) {
            *v *= rhs;
        }
        self
    }
}

/// Minkowski product with a dimension check.
pub fn minkowski_dot(x: &FourVector, y: &FourVector) -> Result<f64> {
    if x.dim != y.dim {
        return Err(Error::DimensionMismatch { expected: x.dim, found: y.dim });
    }
    Ok(x.dot(y))
}

/// A real `d×d` Lorentz matrix acting on contravariant vectors.
#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzMatrix {
    dim: usize,
    m: [[f64; MAX_DIM]; MAX_DIM],
}

impl fmt::Debug for LorentzMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<&[f64]> = (0..self.dim).map(|r| &self.m[r][..self.dim]).collect();
        write!(f, "LorentzMatrix{rows:?}")
    }
}

impl LorentzMatrix {
    pub fn identity(dim: usize) -> Self {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (i, row) in m.iter_mut().enumerate().take(dim) {
            row[i] = 1.0;
        }
        Self { dim, m }
    }

    /// Builds a matrix from rows; no Lorentz check is made here.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::UnsupportedDimension(dim));
        }
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for (r, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: row.len() });
            }
            m[r][..dim].copy_from_slice(row);
        }
        Ok(Self { dim, m })
    }

    /// Boost with rapidity `zeta` along spatial axis `axis` (1-based spacetime index).
    ///
    /// Maps the time axis to `(cosh ζ, ..., sinh ζ, ...)`.
    pub fn boost_along(dim: usize, axis: usize, zeta: f64) -> Self {
        assert!(axis >= 1 && axis < dim);
        let mut l = Self::identity(dim);
        let (ch, sh) = (zeta.cosh(), zeta.sinh());
        l.m[0][0] = ch;
        l.m[axis][axis] = ch;
        l.m[0][axis] = sh;
        l.m[axis][0] = sh;
        l
    }

    /// The pure boost taking the time axis to the unit future timelike vector `u`.
    pub fn boost_to(u: &FourVector) -> Result<Self> {
        u.check_unit_future(1e-9)?;
        let dim = u.dim();
        let mut l = Self::identity(dim);
        let u0 = u[0];
        l.m[0][0] = u0;
        for i in 1..dim {
            l.m[0][i] = u[i];
            l.m[i][0] = u[i];
            for j in 1..dim {
                l.m[i][j] = if i == j { 1.0 } else { 0.0 } + u[i] * u[j] / (1.0 + u0);
            }
        }
        Ok(l)
    }

    /// Spatial rotation by `angle` about the unit axis `axis` (d = 4 only).
    pub fn rotation(axis: [f64; 3], angle: f64) -> Self {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        let a = [axis[0] / n, axis[1] / n, axis[2] / n];
        let (s, c) = angle.sin_cos();
        let mut l = Self::identity(4);
        for i in 0..3 {
            for j in 0..3 {
                let delta = if i == j { 1.0 } else { 0.0 };
                let mut cross = 0.0;
                for (k, ak) in a.iter().enumerate() {
                    cross += levi_civita(i, k, j) * ak;
                }
                l.m[i + 1][j + 1] = c * delta + (1.0 - c) * a[i] * a[j] + s * cross;
            }
        }
        l
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Entry `Λ^row_col`.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.m[row][col]
    }

    pub fn apply(&self, x: &FourVector) -> FourVector {
        assert_eq!(self.dim, x.dim(), "dimension mismatch applying Lorentz matrix");
        let mut out = FourVector::zero(self.dim);
        for r in 0..self.dim {
            let mut s = 0.0;
            for c in 0..self.dim {
                s += self.m[r][c] * x[c];
            }
            out[r] = s;
        }
        out
    }

    pub fn compose(&self, rhs: &Self) -> Self {
        assert_eq!(self.dim, rhs.dim);
        let mut out = Self::identity(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                out.m[r][c] = (0..self.dim).map(|k| self.m[r][k] * rhs.m[k][c]).sum();
            }
        }
        out
    }

    /// Inverse via `Λ⁻¹ = g Λᵀ g`, valid for Lorentz matrices.
    pub fn inverse(&self) -> Self {
        let mut out = Self::identity(self.dim);
        for r in 0..self.dim {
            for c in 0..self.dim {
                let sign = metric(r) * metric(c);
                out.m[r][c] = sign * self.m[c][r];
            }
        }
        out
    }

    /// Largest deviation of `Λᵀ g Λ` from `g`.
    pub fn metric_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for a in 0..self.dim {
            for b in 0..self.dim {
                let s: f64 = (0..self.dim).map(|k| metric(k) * self.m[k][a] * self.m[k][b]).sum();
                let target = if a == b { metric(a) } else { 0.0 };
                worst = worst.max((s - target).abs());
            }
        }
        worst
    }

    pub fn determinant(&self) -> f64 {
        let n = self.dim;
        let mut a = self.m;
        let mut det = 1.0;
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
                .unwrap();
            if a[pivot][col] == 0.0 {
                return 0.0;
            }
            if pivot != col {
                a.swap(pivot, col);
                det = -det;
            }
            det *= a[col][col];
            for r in col + 1..n {
                let f = a[r][col] / a[col][col];
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
        det
    }

    /// Validates membership of the proper orthochronous component.
    pub fn check_proper_orthochronous(&self, tol: f64) -> Result<()> {
        let defect = self.metric_defect();
        if defect > tol {
            return Err(Error::NotProperOrthochronous(format!("metric defect {defect:e}")));
        }
        if self.m[0][0] < 1.0 - tol {
            return Err(Error::NotProperOrthochronous("time orientation reversed".into()));
        }
        let det = self.determinant();
        if (det - 1.0).abs() > tol.max(1e-9) * 10.0 {
            return Err(Error::NotProperOrthochronous(format!("determinant {det}")));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.dim {
            for c in 0..self.dim {
                worst = worst.max((self.m[r][c] - other.m[r][c]).abs());
            }
        }
        worst
    }
}

fn metric(mu: usize) -> f64 {
    if mu == 0 {
        1.0
    } else {
        -1.0
    }
}

fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// N spacetime points split into subsystem (first `n1`) and environment.
#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    points: Vec<FourVector>,
    n1: usize,
}

impl Configuration {
    pub fn new(points: Vec<FourVector>, n1: usize) -> Result<Self> {
        if n1 > points.len() {
            return Err(Error::IndexOutOfRange { index: n1, limit: points.len() });
        }
        if let Some(first) = points.first() {
            for p in &points {
                if p.dim() != first.dim() {
                    return Err(Error::DimensionMismatch { expected: first.dim(), found: p.dim() });
                }
            }
        }
        Ok(Self { points, n1 })
    }

    /// Configuration without a subsystem split (everything counted as subsystem).
    pub fn unsplit(points: Vec<FourVector>) -> Self {
        let n1 = points.len();
        Self { points, n1 }
    }

    pub fn points(&self) -> &[FourVector] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(N1, N2)`.
    pub fn split(&self) -> (usize, usize) {
        (self.n1, self.points.len() - self.n1)
    }

    pub fn subsystem(&self) -> &[FourVector] {
        &self.points[..self.n1]
    }

    pub fn environment(&self) -> &[FourVector] {
        &self.points[self.n1..]
    }
}

/// True iff all pairwise separations are strictly spacelike.
pub fn is_spacelike_configuration(q: &[FourVector]) -> bool {
    for i in 0..q.len() {
        for j in i + 1..q.len() {
            if (q[i] - q[j]).norm2() >= 0.0 {
                return false;
            }
        }
    }
    true
}

/// Independent Lorentz matrices per particle slot.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTimeLorentz {
    lambdas: Vec<LorentzMatrix>,
}

impl MultiTimeLorentz {
    pub fn new(lambdas: Vec<LorentzMatrix>) -> Result<Self> {
        for l in &lambdas {
            l.check_proper_orthochronous(1e-9)?;
        }
        Ok(Self { lambdas })
    }

    /// The same matrix on every slot.
    pub fn uniform(lambda: LorentzMatrix, n: usize) -> Result<Self> {
        Self::new(vec![lambda; n])
    }

    pub fn lambdas(&self) -> &[LorentzMatrix] {
        &self.lambdas
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn inverse(&self) -> Self {
        Self { lambdas: self.lambdas.iter().map(LorentzMatrix::inverse).collect() }
    }
}

/// Applies `(Λ_1 x_1, ..., Λ_N x_N)`.
pub fn transform_configuration(q: &Configuration, l: &MultiTimeLorentz) -> Result<Configuration> {
    if q.len() != l.len() {
        return Err(Error::ParticleCountMismatch { expected: l.len(), found: q.len() });
    }
    let points = q.points.iter().zip(&l.lambdas).map(|(x, lam)| lam.apply(x)).collect();
    Ok(Configuration { points, n1: q.n1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(c: &[f64]) -> FourVector {
        FourVector::new(c).unwrap()
    }

    #[test]
    fn dot_examples() {
        assert_eq!(minkowski_dot(&v(&[1.0, 0.0]), &v(&[1.0, 0.0])).unwrap(), 1.0);
        assert_eq!(minkowski_dot(&v(&[1.0, 1.0]), &v(&[1.0, 1.0])).unwrap(), 0.0);
        assert_eq!(minkowski_dot(&v(&[2.0, 1.0]), &v(&[1.0, 2.0])).unwrap(), 0.0);
        assert!(matches!(
            minkowski_dot(&v(&[1.0, 0.0]), &v(&[1.0, 0.0, 0.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn spacelike_examples() {
        assert!(is_spacelike_configuration(&[v(&[0.0, 0.0]), v(&[0.0, 1.0])]));
        assert!(!is_spacelike_configuration(&[v(&[0.0, 0.3]), v(&[0.0, 0.3])]));
        assert!(!is_spacelike_configuration(&[v(&[0.0, 0.0]), v(&[1.0, 0.5])]));
    }

    #[test]
    fn boost_roundtrip_and_leaf() {
        let b = LorentzMatrix::boost_along(2, 1, 0.7);
        let q = Configuration::new(vec![v(&[0.3, -1.0]), v(&[0.3, 2.0])], 1).unwrap();
        let fwd = MultiTimeLorentz::uniform(b, 2).unwrap();
        let there = transform_configuration(&q, &fwd).unwrap();
        let back = transform_configuration(&there, &fwd.inverse()).unwrap();
        for (a, b) in back.points().iter().zip(q.points()) {
            assert!(a.max_abs_diff(b) < 1e-12);
        }
        // an equal-time pair lands on the boosted leaf: (Λ⁻¹ x)⁰ equal for both
        let inv = b.inverse();
        let t0 = inv.apply(&there.points()[0])[0];
        let t1 = inv.apply(&there.points()[1])[0];
        assert!((t0 - t1).abs() < 1e-12);
        // and directly: Λ x for equal-time points shares the boosted time coordinate
        let dir = b.apply(&v(&[0.0, 1.0]));
        assert!((dir[0] - 0.7f64.sinh()).abs() < 1e-15);
    }

    #[test]
    fn boost_to_maps_time_axis() {
        let u = v(&[1.25, 0.75]);
        let b = LorentzMatrix::boost_to(&u).unwrap();
        assert!(b.apply(&FourVector::time_axis(2)).max_abs_diff(&u) < 1e-14);
        b.check_proper_orthochronous(1e-12).unwrap();
        let r = LorentzMatrix::rotation([0.3, -0.2, 0.9], 1.1);
        r.check_proper_orthochronous(1e-12).unwrap();
        assert!(r.compose(&r.inverse()).max_abs_diff(&LorentzMatrix::identity(4)) < 1e-14);
    }

    #[test]
    fn rejects_improper() {
        let parity = LorentzMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(parity.check_proper_orthochronous(1e-12).is_err());
        let tr = LorentzMatrix::from_rows(&[vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(tr.check_proper_orthochronous(1e-12).is_err());
    }
}
