//! Spacelike foliations and leaf quadrature.
//!
//! Every foliation is a base shape `y⁰ = s + f(y¹)` viewed through a fixed
//! Lorentz frame, `x = Λ y`. The chart of a leaf is the spatial part of `y`.

use serde::{Deserialize, Serialize};

use crate::spacetime::{FourVector, LorentzMatrix};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FoliationKind {
    Flat,
    Boosted { rapidity: f64 },
    /// Graph leaves `t = s + a·tanh(x/L)`.
    Tanh { amplitude: f64, scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Shape {
    Flat,
    Tanh { a: f64, l: f64 },
}

impl Shape {
    fn f(&self, y1: f64) -> f64 {
        match *self {
            Shape::Flat => 0.0,
            Shape::Tanh { a, l } => a * (y1 / l).tanh(),
        }
    }

    fn df(&self, y1: f64) -> f64 {
        match *self {
            Shape::Flat => 0.0,
            Shape::Tanh { a, l } => {
                let c = (y1 / l).cosh();
                a / (l * c * c)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Foliation {
    dim: usize,
    kind: FoliationKind,
    shape: Shape,
    frame: LorentzMatrix,
    frame_inv: LorentzMatrix,
    slab: (f64, f64),
}

/// Builds a foliation covering leaf labels in `slab`.
pub fn make_foliation(dim: usize, kind: FoliationKind, slab: (f64, f64)) -> Result<Foliation> {
    if dim != 2 && dim != 4 {
        return Err(Error::UnsupportedDimension(dim));
    }
    if !(slab.0 < slab.1) || !slab.0.is_finite() || !slab.1.is_finite() {
        return Err(Error::OutOfRange(format!("slab {slab:?}")));
    }
    let (shape, frame) = match kind {
        FoliationKind::Flat => (Shape::Flat, LorentzMatrix::identity(dim)),
        FoliationKind::Boosted { rapidity } => {
            if !rapidity.is_finite() {
                return Err(Error::OutOfRange(format!("rapidity {rapidity}")));
            }
            (Shape::Flat, LorentzMatrix::boost_along(dim, 1, rapidity))
        }
        FoliationKind::Tanh { amplitude, scale } => {
            if !(scale > 0.0) || !amplitude.is_finite() {
                return Err(Error::OutOfRange(format!("tanh scale {scale}")));
            }
            let slope = amplitude.abs() / scale;
            if slope >= 1.0 {
                return Err(Error::NotSpacelikeProfile(slope));
            }
            (Shape::Tanh { a: amplitude, l: scale }, LorentzMatrix::identity(dim))
        }
    };
    let frame_inv = frame.inverse();
    Ok(Foliation { dim, kind, shape, frame, frame_inv, slab })
}

impl Foliation {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> FoliationKind {
        self.kind
    }

    pub fn slab(&self) -> (f64, f64) {
        self.slab
    }

    pub fn frame(&self) -> &LorentzMatrix {
        &self.frame
    }

    /// Same leaves as seen after applying `Λ` to spacetime.
    pub fn with_frame(&self, lambda: &LorentzMatrix) -> Result<Self> {
        lambda.check_proper_orthochronous(1e-9)?;
        let frame = lambda.compose(&self.frame);
        Ok(Self { frame, frame_inv: frame.inverse(), ..self.clone() })
    }

    fn base(&self, x: &FourVector) -> FourVector {
        self.frame_inv.apply(x)
    }

    /// Leaf label `s(x)`.
    pub fn leaf_of(&self, x: &FourVector) -> f64 {
        let y = self.base(x);
        y[0] - self.shape.f(y[1])
    }

    /// Spatial chart coordinates of `x` on its leaf.
    pub fn chart(&self, x: &FourVector) -> Vec<f64> {
        self.base(x).space().to_vec()
    }

    /// Point of `Σ_s` with the given chart coordinates.
    pub fn embed(&self, s: f64, chart: &[f64]) -> FourVector {
        let y = FourVector::from_time_space(s + self.shape.f(chart[0]), chart);
        self.frame.apply(&y)
    }

    /// Unit future normal of the leaf through `x`.
    pub fn normal(&self, x: &FourVector) -> FourVector {
        let y1 = self.base(x)[1];
        self.normal_at_chart(y1)
    }

    fn normal_at_chart(&self, y1: f64) -> FourVector {
        let fp = self.shape.df(y1);
        let g = 1.0 / (1.0 - fp * fp).sqrt();
        let mut n = FourVector::zero(self.dim);
        n[0] = g;
        n[1] = fp * g;
        self.frame.apply(&n)
    }

    /// Induced volume element per unit chart volume.
    pub fn area_element(&self, chart: &[f64]) -> f64 {
        let fp = self.shape.df(chart[0]);
        (1.0 - fp * fp).sqrt()
    }

    /// Tangent along chart axis `i` at the given chart point.
    pub fn tangent(&self, chart: &[f64], i: usize) -> FourVector {
        let mut t = FourVector::zero(self.dim);
        t[i + 1] = 1.0;
        if i == 0 {
            t[0] = self.shape.df(chart[0]);
        }
        self.frame.apply(&t)
    }

    /// `v·∇s` at `x`: leaves crossed per unit parameter when moving along `v`.
    pub fn leaf_rate(&self, x: &FourVector, v: &FourVector) -> f64 {
        let y1 = self.base(x)[1];
        let vb = self.base(v);
        vb[0] - self.shape.df(y1) * vb[1]
    }

    fn check_in_slab(&self, s: f64) -> Result<()> {
        let tol = 1e-9 * (1.0 + s.abs());
        if s < self.slab.0 - tol || s > self.slab.1 + tol || !s.is_finite() {
            return Err(Error::OutsideSlab(s));
        }
        Ok(())
    }

    /// Moves `x` along the chart time direction onto `Σ_s`.
    pub fn project_to_leaf(&self, s: f64, x: &FourVector) -> Result<FourVector> {
        self.check_in_slab(s)?;
        self.check_in_slab(self.leaf_of(x))?;
        Ok(self.embed(s, &self.chart(x)))
    }

    /// Composite midpoint rule on `box_` (one interval per chart axis) with
    /// `n_nodes` per axis.
    pub fn leaf_quadrature(&self, s: f64, box_: &[(f64, f64)], n_nodes: usize) -> Result<LeafQuadrature> {
        self.check_in_slab(s)?;
        if box_.len() != self.dim - 1 {
            return Err(Error::DimensionMismatch { expected: self.dim - 1, found: box_.len() });
        }
        if n_nodes < 2 {
            return Err(Error::OutOfRange(format!("need at least 2 nodes, got {n_nodes}")));
        }
        if box_.iter().any(|(lo, hi)| !(lo < hi) || !lo.is_finite() || !hi.is_finite()) {
            return Err(Error::EmptyBox);
        }
        let axes: Vec<Vec<f64>> = box_
            .iter()
            .map(|(lo, hi)| {
                let h = (hi - lo) / n_nodes as f64;
                (0..n_nodes).map(|i| lo + (i as f64 + 0.5) * h).collect()
            })
            .collect();
        let cell: f64 = box_.iter().map(|(lo, hi)| (hi - lo) / n_nodes as f64).product();
        let total = n_nodes.pow(axes.len() as u32);
        let mut out = LeafQuadrature {
            foliation: self.clone(),
            s,
            box_: box_.to_vec(),
            nodes: Vec::with_capacity(total),
            charts: Vec::with_capacity(total),
            normals: Vec::with_capacity(total),
            weights: Vec::with_capacity(total),
        };
        for flat in 0..total {
            let mut r = flat;
            let mut chart = vec![0.0; axes.len()];
            for a in (0..axes.len()).rev() {
                chart[a] = axes[a][r % n_nodes];
                r /= n_nodes;
            }
            out.nodes.push(self.embed(s, &chart));
            out.normals.push(self.normal_at_chart(chart[0]));
            out.weights.push(cell * self.area_element(&chart));
            out.charts.push(chart);
        }
        Ok(out)
    }
}

/// Nodes and weights of a quadrature rule on one leaf.
#[derive(Clone, Debug)]
pub struct LeafQuadrature {
    foliation: Foliation,
    s: f64,
    box_: Vec<(f64, f64)>,
    pub nodes: Vec<FourVector>,
    pub charts: Vec<Vec<f64>>,
    pub normals: Vec<FourVector>,
    pub weights: Vec<f64>,
}

impl LeafQuadrature {
    pub fn leaf(&self) -> f64 {
        self.s
    }

    pub fn foliation(&self) -> &Foliation {
        &self.foliation
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.box_
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// True if both rules live on the same leaf of the same foliation.
    pub fn same_surface(&self, other: &Self) -> bool {
        self.s == other.s && self.foliation == other.foliation
    }

    /// `Σ w_i f(chart_i)`.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.charts.iter().zip(&self.weights).map(|(c, w)| w * f(c)).sum()
    }

    /// Whether chart point `c` lies in the outer `frac` of the box along any axis.
    pub fn in_outer_band(&self, c: &[f64], frac: f64) -> bool {
        self.box_.iter().zip(c).any(|((lo, hi), x)| {
            let band = frac * (hi - lo);
            *x < lo + band || *x > hi - band
        })
    }

    pub fn contains_chart(&self, c: &[f64]) -> bool {
        self.box_.iter().zip(c).all(|((lo, hi), x)| lo <= x && x <= hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slab() -> (f64, f64) {
        (-5.0, 5.0)
    }

    #[test]
    fn flat_normal_is_time_axis() {
        let f = make_foliation(2, FoliationKind::Flat, slab()).unwrap();
        let x = FourVector::new(&[0.3, -1.2]).unwrap();
        assert_eq!(f.normal(&x), FourVector::time_axis(2));
        assert_eq!(f.leaf_of(&x), 0.3);
    }

    #[test]
    fn boosted_normal_constant() {
        let z: f64 = 0.3;
        let f = make_foliation(2, FoliationKind::Boosted { rapidity: z }, slab()).unwrap();
        for x in [[0.0, 0.0], [1.0, 2.0], [-0.5, 3.0]] {
            let n = f.normal(&FourVector::new(&x).unwrap());
            assert!((n[0] - z.cosh()).abs() < 1e-15);
            assert!((n[1] - z.sinh()).abs() < 1e-15);
        }
    }

    #[test]
    fn tanh_normal_orthogonal() {
        let f = make_foliation(2, FoliationKind::Tanh { amplitude: 1.0, scale: 2.0 }, slab()).unwrap();
        for c in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let x = f.embed(0.4, &[c]);
            let n = f.normal(&x);
            assert!((n.norm2() - 1.0).abs() < 1e-12);
            assert!(n.dot(&f.tangent(&[c], 0)).abs() < 1e-12);
            assert!((x[0] - 0.4 - (c / 2.0f64).tanh()).abs() < 1e-15);
        }
        assert!(matches!(
            make_foliation(2, FoliationKind::Tanh { amplitude: 2.0, scale: 2.0 }, slab()),
            Err(Error::NotSpacelikeProfile(_))
        ));
    }

    #[test]
    fn projection_examples() {
        let flat = make_foliation(2, FoliationKind::Flat, slab()).unwrap();
        let x = FourVector::new(&[0.2, 1.5]).unwrap();
        assert_eq!(flat.project_to_leaf(1.0, &x).unwrap(), FourVector::new(&[1.0, 1.5]).unwrap());
        let b = make_foliation(2, FoliationKind::Boosted { rapidity: 0.5 }, slab()).unwrap();
        let on = b.embed(0.7, &[1.1]);
        assert!(b.project_to_leaf(0.7, &on).unwrap().max_abs_diff(&on) < 1e-14);
        let t = make_foliation(2, FoliationKind::Tanh { amplitude: 0.5, scale: 1.0 }, slab()).unwrap();
        let p = t.project_to_leaf(0.5, &x).unwrap();
        assert!((p[0] - 0.5 - 0.5 * 1.5f64.tanh()).abs() < 1e-15);
        assert_eq!(p[1], 1.5);
        assert!(matches!(flat.project_to_leaf(9.0, &x), Err(Error::OutsideSlab(_))));
    }

    #[test]
    fn quadrature_examples() {
        let f = make_foliation(2, FoliationKind::Flat, slab()).unwrap();
        for n in [2, 7, 64] {
            let q = f.leaf_quadrature(0.0, &[(-5.0, 5.0)], n).unwrap();
            assert!((q.weights.iter().sum::<f64>() - 10.0).abs() < 1e-10);
        }
        let q = f.leaf_quadrature(0.0, &[(-5.0, 5.0)], 128).unwrap();
        let approx = q.integrate(|c| (-c[0] * c[0] / 2.0).exp());
        let exact = (2.0 * std::f64::consts::PI).sqrt() * statrs::function::erf::erf(5.0 / 2f64.sqrt());
        assert!(((approx - exact) / exact).abs() < 1e-6);
        let t = make_foliation(2, FoliationKind::Tanh { amplitude: 0.0, scale: 1.0 }, slab()).unwrap();
        let qt = t.leaf_quadrature(0.0, &[(-5.0, 5.0)], 128).unwrap();
        assert_eq!(qt.weights, q.weights);
        assert_eq!(qt.nodes, q.nodes);
        assert!(matches!(f.leaf_quadrature(0.0, &[(1.0, 1.0)], 8), Err(Error::EmptyBox)));
    }

    #[test]
    fn midpoint_rule_is_second_order() {
        let f = make_foliation(2, FoliationKind::Flat, slab()).unwrap();
        let err = |n| {
            let q = f.leaf_quadrature(0.0, &[(0.0, 1.0)], n).unwrap();
            (q.integrate(|c| c[0].powi(3)) - 0.25).abs()
        };
        let ratio = err(16) / err(32);
        assert!((ratio - 4.0).abs() < 0.05, "{ratio}");
    }

    #[test]
    fn four_dimensional_leaves() {
        let f = make_foliation(4, FoliationKind::Tanh { amplitude: 0.4, scale: 1.0 }, slab()).unwrap();
        let chart = [0.3, -1.0, 2.0];
        let x = f.embed(1.0, &chart);
        let n = f.normal(&x);
        assert!((n.norm2() - 1.0).abs() < 1e-12);
        for i in 0..3 {
            assert!(n.dot(&f.tangent(&chart, i)).abs() < 1e-12);
        }
        let q = f.leaf_quadrature(0.0, &[(-1.0, 1.0); 3], 4).unwrap();
        assert_eq!(q.len(), 64);
    }

    #[test]
    fn leaf_rate_of_tangent_is_zero() {
        let b = make_foliation(2, FoliationKind::Boosted { rapidity: -0.4 }, slab())
            .unwrap()
            .with_frame(&LorentzMatrix::boost_along(2, 1, 0.1))
            .unwrap();
        let chart = [0.8];
        let x = b.embed(0.0, &chart);
        assert!(b.leaf_rate(&x, &b.tangent(&chart, 0)).abs() < 1e-14);
        assert!((b.leaf_rate(&x, &b.normal(&x)) - 1.0).abs() < 1e-14);
    }
}
