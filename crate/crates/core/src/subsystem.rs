//! Conditional density matrix of a subsystem and what is built from it.
//!
//! Particles `0..N1` form the subsystem, `N1..N` the environment. With
//! `A = Ψ(q1, Q2)` reshaped to a `K1×K2` matrix and `G = (γn)(Q2)`, the kernel is
//! `W(q1, q1′) = A(q1) Gᵀ A(q1′)† / 𝒩`, which is the environment partial trace of
//! `Ψ(q1)Ψ†(q1′)(1 ⊗ G)`.

use nalgebra::DVector;
use serde::Serialize;

use crate::clifford::{kron, kron_all, partial_trace_env, sqrt_psd, GammaSet};
use crate::foliation::{Foliation, LeafQuadrature};
use crate::spacetime::{FourVector, LorentzMatrix};
use crate::wavefunction::MultiTimeWaveFunction;
use crate::{CMatrix, CVector, Error, Result, C64};

/// Spectral rank threshold for "effectively one-dimensional".
pub const EPS_RANK: f64 = 1e-6;
/// Default overlap threshold for macroscopically disjoint supports.
pub const EPS_SUPP: f64 = 1e-6;
/// Discretized traces further than this from 1 are rejected outright.
pub const TRACE_REJECT: f64 = 0.05;

/// Points of some particles together with the normals used to weight them.
#[derive(Clone, Debug, PartialEq)]
pub struct PointSet {
    pub points: Vec<FourVector>,
    pub normals: Vec<FourVector>,
}

impl PointSet {
    pub fn new(points: Vec<FourVector>, normals: Vec<FourVector>) -> Result<Self> {
        if points.len() != normals.len() {
            return Err(Error::ParticleCountMismatch { expected: points.len(), found: normals.len() });
        }
        for n in &normals {
            n.check_unit_future(1e-9)?;
        }
        Ok(Self { points, normals })
    }

    /// Points on a leaf of `fol`, with the foliation normals.
    pub fn on_leaf(fol: &Foliation, s: f64, points: Vec<FourVector>) -> Result<Self> {
        for x in &points {
            let off = (fol.leaf_of(x) - s).abs();
            if off > 1e-9 {
                return Err(Error::OffLeaf(off));
            }
        }
        let normals = points.iter().map(|x| fol.normal(x)).collect();
        Ok(Self { points, normals })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `(Λ_j x_j, Λ_j n_j)` per slot.
    pub fn transformed(&self, lambdas: &[LorentzMatrix]) -> Self {
        Self {
            points: self.points.iter().zip(lambdas).map(|(x, l)| l.apply(x)).collect(),
            normals: self.normals.iter().zip(lambdas).map(|(n, l)| l.apply(n)).collect(),
        }
    }

    /// `⊗_j γ⁰ γ·n_j`.
    pub fn gamma_n(&self, gammas: &GammaSet) -> CMatrix {
        let f: Vec<CMatrix> = self.normals.iter().map(|n| gammas.gamma_n_single(n)).collect();
        kron_all(f.iter())
    }
}

/// One node of a tensor-product rule on `Σ^{N1}`.
#[derive(Clone, Debug)]
pub struct GridNode {
    pub set: PointSet,
    pub charts: Vec<Vec<f64>>,
    pub weight: f64,
}

/// Tensor product of per-particle leaf rules.
#[derive(Clone, Debug)]
pub struct SubsystemGrid {
    pub nodes: Vec<GridNode>,
    n_particles: usize,
    foliation: Option<(Foliation, f64)>,
    bounds: Vec<Vec<(f64, f64)>>,
}

impl SubsystemGrid {
    pub fn from_quadratures(quads: &[LeafQuadrature]) -> Result<Self> {
        let first = quads.first().ok_or(Error::EmptyBox)?;
        if quads.iter().any(|q| !q.same_surface(first)) {
            return Err(Error::SurfaceMismatch);
        }
        let sizes: Vec<usize> = quads.iter().map(|q| q.len()).collect();
        let total: usize = sizes.iter().product();
        let mut nodes = Vec::with_capacity(total);
        let mut idx = vec![0usize; quads.len()];
        for flat in 0..total {
            let mut r = flat;
            for k in (0..quads.len()).rev() {
                idx[k] = r % sizes[k];
                r /= sizes[k];
            }
            let points = idx.iter().zip(quads).map(|(&i, q)| q.nodes[i]).collect();
            let normals = idx.iter().zip(quads).map(|(&i, q)| q.normals[i]).collect();
            let charts = idx.iter().zip(quads).map(|(&i, q)| q.charts[i].clone()).collect();
            let weight = idx.iter().zip(quads).map(|(&i, q)| q.weights[i]).product();
            nodes.push(GridNode { set: PointSet { points, normals }, charts, weight });
        }
        Ok(Self {
            nodes,
            n_particles: quads.len(),
            foliation: Some((first.foliation().clone(), first.leaf())),
            bounds: quads.iter().map(|q| q.bounds().to_vec()).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    /// The leaf this grid was built on, if it still is a leaf.
    pub fn leaf(&self) -> Option<&(Foliation, f64)> {
        self.foliation.as_ref()
    }

    /// Grid moved by a multi-time transformation. The result is no longer a
    /// leaf of any stored foliation, so charts are kept from the original.
    pub fn transformed(&self, lambdas: &[LorentzMatrix]) -> Self {
        let nodes = self
            .nodes
            .iter()
            .map(|n| GridNode { set: n.set.transformed(lambdas), charts: n.charts.clone(), weight: n.weight })
            .collect();
        Self { nodes, n_particles: self.n_particles, foliation: None, bounds: self.bounds.clone() }
    }

    fn contains_charts(&self, charts: &[Vec<f64>]) -> bool {
        charts.iter().zip(&self.bounds).all(|(c, b)| c.iter().zip(b).all(|(x, (lo, hi))| lo <= x && x <= hi))
    }
}

/// `A = Ψ(q1, q2)` reshaped with rows indexed by subsystem spin.
fn value_matrix(psi: &MultiTimeWaveFunction, q1: &[FourVector], q2: &[FourVector], k1: usize, k2: usize) -> CMatrix {
    let mut q = q1.to_vec();
    q.extend_from_slice(q2);
    let v = psi.evaluate_unchecked(&q);
    CMatrix::from_row_slice(k1, k2, &v)
}

/// The kernel `W_cond(q1, q1′)` for fixed environment points.
#[derive(Clone, Debug)]
pub struct ConditionalDensityMatrix {
    psi: MultiTimeWaveFunction,
    n1: usize,
    env: PointSet,
    env_gamma_n: CMatrix,
    env_gamma_n_t: CMatrix,
    normalization: f64,
    leaf: Option<(Foliation, f64)>,
}

impl ConditionalDensityMatrix {
    /// Builds the kernel and computes `𝒩` by quadrature over `grid`.
    pub fn new(psi: &MultiTimeWaveFunction, n1: usize, env: PointSet, grid: &SubsystemGrid) -> Result<Self> {
        let mut w = Self::with_normalization(psi, n1, env, 1.0)?;
        if grid.n_particles() != n1 {
            return Err(Error::ParticleCountMismatch { expected: n1, found: grid.n_particles() });
        }
        let n = normalization(&w, grid);
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::NonPositiveNormalization(n));
        }
        w.normalization = n;
        w.leaf = grid.leaf().cloned();
        if let Some((fol, s)) = &w.leaf {
            for x in &w.env.points {
                let off = (fol.leaf_of(x) - s).abs();
                if off > 1e-9 {
                    return Err(Error::OffLeaf(off));
                }
            }
        }
        Ok(w)
    }

    /// Kernel with an externally supplied `𝒩`.
    pub fn with_normalization(psi: &MultiTimeWaveFunction, n1: usize, env: PointSet, normalization: f64) -> Result<Self> {
        let n = psi.n_particles();
        if n1 > n || env.len() != n - n1 {
            return Err(Error::ParticleCountMismatch { expected: n - n1.min(n), found: env.len() });
        }
        if !(normalization > 0.0) {
            return Err(Error::NonPositiveNormalization(normalization));
        }
        let env_gamma_n = env.gamma_n(psi.gammas());
        let env_gamma_n_t = env_gamma_n.transpose();
        Ok(Self { psi: psi.clone(), n1, env, env_gamma_n, env_gamma_n_t, normalization, leaf: None })
    }

    pub fn normalization(&self) -> f64 {
        self.normalization
    }

    pub fn env(&self) -> &PointSet {
        &self.env
    }

    pub fn env_gamma_n(&self) -> &CMatrix {
        &self.env_gamma_n
    }

    pub fn psi(&self) -> &MultiTimeWaveFunction {
        &self.psi
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    /// False once the surface is not a leaf of a stored foliation; the kernel
    /// is then a formal object without a statistical reading.
    pub fn is_on_leaf(&self) -> bool {
        self.leaf.is_some()
    }

    pub fn sys_dim(&self) -> usize {
        self.psi.gammas().spinor_dim().pow(self.n1 as u32)
    }

    pub fn env_dim(&self) -> usize {
        self.psi.gammas().spinor_dim().pow(self.env.len() as u32)
    }

    pub(crate) fn values(&self, q1: &[FourVector]) -> CMatrix {
        value_matrix(&self.psi, q1, &self.env.points, self.sys_dim(), self.env_dim())
    }

    fn check_sys(&self, q1: &[FourVector]) -> Result<()> {
        if q1.len() != self.n1 {
            return Err(Error::ParticleCountMismatch { expected: self.n1, found: q1.len() });
        }
        if let Some((fol, s)) = &self.leaf {
            for x in q1 {
                let off = (fol.leaf_of(x) - s).abs();
                if off > 1e-9 {
                    return Err(Error::OffLeaf(off));
                }
            }
        }
        Ok(())
    }

    /// `W_cond(q1, q1′)`, a `K1×K1` matrix.
    pub fn kernel(&self, q1: &[FourVector], q1p: &[FourVector]) -> Result<CMatrix> {
        self.check_sys(q1)?;
        self.check_sys(q1p)?;
        Ok(self.kernel_from_values(&self.values(q1), &self.values(q1p)))
    }

    fn kernel_from_values(&self, a: &CMatrix, b: &CMatrix) -> CMatrix {
        a * &self.env_gamma_n_t * b.adjoint() / C64::from(self.normalization)
    }
}

/// `𝒩 = Σ_a w_a Ψ†(q1_a, Q2)(γn)(q1_a)(γn)(Q2)Ψ(q1_a, Q2)` using `W`'s environment.
pub fn normalization(w: &ConditionalDensityMatrix, grid: &SubsystemGrid) -> f64 {
    let g = w.psi.gammas();
    crate::parallel::det_sum(grid.len(), 0.0, |i| {
        let node = &grid.nodes[i];
        let a = w.values(&node.set.points);
        let g1 = node.set.gamma_n(g);
        // tr(G1 A Gᵀ A†) = Σ ρ
        let m = &g1 * &a * &w.env_gamma_n_t * a.adjoint();
        node.weight * m.trace().re
    })
}

/// Full-state guidance vector of subsystem particle `k`, via `W`:
/// `v^μ = 𝒩 tr[W(q1,q1) (γ⁰γ^μ)_k ⊗_{j≠k}(γn)_j]`. Equals the velocity
/// computed from `Ψ` directly, scale included.
pub fn guidance_via_wcond(w: &ConditionalDensityMatrix, q1: &PointSet, k: usize) -> Result<FourVector> {
    w.check_sys(&q1.points)?;
    if k >= w.n1 || q1.len() != w.n1 {
        return Err(Error::IndexOutOfRange { index: k, limit: w.n1 });
    }
    let g = w.psi.gammas();
    let a = w.values(&q1.points);
    let kern = w.kernel_from_values(&a, &a);
    let d = g.spacetime_dim();
    let mut out = vec![0.0; d];
    for (mu, o) in out.iter_mut().enumerate() {
        let factors: Vec<CMatrix> = (0..w.n1)
            .map(|j| if j == k { g.gamma0_gamma(mu).clone() } else { g.gamma_n_single(&q1.normals[j]) })
            .collect();
        let op = kron_all(factors.iter());
        *o = (kern.clone() * op).trace().re * w.normalization;
    }
    FourVector::new(&out)
}

/// `max_{μν} |a_μ b_ν − a_ν b_μ| / (|a||b|)`: zero iff `a ∥ b`.
pub fn parallelism_defect(a: &FourVector, b: &FourVector) -> f64 {
    let (sa, sb) = (a.as_slice(), b.as_slice());
    let na = sa.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = sb.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst: f64 = 0.0;
    for m in 0..sa.len() {
        for n in 0..sa.len() {
            worst = worst.max((sa[m] * sb[n] - sa[n] * sb[m]).abs());
        }
    }
    worst / (na * nb)
}

/// `tr[W(q1,q1)(γn)(q1)]`, the conditional density per unit `dσ_1⋯dσ_{N1}`.
pub fn conditional_crossing_density(w: &ConditionalDensityMatrix, q1: &PointSet) -> Result<f64> {
    w.check_sys(&q1.points)?;
    let a = w.values(&q1.points);
    let kern = w.kernel_from_values(&a, &a);
    Ok((kern * q1.gamma_n(w.psi.gammas())).trace().re)
}

/// Conditional mean of the chart coordinates of each subsystem particle.
pub fn expectation_q1(w: &ConditionalDensityMatrix, grid: &SubsystemGrid) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = grid.nodes[0].charts.iter().map(|c| vec![0.0; c.len()]).collect();
    for node in &grid.nodes {
        let p = conditional_crossing_density(w, &node.set)? * node.weight;
        for (o, c) in out.iter_mut().zip(&node.charts) {
            for (x, y) in o.iter_mut().zip(c) {
                *x += p * y;
            }
        }
    }
    Ok(out)
}

/// The lifted operator `Ŵ` on the grid, in blocks of `K1×K1`.
#[derive(Clone, Debug)]
pub struct DiscretizedDensityOperator {
    pub matrix: CMatrix,
    pub block: usize,
    charts: Vec<Vec<Vec<f64>>>,
}

impl DiscretizedDensityOperator {
    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        crate::clifford::hermiticity_defect(&self.matrix)
    }

    /// Eigenvalues sorted descending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::from(0.5);
        let fm = faer::Mat::<C64>::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)]);
        let mut ev = match fm.self_adjoint_eigenvalues(faer::Side::Lower) {
            Ok(ev) => ev,
            Err(_) => h.symmetric_eigenvalues().iter().copied().collect(),
        };
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    pub fn block_at(&self, a: usize, b: usize) -> CMatrix {
        let k = self.block;
        self.matrix.view((a * k, b * k), (k, k)).into_owned()
    }

    /// `tr(Ŵ Q̂)` for chart axis `axis` of subsystem particle `particle`.
    pub fn expectation(&self, particle: usize, axis: usize) -> f64 {
        (0..self.charts.len())
            .map(|a| self.charts[a][particle][axis] * self.block_at(a, a).trace().re)
            .sum()
    }
}

/// `⟨a|Ŵ|b⟩ = √w_a √w_b √(γn)(a) W(a,b) √(γn)(b)`.
pub fn discretize_operator(w: &ConditionalDensityMatrix, grid: &SubsystemGrid) -> Result<DiscretizedDensityOperator> {
    let g = w.psi.gammas();
    let k1 = w.sys_dim();
    let k2 = w.env_dim();
    let n = grid.len();
    // Gᵀ = R R† with R = conj(√G), itself hermitian
    let r = sqrt_psd(&w.env_gamma_n)?.map(|z| z.conj());
    let mut y = CMatrix::zeros(n * k1, k2);
    for (i, node) in grid.nodes.iter().enumerate() {
        w.check_sys(&node.set.points)?;
        let s1 = sqrt_psd(&node.set.gamma_n(g))?;
        let block = s1 * w.values(&node.set.points) * &r * C64::from(node.weight.sqrt());
        y.view_mut((i * k1, 0), (k1, k2)).copy_from(&block);
    }
    let matrix = &y * y.adjoint() / C64::from(w.normalization);
    finish(matrix, k1, grid)
}

/// Same operator via `tr_env |Φ⟩⟨Φ|` with `Φ = (√(γn)(q1) ⊗ √(γn)(Q2)) Ψ`.
pub fn discretize_via_projector(w: &ConditionalDensityMatrix, grid: &SubsystemGrid) -> Result<DiscretizedDensityOperator> {
    let g = w.psi.gammas();
    let k1 = w.sys_dim();
    let k2 = w.env_dim();
    let s2 = sqrt_psd(&w.env_gamma_n)?;
    let mut phis = Vec::with_capacity(grid.len());
    for node in &grid.nodes {
        w.check_sys(&node.set.points)?;
        let s = kron(&sqrt_psd(&node.set.gamma_n(g))?, &s2);
        let mut q = node.set.points.clone();
        q.extend_from_slice(&w.env.points);
        let v = CVector::from_vec(w.psi.evaluate_unchecked(&q));
        phis.push(s * v * C64::from(node.weight.sqrt()));
    }
    let n = grid.len();
    let mut matrix = CMatrix::zeros(n * k1, n * k1);
    for a in 0..n {
        for b in 0..n {
            let outer = &phis[a] * phis[b].adjoint();
            let block = partial_trace_env(&outer, k1, k2)? / C64::from(w.normalization);
            matrix.view_mut((a * k1, b * k1), (k1, k1)).copy_from(&block);
        }
    }
    finish(matrix, k1, grid)
}

fn finish(matrix: CMatrix, block: usize, grid: &SubsystemGrid) -> Result<DiscretizedDensityOperator> {
    let op = DiscretizedDensityOperator {
        matrix,
        block,
        charts: grid.nodes.iter().map(|n| n.charts.clone()).collect(),
    };
    let t = op.trace();
    if (t - 1.0).abs() > TRACE_REJECT {
        return Err(Error::QuadratureTooCoarse(t));
    }
    Ok(op)
}

/// `tr(M²) / tr(M)²`.
pub fn purity(op: &DiscretizedDensityOperator) -> f64 {
    let m = &op.matrix;
    let t = op.trace();
    // tr(M²) = Σ |M_ij|² for hermitian M
    let t2: f64 = m.iter().map(|z| z.norm_sqr()).sum();
    t2 / (t * t)
}

#[derive(Clone, Debug)]
pub struct SchmidtDecomposition {
    /// Descending, non-negative.
    pub coefficients: Vec<f64>,
    pub left: Vec<CVector>,
    pub right: Vec<CVector>,
}

impl SchmidtDecomposition {
    pub fn reconstruct(&self) -> CVector {
        let mut out = CVector::zeros(self.left[0].len() * self.right[0].len());
        for ((c, u), v) in self.coefficients.iter().zip(&self.left).zip(&self.right) {
            out += u.kronecker(v) * C64::from(*c);
        }
        out
    }

    /// Number of coefficients above `eps · c_0`.
    pub fn rank(&self, eps: f64) -> usize {
        let top = self.coefficients.first().copied().unwrap_or(0.0);
        self.coefficients.iter().filter(|&&c| c > eps * top).count()
    }
}

/// `Ψ = Σ_j c_j u_j ⊗ v_j` for a vector in `C^{k1} ⊗ C^{k2}`.
pub fn schmidt_spin(value: &[C64], k1: usize, k2: usize) -> Result<SchmidtDecomposition> {
    if value.len() != k1 * k2 {
        return Err(Error::DimensionMismatch { expected: k1 * k2, found: value.len() });
    }
    if value.iter().all(|z| *z == C64::new(0.0, 0.0)) {
        return Err(Error::ZeroVector);
    }
    let svd = ordered_svd(CMatrix::from_row_slice(k1, k2, value))?;
    Ok(SchmidtDecomposition {
        coefficients: svd.values.clone(),
        left: svd.u.column_iter().map(|c| c.into_owned()).collect(),
        right: svd.v_t.row_iter().map(|r| r.transpose()).collect(),
    })
}

/// Thin SVD with singular values in decreasing order.
struct OrderedSvd {
    values: Vec<f64>,
    u: CMatrix,
    v_t: CMatrix,
}

/// Thin SVD via faer. nalgebra's complex SVD can stall on rank-deficient
/// input, so the factors are also checked against `m`.
fn ordered_svd(m: CMatrix) -> Result<OrderedSvd> {
    let (r, c) = m.shape();
    let fm = faer::Mat::<C64>::from_fn(r, c, |i, j| m[(i, j)]);
    let svd = fm.thin_svd().map_err(|e| Error::Degenerate(format!("SVD: {e:?}")))?;
    let k = r.min(c);
    let sv = svd.S().column_vector();
    let values: Vec<f64> = (0..k).map(|i| sv[i].re).collect();
    let u = CMatrix::from_fn(r, k, |i, j| svd.U()[(i, j)]);
    let v_t = CMatrix::from_fn(k, c, |i, j| svd.V()[(j, i)].conj());
    let sigma = CMatrix::from_diagonal(&DVector::from_iterator(k, values.iter().map(|&x| C64::from(x))));
    let residual = (&u * sigma * &v_t - &m).norm();
    if residual > 1e-10 * m.norm().max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate(format!("SVD residual {residual:.3e}")));
    }
    Ok(OrderedSvd { values, u, v_t })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EffectiveWaveOptions {
    pub eps_rank: f64,
    pub eps_supp: f64,
    /// Environment nodes within this chart distance of `Q2` enter the rank test.
    pub radius: f64,
}

impl Default for EffectiveWaveOptions {
    fn default() -> Self {
        Self { eps_rank: EPS_RANK, eps_supp: EPS_SUPP, radius: 1.0 }
    }
}

/// `ψ_eff` sampled on the subsystem grid.
#[derive(Clone, Debug)]
pub struct EffectiveWaveFunction {
    pub values: Vec<CVector>,
    pub leaf: Option<f64>,
    pub delta_supp: f64,
    weights: Vec<f64>,
    gamma_n: Vec<CMatrix>,
}

impl EffectiveWaveFunction {
    /// `‖ψ_eff‖²` on the grid.
    pub fn norm2(&self) -> f64 {
        self.inner(&self.values).re
    }

    /// `⟨ψ_eff, φ⟩` with `φ` given on the same grid nodes.
    pub fn inner(&self, phi: &[CVector]) -> C64 {
        self.values
            .iter()
            .zip(phi)
            .zip(self.weights.iter().zip(&self.gamma_n))
            .map(|((a, b), (w, g))| (a.adjoint() * g * b)[(0, 0)] * *w)
            .sum()
    }

    /// `|⟨ψ_eff, φ⟩|² / ⟨φ, φ⟩`.
    pub fn fidelity(&self, phi: &[CVector]) -> f64 {
        let pp: f64 = phi
            .iter()
            .zip(self.weights.iter().zip(&self.gamma_n))
            .map(|(b, (w, g))| (b.adjoint() * g * b)[(0, 0)].re * w)
            .sum();
        self.inner(phi).norm_sqr() / (self.norm2() * pp)
    }
}

#[derive(Clone, Debug)]
pub struct EffectiveWaveReport {
    /// `σ₂/σ₁` of the weighted kernel near `Q2`.
    pub singular_ratio: f64,
    pub delta_supp: f64,
    pub q2_aligned: bool,
    pub wave: Option<EffectiveWaveFunction>,
}

/// Looks for `Ψ = ψ1 ⊗ ψ2 + Ψ⊥` with `Ψ⊥` disjoint from `ψ2` in `q2` and
/// `Q2 ∈ supp ψ2`. Returns the report; `wave` is `None` when either test fails.
pub fn extract_effective_wave(
    psi: &MultiTimeWaveFunction,
    n1: usize,
    sys: &SubsystemGrid,
    env_grid: &SubsystemGrid,
    q2: &PointSet,
    opts: &EffectiveWaveOptions,
) -> Result<EffectiveWaveReport> {
    let g = psi.gammas();
    let d = g.spinor_dim();
    let k1 = d.pow(n1 as u32);
    let k2 = d.pow(q2.len() as u32);
    if sys.n_particles() != n1 || env_grid.n_particles() != q2.len() || n1 + q2.len() != psi.n_particles() {
        return Err(Error::ParticleCountMismatch { expected: psi.n_particles(), found: n1 + q2.len() });
    }
    let (fol, _) = env_grid.leaf().ok_or(Error::OutsideQuadratureBox)?;
    let q2_charts: Vec<Vec<f64>> = q2.points.iter().map(|x| fol.chart(x)).collect();
    if !env_grid.contains_charts(&q2_charts) {
        return Err(Error::OutsideQuadratureBox);
    }

    let sys_sqrt: Vec<CMatrix> =
        sys.nodes.iter().map(|n| sqrt_psd(&n.set.gamma_n(g))).collect::<Result<_>>()?;
    // column block for one environment point set: (√G1 ⊗ √G2)Ψ √w_a √w_b, shaped (n·K1)×K2
    let block = |set: &PointSet, wb: f64| -> Result<CMatrix> {
        let r = sqrt_psd(&set.gamma_n(g))?.transpose();
        let mut out = CMatrix::zeros(sys.len() * k1, k2);
        for (i, node) in sys.nodes.iter().enumerate() {
            let a = value_matrix(psi, &node.set.points, &set.points, k1, k2);
            let b = &sys_sqrt[i] * a * &r * C64::from((node.weight * wb).sqrt());
            out.view_mut((i * k1, 0), (k1, k2)).copy_from(&b);
        }
        Ok(out)
    };

    let dist = |c: &[Vec<f64>]| -> f64 {
        c.iter()
            .zip(&q2_charts)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    };
    let env_blocks: Vec<CMatrix> =
        env_grid.nodes.iter().map(|n| block(&n.set, n.weight)).collect::<Result<_>>()?;
    let mean_w = env_grid.nodes.iter().map(|n| n.weight).sum::<f64>() / env_grid.len() as f64;
    let q2_block = block(q2, mean_w)?;

    let mut cols = vec![q2_block.clone()];
    for (n, b) in env_grid.nodes.iter().zip(&env_blocks) {
        if dist(&n.charts) <= opts.radius {
            cols.push(b.clone());
        }
    }
    let mut local = CMatrix::zeros(sys.len() * k1, cols.len() * k2);
    for (j, c) in cols.iter().enumerate() {
        local.view_mut((0, j * k2), (sys.len() * k1, k2)).copy_from(c);
    }
    let svd = ordered_svd(local)?;
    let s1 = svd.values[0];
    if !(s1 > 0.0) {
        return Err(Error::ZeroVector);
    }
    let ratio = svd.values.get(1).map_or(0.0, |s| s / s1);
    let u: DVector<C64> = svd.u.column(0).into_owned();

    let split = |b: &CMatrix| -> (f64, f64) {
        let total: f64 = b.iter().map(|z| z.norm_sqr()).sum();
        let par: f64 = (u.adjoint() * b).iter().map(|z| z.norm_sqr()).sum();
        (total, (total - par).max(0.0))
    };
    let (mut in_r, mut perp_r) = (0.0, 0.0);
    for b in &env_blocks {
        let (m, perp) = split(b);
        if perp <= 0.5 * m {
            in_r += m;
            perp_r += perp;
        }
    }
    let (mq, pq) = split(&q2_block);
    let q2_aligned = pq <= 0.5 * mq;
    let delta = if in_r > 0.0 { perp_r / in_r } else { 1.0 };

    let present = ratio < opts.eps_rank && delta < opts.eps_supp && q2_aligned;
    let wave = if present {
        let mut values = Vec::with_capacity(sys.len());
        for (i, node) in sys.nodes.iter().enumerate() {
            let inv = sys_sqrt[i].clone().try_inverse().ok_or_else(|| Error::Degenerate("(γn) not invertible".into()))?;
            let ua = u.rows(i * k1, k1).into_owned();
            values.push(inv * ua / C64::from(node.weight.sqrt()));
        }
        Some(EffectiveWaveFunction {
            values,
            leaf: sys.leaf().map(|(_, s)| *s),
            delta_supp: delta,
            weights: sys.nodes.iter().map(|n| n.weight).collect(),
            gamma_n: sys.nodes.iter().map(|n| n.set.gamma_n(g)).collect(),
        })
    } else {
        None
    };
    Ok(EffectiveWaveReport { singular_ratio: ratio, delta_supp: delta, q2_aligned, wave })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::build_gammas;
    use crate::foliation::{make_foliation, FoliationKind};
    use crate::wavefunction::{EnergyBranch, GaussianComb};

    fn e(i: usize, d: usize) -> Vec<C64> {
        let mut v = vec![C64::new(0.0, 0.0); d];
        v[i] = C64::from(1.0);
        v
    }

    #[test]
    fn ordered_svd_on_rank_one_blocks() {
        // sharply decaying rank-one columns: nalgebra's direct SVD misreports these
        let v = DVector::from_fn(128, |i, _| C64::from_polar((-(i as f64 - 40.0).powi(2) / 30.0).exp(), 0.1 * i as f64));
        let w = DVector::from_fn(10, |j, _| C64::new((-(j as f64) * 1.7).exp(), 0.3 * j as f64));
        let m = &v * w.adjoint();
        for m in [m.clone(), m.adjoint()] {
            let s = ordered_svd(m.clone()).unwrap();
            assert!((s.values[0] - v.norm() * w.norm()).abs() < 1e-12 * s.values[0]);
            assert!(s.values[1] < 1e-14 * s.values[0]);
            assert!(s.values.windows(2).all(|p| p[0] >= p[1]));
        }
    }

    #[test]
    fn schmidt_examples() {
        let mut v = vec![C64::new(0.0, 0.0); 4];
        v[1] = C64::from(1.0);
        let s = schmidt_spin(&v, 2, 2).unwrap();
        assert!((s.coefficients[0] - 1.0).abs() < 1e-15 && s.coefficients[1].abs() < 1e-15);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let bell = [C64::from(h), C64::from(0.0), C64::from(0.0), C64::from(h)];
        let s = schmidt_spin(&bell, 2, 2).unwrap();
        assert!((s.coefficients[0] - h).abs() < 1e-15 && (s.coefficients[1] - h).abs() < 1e-15);
        assert_eq!(s.rank(EPS_RANK), 2);
        let r: Vec<C64> = (0..8).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.7).cos())).collect();
        let s = schmidt_spin(&r, 2, 4).unwrap();
        let back = s.reconstruct();
        let err: f64 = back.iter().zip(&r).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        assert!(matches!(schmidt_spin(&[C64::new(0.0, 0.0); 4], 2, 2), Err(Error::ZeroVector)));
        let _ = e(0, 2);
    }

    #[test]
    fn parallelism_metric() {
        let a = FourVector::new(&[1.0, 0.3]).unwrap();
        assert_eq!(parallelism_defect(&a, &(a * 2.5)), 0.0);
        let b = FourVector::new(&[0.3, 1.0]).unwrap();
        assert!(parallelism_defect(&a, &b) > 0.5);
    }

    #[test]
    fn product_state_kernel_factorizes() {
        let g = build_gammas(2).unwrap();
        let comb = |c: f64, k: f64| GaussianComb {
            mass: 1.0,
            center: c,
            mean_wavenumber: k,
            transverse: vec![],
            width: 1.0,
            period: 30.0,
            branch: EnergyBranch::Positive,
            seed: vec![[1.0, 0.0], [0.2, 0.1]],
            cutoff: 1e-8,
            rapidity: 0.0,
        };
        let a = comb.clone()(0.0, 0.3).build(&g).unwrap();
        let b = comb(1.0, -0.4).build(&g).unwrap();
        let psi = MultiTimeWaveFunction::product(&g, vec![a.clone(), b.clone()]).unwrap();
        let f = make_foliation(2, FoliationKind::Tanh { amplitude: 0.5, scale: 2.0 }, (-1.0, 1.0)).unwrap();
        let quad = f.leaf_quadrature(0.0, &[(-15.0, 15.0)], 64).unwrap();
        let grid = SubsystemGrid::from_quadratures(&[quad]).unwrap();
        let q2 = PointSet::on_leaf(&f, 0.0, vec![f.embed(0.0, &[0.8])]).unwrap();
        let w = ConditionalDensityMatrix::new(&psi, 1, q2.clone(), &grid).unwrap();
        let (x, y) = (f.embed(0.0, &[0.2]), f.embed(0.0, &[-1.1]));
        let kern = w.kernel(&[x], &[y]).unwrap();
        let (ux, uy) = (CVector::from_vec(a.evaluate(&x)), CVector::from_vec(a.evaluate(&y)));
        let chi = CVector::from_vec(b.evaluate(&q2.points[0]));
        let n_tilde = w.normalization() / (chi.adjoint() * w.env_gamma_n() * &chi)[(0, 0)].re;
        let expected = &ux * uy.adjoint() / C64::from(n_tilde);
        assert!((kern.clone() - expected).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-14);
        let back = w.kernel(&[y], &[x]).unwrap();
        assert!((kern.adjoint() - back).iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-15);
        let off = FourVector::new(&[0.3, 0.2]).unwrap();
        assert!(matches!(w.kernel(&[off], &[y]), Err(Error::OffLeaf(_))));
    }
}
