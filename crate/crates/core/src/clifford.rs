//! Gamma matrices and the algebra around them.
//!
//! Two fixed representations are provided: the Dirac representation for
//! `d = 4`, and for `d = 2` the pair `γ⁰ = diag(1, -1)`, `γ¹ = [[0, 1], [-1, 0]]`.
//! Multi-particle operators live on `(C^D)^{⊗N}` with particle 0 in the most
//! significant slot.

use nalgebra::{Matrix3, Rotation3};

use crate::spacetime::{FourVector, LorentzMatrix};
use crate::{CMatrix, Error, Result, C64};

/// Clamp threshold for slightly negative eigenvalues in [`sqrt_psd`].
pub const EPS_PSD: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Gamma matrices `γ⁰..γ^{d-1}` for one particle.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaSet {
    spacetime_dim: usize,
    spinor_dim: usize,
    matrices: Vec<CMatrix>,
    // γ⁰γ^μ, used by every bilinear
    zero_mu: Vec<CMatrix>,
}

impl GammaSet {
    pub fn spacetime_dim(&self) -> usize {
        self.spacetime_dim
    }

    pub fn spinor_dim(&self) -> usize {
        self.spinor_dim
    }

    pub fn gamma(&self, mu: usize) -> &CMatrix {
        &self.matrices[mu]
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    /// `γ⁰γ^μ`.
    pub fn gamma0_gamma(&self, mu: usize) -> &CMatrix {
        &self.zero_mu[mu]
    }

    /// `γ·n = γ^μ n_μ`.
    pub fn slash(&self, n: &FourVector) -> CMatrix {
        let low = n.lowered();
        let mut out = CMatrix::zeros(self.spinor_dim, self.spinor_dim);
        for (mu, g) in self.matrices.iter().enumerate() {
            out += g * C64::from(low[mu]);
        }
        out
    }

    /// Single-particle `(γn) = γ⁰ γ·n`, without validating `n`.
    pub fn gamma_n_single(&self, n: &FourVector) -> CMatrix {
        let low = n.lowered();
        let mut out = CMatrix::zeros(self.spinor_dim, self.spinor_dim);
        for (mu, g) in self.zero_mu.iter().enumerate() {
            out += g * C64::from(low[mu]);
        }
        out
    }

    pub fn identity(&self) -> CMatrix {
        CMatrix::identity(self.spinor_dim, self.spinor_dim)
    }
}

/// Canonical gamma matrices for `spacetime_dim ∈ {2, 4}`.
pub fn build_gammas(spacetime_dim: usize) -> Result<GammaSet> {
    let matrices = match spacetime_dim {
        2 => vec![
            CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]),
            CMatrix::from_row_slice(2, 2, &[ZERO, ONE, -ONE, ZERO]),
        ],
        4 => {
            let sigma = [
                [ZERO, ONE, ONE, ZERO],
                [ZERO, -I, I, ZERO],
                [ONE, ZERO, ZERO, -ONE],
            ];
            let mut g0 = CMatrix::zeros(4, 4);
            for i in 0..4 {
                g0[(i, i)] = if i < 2 { ONE } else { -ONE };
            }
            let mut out = vec![g0];
            for s in sigma {
                let mut g = CMatrix::zeros(4, 4);
                for r in 0..2 {
                    for c in 0..2 {
                        g[(r, c + 2)] = s[r * 2 + c];
                        g[(r + 2, c)] = -s[r * 2 + c];
                    }
                }
                out.push(g);
            }
            out
        }
        other => return Err(Error::UnsupportedDimension(other)),
    };
    let zero_mu = matrices.iter().map(|g| &matrices[0] * g).collect();
    Ok(GammaSet { spacetime_dim, spinor_dim: spacetime_dim, matrices, zero_mu })
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Kronecker product of a list of matrices, left to right.
pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a CMatrix>) -> CMatrix {
    let mut acc = CMatrix::identity(1, 1);
    for f in factors {
        acc = acc.kronecker(f);
    }
    acc
}

/// `γ_k^μ` embedded in an `N`-particle spin space.
#[derive(Clone, Debug)]
pub struct MultiGamma {
    pub particle: usize,
    pub mu: usize,
    pub n_particles: usize,
    pub matrix: CMatrix,
}

/// `1 ⊗ ⋯ ⊗ γ^μ ⊗ ⋯ ⊗ 1` with `γ^μ` in slot `k` (zero-based).
pub fn embed_gamma(gammas: &GammaSet, k: usize, mu: usize, n: usize) -> Result<MultiGamma> {
    if k >= n {
        return Err(Error::IndexOutOfRange { index: k, limit: n });
    }
    if mu >= gammas.spacetime_dim {
        return Err(Error::IndexOutOfRange { index: mu, limit: gammas.spacetime_dim });
    }
    let id = gammas.identity();
    let factors: Vec<&CMatrix> =
        (0..n).map(|j| if j == k { &gammas.matrices[mu] } else { &id }).collect();
    Ok(MultiGamma { particle: k, mu, n_particles: n, matrix: kron_all(factors) })
}

/// Applies a `D×D` operator to spin slot `slot` of a vector in `(C^D)^{⊗n}`.
pub fn apply_slot_operator(op: &CMatrix, slot: usize, n: usize, v: &[C64]) -> Vec<C64> {
    let d = op.nrows();
    let stride = d.pow((n - slot - 1) as u32);
    let outer = d.pow(slot as u32);
    debug_assert_eq!(v.len(), outer * d * stride);
    let mut out = vec![ZERO; v.len()];
    for o in 0..outer {
        let base = o * d * stride;
        for i in 0..stride {
            for b in 0..d {
                let mut acc = ZERO;
                for a in 0..d {
                    acc += op[(b, a)] * v[base + a * stride + i];
                }
                out[base + b * stride + i] = acc;
            }
        }
    }
    out
}

/// Traces out the environment factor of `A` on `C^{sys} ⊗ C^{env}`.
pub fn partial_trace_env(a: &CMatrix, sys_dim: usize, env_dim: usize) -> Result<CMatrix> {
    let k = sys_dim * env_dim;
    if a.nrows() != k || a.ncols() != k {
        return Err(Error::DimensionMismatch { expected: k, found: a.nrows() });
    }
    let mut out = CMatrix::zeros(sys_dim, sys_dim);
    for i in 0..sys_dim {
        for j in 0..sys_dim {
            let mut acc = ZERO;
            for e in 0..env_dim {
                acc += a[(i * env_dim + e, j * env_dim + e)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// `(γn)(q) = ⊗_j γ_j⁰ γ_j·n(x_j)` for the particles whose normals are given.
///
/// Each normal must be unit, timelike and future-oriented. The result is
/// hermitian and positive definite.
pub fn gamma_n(gammas: &GammaSet, normals: &[FourVector]) -> Result<CMatrix> {
    let mut factors = Vec::with_capacity(normals.len());
    for n in normals {
        if n.dim() != gammas.spacetime_dim {
            return Err(Error::DimensionMismatch { expected: gammas.spacetime_dim, found: n.dim() });
        }
        n.check_unit_future(1e-9)?;
        factors.push(gammas.gamma_n_single(n));
    }
    Ok(kron_all(factors.iter()))
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `M - M†`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    max_abs(&(m - m.adjoint()))
}

/// Hermitian square root of a positive semidefinite matrix.
///
/// Eigenvalues in `[-EPS_PSD·scale, 0)` are clamped to zero; anything more
/// negative is rejected.
pub fn sqrt_psd(m: &CMatrix) -> Result<CMatrix> {
    let scale = max_abs(m).max(1.0);
    let defect = hermiticity_defect(m);
    if defect > EPS_PSD * scale {
        return Err(Error::NotHermitian(defect));
    }
    let h = (m + m.adjoint()) * C64::from(0.5);
    let eig = h.symmetric_eigen();
    let mut diag = nalgebra::DVector::<C64>::zeros(m.nrows());
    for (i, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < -EPS_PSD * scale {
            return Err(Error::Indefinite(lam));
        }
        diag[i] = C64::from(lam.max(0.0).sqrt());
    }
    let v = &eig.eigenvectors;
    Ok(v * CMatrix::from_diagonal(&diag) * v.adjoint())
}

/// A Lorentz matrix together with its spinor representative `S[Λ]`.
#[derive(Clone, Debug)]
pub struct SpinorRep {
    pub lambda: LorentzMatrix,
    pub s: CMatrix,
}

impl SpinorRep {
    /// Worst entry of `S⁻¹γ^μS - Λ^μ_ν γ^ν` over all μ.
    pub fn intertwining_defect(&self, gammas: &GammaSet) -> f64 {
        let s_inv = self.s.clone().try_inverse().expect("spinor matrix is invertible");
        let d = gammas.spacetime_dim;
        let mut worst: f64 = 0.0;
        for mu in 0..d {
            let lhs = &s_inv * gammas.gamma(mu) * &self.s;
            let mut rhs = CMatrix::zeros(gammas.spinor_dim, gammas.spinor_dim);
            for nu in 0..d {
                rhs += gammas.gamma(nu) * C64::from(self.lambda.get(mu, nu));
            }
            worst = worst.max(max_abs(&(lhs - rhs)));
        }
        worst
    }
}

/// `S = cosh(ζ/2) + sinh(ζ/2) n̂_i γ⁰γ^i` for the boost taking `e₀` to `u`.
fn boost_spinor(gammas: &GammaSet, u: &FourVector) -> CMatrix {
    let spatial: f64 = u.space().iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut s = gammas.identity();
    if spatial == 0.0 {
        return s;
    }
    let zeta = spatial.asinh();
    let (ch, sh) = ((zeta / 2.0).cosh(), (zeta / 2.0).sinh());
    s *= C64::from(ch);
    for i in 1..gammas.spacetime_dim {
        s += gammas.gamma0_gamma(i) * C64::from(sh * u[i] / spatial);
    }
    s
}

/// `S = cos(θ/2) + sin(θ/2)(a₁γ²γ³ + a₂γ³γ¹ + a₃γ¹γ²)` for a rotation about `a`.
fn rotation_spinor(gammas: &GammaSet, axis: [f64; 3], angle: f64) -> CMatrix {
    let g = |i: usize| gammas.gamma(i);
    let generator = g(2) * g(3) * C64::from(axis[0])
        + g(3) * g(1) * C64::from(axis[1])
        + g(1) * g(2) * C64::from(axis[2]);
    gammas.identity() * C64::from((angle / 2.0).cos()) + generator * C64::from((angle / 2.0).sin())
}

/// Spinor representative of a proper orthochronous Lorentz matrix.
///
/// `Λ` is split as boost × rotation and each factor is exponentiated in
/// closed form, so the result is the exponential-map branch of each factor.
/// The overall sign is otherwise unspecified.
pub fn spinor_rep(gammas: &GammaSet, lambda: &LorentzMatrix) -> Result<SpinorRep> {
    if lambda.dim() != gammas.spacetime_dim {
        return Err(Error::DimensionMismatch { expected: gammas.spacetime_dim, found: lambda.dim() });
    }
    lambda.check_proper_orthochronous(1e-9)?;
    let d = gammas.spacetime_dim;
    let u = lambda.apply(&FourVector::time_axis(d));
    // renormalize against rounding before building the boost
    let u = u * (1.0 / u.norm2().sqrt());
    let boost = LorentzMatrix::boost_to(&u)?;
    let mut s = boost_spinor(gammas, &u);
    if d == 4 {
        let rot = boost.inverse().compose(lambda);
        let m = Matrix3::from_fn(|r, c| rot.get(r + 1, c + 1));
        if let Some((axis, angle)) = Rotation3::from_matrix_unchecked(m).axis_angle() {
            s *= rotation_spinor(gammas, [axis[0], axis[1], axis[2]], angle);
        }
    }
    Ok(SpinorRep { lambda: *lambda, s })
}

/// For each normal `n_j`, the pure boost `Λ_j` with `Λ_j n_j = (1, 0, ..., 0)`.
pub fn boost_to_rest_frames(normals: &[FourVector]) -> Result<Vec<LorentzMatrix>> {
    normals
        .iter()
        .map(|n| {
            n.check_unit_future(1e-9).map_err(|_| Error::Degenerate(format!("normal {n:?}")))?;
            Ok(LorentzMatrix::boost_to(n)?.inverse())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anticomm(a: &CMatrix, b: &CMatrix) -> CMatrix {
        a * b + b * a
    }

    #[test]
    fn clifford_relations_exact() {
        for d in [2, 4] {
            let g = build_gammas(d).unwrap();
            for mu in 0..d {
                for nu in 0..d {
                    let expected = if mu != nu {
                        0.0
                    } else if mu == 0 {
                        2.0
                    } else {
                        -2.0
                    };
                    let ac = anticomm(g.gamma(mu), g.gamma(nu));
                    let target = CMatrix::identity(d, d) * C64::from(expected);
                    assert_eq!(max_abs(&(ac - target)), 0.0, "d={d} mu={mu} nu={nu}");
                    let adj = g.gamma(mu).adjoint();
                    let conj = g.gamma(0) * g.gamma(mu) * g.gamma(0);
                    assert_eq!(max_abs(&(adj - conj)), 0.0);
                }
            }
        }
    }

    #[test]
    fn gamma_examples() {
        let g2 = build_gammas(2).unwrap();
        let g4 = build_gammas(4).unwrap();
        assert_eq!(max_abs(&anticomm(g2.gamma(0), g2.gamma(1))), 0.0);
        assert_eq!(max_abs(&(g4.gamma(0) * g4.gamma(0) - CMatrix::identity(4, 4))), 0.0);
        assert_eq!(max_abs(&(g2.gamma(1) * g2.gamma(1) + CMatrix::identity(2, 2))), 0.0);
        assert!(matches!(build_gammas(3), Err(Error::UnsupportedDimension(3))));
    }

    #[test]
    fn embedding_examples() {
        let g = build_gammas(2).unwrap();
        let single = embed_gamma(&g, 0, 0, 1).unwrap();
        assert_eq!(single.matrix, *g.gamma(0));
        let a = embed_gamma(&g, 0, 0, 2).unwrap().matrix;
        let b = embed_gamma(&g, 1, 1, 2).unwrap().matrix;
        assert_eq!(max_abs(&(&a * &b - &b * &a)), 0.0);
        // slot 1, γ⁰ acting on e_1 ⊗ e_2 gives e_1 ⊗ (γ⁰ e_2) = -(e_1 ⊗ e_2)
        let m = embed_gamma(&g, 1, 0, 2).unwrap().matrix;
        let mut e12 = crate::CVector::zeros(4);
        e12[1] = ONE;
        let out = &m * &e12;
        let mut expected = crate::CVector::zeros(4);
        expected[1] = -ONE;
        assert_eq!(out, expected);
        assert!(embed_gamma(&g, 2, 0, 2).is_err());
        assert!(embed_gamma(&g, 0, 2, 2).is_err());
    }

    #[test]
    fn slot_operator_matches_embedding() {
        let g = build_gammas(2).unwrap();
        let v: Vec<C64> = (0..8).map(|i| C64::new(i as f64, 0.5 - i as f64)).collect();
        for slot in 0..3 {
            let full = embed_gamma(&g, slot, 1, 3).unwrap().matrix;
            let direct = &full * crate::CVector::from_vec(v.clone());
            let fast = apply_slot_operator(g.gamma(1), slot, 3, &v);
            for (a, b) in direct.iter().zip(&fast) {
                assert!((a - b).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn partial_trace_product_case() {
        let b = CMatrix::from_row_slice(2, 2, &[ONE, I, -I, C64::from(3.0)]);
        let c = CMatrix::from_row_slice(2, 2, &[C64::from(2.0), ONE, ZERO, C64::new(0.5, 1.0)]);
        let pt = partial_trace_env(&kron(&b, &c), 2, 2).unwrap();
        assert!(max_abs(&(pt - &b * c.trace())) < 1e-15);
        assert!(partial_trace_env(&b, 2, 2).is_err());
    }

    #[test]
    fn gamma_n_flat_and_boosted() {
        let g = build_gammas(2).unwrap();
        let flat = gamma_n(&g, &[FourVector::time_axis(2), FourVector::time_axis(2)]).unwrap();
        assert_eq!(flat, CMatrix::identity(4, 4));
        let zeta: f64 = 0.8;
        let n = FourVector::new(&[zeta.cosh(), zeta.sinh()]).unwrap();
        let m = gamma_n(&g, &[n]).unwrap();
        let mut ev: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - (-zeta).exp()).abs() < 1e-14);
        assert!((ev[1] - zeta.exp()).abs() < 1e-13);
        let bad = FourVector::new(&[-1.0, 0.0]).unwrap();
        assert!(gamma_n(&g, &[bad]).is_err());
        let long = FourVector::new(&[2.0, 0.0]).unwrap();
        assert!(gamma_n(&g, &[long]).is_err());
    }

    #[test]
    fn sqrt_examples() {
        let id = CMatrix::identity(3, 3);
        assert!(max_abs(&(sqrt_psd(&id).unwrap() - &id)) < 1e-15);
        let d = CMatrix::from_row_slice(2, 2, &[C64::from(4.0), ZERO, ZERO, ONE]);
        let r = sqrt_psd(&d).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[C64::from(2.0), ZERO, ZERO, ONE]);
        assert!(max_abs(&(r - expected)) < 1e-14);
        let g = build_gammas(2).unwrap();
        let n = FourVector::new(&[0.6f64.cosh(), 0.6f64.sinh()]).unwrap();
        let m = gamma_n(&g, &[n]).unwrap();
        let r = sqrt_psd(&m).unwrap();
        assert!(max_abs(&(&r * &r - &m)) < 1e-12);
        // tiny negative eigenvalue is clamped, a large one rejected
        let near = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, C64::from(-1e-12)]);
        assert!(sqrt_psd(&near).is_ok());
        let neg = CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, C64::from(-1e-3)]);
        assert!(matches!(sqrt_psd(&neg), Err(Error::Indefinite(_))));
        let nh = CMatrix::from_row_slice(2, 2, &[ONE, ONE, ZERO, ONE]);
        assert!(matches!(sqrt_psd(&nh), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn spinor_rep_examples() {
        let g = build_gammas(2).unwrap();
        let id = spinor_rep(&g, &LorentzMatrix::identity(2)).unwrap();
        assert!(max_abs(&(id.s - CMatrix::identity(2, 2))) < 1e-15);
        let fwd = spinor_rep(&g, &LorentzMatrix::boost_along(2, 1, 0.9)).unwrap();
        let back = spinor_rep(&g, &LorentzMatrix::boost_along(2, 1, -0.9)).unwrap();
        assert!(max_abs(&(&fwd.s * &back.s - CMatrix::identity(2, 2))) < 1e-14);
        let half = spinor_rep(&g, &LorentzMatrix::boost_along(2, 1, 0.5)).unwrap();
        assert!(half.intertwining_defect(&g) < 1e-12);
        // real in d = 2
        assert!(half.s.iter().all(|z| z.im == 0.0));

        let g4 = build_gammas(4).unwrap();
        let lam = LorentzMatrix::boost_along(4, 2, 0.4)
            .compose(&LorentzMatrix::rotation([1.0, 2.0, -0.5], 2.3));
        let rep = spinor_rep(&g4, &lam).unwrap();
        assert!(rep.intertwining_defect(&g4) < 1e-12);
        let parity = LorentzMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, -1.0]]).unwrap();
        assert!(spinor_rep(&g, &parity).is_err());
    }

    #[test]
    fn rest_frame_boosts() {
        let g = build_gammas(2).unwrap();
        let lam = boost_to_rest_frames(&[FourVector::time_axis(2)]).unwrap();
        assert!(lam[0].max_abs_diff(&LorentzMatrix::identity(2)) < 1e-15);
        let z: f64 = 1.3;
        let n = FourVector::new(&[z.cosh(), z.sinh()]).unwrap();
        let lam = boost_to_rest_frames(&[n]).unwrap();
        let rest = lam[0].apply(&n);
        assert!(rest.max_abs_diff(&FourVector::time_axis(2)) < 1e-12);
        let gn = gamma_n(&g, &[rest]).unwrap();
        assert!(max_abs(&(gn - CMatrix::identity(2, 2))) < 1e-12);
        assert!(boost_to_rest_frames(&[FourVector::new(&[1.0, 1.0]).unwrap()]).is_err());
    }
}
