//! Hypersurface scalar products.
//!
//! `⟨ψ, φ⟩ = Σ w_1⋯w_N ψ†(q) (γn)(q) φ(q)` over the tensor grid of per-particle
//! leaf rules. Both states are sums of products and `(γn)` factorizes, so the
//! N-fold sum is evaluated as a sum over term pairs of products of
//! single-particle Gram entries. This is exact for the tensor rule, not an
//! approximation of it.

use crate::foliation::LeafQuadrature;
use crate::wavefunction::MultiTimeWaveFunction;
use crate::{Error, Result, C64};

/// Fraction of each box axis treated as the boundary band.
pub const BOUNDARY_BAND: f64 = 0.1;
/// Largest tolerated boundary mass relative to the total.
pub const BOUNDARY_MASS_LIMIT: f64 = 1e-6;
/// Tolerance on `⟨ψ,ψ⟩ = 1` for operations that require a normalized state.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-3;

/// A state together with the leaf rule it is restricted to, one rule per particle.
#[derive(Clone, Copy, Debug)]
pub struct SurfaceRestrictedState<'a> {
    pub psi: &'a MultiTimeWaveFunction,
    pub quads: &'a [LeafQuadrature],
}

impl<'a> SurfaceRestrictedState<'a> {
    pub fn new(psi: &'a MultiTimeWaveFunction, quads: &'a [LeafQuadrature]) -> Result<Self> {
        check_quads(psi, quads)?;
        Ok(Self { psi, quads })
    }

    pub fn norm2(&self) -> f64 {
        gram_product(self.psi, self.psi, self.quads, &vec![None; self.quads.len()]).re
    }
}

fn check_quads(psi: &MultiTimeWaveFunction, quads: &[LeafQuadrature]) -> Result<()> {
    if quads.len() != psi.n_particles() {
        return Err(Error::ParticleCountMismatch { expected: psi.n_particles(), found: quads.len() });
    }
    if quads.iter().any(|q| !q.same_surface(&quads[0])) {
        return Err(Error::SurfaceMismatch);
    }
    if quads[0].foliation().dim() != psi.gammas().spacetime_dim() {
        return Err(Error::DimensionMismatch {
            expected: psi.gammas().spacetime_dim(),
            found: quads[0].foliation().dim(),
        });
    }
    Ok(())
}

type Mask<'m> = Option<&'m dyn Fn(&[f64]) -> bool>;

/// `G[a][b] = Σ_i w_i φ_a(x_i)† (γn)(x_i) χ_b(x_i)` over the masked nodes.
fn factor_gram(
    psi: &MultiTimeWaveFunction,
    phi: &MultiTimeWaveFunction,
    quad: &LeafQuadrature,
    mask: Mask<'_>,
) -> Vec<Vec<C64>> {
    let g = psi.gammas();
    let (wa, wb) = (psi.waves(), phi.waves());
    let mut out = vec![vec![C64::new(0.0, 0.0); wb.len()]; wa.len()];
    for i in 0..quad.len() {
        if let Some(m) = mask {
            if !m(&quad.charts[i]) {
                continue;
            }
        }
        let x = &quad.nodes[i];
        let gn = g.gamma_n_single(&quad.normals[i]);
        let va: Vec<Vec<C64>> = wa.iter().map(|w| w.evaluate(x)).collect();
        let vb: Vec<crate::CVector> =
            wb.iter().map(|w| &gn * crate::CVector::from_vec(w.evaluate(x))).collect();
        let w = quad.weights[i];
        for (a, u) in va.iter().enumerate() {
            for (b, v) in vb.iter().enumerate() {
                let dot: C64 = u.iter().zip(v.iter()).map(|(p, q)| p.conj() * q).sum();
                out[a][b] += dot * w;
            }
        }
    }
    out
}

fn gram_product(
    psi: &MultiTimeWaveFunction,
    phi: &MultiTimeWaveFunction,
    quads: &[LeafQuadrature],
    masks: &[Mask<'_>],
) -> C64 {
    let grams: Vec<_> = quads.iter().zip(masks).map(|(q, m)| factor_gram(psi, phi, q, *m)).collect();
    let mut acc = C64::new(0.0, 0.0);
    for (c, ia) in psi.raw_terms() {
        for (d, ib) in phi.raw_terms() {
            let mut p = c.conj() * d;
            for (k, g) in grams.iter().enumerate() {
                p *= g[ia[k]][ib[k]];
            }
            acc += p;
        }
    }
    acc
}

/// `⟨ψ, φ⟩` on the common leaf of `quads`.
pub fn scalar_product(
    psi: &SurfaceRestrictedState<'_>,
    phi: &SurfaceRestrictedState<'_>,
) -> Result<C64> {
    if psi.psi.n_particles() != phi.psi.n_particles() {
        return Err(Error::ParticleCountMismatch { expected: psi.psi.n_particles(), found: phi.psi.n_particles() });
    }
    if psi.quads.len() != phi.quads.len()
        || psi.quads.iter().zip(phi.quads).any(|(a, b)| !a.same_surface(b))
    {
        return Err(Error::SurfaceMismatch);
    }
    if psi.psi.gammas() != phi.psi.gammas() {
        return Err(Error::DimensionMismatch {
            expected: psi.psi.gammas().spinor_dim(),
            found: phi.psi.gammas().spinor_dim(),
        });
    }
    Ok(gram_product(psi.psi, phi.psi, psi.quads, &vec![None; psi.quads.len()]))
}

/// Mass in the outer band of any particle's box, relative to the total.
pub fn boundary_mass(state: &SurfaceRestrictedState<'_>) -> f64 {
    let total = state.norm2();
    if total <= 0.0 {
        return 0.0;
    }
    let n = state.quads.len();
    let mut band = 0.0;
    for k in 0..n {
        let q = &state.quads[k];
        let in_band = |c: &[f64]| q.in_outer_band(c, BOUNDARY_BAND);
        let mut masks: Vec<Mask<'_>> = vec![None; n];
        masks[k] = Some(&in_band);
        band += gram_product(state.psi, state.psi, state.quads, &masks).re;
    }
    band / total
}

#[derive(Clone, Debug, PartialEq)]
pub struct SurfaceIndependenceReport {
    pub value_a: C64,
    pub value_b: C64,
    pub difference: f64,
    /// Largest boundary mass over both states and both surfaces.
    pub boundary_mass: f64,
}

/// `|⟨ψ,φ⟩_A − ⟨ψ,φ⟩_B|` for two surfaces, with a support-leak check.
pub fn check_surface_independence(
    psi: &MultiTimeWaveFunction,
    phi: &MultiTimeWaveFunction,
    quads_a: &[LeafQuadrature],
    quads_b: &[LeafQuadrature],
) -> Result<SurfaceIndependenceReport> {
    let sa = (SurfaceRestrictedState::new(psi, quads_a)?, SurfaceRestrictedState::new(phi, quads_a)?);
    let sb = (SurfaceRestrictedState::new(psi, quads_b)?, SurfaceRestrictedState::new(phi, quads_b)?);
    let mass = [&sa.0, &sa.1, &sb.0, &sb.1]
        .iter()
        .map(|s| boundary_mass(s))
        .fold(0.0, f64::max);
    if mass > BOUNDARY_MASS_LIMIT {
        return Err(Error::SupportLeak(mass));
    }
    let value_a = scalar_product(&sa.0, &sa.1)?;
    let value_b = scalar_product(&sb.0, &sb.1)?;
    Ok(SurfaceIndependenceReport { value_a, value_b, difference: (value_a - value_b).norm(), boundary_mass: mass })
}

/// `⟨ψ, 1_A ψ⟩` for `A` a product of per-particle chart boxes (`None` = whole box).
pub fn probability_in_region(
    state: &SurfaceRestrictedState<'_>,
    region: &[Option<Vec<(f64, f64)>>],
) -> Result<f64> {
    let n = state.quads.len();
    if region.len() != n {
        return Err(Error::ParticleCountMismatch { expected: n, found: region.len() });
    }
    let total = state.norm2();
    if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
        return Err(Error::NotNormalized(total));
    }
    let tests: Vec<Option<Box<dyn Fn(&[f64]) -> bool + '_>>> = region
        .iter()
        .map(|r| {
            r.as_ref().map(|b| {
                let f: Box<dyn Fn(&[f64]) -> bool> =
                    Box::new(move |c: &[f64]| b.iter().zip(c).all(|((lo, hi), x)| lo <= x && x < hi));
                f
            })
        })
        .collect();
    let masks: Vec<Mask<'_>> = tests.iter().map(|t| t.as_deref()).collect();
    Ok(gram_product(state.psi, state.psi, state.quads, &masks).re)
}

/// `ψ / √⟨ψ,ψ⟩`.
pub fn normalize(psi: &MultiTimeWaveFunction, quads: &[LeafQuadrature]) -> Result<MultiTimeWaveFunction> {
    let n2 = SurfaceRestrictedState::new(psi, quads)?.norm2();
    if !(n2 > 0.0) || !n2.is_finite() {
        return Err(Error::NotNormalized(n2));
    }
    Ok(psi.scaled(C64::from(1.0 / n2.sqrt())))
}
