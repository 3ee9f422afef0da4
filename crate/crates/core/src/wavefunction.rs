//! Exact multi-time Dirac solutions.
//!
//! A single-particle wave is a finite sum of plane-wave modes, each an exact
//! solution of the free Dirac equation. A multi-time wave function is a finite
//! sum of tensor products of such waves, so every equation of the multi-time
//! system holds identically and all derivatives are analytic.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::clifford::{apply_slot_operator, spinor_rep, GammaSet};
use crate::spacetime::{is_spacelike_configuration, FourVector, LorentzMatrix, MultiTimeLorentz};
use crate::{CVector, Error, Result, C64};

const ZERO: C64 = C64::new(0.0, 0.0);

/// Which branch `e^{∓ip·x}` a mode lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyBranch {
    Positive,
    Negative,
}

impl EnergyBranch {
    /// Sign of the phase: `e^{-i p·x}` for positive, `e^{+i p·x}` for negative.
    fn phase_sign(self) -> f64 {
        match self {
            EnergyBranch::Positive => -1.0,
            EnergyBranch::Negative => 1.0,
        }
    }

    fn dirac_sign(self) -> f64 {
        match self {
            EnergyBranch::Positive => 1.0,
            EnergyBranch::Negative => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Symmetry {
    None,
    Antisymmetrized,
    Symmetrized,
}

/// `u e^{∓ip·x}` with `p` on the mass shell.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneWaveMode {
    pub mass: f64,
    pub momentum: FourVector,
    pub spinor: Vec<C64>,
    pub branch: EnergyBranch,
}

fn dirac_operator_on(gammas: &GammaSet, p: &FourVector, shift: f64, u: &[C64]) -> Vec<C64> {
    let slash = gammas.slash(p);
    let v = CVector::from_column_slice(u);
    let out = slash * &v - v * C64::from(shift);
    out.iter().copied().collect()
}

fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

impl PlaneWaveMode {
    /// Validated constructor: `(γ·p ∓ m)u = 0` must hold.
    pub fn new(
        gammas: &GammaSet,
        mass: f64,
        momentum: FourVector,
        spinor: Vec<C64>,
        branch: EnergyBranch,
    ) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::InvalidMode(format!("mass {mass} must be positive")));
        }
        if momentum.dim() != gammas.spacetime_dim() || spinor.len() != gammas.spinor_dim() {
            return Err(Error::DimensionMismatch {
                expected: gammas.spacetime_dim(),
                found: momentum.dim(),
            });
        }
        let scale = momentum[0].abs().max(1.0);
        if momentum[0] <= 0.0 || (momentum.norm2() - mass * mass).abs() > 1e-9 * scale * scale {
            return Err(Error::InvalidMode(format!("momentum {momentum:?} off the mass shell")));
        }
        let norm = vec_norm(&spinor);
        if norm == 0.0 {
            return Err(Error::InvalidMode("zero spinor".into()));
        }
        let r = dirac_operator_on(gammas, &momentum, branch.dirac_sign() * mass, &spinor);
        if vec_norm(&r) > 1e-9 * norm * scale {
            return Err(Error::InvalidMode(format!(
                "spinor violates the Dirac condition (residual {:.3e})",
                vec_norm(&r) / norm
            )));
        }
        Ok(Self { mass, momentum, spinor, branch })
    }

    /// Mode with spinor `(γ·p ± m)χ`, normalized to unit length.
    pub fn projected(
        gammas: &GammaSet,
        mass: f64,
        spatial_momentum: &[f64],
        seed: &[C64],
        branch: EnergyBranch,
    ) -> Result<Self> {
        let e = (mass * mass + spatial_momentum.iter().map(|k| k * k).sum::<f64>()).sqrt();
        let p = FourVector::from_time_space(e, spatial_momentum);
        let u = dirac_operator_on(gammas, &p, -branch.dirac_sign() * mass, seed);
        let norm = vec_norm(&u);
        if norm < 1e-12 * vec_norm(seed).max(1e-300) {
            return Err(Error::InvalidMode("seed spinor is annihilated by the projector".into()));
        }
        let u: Vec<C64> = u.iter().map(|z| z / norm).collect();
        Self::new(gammas, mass, p, u, branch)
    }

    fn phase(&self, x: &FourVector) -> C64 {
        let arg = self.branch.phase_sign() * self.momentum.dot(x);
        C64::from_polar(1.0, arg)
    }

    /// Exact transformation `(p, u) ↦ (Λp, S u)`.
    pub fn transformed(&self, lambda: &LorentzMatrix, s: &crate::CMatrix) -> Self {
        let u = s * CVector::from_column_slice(&self.spinor);
        Self {
            mass: self.mass,
            momentum: lambda.apply(&self.momentum),
            spinor: u.iter().copied().collect(),
            branch: self.branch,
        }
    }
}

/// `φ(x) = Σ_a c_a u_a e^{∓ip_a·x}`.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleParticleWave {
    mass: f64,
    spinor_dim: usize,
    modes: Vec<(C64, PlaneWaveMode)>,
}

impl SingleParticleWave {
    pub fn new(modes: Vec<(C64, PlaneWaveMode)>) -> Result<Self> {
        let first = modes.first().ok_or_else(|| Error::InvalidMode("no modes".into()))?;
        let mass = first.1.mass;
        let spinor_dim = first.1.spinor.len();
        if modes.iter().any(|(_, m)| m.mass != mass) {
            return Err(Error::UnequalMasses);
        }
        Ok(Self { mass, spinor_dim, modes })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn modes(&self) -> &[(C64, PlaneWaveMode)] {
        &self.modes
    }

    pub fn spinor_dim(&self) -> usize {
        self.spinor_dim
    }

    pub fn evaluate(&self, x: &FourVector) -> Vec<C64> {
        let mut out = vec![ZERO; self.spinor_dim];
        for (c, m) in &self.modes {
            let f = c * m.phase(x);
            for (o, u) in out.iter_mut().zip(&m.spinor) {
                *o += f * u;
            }
        }
        out
    }

    pub fn transformed(&self, gammas: &GammaSet, lambda: &LorentzMatrix) -> Result<Self> {
        let s = spinor_rep(gammas, lambda)?.s;
        let modes = self.modes.iter().map(|(c, m)| (*c, m.transformed(lambda, &s))).collect();
        Ok(Self { mass: self.mass, spinor_dim: self.spinor_dim, modes })
    }

    pub fn scaled(&self, a: C64) -> Self {
        let modes = self.modes.iter().map(|(c, m)| (c * a, m.clone())).collect();
        Self { modes, ..self.clone() }
    }
}

/// Parameters of a Gaussian packet built from a uniform momentum comb.
///
/// Wavenumbers are integer multiples of `2π/period` along axis 1, so the
/// packet is exactly periodic in `x¹` at fixed time. Modes whose Gaussian
/// weight falls below `cutoff` are dropped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianComb {
    pub mass: f64,
    /// Position of the packet centre along axis 1 at `t = 0`.
    pub center: f64,
    /// Mean wavenumber along axis 1.
    pub mean_wavenumber: f64,
    /// Fixed transverse momentum (axes 2 and 3), ignored in `d = 2`.
    #[serde(default)]
    pub transverse: Vec<f64>,
    /// Position-space standard deviation of `|φ|²`.
    pub width: f64,
    pub period: f64,
    pub branch: EnergyBranch,
    /// Seed spinor as `[re, im]` pairs; projected onto the branch per mode.
    pub seed: Vec<[f64; 2]>,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    /// Optional boost applied after construction, rapidity along axis 1.
    #[serde(default)]
    pub rapidity: f64,
}

fn default_cutoff() -> f64 {
    1e-7
}

impl GaussianComb {
    pub fn build(&self, gammas: &GammaSet) -> Result<SingleParticleWave> {
        if !(self.width > 0.0 && self.period > 0.0 && self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(Error::InvalidMode("comb width, period and cutoff must be positive".into()));
        }
        if self.seed.len() != gammas.spinor_dim() {
            return Err(Error::DimensionMismatch { expected: gammas.spinor_dim(), found: self.seed.len() });
        }
        let d = gammas.spacetime_dim();
        let seed: Vec<C64> = self.seed.iter().map(|[re, im]| C64::new(*re, *im)).collect();
        let dk = std::f64::consts::TAU / self.period;
        // e^{-(k - k̄)² σ²} ≥ cutoff
        let half = (-self.cutoff.ln()).sqrt() / self.width;
        let lo = ((self.mean_wavenumber - half) / dk).ceil() as i64;
        let hi = ((self.mean_wavenumber + half) / dk).floor() as i64;
        let mut modes = Vec::new();
        for j in lo..=hi {
            let k = j as f64 * dk;
            let mut spatial = vec![0.0; d - 1];
            let along = match self.branch {
                EnergyBranch::Positive => k,
                // e^{+ip·x} has spatial dependence e^{-i p⃗·x⃗}
                EnergyBranch::Negative => -k,
            };
            spatial[0] = along;
            for (i, t) in self.transverse.iter().enumerate().take(d.saturating_sub(2)) {
                spatial[i + 1] = match self.branch {
                    EnergyBranch::Positive => *t,
                    EnergyBranch::Negative => -*t,
                };
            }
            let mode = PlaneWaveMode::projected(gammas, self.mass, &spatial, &seed, self.branch)?;
            let dkk = k - self.mean_wavenumber;
            let amp = (-dkk * dkk * self.width * self.width).exp();
            let c = C64::from_polar(amp, -k * self.center);
            modes.push((c, mode));
        }
        let wave = SingleParticleWave::new(modes)?;
        if self.rapidity != 0.0 {
            wave.transformed(gammas, &LorentzMatrix::boost_along(d, 1, self.rapidity))
        } else {
            Ok(wave)
        }
    }
}

/// `Ψ(x_1, ..., x_N) = Σ_α c_α ⊗_k φ_{α,k}(x_k)`.
///
/// Single-particle factors are stored once and referenced by index so that
/// symmetrization and relabeling do not duplicate mode lists.
#[derive(Clone, Debug)]
pub struct MultiTimeWaveFunction {
    gammas: GammaSet,
    masses: Vec<f64>,
    waves: Vec<SingleParticleWave>,
    terms: Vec<(C64, Vec<usize>)>,
    symmetry: Symmetry,
    strict_domain: bool,
}

/// Per-slot values of every stored factor, reused across terms.
pub(crate) struct SlotValues {
    values: Vec<Option<Vec<C64>>>,
}

impl MultiTimeWaveFunction {
    /// Builds `Σ_α c_α ⊗_k φ_{α,k}` from explicit factor lists.
    pub fn from_terms(gammas: &GammaSet, terms: Vec<(C64, Vec<SingleParticleWave>)>) -> Result<Self> {
        let first = terms.first().ok_or_else(|| Error::InvalidMode("no terms".into()))?;
        let n = first.1.len();
        if n == 0 {
            return Err(Error::InvalidMode("no particles".into()));
        }
        let masses: Vec<f64> = first.1.iter().map(|w| w.mass()).collect();
        let mut waves: Vec<SingleParticleWave> = Vec::new();
        let mut out_terms = Vec::new();
        for (c, factors) in terms {
            if factors.len() != n {
                return Err(Error::ParticleCountMismatch { expected: n, found: factors.len() });
            }
            let mut idx = Vec::with_capacity(n);
            for (k, w) in factors.into_iter().enumerate() {
                if w.mass() != masses[k] {
                    return Err(Error::UnequalMasses);
                }
                if w.spinor_dim() != gammas.spinor_dim() {
                    return Err(Error::DimensionMismatch { expected: gammas.spinor_dim(), found: w.spinor_dim() });
                }
                match waves.iter().position(|x| *x == w) {
                    Some(i) => idx.push(i),
                    None => {
                        waves.push(w);
                        idx.push(waves.len() - 1);
                    }
                }
            }
            out_terms.push((c, idx));
        }
        Ok(Self {
            gammas: gammas.clone(),
            masses,
            waves,
            terms: out_terms,
            symmetry: Symmetry::None,
            strict_domain: false,
        })
    }

    /// Single product term `φ_1 ⊗ ⋯ ⊗ φ_N`.
    pub fn product(gammas: &GammaSet, factors: Vec<SingleParticleWave>) -> Result<Self> {
        Self::from_terms(gammas, vec![(C64::from(1.0), factors)])
    }

    pub fn gammas(&self) -> &GammaSet {
        &self.gammas
    }

    pub fn n_particles(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn symmetry(&self) -> Symmetry {
        self.symmetry
    }

    pub fn terms(&self) -> impl Iterator<Item = (C64, Vec<&SingleParticleWave>)> + '_ {
        self.terms.iter().map(|(c, idx)| (*c, idx.iter().map(|&i| &self.waves[i]).collect()))
    }

    pub(crate) fn raw_terms(&self) -> &[(C64, Vec<usize>)] {
        &self.terms
    }

    pub(crate) fn waves(&self) -> &[SingleParticleWave] {
        &self.waves
    }

    /// `K = D^N`.
    pub fn value_dim(&self) -> usize {
        self.gammas.spinor_dim().pow(self.n_particles() as u32)
    }

    pub fn with_strict_domain(mut self, strict: bool) -> Self {
        self.strict_domain = strict;
        self
    }

    pub fn strict_domain(&self) -> bool {
        self.strict_domain
    }

    fn check_points(&self, q: &[FourVector]) -> Result<()> {
        if q.len() != self.n_particles() {
            return Err(Error::ParticleCountMismatch { expected: self.n_particles(), found: q.len() });
        }
        for x in q {
            if x.dim() != self.gammas.spacetime_dim() {
                return Err(Error::DimensionMismatch { expected: self.gammas.spacetime_dim(), found: x.dim() });
            }
        }
        if self.strict_domain && !is_spacelike_configuration(q) && !equal_times(q) {
            return Err(Error::NotSpacelike);
        }
        Ok(())
    }

    /// Values of all factors used in slot `k`, at `x`.
    pub(crate) fn slot_values(&self, k: usize, x: &FourVector) -> SlotValues {
        let mut values = vec![None; self.waves.len()];
        for (_, idx) in &self.terms {
            let w = idx[k];
            if values[w].is_none() {
                values[w] = Some(self.waves[w].evaluate(x));
            }
        }
        SlotValues { values }
    }

    /// Combines per-slot factor values into `Ψ`.
    pub(crate) fn combine(&self, slots: &[&SlotValues]) -> Vec<C64> {
        let d = self.gammas.spinor_dim();
        let mut out = vec![ZERO; self.value_dim()];
        let mut buf = Vec::with_capacity(out.len());
        for (c, idx) in &self.terms {
            buf.clear();
            buf.push(*c);
            for (k, &w) in idx.iter().enumerate() {
                let f = slots[k].values[w].as_ref().expect("slot value computed");
                let prev = std::mem::take(&mut buf);
                buf.reserve(prev.len() * d);
                for a in &prev {
                    for b in f {
                        buf.push(a * b);
                    }
                }
            }
            for (o, v) in out.iter_mut().zip(&buf) {
                *o += v;
            }
        }
        out
    }

    /// `Ψ(q)` as a `D^N` vector, particle 0 in the most significant slot.
    pub fn evaluate(&self, q: &[FourVector]) -> Result<Vec<C64>> {
        self.check_points(q)?;
        Ok(self.evaluate_unchecked(q))
    }

    pub(crate) fn evaluate_unchecked(&self, q: &[FourVector]) -> Vec<C64> {
        let slots: Vec<SlotValues> = q.iter().enumerate().map(|(k, x)| self.slot_values(k, x)).collect();
        let refs: Vec<&SlotValues> = slots.iter().collect();
        self.combine(&refs)
    }

    /// Norm of the central-difference residual of equation `k` at `q`.
    pub fn check_dirac_residual(&self, q: &[FourVector], k: usize, h: f64) -> Result<f64> {
        self.check_points(q)?;
        if k >= self.n_particles() {
            return Err(Error::IndexOutOfRange { index: k, limit: self.n_particles() });
        }
        let n = self.n_particles();
        let psi = self.evaluate_unchecked(q);
        let mut res: Vec<C64> = psi.iter().map(|v| -v * self.masses[k]).collect();
        for mu in 0..self.gammas.spacetime_dim() {
            let deriv = self.central_difference(q, k, mu, h, |p| self.evaluate_unchecked(p));
            let g = apply_slot_operator(self.gammas.gamma(mu), k, n, &deriv);
            for (r, v) in res.iter_mut().zip(g) {
                *r += C64::new(0.0, 1.0) * v;
            }
        }
        Ok(vec_norm(&res))
    }

    fn central_difference<T, F>(&self, q: &[FourVector], k: usize, mu: usize, h: f64, f: F) -> Vec<T>
    where
        T: Copy + std::ops::Sub<Output = T> + std::ops::Mul<f64, Output = T>,
        F: Fn(&[FourVector]) -> Vec<T>,
    {
        let mut plus = q.to_vec();
        let mut minus = q.to_vec();
        plus[k][mu] += h;
        minus[k][mu] -= h;
        let (a, b) = (f(&plus), f(&minus));
        a.into_iter().zip(b).map(|(x, y)| (x - y) * (0.5 / h)).collect()
    }

    /// `j^{μ1…μN}[ψ, φ](q) = ψ̄ γ_1^{μ1}⋯γ_N^{μN} φ`, flattened with `μ1` most significant.
    pub fn tensor_current(&self, other: &Self, q: &[FourVector]) -> Result<Vec<C64>> {
        if other.n_particles() != self.n_particles()
            || other.gammas.spacetime_dim() != self.gammas.spacetime_dim()
        {
            return Err(Error::DimensionMismatch { expected: self.n_particles(), found: other.n_particles() });
        }
        if other.masses != self.masses {
            return Err(Error::UnequalMasses);
        }
        let a = self.evaluate(q)?;
        let b = other.evaluate(q)?;
        Ok(current_from_values(&self.gammas, self.n_particles(), &a, &b))
    }

    /// Divergence in slot `k` of `j[Ψ,Ψ]`, other indices contracted with `normals`.
    pub fn current_divergence_residual(
        &self,
        q: &[FourVector],
        k: usize,
        h: f64,
        normals: &[FourVector],
    ) -> Result<f64> {
        self.check_points(q)?;
        let n = self.n_particles();
        if k >= n {
            return Err(Error::IndexOutOfRange { index: k, limit: n });
        }
        if normals.len() != n {
            return Err(Error::ParticleCountMismatch { expected: n, found: normals.len() });
        }
        // contracted current as a d-vector in slot k
        let contracted = |p: &[FourVector]| -> Vec<f64> {
            let v = self.evaluate_unchecked(p);
            slot_current(&self.gammas, n, k, &v, normals)
        };
        let mut div = 0.0;
        for mu in 0..self.gammas.spacetime_dim() {
            let d = self.central_difference(q, k, mu, h, &contracted);
            div += d[mu];
        }
        Ok(div.abs())
    }

    /// `ρ = Ψ† (γn)(q) Ψ` for the given normals.
    pub fn rho(&self, q: &[FourVector], normals: &[FourVector]) -> Result<f64> {
        self.check_points(q)?;
        if normals.len() != self.n_particles() {
            return Err(Error::ParticleCountMismatch { expected: self.n_particles(), found: normals.len() });
        }
        for n in normals {
            n.check_unit_future(1e-9)?;
        }
        let v = self.evaluate_unchecked(q);
        Ok(rho_from_value(&self.gammas, &v, normals))
    }

    /// `Ψ_σ(x) = P_σ Ψ(y)` with `y_{σ(j)} = x_j`: new particle `j` is old particle `σ(j)`.
    pub fn permute_particles(&self, sigma: &[usize]) -> Result<Self> {
        let n = self.n_particles();
        check_permutation(sigma, n)?;
        let terms = self
            .terms
            .iter()
            .map(|(c, idx)| (*c, sigma.iter().map(|&s| idx[s]).collect()))
            .collect();
        let masses = sigma.iter().map(|&s| self.masses[s]).collect();
        Ok(Self { masses, terms, ..self.clone() })
    }

    fn symmetrized_with(&self, sign: bool) -> Result<Self> {
        let n = self.n_particles();
        if self.masses.iter().any(|&m| m != self.masses[0]) {
            return Err(Error::UnequalMasses);
        }
        let norm = 1.0 / (1..=n).product::<usize>() as f64;
        let norm = norm.sqrt();
        let mut terms: Vec<(C64, Vec<usize>)> = Vec::new();
        for sigma in (0..n).permutations(n) {
            let sgn = if sign { permutation_sign(&sigma) } else { 1.0 };
            for (c, idx) in &self.terms {
                let new_idx: Vec<usize> = sigma.iter().map(|&s| idx[s]).collect();
                let coeff = c * (sgn * norm);
                match terms.iter_mut().find(|(_, i)| *i == new_idx) {
                    Some(t) => t.0 += coeff,
                    None => terms.push((coeff, new_idx)),
                }
            }
        }
        terms.retain(|(c, _)| c.norm() > 1e-15);
        if terms.is_empty() {
            // keep a single zero term so the function is still well formed
            terms.push((ZERO, self.terms[0].1.clone()));
        }
        let symmetry = if sign { Symmetry::Antisymmetrized } else { Symmetry::Symmetrized };
        Ok(Self { terms, symmetry, ..self.clone() })
    }

    /// `(1/√N!) Σ_σ sgn(σ) Ψ_σ`.
    pub fn antisymmetrize(&self) -> Result<Self> {
        self.symmetrized_with(true)
    }

    /// `(1/√N!) Σ_σ Ψ_σ`.
    pub fn symmetrize(&self) -> Result<Self> {
        self.symmetrized_with(false)
    }

    /// `Ψ′(x) = S[Λ_1]⊗⋯⊗S[Λ_N] Ψ(Λ_1⁻¹x_1, ..., Λ_N⁻¹x_N)`, exact mode by mode.
    pub fn lorentz_transform(&self, l: &MultiTimeLorentz) -> Result<Self> {
        let n = self.n_particles();
        if l.len() != n {
            return Err(Error::ParticleCountMismatch { expected: n, found: l.len() });
        }
        let mut cache: Vec<((usize, usize), usize)> = Vec::new();
        let mut waves = Vec::new();
        let mut terms = Vec::with_capacity(self.terms.len());
        for (c, idx) in &self.terms {
            let mut new_idx = Vec::with_capacity(n);
            for (k, &w) in idx.iter().enumerate() {
                // slots sharing a matrix can share the transformed factor
                let key_slot = l.lambdas().iter().position(|m| *m == l.lambdas()[k]).unwrap();
                let key = (w, key_slot);
                let i = match cache.iter().find(|(kk, _)| *kk == key) {
                    Some((_, i)) => *i,
                    None => {
                        waves.push(self.waves[w].transformed(&self.gammas, &l.lambdas()[k])?);
                        cache.push((key, waves.len() - 1));
                        waves.len() - 1
                    }
                };
                new_idx.push(i);
            }
            terms.push((*c, new_idx));
        }
        Ok(Self { waves, terms, ..self.clone() })
    }

    /// `aΨ`.
    pub fn scaled(&self, a: C64) -> Self {
        let terms = self.terms.iter().map(|(c, i)| (c * a, i.clone())).collect();
        Self { terms, ..self.clone() }
    }

    /// `Ψ + Φ`; both must share masses and representation.
    pub fn plus(&self, other: &Self) -> Result<Self> {
        if other.masses != self.masses || other.gammas != self.gammas {
            return Err(Error::UnequalMasses);
        }
        let mut out = self.clone();
        for (c, idx) in &other.terms {
            let mapped = idx
                .iter()
                .map(|&w| {
                    let wave = &other.waves[w];
                    match out.waves.iter().position(|x| x == wave) {
                        Some(i) => i,
                        None => {
                            out.waves.push(wave.clone());
                            out.waves.len() - 1
                        }
                    }
                })
                .collect();
            out.terms.push((*c, mapped));
        }
        out.symmetry = if self.symmetry == other.symmetry { self.symmetry } else { Symmetry::None };
        Ok(out)
    }
}

fn equal_times(q: &[FourVector]) -> bool {
    q.windows(2).all(|w| w[0][0] == w[1][0])
}

fn check_permutation(sigma: &[usize], n: usize) -> Result<()> {
    if sigma.len() != n {
        return Err(Error::ParticleCountMismatch { expected: n, found: sigma.len() });
    }
    let mut seen = vec![false; n];
    for &s in sigma {
        if s >= n || seen[s] {
            return Err(Error::IndexOutOfRange { index: s, limit: n });
        }
        seen[s] = true;
    }
    Ok(())
}

/// `+1` for even permutations, `-1` for odd ones.
pub fn permutation_sign(sigma: &[usize]) -> f64 {
    let mut inversions = 0;
    for i in 0..sigma.len() {
        for j in i + 1..sigma.len() {
            if sigma[i] > sigma[j] {
                inversions += 1;
            }
        }
    }
    if inversions % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Applies the spin-slot relabeling matching [`MultiTimeWaveFunction::permute_particles`]:
/// `out[s_0..s_{N-1}] = v[t]` with `t_{σ(j)} = s_j`.
pub fn relabel_spin_slots(v: &[C64], sigma: &[usize], spinor_dim: usize) -> Vec<C64> {
    let n = sigma.len();
    let mut out = vec![ZERO; v.len()];
    let mut digits = vec![0usize; n];
    for (flat, o) in out.iter_mut().enumerate() {
        let mut r = flat;
        for j in (0..n).rev() {
            digits[j] = r % spinor_dim;
            r /= spinor_dim;
        }
        let mut t = vec![0usize; n];
        for j in 0..n {
            t[sigma[j]] = digits[j];
        }
        let src = t.iter().fold(0, |acc, &x| acc * spinor_dim + x);
        *o = v[src];
    }
    out
}

/// Points `y` with `y_{σ(j)} = x_j`.
pub fn relabel_points<T: Clone>(x: &[T], sigma: &[usize]) -> Vec<T> {
    let mut y = x.to_vec();
    for (j, &s) in sigma.iter().enumerate() {
        y[s] = x[j].clone();
    }
    y
}

/// Diagonal-or-mixed current from two evaluated values.
pub fn current_from_values(gammas: &GammaSet, n: usize, a: &[C64], b: &[C64]) -> Vec<C64> {
    let d = gammas.spacetime_dim();
    let total = d.pow(n as u32);
    let mut out = Vec::with_capacity(total);
    for flat in 0..total {
        let mut v = b.to_vec();
        let mut r = flat;
        let mut mus = vec![0usize; n];
        for k in (0..n).rev() {
            mus[k] = r % d;
            r /= d;
        }
        for (k, &mu) in mus.iter().enumerate() {
            v = apply_slot_operator(gammas.gamma0_gamma(mu), k, n, &v);
        }
        out.push(a.iter().zip(&v).map(|(x, y)| x.conj() * y).sum());
    }
    out
}

/// `Ψ† (γn) Ψ` without validating the normals.
pub fn rho_from_value(gammas: &GammaSet, v: &[C64], normals: &[FourVector]) -> f64 {
    let n = normals.len();
    let mut w = v.to_vec();
    for (k, nk) in normals.iter().enumerate() {
        w = apply_slot_operator(&gammas.gamma_n_single(nk), k, n, &w);
    }
    v.iter().zip(&w).map(|(x, y)| (x.conj() * y).re).sum()
}

/// `v^μ = Ψ†[⊗_{j≠k}(γn)_j ⊗ (γ⁰γ^μ)_k]Ψ`, real by hermiticity.
pub fn slot_current(gammas: &GammaSet, n: usize, k: usize, v: &[C64], normals: &[FourVector]) -> Vec<f64> {
    let mut w = v.to_vec();
    for (j, nj) in normals.iter().enumerate() {
        if j != k {
            w = apply_slot_operator(&gammas.gamma_n_single(nj), j, n, &w);
        }
    }
    (0..gammas.spacetime_dim())
        .map(|mu| {
            let g = apply_slot_operator(gammas.gamma0_gamma(mu), k, n, &w);
            v.iter().zip(&g).map(|(x, y)| (x.conj() * y).re).sum()
        })
        .collect()
}
