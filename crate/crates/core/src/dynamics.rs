//! Integration of the guidance law across a foliation.
//!
//! World lines are parametrized by the leaf label `s`: each particle moves
//! along its guidance vector rescaled so that `ds = 1` advances exactly one
//! leaf. Steps are classical RK4 followed by a projection back onto the leaf.

use serde::Serialize;

use crate::foliation::Foliation;
use crate::parallel::det_map;
use crate::spacetime::FourVector;
use crate::wavefunction::{rho_from_value, slot_current, MultiTimeWaveFunction};
use crate::{Error, Result};

/// Relative node threshold: steps abort when `ρ < EPS_NODE · max ρ` on the leaf.
pub const EPS_NODE: f64 = 1e-12;
/// On-leaf tolerance for recorded crossings.
pub const LEAF_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct VelocityField {
    pub velocities: Vec<FourVector>,
    pub normals: Vec<FourVector>,
    pub rho: f64,
}

fn velocity_unchecked(psi: &MultiTimeWaveFunction, fol: &Foliation, q: &[FourVector]) -> VelocityField {
    let normals: Vec<FourVector> = q.iter().map(|x| fol.normal(x)).collect();
    let value = psi.evaluate_unchecked(q);
    let n = q.len();
    let d = fol.dim();
    let velocities = (0..n)
        .map(|k| {
            let c = slot_current(psi.gammas(), n, k, &value, &normals);
            FourVector::new(&c[..d]).expect("dimension checked")
        })
        .collect();
    let rho = rho_from_value(psi.gammas(), &value, &normals);
    VelocityField { velocities, normals, rho }
}

/// `v_k^μ = j^{μ1…μk…μN}(q) Π_{j≠k} n_{μj}(x_j)` for every particle.
///
/// The overall scale is irrelevant to the world lines; `ρ` is reported for
/// node detection.
pub fn velocity_field(psi: &MultiTimeWaveFunction, fol: &Foliation, q: &[FourVector]) -> Result<VelocityField> {
    if q.len() != psi.n_particles() {
        return Err(Error::ParticleCountMismatch { expected: psi.n_particles(), found: q.len() });
    }
    if fol.dim() != psi.gammas().spacetime_dim() {
        return Err(Error::DimensionMismatch { expected: psi.gammas().spacetime_dim(), found: fol.dim() });
    }
    let s = fol.leaf_of(&q[0]);
    for x in q {
        let off = (fol.leaf_of(x) - s).abs();
        if off > 1e-8 {
            return Err(Error::OffLeaf(off));
        }
    }
    Ok(velocity_unchecked(psi, fol, q))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrationOptions {
    /// Leaf-label step.
    pub ds: f64,
    /// Absolute `ρ` threshold below which the trajectory aborts.
    pub node_threshold: f64,
    /// Record every `record_stride`-th leaf (the last leaf is always recorded).
    pub record_stride: usize,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self { ds: 1e-3, node_threshold: 0.0, record_stride: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Completed,
    NodeAbort { s: f64, rho: f64 },
    LeftSlab { s: f64 },
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    foliation: Foliation,
    pub labels: Vec<f64>,
    pub crossings: Vec<Vec<FourVector>>,
    pub status: TrajectoryStatus,
    pub steps: usize,
    /// Smallest `ρ` seen at any RK stage.
    pub min_rho: f64,
}

impl Trajectory {
    pub fn foliation(&self) -> &Foliation {
        &self.foliation
    }

    pub fn first(&self) -> &[FourVector] {
        &self.crossings[0]
    }

    pub fn last(&self) -> &[FourVector] {
        self.crossings.last().expect("at least the initial leaf")
    }

    pub fn completed(&self) -> bool {
        self.status == TrajectoryStatus::Completed
    }
}

enum Rhs {
    Ok(Vec<FourVector>),
    Node(f64),
}

fn rhs(psi: &MultiTimeWaveFunction, fol: &Foliation, x: &[FourVector], threshold: f64, min_rho: &mut f64) -> Rhs {
    let vf = velocity_unchecked(psi, fol, x);
    *min_rho = min_rho.min(vf.rho);
    if !(vf.rho > threshold) {
        return Rhs::Node(vf.rho);
    }
    let mut out = Vec::with_capacity(x.len());
    for (xk, vk) in x.iter().zip(&vf.velocities) {
        let rate = fol.leaf_rate(xk, vk);
        if !(rate > 0.0) {
            return Rhs::Node(vf.rho);
        }
        out.push(*vk * (1.0 / rate));
    }
    Rhs::Ok(out)
}

fn axpy(x: &[FourVector], h: f64, k: &[FourVector]) -> Vec<FourVector> {
    x.iter().zip(k).map(|(a, b)| *a + *b * h).collect()
}

/// Integrates from `q0 ∈ Σ_{s0}` to `Σ_{s_end}`.
pub fn integrate(
    psi: &MultiTimeWaveFunction,
    fol: &Foliation,
    q0: &[FourVector],
    s0: f64,
    s_end: f64,
    opts: &IntegrationOptions,
) -> Result<Trajectory> {
    if !(opts.ds > 0.0) || opts.record_stride == 0 {
        return Err(Error::OutOfRange(format!("step {} / stride {}", opts.ds, opts.record_stride)));
    }
    if s_end < s0 {
        return Err(Error::OutOfRange(format!("s_end {s_end} < s0 {s0}")));
    }
    if q0.len() != psi.n_particles() {
        return Err(Error::ParticleCountMismatch { expected: psi.n_particles(), found: q0.len() });
    }
    for x in q0 {
        let off = (fol.leaf_of(x) - s0).abs();
        if off > LEAF_TOLERANCE {
            return Err(Error::OffLeaf(off));
        }
    }
    let slab = fol.slab();
    if s0 < slab.0 || s0 > slab.1 {
        return Err(Error::OutsideSlab(s0));
    }
    let (target, truncated) = if s_end > slab.1 { (slab.1, true) } else { (s_end, false) };
    let span = target - s0;
    let n_steps = if span > 0.0 { (span / opts.ds).ceil() as usize } else { 0 };
    let h = if n_steps > 0 { span / n_steps as f64 } else { 0.0 };

    let mut x: Vec<FourVector> = q0.to_vec();
    let mut traj = Trajectory {
        foliation: fol.clone(),
        labels: vec![s0],
        crossings: vec![x.clone()],
        status: TrajectoryStatus::Completed,
        steps: 0,
        min_rho: f64::INFINITY,
    };
    let th = opts.node_threshold;
    for step in 0..n_steps {
        let s = s0 + step as f64 * h;
        let s_next = if step + 1 == n_steps { target } else { s0 + (step + 1) as f64 * h };
        let mut min_rho = traj.min_rho;
        let result = (|| {
            let k1 = match rhs(psi, fol, &x, th, &mut min_rho) {
                Rhs::Ok(k) => k,
                Rhs::Node(r) => return Err(r),
            };
            let k2 = match rhs(psi, fol, &axpy(&x, h / 2.0, &k1), th, &mut min_rho) {
                Rhs::Ok(k) => k,
                Rhs::Node(r) => return Err(r),
            };
            let k3 = match rhs(psi, fol, &axpy(&x, h / 2.0, &k2), th, &mut min_rho) {
                Rhs::Ok(k) => k,
                Rhs::Node(r) => return Err(r),
            };
            let k4 = match rhs(psi, fol, &axpy(&x, h, &k3), th, &mut min_rho) {
                Rhs::Ok(k) => k,
                Rhs::Node(r) => return Err(r),
            };
            Ok((0..x.len())
                .map(|i| x[i] + (k1[i] + k2[i] * 2.0 + k3[i] * 2.0 + k4[i]) * (h / 6.0))
                .collect::<Vec<_>>())
        })();
        traj.min_rho = min_rho;
        match result {
            Ok(next) => {
                x = next
                    .iter()
                    .map(|p| fol.project_to_leaf(s_next, p))
                    .collect::<Result<Vec<_>>>()?;
                traj.steps += 1;
                if (step + 1) % opts.record_stride == 0 || step + 1 == n_steps {
                    traj.labels.push(s_next);
                    traj.crossings.push(x.clone());
                }
            }
            Err(rho) => {
                if traj.labels.last() != Some(&s) {
                    traj.labels.push(s);
                    traj.crossings.push(x.clone());
                }
                traj.status = TrajectoryStatus::NodeAbort { s, rho };
                return Ok(traj);
            }
        }
    }
    if truncated {
        traj.status = TrajectoryStatus::LeftSlab { s: target };
    }
    Ok(traj)
}

/// Integrates many initial configurations in parallel, order preserved.
pub fn integrate_ensemble(
    psi: &MultiTimeWaveFunction,
    fol: &Foliation,
    starts: &[Vec<FourVector>],
    s0: f64,
    s_end: f64,
    opts: &IntegrationOptions,
) -> Vec<Result<Trajectory>> {
    det_map(starts.len(), |i| integrate(psi, fol, &starts[i], s0, s_end, opts))
}

/// Crossing of `Σ_s`, linearly interpolated between recorded leaves.
pub fn crossing_at(traj: &Trajectory, s: f64) -> Result<Vec<FourVector>> {
    let (first, last) = (traj.labels[0], *traj.labels.last().unwrap());
    if s < first || s > last {
        return Err(Error::OutOfRange(format!("s = {s} outside [{first}, {last}]")));
    }
    let i = traj.labels.partition_point(|&l| l < s);
    if traj.labels[i] == s {
        return Ok(traj.crossings[i].clone());
    }
    let (sa, sb) = (traj.labels[i - 1], traj.labels[i]);
    let t = (s - sa) / (sb - sa);
    traj.crossings[i - 1]
        .iter()
        .zip(&traj.crossings[i])
        .map(|(a, b)| traj.foliation.project_to_leaf(s, &(*a * (1.0 - t) + *b * t)))
        .collect()
}
