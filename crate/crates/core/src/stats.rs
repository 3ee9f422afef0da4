//! Sampling from `ρ` and goodness-of-fit machinery.
//!
//! Every sample `i` draws from its own ChaCha8 stream `(seed, i)`, so results
//! are independent of the thread count and of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dynamics::{integrate_ensemble, IntegrationOptions, EPS_NODE};
use crate::foliation::Foliation;
use crate::parallel::det_map;
use crate::spacetime::FourVector;
use crate::subsystem::{conditional_crossing_density, ConditionalDensityMatrix, PointSet, SubsystemGrid};
use crate::wavefunction::{rho_from_value, MultiTimeWaveFunction};
use crate::{Error, Result};

/// Safety factor applied to the scanned maximum of the density.
pub const ENVELOPE_SAFETY: f64 = 1.2;
/// Smallest tolerated acceptance rate.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
/// Largest tolerated fraction of aborted trajectories.
pub const MAX_ABORTED: f64 = 0.01;

/// Per-particle chart boxes, one interval per chart axis.
pub type ChartBox = Vec<Vec<(f64, f64)>>;

#[derive(Clone, Debug)]
pub struct Ensemble {
    pub leaf: f64,
    pub samples: Vec<Vec<FourVector>>,
    /// `charts[i][k]` is the chart point of particle `k` in sample `i`.
    pub charts: Vec<Vec<Vec<f64>>>,
    pub proposals: u64,
    pub envelope: f64,
    /// Proposals whose density exceeded the envelope.
    pub envelope_violations: u64,
}

impl Ensemble {
    pub fn acceptance(&self) -> f64 {
        self.samples.len() as f64 / self.proposals.max(1) as f64
    }

    /// Chart coordinate `axis` of particle `k` across the ensemble.
    pub fn coordinate(&self, k: usize, axis: usize) -> Vec<f64> {
        self.charts.iter().map(|c| c[k][axis]).collect()
    }
}

/// Joint chart density `ρ(q) Π_k area_k` at the given chart points.
fn chart_density(psi: &MultiTimeWaveFunction, fol: &Foliation, s: f64, charts: &[Vec<f64>]) -> (f64, Vec<FourVector>) {
    let points: Vec<FourVector> = charts.iter().map(|c| fol.embed(s, c)).collect();
    let normals: Vec<FourVector> = points.iter().map(|x| fol.normal(x)).collect();
    let v = psi.evaluate_unchecked(&points);
    let area: f64 = charts.iter().map(|c| fol.area_element(c)).product();
    (rho_from_value(psi.gammas(), &v, &normals) * area, points)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SamplingOptions {
    /// Scan nodes per chart axis when estimating the envelope.
    pub scan_nodes: usize,
    /// First RNG stream; sample `i` uses stream `stream_offset + i`.
    pub stream_offset: u64,
}

impl Default for SamplingOptions {
    fn default() -> Self {
        Self { scan_nodes: 48, stream_offset: 0 }
    }
}

fn check_box(psi: &MultiTimeWaveFunction, fol: &Foliation, box_: &ChartBox) -> Result<()> {
    if box_.len() != psi.n_particles() {
        return Err(Error::ParticleCountMismatch { expected: psi.n_particles(), found: box_.len() });
    }
    for b in box_ {
        if b.len() != fol.dim() - 1 {
            return Err(Error::DimensionMismatch { expected: fol.dim() - 1, found: b.len() });
        }
        if b.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::EmptyBox);
        }
    }
    Ok(())
}

/// Rejection samples from `ρ` on `Σ_s` restricted to `box_`.
pub fn sample_rho(
    psi: &MultiTimeWaveFunction,
    fol: &Foliation,
    s: f64,
    box_: &ChartBox,
    n: usize,
    seed: u64,
    opts: &SamplingOptions,
) -> Result<Ensemble> {
    check_box(psi, fol, box_)?;
    let axes: Vec<(f64, f64)> = box_.iter().flatten().copied().collect();
    let per = fol.dim() - 1;
    let m = opts.scan_nodes.max(2);
    let total = (m as u64).checked_pow(axes.len() as u32).filter(|&t| t <= 4_000_000).ok_or_else(|| {
        Error::OutOfRange(format!("envelope scan of {m}^{} points is too large", axes.len()))
    })? as usize;
    let to_charts = |flat: &[f64]| -> Vec<Vec<f64>> { flat.chunks(per).map(|c| c.to_vec()).collect() };
    let scan = det_map(total, |idx| {
        let mut r = idx;
        let mut flat = vec![0.0; axes.len()];
        for a in (0..axes.len()).rev() {
            let (lo, hi) = axes[a];
            flat[a] = lo + (hi - lo) * (r % m) as f64 / (m - 1) as f64;
            r /= m;
        }
        chart_density(psi, fol, s, &to_charts(&flat)).0
    });
    let max = scan.iter().copied().fold(0.0, f64::max);
    let mean = scan.iter().sum::<f64>() / scan.len() as f64;
    if !(max > 0.0) {
        return Err(Error::LowAcceptance(0.0));
    }
    let envelope = ENVELOPE_SAFETY * max;
    if mean / envelope < MIN_ACCEPTANCE {
        return Err(Error::LowAcceptance(mean / envelope));
    }
    let cap = (10.0 / MIN_ACCEPTANCE) as u64;
    let draws = det_map(n, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(opts.stream_offset + i as u64);
        let mut tries = 0u64;
        let mut violations = 0u64;
        loop {
            tries += 1;
            if tries > cap {
                return None;
            }
            let flat: Vec<f64> = axes.iter().map(|(lo, hi)| lo + (hi - lo) * rng.random::<f64>()).collect();
            let charts = to_charts(&flat);
            let (p, points) = chart_density(psi, fol, s, &charts);
            if p > envelope {
                violations += 1;
            }
            if rng.random::<f64>() * envelope < p {
                return Some((points, charts, tries, violations));
            }
        }
    });
    let mut out = Ensemble {
        leaf: s,
        samples: Vec::with_capacity(n),
        charts: Vec::with_capacity(n),
        proposals: 0,
        envelope,
        envelope_violations: 0,
    };
    for d in draws {
        let (points, charts, tries, violations) = d.ok_or(Error::LowAcceptance(1.0 / cap as f64))?;
        out.samples.push(points);
        out.charts.push(charts);
        out.proposals += tries;
        out.envelope_violations += violations;
    }
    if out.acceptance() < MIN_ACCEPTANCE {
        return Err(Error::LowAcceptance(out.acceptance()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Asymptotic Kolmogorov tail `Q(λ) = 2 Σ (−1)^{k−1} e^{−2k²λ²}`.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

fn ks_p(d: f64, en: f64) -> f64 {
    kolmogorov_q((en + 0.12 + 0.11 / en) * d)
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientCounts("empty sample".into()));
    }
    let (a, b) = (sorted(a), sorted(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let en = (na * nb / (na + nb)).sqrt();
    Ok(KsResult { statistic: d, p_value: ks_p(d, en) })
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_one_sample(a: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    if a.is_empty() {
        return Err(Error::InsufficientCounts("empty sample".into()));
    }
    let a = sorted(a);
    let n = a.len() as f64;
    let mut d: f64 = 0.0;
    for (i, x) in a.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    Ok(KsResult { statistic: d, p_value: ks_p(d, n.sqrt()) })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson χ² of `observed` counts against bin probabilities, after merging
/// adjacent bins until every expected count is at least 5.
pub fn chi_square(observed: &[u64], probs: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != probs.len() {
        return Err(Error::DimensionMismatch { expected: probs.len(), found: observed.len() });
    }
    let n: u64 = observed.iter().sum();
    let total_p: f64 = probs.iter().sum();
    let mut merged: Vec<(f64, f64)> = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (ob, p) in observed.iter().zip(probs) {
        o += *ob as f64;
        e += p / total_p * n as f64;
        if e >= 5.0 {
            merged.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match merged.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => merged.push((o, e)),
        }
    }
    if merged.len() < 2 {
        return Err(Error::InsufficientCounts(format!("{} usable bins", merged.len())));
    }
    let statistic = merged.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = merged.len() - 1;
    Ok(ChiSquareResult { statistic, dof, p_value: chi2_sf(statistic, dof) })
}

fn chi2_sf(x: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).map(|c| c.sf(x)).unwrap_or(f64::NAN)
}

/// Bin probabilities of the axis-0 chart marginal of particle `k` on `Σ_s`.
///
/// Each bin holds `sub` midpoint nodes per particle axis, so nodes never
/// straddle bin edges.
pub fn marginal_bin_probabilities(
    psi: &MultiTimeWaveFunction,
    fol: &Foliation,
    s: f64,
    box_: &ChartBox,
    k: usize,
    bins: usize,
    sub: usize,
) -> Result<Vec<f64>> {
    check_box(psi, fol, box_)?;
    if fol.dim() != 2 {
        return Err(Error::UnsupportedDimension(fol.dim()));
    }
    let n = psi.n_particles();
    let per = bins * sub;
    let total = per.pow(n as u32);
    let sums = det_map(total.div_ceil(4096), |chunk| {
        let mut acc = vec![0.0; bins];
        for flat in chunk * 4096..((chunk + 1) * 4096).min(total) {
            let mut r = flat;
            let mut charts = vec![vec![0.0]; n];
            let mut bin = 0;
            let mut w = 1.0;
            for j in (0..n).rev() {
                let i = r % per;
                r /= per;
                let (lo, hi) = box_[j][0];
                let h = (hi - lo) / per as f64;
                charts[j][0] = lo + (i as f64 + 0.5) * h;
                w *= h;
                if j == k {
                    bin = i / sub;
                }
            }
            acc[bin] += w * chart_density(psi, fol, s, &charts).0;
        }
        acc
    });
    let mut out = vec![0.0; bins];
    for a in sums {
        for (o, x) in out.iter_mut().zip(a) {
            *o += x;
        }
    }
    let t: f64 = out.iter().sum();
    Ok(out.into_iter().map(|x| x / t).collect())
}

fn histogram(x: &[f64], (lo, hi): (f64, f64), bins: usize) -> Vec<u64> {
    let mut h = vec![0u64; bins];
    for v in x {
        let b = (((v - lo) / (hi - lo)) * bins as f64).floor();
        let b = (b.max(0.0) as usize).min(bins - 1);
        h[b] += 1;
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivarianceConfig {
    pub s0: f64,
    pub s1: f64,
    pub n: usize,
    pub seed: u64,
    pub box_: ChartBox,
    pub ds: f64,
    pub bins: usize,
    pub quad_sub: usize,
    pub alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParticleReport {
    pub particle: usize,
    /// Transported vs fresh samples on `Σ_{s1}`.
    pub ks: KsResult,
    /// Transported samples vs quadrature of `ρ` on `Σ_{s1}`.
    pub chi2: ChiSquareResult,
    /// Transported vs initial samples, a measure of how far the flow moved.
    pub ks_vs_initial: f64,
    pub histogram: Vec<HistogramBin>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquivarianceReport {
    pub s0: f64,
    pub s1: f64,
    pub n: usize,
    pub seed: u64,
    pub aborted: usize,
    pub aborted_fraction: f64,
    pub acceptance: f64,
    pub envelope_violations: u64,
    pub particles: Vec<ParticleReport>,
    pub pass: bool,
}

/// ρ-samples on `Σ_{s0}` transported to `Σ_{s1}` and compared with `ρ` there.
pub fn equivariance_experiment(
    psi: &MultiTimeWaveFunction,
    fol: &Foliation,
    cfg: &EquivarianceConfig,
) -> Result<EquivarianceReport> {
    if cfg.s1 < cfg.s0 {
        return Err(Error::OutOfRange(format!("s1 {} < s0 {}", cfg.s1, cfg.s0)));
    }
    let opts = SamplingOptions::default();
    let initial = sample_rho(psi, fol, cfg.s0, &cfg.box_, cfg.n, cfg.seed, &opts)?;
    let fresh_opts = SamplingOptions { stream_offset: cfg.n as u64, ..opts };
    let fresh = sample_rho(psi, fol, cfg.s1, &cfg.box_, cfg.n, cfg.seed, &fresh_opts)?;
    let area_max = initial.envelope / ENVELOPE_SAFETY;
    let iopts = IntegrationOptions { ds: cfg.ds, node_threshold: EPS_NODE * area_max, record_stride: usize::MAX / 2 };
    let trajs = integrate_ensemble(psi, fol, &initial.samples, cfg.s0, cfg.s1, &iopts);
    let mut finals: Vec<Vec<Vec<f64>>> = Vec::with_capacity(cfg.n);
    let mut aborted = 0;
    for t in trajs {
        let t = t?;
        if t.completed() {
            finals.push(t.last().iter().map(|x| fol.chart(x)).collect());
        } else {
            aborted += 1;
        }
    }
    let aborted_fraction = aborted as f64 / cfg.n as f64;
    if aborted_fraction > MAX_ABORTED {
        return Err(Error::ExperimentInvalid(format!("{aborted} of {} trajectories aborted", cfg.n)));
    }
    let mut particles = Vec::new();
    let mut pass = true;
    for k in 0..psi.n_particles() {
        let moved: Vec<f64> = finals.iter().map(|c| c[k][0]).collect();
        let ks = ks_two_sample(&moved, &fresh.coordinate(k, 0))?;
        let ks_initial = ks_two_sample(&moved, &initial.coordinate(k, 0))?.statistic;
        let probs = marginal_bin_probabilities(psi, fol, cfg.s1, &cfg.box_, k, cfg.bins, cfg.quad_sub)?;
        let range = cfg.box_[k][0];
        let observed = histogram(&moved, range, cfg.bins);
        let chi2 = chi_square(&observed, &probs)?;
        pass &= ks.p_value > cfg.alpha && chi2.p_value > cfg.alpha;
        let width = (range.1 - range.0) / cfg.bins as f64;
        let histogram = (0..cfg.bins)
            .map(|b| HistogramBin {
                lo: range.0 + b as f64 * width,
                hi: range.0 + (b + 1) as f64 * width,
                observed: observed[b],
                expected: probs[b] * moved.len() as f64,
            })
            .collect();
        particles.push(ParticleReport { particle: k, ks, chi2, ks_vs_initial: ks_initial, histogram });
    }
    Ok(EquivarianceReport {
        s0: cfg.s0,
        s1: cfg.s1,
        n: cfg.n,
        seed: cfg.seed,
        aborted,
        aborted_fraction,
        acceptance: initial.acceptance(),
        envelope_violations: initial.envelope_violations + fresh.envelope_violations,
        particles,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MajorityReport {
    pub runs: Vec<EquivarianceReport>,
    pub passes: usize,
    pub pass: bool,
}

/// Runs the experiment with seeds `seed, seed+1, ...` and passes on a strict majority.
pub fn equivariance_majority(
    psi: &MultiTimeWaveFunction,
    fol: &Foliation,
    cfg: &EquivarianceConfig,
    repeats: usize,
) -> Result<MajorityReport> {
    let mut runs = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let c = EquivarianceConfig { seed: cfg.seed.wrapping_add(r as u64), ..cfg.clone() };
        runs.push(equivariance_experiment(psi, fol, &c)?);
    }
    let passes = runs.iter().filter(|r| r.pass).count();
    Ok(MajorityReport { pass: 2 * passes > repeats, passes, runs })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CellReport {
    pub env_range: (f64, f64),
    pub count: usize,
    pub chi2: ChiSquareResult,
    pub ks: KsResult,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionalReport {
    pub cells: Vec<CellReport>,
    pub chi2_total: f64,
    pub dof_total: usize,
    pub p_value: f64,
    pub mean_ks: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionalConfig {
    pub s: f64,
    pub n: usize,
    pub seed: u64,
    pub box_: ChartBox,
    pub cells: usize,
    pub bins: usize,
    pub quad_nodes: usize,
    pub min_count: usize,
    pub alpha: f64,
}

/// Compares subsystem samples, binned by equal-mass environment cells, with
/// the conditional crossing density averaged over each cell.
///
/// Only `N1 = N2 = 1` in `d = 2` is supported.
pub fn conditional_statistics_experiment(
    psi: &MultiTimeWaveFunction,
    fol: &Foliation,
    cfg: &ConditionalConfig,
) -> Result<ConditionalReport> {
    if psi.n_particles() != 2 || fol.dim() != 2 {
        return Err(Error::ParticleCountMismatch { expected: 2, found: psi.n_particles() });
    }
    if cfg.quad_nodes % cfg.bins != 0 {
        return Err(Error::OutOfRange(format!("quad_nodes {} not a multiple of bins {}", cfg.quad_nodes, cfg.bins)));
    }
    let ens = sample_rho(psi, fol, cfg.s, &cfg.box_, cfg.n, cfg.seed, &SamplingOptions::default())?;
    let sys_q = fol.leaf_quadrature(cfg.s, &cfg.box_[0], cfg.quad_nodes)?;
    let env_q = fol.leaf_quadrature(cfg.s, &cfg.box_[1], cfg.quad_nodes)?;
    let grid = SubsystemGrid::from_quadratures(std::slice::from_ref(&sys_q))?;
    // conditional densities p(q1_a | q2_b) and weights w_b 𝒩(q2_b)
    let per_env = det_map(env_q.len(), |b| -> Result<(f64, Vec<f64>)> {
        let env = PointSet { points: vec![env_q.nodes[b]], normals: vec![env_q.normals[b]] };
        let w = ConditionalDensityMatrix::new(psi, 1, env, &grid)?;
        let dens = grid
            .nodes
            .iter()
            .map(|n| conditional_crossing_density(&w, &n.set).map(|p| p * n.weight))
            .collect::<Result<Vec<f64>>>()?;
        Ok((env_q.weights[b] * w.normalization(), dens))
    });
    let per_env: Vec<(f64, Vec<f64>)> = per_env.into_iter().collect::<Result<_>>()?;

    let env_x = ens.coordinate(1, 0);
    let sorted_env = sorted(&env_x);
    let (lo, hi) = cfg.box_[1][0];
    let mut edges = vec![lo];
    for c in 1..cfg.cells {
        edges.push(sorted_env[c * sorted_env.len() / cfg.cells]);
    }
    edges.push(hi);

    let sub = cfg.quad_nodes / cfg.bins;
    let sys_range = cfg.box_[0][0];
    let h = (sys_range.1 - sys_range.0) / cfg.quad_nodes as f64;
    let mut cells = Vec::new();
    let (mut chi2_total, mut dof_total, mut ks_sum) = (0.0, 0, 0.0);
    for c in 0..cfg.cells {
        let (a, b) = (edges[c], edges[c + 1]);
        let inside = |x: f64| x >= a && (x < b || (c + 1 == cfg.cells && x <= b));
        let xs: Vec<f64> =
            ens.charts.iter().filter(|ch| inside(ch[1][0])).map(|ch| ch[0][0]).collect();
        if xs.len() < cfg.min_count {
            return Err(Error::InsufficientCounts(format!("cell {c} has {} samples", xs.len())));
        }
        let mut node_mass = vec![0.0; cfg.quad_nodes];
        let mut norm = 0.0;
        for (bidx, (wn, dens)) in per_env.iter().enumerate() {
            if inside(env_q.charts[bidx][0]) {
                norm += wn;
                for (m, d) in node_mass.iter_mut().zip(dens) {
                    *m += wn * d;
                }
            }
        }
        if !(norm > 0.0) {
            return Err(Error::InsufficientCounts(format!("cell {c} holds no quadrature nodes")));
        }
        for m in node_mass.iter_mut() {
            *m /= norm;
        }
        let probs: Vec<f64> = node_mass.chunks(sub).map(|ch| ch.iter().sum()).collect();
        let chi2 = chi_square(&histogram(&xs, sys_range, cfg.bins), &probs)?;
        let cum: Vec<f64> = std::iter::once(0.0)
            .chain(node_mass.iter().scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            }))
            .collect();
        let total = *cum.last().unwrap();
        let cdf = |x: f64| {
            let t = ((x - sys_range.0) / h).clamp(0.0, cfg.quad_nodes as f64);
            let i = (t.floor() as usize).min(cfg.quad_nodes - 1);
            (cum[i] + (t - i as f64) * node_mass[i]) / total
        };
        let ks = ks_one_sample(&xs, cdf)?;
        chi2_total += chi2.statistic;
        dof_total += chi2.dof;
        ks_sum += ks.statistic;
        cells.push(CellReport { env_range: (a, b), count: xs.len(), chi2, ks });
    }
    let p_value = chi2_sf(chi2_total, dof_total);
    Ok(ConditionalReport {
        mean_ks: ks_sum / cfg.cells as f64,
        pass: p_value > cfg.alpha,
        cells,
        chi2_total,
        dof_total,
        p_value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::build_gammas;
    use crate::foliation::{make_foliation, FoliationKind};
    use crate::wavefunction::{EnergyBranch, GaussianComb, PlaneWaveMode, SingleParticleWave};
    use crate::C64;

    #[test]
    fn kolmogorov_tail_values() {
        // Q(1.36) ≈ 0.049, Q(1.63) ≈ 0.0098
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
        assert!((kolmogorov_q(1.63) - 0.0098).abs() < 5e-4);
        assert_eq!(kolmogorov_q(0.1), 1.0);
    }

    #[test]
    fn ks_identical_samples() {
        let a: Vec<f64> = (0..100).map(|i| i as f64 * 0.37 % 1.0).collect();
        let r = ks_two_sample(&a, &a).unwrap();
        assert_eq!(r.statistic, 0.0);
        let u = ks_one_sample(&(0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect::<Vec<_>>(), |x| x).unwrap();
        assert!(u.statistic <= 0.5e-3 + 1e-12);
    }

    #[test]
    fn chi_square_merges_sparse_bins() {
        let r = chi_square(&[50, 50, 1, 0], &[0.5, 0.49, 0.005, 0.005]).unwrap();
        assert_eq!(r.dof, 1);
        assert!(r.p_value > 0.5);
    }

    #[test]
    fn uniform_density_passes_ks() {
        let g = build_gammas(2).unwrap();
        let mode = PlaneWaveMode::projected(&g, 1.0, &[0.4], &[C64::from(1.0), C64::from(0.0)], EnergyBranch::Positive).unwrap();
        let psi = MultiTimeWaveFunction::product(&g, vec![SingleParticleWave::new(vec![(C64::from(1.0), mode)]).unwrap()]).unwrap();
        let f = make_foliation(2, FoliationKind::Flat, (0.0, 1.0)).unwrap();
        let ens = sample_rho(&psi, &f, 0.0, &vec![vec![(-2.0, 3.0)]], 2000, 7, &SamplingOptions::default()).unwrap();
        let r = ks_one_sample(&ens.coordinate(0, 0), |x| (x + 2.0) / 5.0).unwrap();
        assert!(r.p_value > 0.01, "{r:?}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = build_gammas(2).unwrap();
        let w = GaussianComb {
            mass: 1.0,
            center: 0.0,
            mean_wavenumber: 0.5,
            transverse: vec![],
            width: 1.0,
            period: 30.0,
            branch: EnergyBranch::Positive,
            seed: vec![[1.0, 0.0], [0.0, 0.0]],
            cutoff: 1e-7,
            rapidity: 0.0,
        }
        .build(&g)
        .unwrap();
        let psi = MultiTimeWaveFunction::product(&g, vec![w]).unwrap();
        let f = make_foliation(2, FoliationKind::Flat, (0.0, 1.0)).unwrap();
        let b = vec![vec![(-8.0, 8.0)]];
        let o = SamplingOptions::default();
        let a1 = sample_rho(&psi, &f, 0.0, &b, 500, 1, &o).unwrap();
        let a2 = sample_rho(&psi, &f, 0.0, &b, 500, 1, &o).unwrap();
        let b1 = sample_rho(&psi, &f, 0.0, &b, 500, 2, &o).unwrap();
        assert_eq!(a1.charts, a2.charts);
        assert_ne!(a1.charts, b1.charts);
    }

    #[test]
    fn zero_transport_is_identity() {
        let g = build_gammas(2).unwrap();
        let w = GaussianComb {
            mass: 1.0,
            center: 0.0,
            mean_wavenumber: 0.5,
            transverse: vec![],
            width: 1.0,
            period: 30.0,
            branch: EnergyBranch::Positive,
            seed: vec![[1.0, 0.0], [0.0, 0.0]],
            cutoff: 1e-7,
            rapidity: 0.0,
        }
        .build(&g)
        .unwrap();
        let psi = MultiTimeWaveFunction::product(&g, vec![w]).unwrap();
        let f = make_foliation(2, FoliationKind::Flat, (0.0, 1.0)).unwrap();
        let cfg = EquivarianceConfig {
            s0: 0.0,
            s1: 0.0,
            n: 400,
            seed: 3,
            box_: vec![vec![(-8.0, 8.0)]],
            ds: 0.05,
            bins: 16,
            quad_sub: 4,
            alpha: 0.01,
        };
        let r = equivariance_experiment(&psi, &f, &cfg).unwrap();
        assert_eq!(r.particles[0].ks_vs_initial, 0.0);
        assert_eq!(r.aborted, 0);
    }
}
