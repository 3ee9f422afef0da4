//! Building a scenario and running its experiments.

use std::collections::BTreeMap;

use hbd_core::clifford::{boost_to_rest_frames, build_gammas, GammaSet};
use hbd_core::dynamics::{integrate_ensemble, velocity_field, IntegrationOptions, TrajectoryStatus, EPS_NODE};
use hbd_core::foliation::{make_foliation, Foliation, LeafQuadrature};
use hbd_core::hilbert::{boundary_mass, normalize, scalar_product, SurfaceRestrictedState};
use hbd_core::spacetime::{is_spacelike_configuration, FourVector, LorentzMatrix, MultiTimeLorentz};
use hbd_core::stats::{equivariance_majority, sample_rho, ChartBox, EquivarianceConfig, SamplingOptions};
use hbd_core::subsystem::{
    discretize_operator, discretize_via_projector, extract_effective_wave, guidance_via_wcond, parallelism_defect,
    purity, ConditionalDensityMatrix, EffectiveWaveOptions, PointSet, SubsystemGrid, EPS_RANK,
};
use hbd_core::wavefunction::{MultiTimeWaveFunction, PlaneWaveMode, SingleParticleWave, Symmetry};
use hbd_core::{CVector, C64};
use serde_json::{json, Value};

use crate::config::{
    EffectiveWaveConfig, EquivarianceExpConfig, ExperimentConfig, FactorConfig, LorentzConfig, PurityScanConfig,
    ScenarioConfig, StartsConfig, SurfaceConfig, TermConfig, TrajectoriesConfig, WcondConfig,
};

/// Minimum eigenvalue accepted for the discretized operator.
pub const MIN_EIGENVALUE: f64 = -1e-10;
/// Allowed deviation of the operator trace from 1.
pub const TRACE_TOLERANCE: f64 = 1e-3;
/// Allowed entrywise gap between the two discretization routes.
pub const ROUTE_TOLERANCE: f64 = 1e-10;
/// Allowed parallelism defect between the two guidance formulas.
pub const GUIDANCE_TOLERANCE: f64 = 1e-9;
/// Allowed purity change under the environment rest-frame transformation.
pub const LORENTZ_PURITY_TOLERANCE: f64 = 1e-8;
/// Minimum fidelity of an extracted effective wave to its reference.
pub const FIDELITY_THRESHOLD: f64 = 1.0 - 1e-6;

/// A validated scenario with its numerical objects.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub gammas: GammaSet,
    pub psi: MultiTimeWaveFunction,
    pub foliation: Foliation,
    /// `⟨Ψ,Ψ⟩` on the reference leaf before normalization.
    pub raw_norm2: f64,
}

fn c64(p: [f64; 2]) -> C64 {
    C64::new(p[0], p[1])
}

fn build_factor(g: &GammaSet, f: &FactorConfig) -> hbd_core::Result<SingleParticleWave> {
    match f {
        FactorConfig::Comb(c) => c.build(g),
        FactorConfig::Modes(m) => {
            let modes = m
                .modes
                .iter()
                .map(|mode| {
                    let seed: Vec<C64> = mode.spinor.iter().map(|p| c64(*p)).collect();
                    PlaneWaveMode::projected(g, m.mass, &mode.momentum, &seed, mode.branch).map(|p| (c64(mode.coefficient), p))
                })
                .collect::<hbd_core::Result<Vec<_>>>()?;
            SingleParticleWave::new(modes)
        }
    }
}

fn build_wave(g: &GammaSet, terms: &[TermConfig], symmetry: Symmetry) -> hbd_core::Result<MultiTimeWaveFunction> {
    let terms = terms
        .iter()
        .map(|t| {
            let f = t.factors.iter().map(|f| build_factor(g, f)).collect::<hbd_core::Result<Vec<_>>>()?;
            Ok((c64(t.coefficient), f))
        })
        .collect::<hbd_core::Result<Vec<_>>>()?;
    let psi = MultiTimeWaveFunction::from_terms(g, terms)?;
    match symmetry {
        Symmetry::None => Ok(psi),
        Symmetry::Antisymmetrized => psi.antisymmetrize(),
        Symmetry::Symmetrized => psi.symmetrize(),
    }
}

impl Scenario {
    /// Validates the configuration and builds every object it names.
    pub fn build(config: ScenarioConfig) -> Result<Self, crate::config::ConfigError> {
        use crate::config::ConfigError;
        config.validate()?;
        let bad = |field: &str, e: hbd_core::Error| ConfigError::Invalid { field: field.into(), message: e.to_string() };
        let gammas = build_gammas(config.spacetime_dim).map_err(|e| bad("spacetime_dim", e))?;
        let slab = (config.foliation.slab[0], config.foliation.slab[1]);
        let foliation =
            make_foliation(config.spacetime_dim, config.foliation.shape, slab).map_err(|e| bad("foliation", e))?;
        let psi = build_wave(&gammas, &config.wavefunction.terms, config.wavefunction.symmetry)
            .map_err(|e| bad("wavefunction", e))?;
        let mut scenario = Self { config, gammas, psi, foliation, raw_norm2: 1.0 };
        let quads = scenario.quadratures(scenario.config.numerics.leaf).map_err(|e| bad("numerics", e))?;
        let raw = SurfaceRestrictedState::new(&scenario.psi, &quads).map_err(|e| bad("wavefunction", e))?.norm2();
        scenario.raw_norm2 = raw;
        if !(raw > 0.0) || !raw.is_finite() {
            return Err(ConfigError::Invalid {
                field: "wavefunction".into(),
                message: format!("norm {raw} on the reference leaf"),
            });
        }
        if scenario.config.wavefunction.normalize {
            scenario.psi = normalize(&scenario.psi, &quads).map_err(|e| bad("wavefunction", e))?;
        }
        for (i, e) in scenario.config.experiments.iter().enumerate() {
            if let ExperimentConfig::SurfaceIndependence(c) = e {
                for (j, l) in c.leaves.iter().enumerate() {
                    make_foliation(scenario.config.spacetime_dim, l.shape, (l.s - 1.0, l.s + 1.0))
                        .map_err(|err| bad(&format!("experiments[{i}].leaves[{j}]"), err))?;
                }
                if let Some(p) = &c.partner {
                    build_wave(&scenario.gammas, p, scenario.config.wavefunction.symmetry)
                        .map_err(|err| bad(&format!("experiments[{i}].partner"), err))?;
                }
            }
        }
        Ok(scenario)
    }

    fn chart_box(&self) -> Vec<(f64, f64)> {
        self.config.numerics.box_.iter().map(|[a, b]| (*a, *b)).collect()
    }

    pub fn boxes(&self) -> ChartBox {
        vec![self.chart_box(); self.psi.n_particles()]
    }

    pub fn quadratures_on(&self, fol: &Foliation, s: f64, n: usize) -> hbd_core::Result<Vec<LeafQuadrature>> {
        let q = fol.leaf_quadrature(s, &self.chart_box(), self.config.numerics.nodes)?;
        Ok(vec![q; n])
    }

    fn quadratures(&self, s: f64) -> hbd_core::Result<Vec<LeafQuadrature>> {
        self.quadratures_on(&self.foliation, s, self.psi.n_particles())
    }

    pub fn n1(&self) -> usize {
        self.config.particles.subsystem
    }

    pub fn sys_grid(&self, s: f64) -> hbd_core::Result<SubsystemGrid> {
        SubsystemGrid::from_quadratures(&self.quadratures_on(&self.foliation, s, self.n1())?)
    }

    pub fn env_points(&self, s: f64, charts: &[Vec<f64>]) -> hbd_core::Result<PointSet> {
        PointSet::on_leaf(&self.foliation, s, charts.iter().map(|c| self.foliation.embed(s, c)).collect())
    }
}

/// Result of one experiment.
#[derive(Clone, Debug, Default)]
pub struct Outcome {
    /// Named pass/fail checks; the experiment passes when all hold.
    pub checks: BTreeMap<String, bool>,
    pub metrics: Value,
    /// `(file suffix, CSV text)`.
    pub tables: Vec<(String, String)>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.values().all(|v| *v)
    }
}

pub type ExpResult = Result<Outcome, hbd_core::Error>;

/// Runs experiment `index` with the given base seed.
pub fn run_experiment(sc: &Scenario, index: usize, seed: u64) -> ExpResult {
    let seed = seed.wrapping_add(1000 * index as u64);
    match &sc.config.experiments[index] {
        ExperimentConfig::Trajectories(c) => trajectories(sc, c, seed),
        ExperimentConfig::Equivariance(c) => equivariance(sc, c, seed),
        ExperimentConfig::WcondReport(c) => wcond_report(sc, c, seed),
        ExperimentConfig::PurityScan(c) => purity_scan(sc, c),
        ExperimentConfig::EffectiveWave(c) => effective_wave(sc, c),
        ExperimentConfig::SurfaceIndependence(c) => surface_independence(sc, c),
        ExperimentConfig::LorentzRoundtrip(c) => lorentz_roundtrip(sc, c, seed),
    }
}

fn starts(sc: &Scenario, st: &StartsConfig, s0: f64, seed: u64) -> hbd_core::Result<Vec<Vec<FourVector>>> {
    let mut out: Vec<Vec<FourVector>> =
        st.charts.iter().map(|q| q.iter().map(|c| sc.foliation.embed(s0, c)).collect()).collect();
    if st.sample > 0 {
        let ens = sample_rho(&sc.psi, &sc.foliation, s0, &sc.boxes(), st.sample, seed, &SamplingOptions::default())?;
        out.extend(ens.samples);
    }
    Ok(out)
}

fn node_threshold(sc: &Scenario, starts: &[Vec<FourVector>]) -> f64 {
    let max = starts
        .iter()
        .filter_map(|q| velocity_field(&sc.psi, &sc.foliation, q).ok().map(|v| v.rho))
        .fold(0.0, f64::max);
    EPS_NODE * max
}

fn fmt_point(x: &FourVector) -> String {
    x.as_slice().iter().map(|v| format!("{v:.12e}")).collect::<Vec<_>>().join(",")
}

fn coordinate_header(d: usize) -> String {
    (0..d).map(|m| format!("x{m}")).collect::<Vec<_>>().join(",")
}

fn trajectories(sc: &Scenario, c: &TrajectoriesConfig, seed: u64) -> ExpResult {
    let s0 = c.s0.unwrap_or(sc.config.numerics.leaf);
    let q0 = starts(sc, &c.starts, s0, seed)?;
    let opts =
        IntegrationOptions { ds: sc.config.numerics.ds, node_threshold: node_threshold(sc, &q0), record_stride: c.record_stride };
    let trajs = integrate_ensemble(&sc.psi, &sc.foliation, &q0, s0, c.s_end, &opts)
        .into_iter()
        .collect::<hbd_core::Result<Vec<_>>>()?;
    let d = sc.config.spacetime_dim;
    let mut csv = format!("trajectory,particle,s,{}\n", coordinate_header(d));
    let (mut completed, mut node_aborts, mut left) = (0, 0, 0);
    let mut leaf_defect: f64 = 0.0;
    let mut spacelike = true;
    for (i, t) in trajs.iter().enumerate() {
        match t.status {
            TrajectoryStatus::Completed => completed += 1,
            TrajectoryStatus::NodeAbort { .. } => node_aborts += 1,
            TrajectoryStatus::LeftSlab { .. } => left += 1,
        }
        for (s, q) in t.labels.iter().zip(&t.crossings) {
            spacelike &= is_spacelike_configuration(q);
            for (k, x) in q.iter().enumerate() {
                leaf_defect = leaf_defect.max((sc.foliation.leaf_of(x) - s).abs());
                csv.push_str(&format!("{i},{k},{s:.12e},{}\n", fmt_point(x)));
            }
        }
    }
    let finals: Vec<Vec<Vec<f64>>> = trajs.iter().map(|t| t.last().iter().map(|x| sc.foliation.chart(x)).collect()).collect();
    let mean_final: Vec<Vec<f64>> = (0..sc.psi.n_particles())
        .map(|k| {
            (0..d - 1).map(|a| finals.iter().map(|f| f[k][a]).sum::<f64>() / finals.len().max(1) as f64).collect()
        })
        .collect();
    let mut checks = BTreeMap::new();
    checks.insert("on_leaf".into(), leaf_defect < 1e-9);
    checks.insert("spacelike".into(), spacelike);
    Ok(Outcome {
        checks,
        metrics: json!({
            "trajectories": trajs.len(),
            "completed": completed,
            "node_aborts": node_aborts,
            "left_slab": left,
            "max_leaf_defect": leaf_defect,
            "mean_final_chart": mean_final,
            "s0": s0,
            "s_end": c.s_end,
        }),
        tables: vec![("trajectories".into(), csv)],
    })
}

fn equivariance(sc: &Scenario, c: &EquivarianceExpConfig, seed: u64) -> ExpResult {
    let cfg = EquivarianceConfig {
        s0: c.s0.unwrap_or(sc.config.numerics.leaf),
        s1: c.s1,
        n: c.samples,
        seed,
        box_: sc.boxes(),
        ds: sc.config.numerics.ds,
        bins: c.bins,
        quad_sub: c.quad_sub,
        alpha: c.alpha,
    };
    let rep = equivariance_majority(&sc.psi, &sc.foliation, &cfg, c.repeats)?;
    let mut csv = String::from("repeat,particle,lo,hi,observed,expected\n");
    for (r, run) in rep.runs.iter().enumerate() {
        for p in &run.particles {
            for b in &p.histogram {
                csv.push_str(&format!("{r},{},{:.12e},{:.12e},{},{:.12e}\n", p.particle, b.lo, b.hi, b.observed, b.expected));
            }
        }
    }
    let runs: Vec<Value> = rep
        .runs
        .iter()
        .map(|r| {
            json!({
                "seed": r.seed,
                "pass": r.pass,
                "aborted_fraction": r.aborted_fraction,
                "acceptance": r.acceptance,
                "envelope_violations": r.envelope_violations,
                "particles": r.particles.iter().map(|p| json!({
                    "ks_statistic": p.ks.statistic,
                    "ks_p": p.ks.p_value,
                    "chi2": p.chi2.statistic,
                    "chi2_dof": p.chi2.dof,
                    "chi2_p": p.chi2.p_value,
                    "ks_vs_initial": p.ks_vs_initial,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    let mut checks = BTreeMap::new();
    checks.insert("majority".into(), rep.pass);
    Ok(Outcome {
        checks,
        metrics: json!({ "passes": rep.passes, "repeats": c.repeats, "alpha": c.alpha, "s0": cfg.s0, "s1": cfg.s1, "runs": runs }),
        tables: vec![("histograms".into(), csv)],
    })
}

/// Deterministic low-discrepancy points in the chart box.
fn probe_charts(sc: &Scenario, i: usize, seed: u64) -> Vec<Vec<f64>> {
    let b = sc.chart_box();
    let d = b.len();
    // additive recurrence with irrational steps per coordinate
    let steps = [0.618_033_988_749_895, 0.414_213_562_373_095, 0.732_050_807_568_877, 0.236_067_977_499_79];
    let offset = (seed % 997) as f64 / 997.0;
    (0..sc.n1())
        .map(|k| {
            (0..d)
                .map(|a| {
                    let u = (offset + (i + 1) as f64 * steps[(k * d + a) % 4] * (1.0 + k as f64)).fract();
                    // stay inside the middle 60% where the packet lives
                    let (lo, hi) = b[a];
                    let mid = 0.5 * (lo + hi);
                    mid + 0.3 * (hi - lo) * (2.0 * u - 1.0)
                })
                .collect()
        })
        .collect()
}

fn wcond_report(sc: &Scenario, c: &WcondConfig, seed: u64) -> ExpResult {
    let s = c.s.unwrap_or(sc.config.numerics.leaf);
    let grid = sc.sys_grid(s)?;
    let env = sc.env_points(s, &c.q2)?;
    let w = ConditionalDensityMatrix::new(&sc.psi, sc.n1(), env.clone(), &grid)?;
    let op = discretize_operator(&w, &grid)?;
    let op2 = discretize_via_projector(&w, &grid)?;
    let route_gap = (&op.matrix - &op2.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let ev = op.eigenvalues();
    let min_ev = ev.last().copied().unwrap_or(0.0);
    let rank = ev.iter().filter(|e| **e > EPS_RANK * ev[0]).count();
    let p = purity(&op);

    let mut worst_parallel: f64 = 0.0;
    let mut worst_scale: f64 = 0.0;
    for i in 0..c.guidance_points {
        let charts = probe_charts(sc, i, seed);
        let pts: Vec<FourVector> = charts.iter().map(|ch| sc.foliation.embed(s, ch)).collect();
        let set = PointSet::on_leaf(&sc.foliation, s, pts.clone())?;
        let mut q = pts;
        q.extend_from_slice(&env.points);
        let full = velocity_field(&sc.psi, &sc.foliation, &q)?;
        for k in 0..sc.n1() {
            let via = guidance_via_wcond(&w, &set, k)?;
            worst_parallel = worst_parallel.max(parallelism_defect(&via, &full.velocities[k]));
            let norm = full.velocities[k].as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
            worst_scale = worst_scale.max((via - full.velocities[k]).as_slice().iter().map(|x| x.abs()).fold(0.0, f64::max) / norm);
        }
    }

    let env_grid = SubsystemGrid::from_quadratures(&sc.quadratures_on(&sc.foliation, s, sc.config.n_env())?)?;
    let eff = if sc.config.n_env() <= 2 {
        let r = extract_effective_wave(&sc.psi, sc.n1(), &grid, &env_grid, &env, &EffectiveWaveOptions::default())?;
        json!({ "present": r.wave.is_some(), "singular_ratio": r.singular_ratio, "delta_supp": r.delta_supp, "q2_aligned": r.q2_aligned })
    } else {
        Value::Null
    };

    let mut checks = BTreeMap::new();
    checks.insert("hermitian".into(), op.hermiticity_defect() < 1e-12);
    checks.insert("positive".into(), min_ev >= MIN_EIGENVALUE);
    checks.insert("trace".into(), (op.trace() - 1.0).abs() <= TRACE_TOLERANCE);
    checks.insert("routes_agree".into(), route_gap < ROUTE_TOLERANCE);
    if c.guidance_points > 0 {
        checks.insert("guidance_parallel".into(), worst_parallel < GUIDANCE_TOLERANCE);
    }
    Ok(Outcome {
        checks,
        metrics: json!({
            "s": s,
            "normalization": w.normalization(),
            "on_leaf": w.is_on_leaf(),
            "trace": op.trace(),
            "hermiticity_defect": op.hermiticity_defect(),
            "leading_eigenvalues": ev.iter().take(c.leading).collect::<Vec<_>>(),
            "min_eigenvalue": min_ev,
            "rank": rank,
            "purity": p,
            "route_gap": route_gap,
            "guidance_parallelism": worst_parallel,
            "guidance_relative_gap": worst_scale,
            "effective_wave": eff,
            "nodes": grid.len(),
        }),
        tables: vec![],
    })
}

/// `(purity, trace, eigenvalues)` of `Ŵ` for environment points `env`.
fn purity_at(
    psi: &MultiTimeWaveFunction,
    n1: usize,
    env: PointSet,
    grid: &SubsystemGrid,
) -> hbd_core::Result<(f64, f64, Vec<f64>)> {
    let w = ConditionalDensityMatrix::new(psi, n1, env, grid)?;
    let op = discretize_operator(&w, grid)?;
    Ok((purity(&op), op.trace(), op.eigenvalues()))
}

/// Purity after boosting every environment slot to the rest frame of its normal.
pub fn rest_frame_purity(
    psi: &MultiTimeWaveFunction,
    n1: usize,
    env: &PointSet,
    grid: &SubsystemGrid,
) -> hbd_core::Result<(f64, f64)> {
    let d = psi.gammas().spacetime_dim();
    let mut lambdas = vec![LorentzMatrix::identity(d); n1];
    let env_l = boost_to_rest_frames(&env.normals)?;
    lambdas.extend(env_l.iter().copied());
    let moved = psi.lorentz_transform(&MultiTimeLorentz::new(lambdas)?)?;
    let env2 = env.transformed(&env_l);
    let g2 = env2.gamma_n(psi.gammas());
    let k = g2.nrows();
    let defect = (&g2 - hbd_core::CMatrix::identity(k, k)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let grid2 = grid.transformed(&vec![LorentzMatrix::identity(d); n1]);
    let w = ConditionalDensityMatrix::new(&moved, n1, env2, &grid2)?;
    let op = discretize_operator(&w, &grid2)?;
    Ok((purity(&op), defect))
}

fn purity_scan(sc: &Scenario, c: &PurityScanConfig) -> ExpResult {
    let s = c.s.unwrap_or(sc.config.numerics.leaf);
    let grid = sc.sys_grid(s)?;
    let d = sc.config.spacetime_dim;
    let rows = (0..c.points)
        .map(|i| {
            let t = if c.points == 1 { 0.0 } else { i as f64 / (c.points - 1) as f64 };
            let charts: Vec<Vec<f64>> = c
                .from
                .iter()
                .zip(&c.to)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect())
                .collect();
            let env = sc.env_points(s, &charts)?;
            let (p, tr, ev) = purity_at(&sc.psi, sc.n1(), env.clone(), &grid)?;
            let boosted = if c.lorentz_check { Some(rest_frame_purity(&sc.psi, sc.n1(), &env, &grid)?) } else { None };
            Ok((charts, p, tr, ev, boosted))
        })
        .collect::<hbd_core::Result<Vec<_>>>()?;
    let env_header: Vec<String> =
        (0..sc.config.n_env()).flat_map(|j| (1..d).map(move |a| format!("q2_{j}_{a}"))).collect();
    let mut csv = format!("index,{},purity,trace,lambda1,lambda2,purity_rest_frame\n", env_header.join(","));
    let mut worst_lorentz: f64 = 0.0;
    let mut worst_gn: f64 = 0.0;
    let mut worst_trace: f64 = 0.0;
    let mut min_ev = f64::INFINITY;
    let mut purities = Vec::new();
    for (i, (charts, p, tr, ev, b)) in rows.iter().enumerate() {
        let flat: Vec<String> = charts.iter().flatten().map(|x| format!("{x:.12e}")).collect();
        let pb = b.map(|(pb, _)| format!("{pb:.15e}")).unwrap_or_default();
        csv.push_str(&format!(
            "{i},{},{p:.15e},{tr:.15e},{:.15e},{:.15e},{pb}\n",
            flat.join(","),
            ev[0],
            ev.get(1).copied().unwrap_or(0.0)
        ));
        if let Some((pb, gn)) = b {
            worst_lorentz = worst_lorentz.max((pb - p).abs());
            worst_gn = worst_gn.max(*gn);
        }
        worst_trace = worst_trace.max((tr - 1.0).abs());
        min_ev = min_ev.min(*ev.last().unwrap());
        purities.push(*p);
    }
    let mut checks = BTreeMap::new();
    checks.insert("positive".into(), min_ev >= MIN_EIGENVALUE);
    checks.insert("trace".into(), worst_trace <= TRACE_TOLERANCE);
    if c.lorentz_check {
        checks.insert("lorentz_invariant".into(), worst_lorentz < LORENTZ_PURITY_TOLERANCE);
    }
    Ok(Outcome {
        checks,
        metrics: json!({
            "s": s,
            "points": c.points,
            "purity": purities,
            "min_eigenvalue": min_ev,
            "max_trace_error": worst_trace,
            "max_lorentz_purity_change": if c.lorentz_check { json!(worst_lorentz) } else { Value::Null },
            "max_rest_frame_gamma_n_defect": if c.lorentz_check { json!(worst_gn) } else { Value::Null },
        }),
        tables: vec![("scan".into(), csv)],
    })
}

fn effective_wave(sc: &Scenario, c: &EffectiveWaveConfig) -> ExpResult {
    let s = c.s.unwrap_or(sc.config.numerics.leaf);
    let grid = sc.sys_grid(s)?;
    let env_grid = SubsystemGrid::from_quadratures(&sc.quadratures_on(&sc.foliation, s, sc.config.n_env())?)?;
    let q2 = sc.env_points(s, &c.q2)?;
    let opts = EffectiveWaveOptions { eps_rank: c.eps_rank, eps_supp: c.eps_supp, radius: c.radius };
    let r = extract_effective_wave(&sc.psi, sc.n1(), &grid, &env_grid, &q2, &opts)?;
    let fidelity = match (c.reference_term, &r.wave) {
        (Some(t), Some(wave)) => {
            let factors = sc.config.wavefunction.terms[t].factors[..sc.n1()]
                .iter()
                .map(|f| build_factor(&sc.gammas, f))
                .collect::<hbd_core::Result<Vec<_>>>()?;
            let phi: Vec<CVector> = grid
                .nodes
                .iter()
                .map(|n| {
                    let mut v = CVector::from_element(1, C64::from(1.0));
                    for (f, x) in factors.iter().zip(&n.set.points) {
                        v = v.kronecker(&CVector::from_vec(f.evaluate(x)));
                    }
                    v
                })
                .collect();
            Some(wave.fidelity(&phi))
        }
        _ => None,
    };
    let present = r.wave.is_some();
    let mut checks = BTreeMap::new();
    if let Some(e) = c.expect_present {
        checks.insert("presence".into(), e == present);
    }
    if let Some(f) = fidelity {
        checks.insert("fidelity".into(), f > FIDELITY_THRESHOLD);
    }
    Ok(Outcome {
        checks,
        metrics: json!({
            "s": s,
            "present": present,
            "singular_ratio": r.singular_ratio,
            "delta_supp": r.delta_supp,
            "q2_aligned": r.q2_aligned,
            "fidelity": fidelity,
            "norm2": r.wave.as_ref().map(|w| w.norm2()),
        }),
        tables: vec![],
    })
}

fn surface_independence(sc: &Scenario, c: &SurfaceConfig) -> ExpResult {
    let n = sc.psi.n_particles();
    let phi = match &c.partner {
        Some(p) => {
            let raw = build_wave(&sc.gammas, p, sc.config.wavefunction.symmetry)?;
            if sc.config.wavefunction.normalize {
                normalize(&raw, &sc.quadratures(sc.config.numerics.leaf)?)?
            } else {
                raw
            }
        }
        None => sc.psi.clone(),
    };
    let mut values = Vec::new();
    let mut masses = Vec::new();
    let mut csv = String::from("leaf,shape,s,re,im,boundary_mass\n");
    for (i, l) in c.leaves.iter().enumerate() {
        let fol = make_foliation(sc.config.spacetime_dim, l.shape, (l.s - 1.0, l.s + 1.0))?;
        let quads = sc.quadratures_on(&fol, l.s, n)?;
        let a = SurfaceRestrictedState::new(&sc.psi, &quads)?;
        let b = SurfaceRestrictedState::new(&phi, &quads)?;
        let v = scalar_product(&a, &b)?;
        let m = boundary_mass(&a).max(boundary_mass(&b));
        csv.push_str(&format!("{i},{},{:.12e},{:.15e},{:.15e},{m:.6e}\n", shape_label(&l.shape), l.s, v.re, v.im));
        values.push(v);
        masses.push(m);
    }
    let spread = values.iter().map(|v| (v - values[0]).norm()).fold(0.0, f64::max);
    let worst_mass = masses.iter().copied().fold(0.0, f64::max);
    let mut checks = BTreeMap::new();
    checks.insert("agree".into(), spread <= c.tolerance);
    checks.insert("boundary_mass".into(), worst_mass < hbd_core::hilbert::BOUNDARY_MASS_LIMIT);
    Ok(Outcome {
        checks,
        metrics: json!({
            "values": values.iter().map(|v| [v.re, v.im]).collect::<Vec<_>>(),
            "max_difference": spread,
            "boundary_mass": masses,
        }),
        tables: vec![("leaves".into(), csv)],
    })
}

fn shape_label(k: &hbd_core::foliation::FoliationKind) -> String {
    use hbd_core::foliation::FoliationKind::*;
    match k {
        Flat => "flat".into(),
        Boosted { rapidity } => format!("boosted({rapidity})"),
        Tanh { amplitude, scale } => format!("tanh({amplitude};{scale})"),
    }
}

fn lorentz_roundtrip(sc: &Scenario, c: &LorentzConfig, seed: u64) -> ExpResult {
    let s0 = c.s0.unwrap_or(sc.config.numerics.leaf);
    let d = sc.config.spacetime_dim;
    let n = sc.psi.n_particles();
    let q0 = starts(sc, &c.starts, s0, seed)?;
    let lambda = LorentzMatrix::boost_along(d, c.axis, c.rapidity);
    let multi = MultiTimeLorentz::uniform(lambda, n)?;
    let psi_b = sc.psi.lorentz_transform(&multi)?;
    let fol_b = sc.foliation.with_frame(&lambda)?;
    let q0_b: Vec<Vec<FourVector>> = q0.iter().map(|q| q.iter().map(|x| lambda.apply(x)).collect()).collect();
    let opts = IntegrationOptions { ds: sc.config.numerics.ds, node_threshold: node_threshold(sc, &q0), record_stride: 1 };
    let lab = integrate_ensemble(&sc.psi, &sc.foliation, &q0, s0, c.s_end, &opts);
    let moved = integrate_ensemble(&psi_b, &fol_b, &q0_b, s0, c.s_end, &opts);
    let mut csv = String::from("trajectory,s,deviation\n");
    let mut worst: f64 = 0.0;
    let mut compared = 0usize;
    for (i, (a, b)) in lab.into_iter().zip(moved).enumerate() {
        let (a, b) = (a?, b?);
        if a.labels.len() != b.labels.len() {
            return Err(hbd_core::Error::ExperimentInvalid(format!("trajectory {i} stopped at different leaves")));
        }
        for ((s, xa), xb) in a.labels.iter().zip(&a.crossings).zip(&b.crossings) {
            let dev = xa.iter().zip(xb).map(|(p, q)| lambda.apply(p).max_abs_diff(q)).fold(0.0, f64::max);
            worst = worst.max(dev);
            compared += 1;
            csv.push_str(&format!("{i},{s:.12e},{dev:.6e}\n"));
        }
    }
    // Ψ → Λ → Λ⁻¹ at the start configurations
    let back = psi_b.lorentz_transform(&multi.inverse())?;
    let mut roundtrip: f64 = 0.0;
    for q in &q0 {
        let (u, v) = (sc.psi.evaluate(q)?, back.evaluate(q)?);
        let scale = u.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
        roundtrip = roundtrip.max(u.iter().zip(&v).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale);
    }
    let mut checks = BTreeMap::new();
    checks.insert("covariant".into(), worst < c.tolerance);
    checks.insert("roundtrip".into(), roundtrip < 1e-10);
    Ok(Outcome {
        checks,
        metrics: json!({
            "rapidity": c.rapidity,
            "axis": c.axis,
            "trajectories": q0.len(),
            "compared_leaves": compared,
            "max_deviation": worst,
            "state_roundtrip_error": roundtrip,
        }),
        tables: vec![("deviation".into(), csv)],
    })
}
