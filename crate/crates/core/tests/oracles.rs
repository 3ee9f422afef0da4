use hbd_core::clifford::build_gammas;
use hbd_core::foliation::{make_foliation, FoliationKind};
use hbd_core::hilbert::{scalar_product, SurfaceRestrictedState};
use hbd_core::subsystem::{extract_effective_wave, EffectiveWaveOptions, PointSet, SubsystemGrid};
use hbd_core::stats::{conditional_statistics_experiment, kolmogorov_q, sample_rho, ConditionalConfig, SamplingOptions};
use hbd_core::wavefunction::{EnergyBranch, GaussianComb, MultiTimeWaveFunction, SingleParticleWave};
use hbd_core::{CVector, C64};

fn comb(center: f64, k: f64, seed: [[f64; 2]; 2]) -> GaussianComb {
    GaussianComb {
        mass: 1.0,
        center,
        mean_wavenumber: k,
        transverse: vec![],
        width: 1.0,
        period: 30.0,
        branch: EnergyBranch::Positive,
        seed: seed.to_vec(),
        cutoff: 1e-7,
        rapidity: 0.0,
    }
}

const UP: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 0.0]];

fn wave(center: f64, k: f64) -> SingleParticleWave {
    comb(center, k, UP).build(&build_gammas(2).unwrap()).unwrap()
}

#[test]
fn comb_norm_over_one_period_matches_parseval() {
    // modes are orthogonal over a period: ∫ψ†ψ dx = period Σ|c_j|²
    let g = build_gammas(2).unwrap();
    let w = comb(0.7, 0.4, [[0.6, 0.1], [0.2, -0.3]]).build(&g).unwrap();
    let parseval: f64 = 30.0 * w.modes().iter().map(|(c, _)| c.norm_sqr()).sum::<f64>();
    let psi = MultiTimeWaveFunction::product(&g, vec![w]).unwrap();
    let f = make_foliation(2, FoliationKind::Flat, (0.0, 1.0)).unwrap();
    let q = [f.leaf_quadrature(0.0, &[(-15.0, 15.0)], 128).unwrap()];
    let state = SurfaceRestrictedState::new(&psi, &q).unwrap();
    let quad = scalar_product(&state, &state).unwrap().re;
    assert!(((quad - parseval) / parseval).abs() < 1e-12, "{quad} {parseval}");
    // continuum limit: √(π/2)/σ · period/Δk = √(π/2) · 30²/2π
    let continuum = (std::f64::consts::PI / 2.0).sqrt() * 900.0 / std::f64::consts::TAU;
    assert!(((parseval - continuum) / continuum).abs() < 1e-6);
}

#[test]
fn kolmogorov_tail_frozen() {
    // Q(1) = 2 Σ (−1)^{k−1} e^{−2k²}
    assert!((kolmogorov_q(1.0) - 0.269_999_671_677_354_6).abs() < 1e-12);
    assert!((kolmogorov_q(0.5) - 0.963_945_243_664_258).abs() < 1e-12);
}

fn sample_mean_check(kind: FoliationKind) {
    let g = build_gammas(2).unwrap();
    let psi = MultiTimeWaveFunction::product(&g, vec![wave(0.5, 0.6)]).unwrap();
    let f = make_foliation(2, kind, (0.0, 1.0)).unwrap();
    let b = vec![(-8.0, 9.0)];
    let q = f.leaf_quadrature(0.3, &b, 400).unwrap();
    let dens: Vec<f64> = (0..q.len()).map(|i| psi.rho(&[q.nodes[i]], &[q.normals[i]]).unwrap() * q.weights[i]).collect();
    let z: f64 = dens.iter().sum();
    let mean: f64 = dens.iter().zip(&q.charts).map(|(d, c)| d * c[0]).sum::<f64>() / z;
    let var: f64 = dens.iter().zip(&q.charts).map(|(d, c)| d * (c[0] - mean).powi(2)).sum::<f64>() / z;
    let n = 4000;
    let ens = sample_rho(&psi, &f, 0.3, &vec![b], n, 21, &SamplingOptions::default()).unwrap();
    let x = ens.coordinate(0, 0);
    let m = x.iter().sum::<f64>() / n as f64;
    assert!((m - mean).abs() < 3.0 * (var / n as f64).sqrt(), "{m} {mean} {var}");
    for s in &ens.samples {
        assert!((f.leaf_of(&s[0]) - 0.3).abs() < 1e-12);
    }
}

#[test]
fn sample_mean_matches_quadrature_flat() {
    sample_mean_check(FoliationKind::Flat);
}

#[test]
fn sample_mean_matches_quadrature_boosted() {
    sample_mean_check(FoliationKind::Boosted { rapidity: 0.4 });
}

#[test]
fn sample_mean_matches_quadrature_tanh() {
    sample_mean_check(FoliationKind::Tanh { amplitude: 0.6, scale: 1.2 });
}

fn conditional_cfg(n: usize, seed: u64) -> ConditionalConfig {
    ConditionalConfig {
        s: 0.0,
        n,
        seed,
        box_: vec![vec![(-9.0, 9.0)], vec![(-9.0, 9.0)]],
        cells: 8,
        bins: 12,
        quad_nodes: 96,
        min_count: 50,
        alpha: 0.01,
    }
}

fn entangled() -> MultiTimeWaveFunction {
    let g = build_gammas(2).unwrap();
    MultiTimeWaveFunction::from_terms(
        &g,
        vec![
            (C64::from(1.0), vec![wave(-2.0, 0.0), wave(-1.5, 0.0)]),
            (C64::from(1.0), vec![wave(2.0, 0.0), wave(1.5, 0.0)]),
        ],
    )
    .unwrap()
}

/// Three independent repeats at α = 0.01; at least two must pass.
fn majority_passes(psi: &MultiTimeWaveFunction, f: &hbd_core::foliation::Foliation, seed: u64) -> bool {
    let passes = (0..3)
        .filter(|r| {
            let rep = conditional_statistics_experiment(psi, f, &conditional_cfg(8000, seed + 1000 * r)).unwrap();
            assert_eq!(rep.cells.len(), 8);
            rep.pass
        })
        .count();
    passes >= 2
}

#[test]
fn conditional_statistics_product_state() {
    let g = build_gammas(2).unwrap();
    let psi = MultiTimeWaveFunction::product(&g, vec![wave(-0.5, 0.3), wave(1.0, -0.2)]).unwrap();
    let f = make_foliation(2, FoliationKind::Flat, (0.0, 1.0)).unwrap();
    assert!(majority_passes(&psi, &f, 4));
}

#[test]
fn conditional_statistics_entangled_state() {
    let psi = entangled();
    let f = make_foliation(2, FoliationKind::Tanh { amplitude: 0.4, scale: 1.0 }, (-1.0, 1.0)).unwrap();
    assert!(majority_passes(&psi, &f, 5));
    let r = conditional_statistics_experiment(&psi, &f, &conditional_cfg(8000, 5)).unwrap();
    // equal-mass cells are ordered along the environment axis
    let first = &r.cells[0];
    let last = &r.cells[7];
    assert!(first.env_range.1 < last.env_range.0);
}

#[test]
fn conditional_ks_distance_scales_as_inverse_root_n() {
    let psi = entangled();
    let f = make_foliation(2, FoliationKind::Flat, (0.0, 1.0)).unwrap();
    let mean = |n: usize| -> f64 {
        (0..3).map(|r| conditional_statistics_experiment(&psi, &f, &conditional_cfg(n, 100 + r)).unwrap().mean_ks).sum::<f64>()
            / 3.0
    };
    let ratio = mean(2000) / mean(8000);
    assert!((1.4..2.9).contains(&ratio), "{ratio}");
}

#[test]
fn too_few_samples_per_cell_is_reported() {
    let psi = entangled();
    let f = make_foliation(2, FoliationKind::Flat, (0.0, 1.0)).unwrap();
    let err = conditional_statistics_experiment(&psi, &f, &conditional_cfg(200, 1)).unwrap_err();
    assert!(matches!(err, hbd_core::Error::InsufficientCounts(_)));
}

fn effective_wave_at(psi: &MultiTimeWaveFunction, x2: f64) -> hbd_core::subsystem::EffectiveWaveReport {
    let f = make_foliation(2, FoliationKind::Flat, (0.0, 1.0)).unwrap();
    let q = f.leaf_quadrature(0.0, &[(-15.0, 15.0)], 64).unwrap();
    let grid = SubsystemGrid::from_quadratures(&[q.clone()]).unwrap();
    let env = SubsystemGrid::from_quadratures(&[q]).unwrap();
    let p = PointSet::on_leaf(&f, 0.0, vec![f.embed(0.0, &[x2])]).unwrap();
    extract_effective_wave(psi, 1, &grid, &env, &p, &EffectiveWaveOptions::default()).unwrap()
}

#[test]
fn effective_wave_selects_the_occupied_branch() {
    // heavier environment so its positive-energy tails, ~e^{-m d}, stay below the rank tolerance
    let g = build_gammas(2).unwrap();
    let heavy = |c: f64| GaussianComb { mass: 3.0, ..comb(c, 0.0, UP) }.build(&g).unwrap();
    let a = wave(-1.0, 0.5);
    let b = comb(1.5, -0.2, [[0.3, 0.0], [1.0, 0.0]]).build(&g).unwrap();
    let psi = MultiTimeWaveFunction::from_terms(
        &g,
        vec![(C64::from(1.0), vec![a.clone(), heavy(-6.0)]), (C64::new(0.6, 0.3), vec![b.clone(), heavy(6.0)])],
    )
    .unwrap();
    let f = make_foliation(2, FoliationKind::Flat, (0.0, 1.0)).unwrap();
    let grid = SubsystemGrid::from_quadratures(&[f.leaf_quadrature(0.0, &[(-15.0, 15.0)], 64).unwrap()]).unwrap();
    for (x2, factor) in [(-6.0, &a), (6.0, &b)] {
        let r = effective_wave_at(&psi, x2);
        let wave = r.wave.as_ref().expect("branches are disjoint");
        let phi: Vec<CVector> = grid.nodes.iter().map(|n| CVector::from_vec(factor.evaluate(&n.set.points[0]))).collect();
        assert!(wave.fidelity(&phi) > 1.0 - 1e-6, "{x2}: {}", wave.fidelity(&phi));
    }
}

#[test]
fn effective_wave_absent_for_overlapping_branches() {
    let g = build_gammas(2).unwrap();
    let psi = MultiTimeWaveFunction::from_terms(
        &g,
        vec![
            (C64::from(1.0), vec![wave(-3.0, 0.3), wave(2.0, 0.0)]),
            (C64::from(1.0), vec![wave(3.0, -0.3), wave(2.0, 0.8)]),
        ],
    )
    .unwrap();
    let r = effective_wave_at(&psi, 2.0);
    assert!(r.wave.is_none());
    assert!(r.singular_ratio > 1e-3);
}
