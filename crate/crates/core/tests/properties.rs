use hbd_core::clifford::{build_gammas, gamma_n, hermiticity_defect, kron, partial_trace_env, spinor_rep};
use hbd_core::foliation::{make_foliation, FoliationKind};
use hbd_core::spacetime::{FourVector, LorentzMatrix};
use hbd_core::stats::{chi_square, ks_two_sample};
use hbd_core::wavefunction::{relabel_points, relabel_spin_slots, EnergyBranch, GaussianComb, MultiTimeWaveFunction};
use hbd_core::{CMatrix, C64};
use proptest::prelude::*;

fn cmatrix(n: usize) -> impl Strategy<Value = CMatrix> {
    prop::collection::vec(-1.0f64..1.0, 2 * n * n)
        .prop_map(move |v| CMatrix::from_fn(n, n, |i, j| C64::new(v[2 * (i * n + j)], v[2 * (i * n + j) + 1])))
}

fn lorentz4() -> impl Strategy<Value = LorentzMatrix> {
    (-1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5, -1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0, -3.0f64..3.0).prop_map(
        |(a, b, c, x, y, z, th)| {
            let r = (x * x + y * y + z * z).sqrt();
            let rot = LorentzMatrix::rotation([x / r, y / r, z / r], th);
            LorentzMatrix::boost_along(4, 1, a)
                .compose(&LorentzMatrix::boost_along(4, 2, b))
                .compose(&rot)
                .compose(&LorentzMatrix::boost_along(4, 3, c))
        },
    )
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lorentz_matrices_preserve_metric(l in lorentz4()) {
        prop_assert!(l.metric_defect() < 1e-10);
        prop_assert!((l.determinant() - 1.0).abs() < 1e-9);
        prop_assert!(l.compose(&l.inverse()).max_abs_diff(&LorentzMatrix::identity(4)) < 1e-10);
    }

    #[test]
    fn spinor_rep_intertwines(l in lorentz4()) {
        let g = build_gammas(4).unwrap();
        let rep = spinor_rep(&g, &l).unwrap();
        let scale = l.max_abs_diff(&LorentzMatrix::identity(4)).max(1.0);
        prop_assert!(rep.intertwining_defect(&g) < 1e-11 * scale * scale);
    }

    #[test]
    fn partial_trace_is_linear_and_cyclic(a in cmatrix(8), b in cmatrix(2), c in cmatrix(8), z in -2.0f64..2.0) {
        let (sys, env) = (4, 2);
        let tr = |m: &CMatrix| partial_trace_env(m, sys, env).unwrap();
        let lin = tr(&(&a + &c * C64::from(z))) - (tr(&a) + tr(&c) * C64::from(z));
        prop_assert!(max_abs(&lin) < 1e-12);
        prop_assert!((tr(&a).trace() - a.trace()).norm() < 1e-12);
        let eb = kron(&CMatrix::identity(sys, sys), &b);
        prop_assert!(max_abs(&(tr(&(&eb * &a)) - tr(&(&a * &eb)))) < 1e-12);
        let h = &a + a.adjoint();
        prop_assert!(hermiticity_defect(&tr(&h)) < 1e-12);
    }

    #[test]
    fn gamma_n_is_positive(r1 in -2.0f64..2.0, r2 in -2.0f64..2.0) {
        let g = build_gammas(2).unwrap();
        let n = |r: f64| FourVector::new(&[r.cosh(), r.sinh()]).unwrap();
        let m = gamma_n(&g, &[n(r1), n(r2)]).unwrap();
        prop_assert!(hermiticity_defect(&m) < 1e-12);
        let eig = nalgebra::linalg::SymmetricEigen::new(m).eigenvalues;
        prop_assert!(eig.iter().all(|e| *e > 0.0));
    }

    #[test]
    fn leaves_are_spacelike_and_charts_roundtrip(a in -0.9f64..0.9, l in 0.5f64..2.0, s in 0.0f64..1.0, x in -5.0f64..5.0) {
        let f = make_foliation(2, FoliationKind::Tanh { amplitude: a * l, scale: l }, (0.0, 1.0)).unwrap();
        let p = f.embed(s, &[x]);
        prop_assert!((f.leaf_of(&p) - s).abs() < 1e-12);
        prop_assert!((f.chart(&p)[0] - x).abs() < 1e-12);
        let n = f.normal(&p);
        n.check_unit_future(1e-12).unwrap();
        prop_assert!(n.dot(&f.tangent(&[x], 0)).abs() < 1e-12);
    }

    #[test]
    fn boosted_leaves_are_spacelike(z in -1.0f64..1.0, s in 0.0f64..1.0, x in -5.0f64..5.0) {
        let f = make_foliation(2, FoliationKind::Boosted { rapidity: z }, (0.0, 1.0)).unwrap();
        let p = f.embed(s, &[x]);
        prop_assert!((f.leaf_of(&p) - s).abs() < 1e-12);
        f.normal(&p).check_unit_future(1e-12).unwrap();
    }

    #[test]
    fn ks_is_symmetric_and_bounded(a in prop::collection::vec(-1.0f64..1.0, 1..60), b in prop::collection::vec(-1.0f64..1.0, 1..60)) {
        let x = ks_two_sample(&a, &b).unwrap();
        let y = ks_two_sample(&b, &a).unwrap();
        prop_assert_eq!(x.statistic, y.statistic);
        prop_assert!((0.0..=1.0).contains(&x.statistic));
        prop_assert!((0.0..=1.0).contains(&x.p_value));
    }

    #[test]
    fn chi_square_p_is_probability(obs in prop::collection::vec(0u64..200, 3..12)) {
        let probs = vec![1.0; obs.len()];
        if let Ok(r) = chi_square(&obs, &probs) {
            prop_assert!((0.0..=1.0).contains(&r.p_value));
            prop_assert!(r.statistic >= 0.0);
        }
    }

    #[test]
    fn slot_relabeling_is_a_group_action(v in prop::collection::vec(-1.0f64..1.0, 8)) {
        let v: Vec<C64> = v.into_iter().map(C64::from).collect();
        let s = [1, 2, 0];
        let inv = [2, 0, 1];
        let back = relabel_spin_slots(&relabel_spin_slots(&v, &s, 2), &inv, 2);
        prop_assert_eq!(back, v);
        let pts = vec![10, 20, 30];
        prop_assert_eq!(relabel_points(&relabel_points(&pts, &s), &inv), pts);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn antisymmetrized_waves_change_sign_under_swap(x1 in -2.0f64..2.0, x2 in -2.0f64..2.0, t1 in -0.5f64..0.5) {
        let g = build_gammas(2).unwrap();
        let comb = |c: f64, k: f64| GaussianComb {
            mass: 1.0,
            center: c,
            mean_wavenumber: k,
            transverse: vec![],
            width: 1.0,
            period: 30.0,
            branch: EnergyBranch::Positive,
            seed: vec![[1.0, 0.0], [0.3, 0.1]],
            cutoff: 1e-7,
            rapidity: 0.0,
        }
        .build(&g)
        .unwrap();
        let psi = MultiTimeWaveFunction::product(&g, vec![comb(-1.0, 0.5), comb(1.0, -0.3)]).unwrap().antisymmetrize().unwrap();
        let p = FourVector::new(&[t1, x1]).unwrap();
        let q = FourVector::new(&[0.0, x2]).unwrap();
        let a = psi.evaluate(&[p, q]).unwrap();
        let b = psi.evaluate(&[q, p]).unwrap();
        let swapped = relabel_spin_slots(&b, &[1, 0], 2);
        for (u, w) in a.iter().zip(&swapped) {
            prop_assert!((u + w).norm() < 1e-12);
        }
    }
}
