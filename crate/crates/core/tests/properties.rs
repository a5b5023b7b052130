//! Randomized invariants of the model, geometry, verdict and interconnection
//! layers.

use qlin::random::{random_orthogonal_symplectic, random_symplectic, random_system, Planted, PLANTED};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use qlin::goals::{check_bae, find_dfs, find_qnd, Tolerances};
use qlin::interconnect::{cf_type1, cf_type2, mf_type1, mf_type2, ClassicalController, QuantumController};
use qlin::io::{model_to_json, parse_model, parse_system, system_to_json, ModelDoc};
use qlin::linalg::{max_abs, norm2, rank, sigma, RankTol};
use qlin::nogo::{sample_classical_controller, verify_nogo, Scheme};
use qlin::scenarios::{by_name, catalog, michelson, optomech_bae_controller, optomech_full, optomech_reduced, MichelsonParams};
use qlin::statespace::Builder;
use qlin::structural::{
    controllability_matrix, controllable_subspace, intersect, kalman_decompose, kernel, markov_parameters, range,
    DecompositionKind, Subspace,
};
use qlin::xfer::{noise_power, vacuum, vacuum_partition, NoiseModel, TransferFunction};
use qlin::{
    augment_with_vacuum, complex_to_quadrature, homodyne_split, quadrature_to_complex, MeasurementSplit, Quadrature,
    QuantumLinearSystem, StateSpaceModel,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal))
}

fn system(seed: u64, n: usize, m: usize, kind: usize) -> QuantumLinearSystem {
    random_system(&mut rng(seed), n, m, PLANTED[kind % PLANTED.len()])
}

fn tol() -> Tolerances {
    Tolerances::default()
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 64, ..ProptestConfig::default() }
}

fn rel(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    max_abs(&(a - b)) / (1.0 + max_abs(a).max(max_abs(b)))
}

proptest! {
    #![proptest_config(config())]

    // ---------------------------------------------------------------- model

    #[test]
    fn random_systems_are_realizable(seed in any::<u64>(), n in 1usize..=4, m in 0usize..=3, kind in 0usize..4) {
        let s = system(seed, n, m, kind);
        let scale = 1.0 + max_abs(&s.drift()) + max_abs(s.c()).powi(2);
        prop_assert!(s.realizability_residual() <= 1e-12 * scale);
        // the noise input is fixed by the coupling
        let b = sigma(n) * s.c().transpose() * sigma(m);
        prop_assert_eq!(s.noise_input(), b);
    }

    #[test]
    fn homodyne_splits_satisfy_split_identities(angles in prop::collection::vec(-3.2f64..3.2, 1..=5)) {
        let sel: Vec<_> = angles.iter().map(|&t| Quadrature::Angle(t)).collect();
        let split = homodyne_split(&sel);
        let m = angles.len() as f64;
        for r in split.identity_residuals() {
            prop_assert!(r <= 1e-12 * m);
        }
    }

    #[test]
    fn random_splits_satisfy_split_identities(seed in any::<u64>(), m in 1usize..=5) {
        let split = MeasurementSplit::random(&mut rng(seed), m);
        for r in split.identity_residuals() {
            prop_assert!(r <= 1e-12 * m as f64);
        }
    }

    #[test]
    fn vacuum_augmentation_preserves_drift(seed in any::<u64>(), n in 1usize..=4, m in 0usize..=3, extra in 0usize..=3) {
        let s = system(seed, n, m, 0);
        let aug = augment_with_vacuum(&s, extra);
        prop_assert_eq!(aug.drift(), s.drift());
        prop_assert_eq!(aug.channel_count(), m + extra);
    }

    #[test]
    fn complex_form_round_trips(seed in any::<u64>(), n in 1usize..=3, m in 0usize..=3) {
        let mut r = rng(seed);
        let mut cx = |rows: usize, cols: usize| DMatrix::from_fn(rows, cols, |_, _| {
            Complex64::new(r.sample(StandardNormal), r.sample(StandardNormal))
        });
        let l = cx(m, n);
        let couplings: Vec<DVector<Complex64>> = (0..m).map(|j| l.row(j).transpose().into_owned()).collect();
        // passive drift: A = −iH − L†L/2 with Hermitian H
        let h = cx(n, n);
        let h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        let drift = h * Complex64::new(0.0, -1.0) - l.adjoint() * &l * Complex64::new(0.5, 0.0);
        let sys = complex_to_quadrature(&drift, &couplings).unwrap();
        let (d2, c2) = quadrature_to_complex(&sys).unwrap();
        prop_assert!((&d2 - &drift).iter().all(|z| z.norm() <= 1e-12 * (1.0 + n as f64)));
        for (a, b) in c2.iter().zip(&couplings) {
            prop_assert!((a - b).iter().all(|z| z.norm() <= 1e-12));
        }
    }

    // ----------------------------------------------------------- structural

    #[test]
    fn controllability_rank_is_similarity_invariant(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3, kind in 0usize..4) {
        let model = system(seed, n, m, kind).to_state_space().unwrap();
        let mut r = rng(seed ^ 1);
        let t = gauss(&mut r, 2 * n, 2 * n) + DMatrix::identity(2 * n, 2 * n) * 3.0;
        let tm = model.similarity(&t).unwrap();
        let r0 = rank(&controllability_matrix(&model, "W").unwrap(), RankTol::Machine);
        let r1 = controllable_subspace(&tm, &["W"]).unwrap().rank();
        prop_assert_eq!(r0, controllable_subspace(&model, &["W"]).unwrap().rank());
        prop_assert_eq!(r0, r1);
    }

    #[test]
    fn markov_parameters_are_similarity_invariant(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3) {
        let model = system(seed, n, m, 0).to_state_space().unwrap();
        let mut r = rng(seed ^ 2);
        let t = gauss(&mut r, 2 * n, 2 * n) + DMatrix::identity(2 * n, 2 * n) * 4.0;
        let tm = model.similarity(&t).unwrap();
        let a = markov_parameters(&model, &["W"], &["Wout"], None).unwrap();
        let b = markov_parameters(&tm, &["W"], &["Wout"], None).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!(rel(x, y) <= 1e-10, "{}", rel(x, y));
        }
    }

    #[test]
    fn controllability_kernel_and_range_are_complementary(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3, kind in 0usize..4) {
        let model = system(seed, n, m, kind).to_state_space().unwrap();
        let c = controllability_matrix(&model, "W").unwrap();
        prop_assert_eq!(kernel(&c.transpose()).rank() + range(&c).rank(), 2 * n);
    }

    #[test]
    fn kalman_blocks_vanish(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3, kind in 0usize..4) {
        let model = system(seed, n, m, kind).to_state_space().unwrap();
        let an = norm2(model.a()).max(1.0);
        let kc = kalman_decompose(&model, "W", DecompositionKind::Controllable).unwrap();
        prop_assert!(kc.zero_block_residual("W").unwrap() <= 1e-10 * an);
        let ko = kalman_decompose(&model, "Wout", DecompositionKind::Observable).unwrap();
        prop_assert!(ko.zero_block_residual("Wout").unwrap() <= 1e-10 * an);
    }

    #[test]
    fn intersection_is_commutative_and_monotone(seed in any::<u64>(), d in 1usize..=6, ka in 0usize..=6, kb in 0usize..=6) {
        let mut r = rng(seed);
        let a = Subspace::span(&gauss(&mut r, d, ka.min(d)));
        let b = Subspace::span(&gauss(&mut r, d, kb.min(d)));
        let ab = intersect(&a, &b).unwrap();
        let ba = intersect(&b, &a).unwrap();
        prop_assert_eq!(ab.rank(), ba.rank());
        prop_assert!(ab.rank() <= a.rank().min(b.rank()));
        if !ab.is_empty() {
            prop_assert!(ab.max_angle(&ba) <= 1e-8);
        }
    }

    // ---------------------------------------------------------------- goals

    #[test]
    fn bae_verdict_survives_detector_remixing(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3, kind in 0usize..4) {
        let model = system(seed, n, m, kind).to_state_space().unwrap();
        let mut r = rng(seed ^ 3);
        let q = gauss(&mut r, m, m).qr().q();
        let b_p = model.input_matrix(&["P"]).unwrap();
        let remixed = Builder::new(model.a().clone())
            .input("P", &b_p * q.transpose())
            .output("y", model.output_matrix(&["y"]).unwrap())
            .build()
            .unwrap();
        let v0 = check_bae(&model, &["P"], "y", &tol()).unwrap();
        let v1 = check_bae(&remixed, &["P"], "y", &tol()).unwrap();
        prop_assert_eq!(v0.achieved, v1.achieved);
    }

    #[test]
    fn qnd_witnesses_follow_symplectic_coordinates(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3, kind in 0usize..4) {
        let model = system(seed, n, m, kind).to_state_space().unwrap();
        let t = random_symplectic(&mut rng(seed ^ 4), n, 0.3);
        let tm = model.similarity(&t).unwrap();
        let v0 = find_qnd(&model, &["W"], "y", None, &tol()).unwrap();
        let v1 = find_qnd(&tm, &["W"], "y", None, &tol()).unwrap();
        prop_assert_eq!(v0.geometric_dim, v1.geometric_dim);
        if v0.achieved {
            // a QND variable vᵀx reads (Tᵀv)ᵀx′ in the new coordinates
            let moved = Subspace::span(&(t.transpose() * v0.witness_subspace(2 * n).basis()));
            prop_assert!(moved.max_angle(&v1.witness_subspace(2 * n)) <= 1e-8);
        }
    }

    // DFS mixes uncontrollable covectors (moved by Tᵀ) with unobservable
    // vectors (moved by T⁻¹), so only orthogonal changes of coordinates carry
    // the subspace along.
    #[test]
    fn dfs_witnesses_follow_passive_coordinates(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3, kind in 0usize..4) {
        let model = system(seed, n, m, kind).to_state_space().unwrap();
        let t = random_orthogonal_symplectic(&mut rng(seed ^ 5), n);
        prop_assert!(max_abs(&(t.transpose() * &t - DMatrix::identity(2 * n, 2 * n))) < 1e-10);
        let tm = model.similarity(&t).unwrap();
        let v0 = find_dfs(&model, &["W"], &["Wout"], None, &tol()).unwrap();
        let v1 = find_dfs(&tm, &["W"], &["Wout"], None, &tol()).unwrap();
        prop_assert_eq!(v0.geometric_dim, v1.geometric_dim);
        if v0.achieved {
            let moved = Subspace::span(&(t.transpose() * v0.witness_subspace(2 * n).basis()));
            prop_assert!(moved.max_angle(&v1.witness_subspace(2 * n)) <= 1e-8);
        }
    }

    #[test]
    fn dfs_lies_inside_noise_free_directions_and_is_invariant(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3, kind in 0usize..4) {
        let model = system(seed, n, m, kind).to_state_space().unwrap();
        let dfs = find_dfs(&model, &["W"], &["Wout"], None, &tol()).unwrap();
        prop_assert!(dfs.method_agreement);
        let v = dfs.witness_subspace(2 * n);
        let unctrl = qlin::structural::complement(&controllable_subspace(&model, &["W"]).unwrap());
        for w in dfs.witness_vectors() {
            prop_assert!(unctrl.residual(&w) <= 1e-8);
            prop_assert!(v.residual(&(model.a() * &w)) <= 1e-10 * norm2(model.a()).max(1.0));
        }
    }

    #[test]
    fn verdict_routes_agree_on_random_systems(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3, kind in 0usize..4) {
        let model = system(seed, n, m, kind).to_state_space().unwrap();
        prop_assert!(check_bae(&model, &["P"], "y", &tol()).unwrap().method_agreement);
        prop_assert!(find_qnd(&model, &["W"], "y", None, &tol()).unwrap().method_agreement);
        prop_assert!(find_dfs(&model, &["W"], &["Wout"], None, &tol()).unwrap().method_agreement);
    }

    // ------------------------------------------------------------- transfer

    #[test]
    fn transfer_matches_markov_series_far_out(seed in any::<u64>(), n in 1usize..=4, m in 1usize..=3, th in 0.0f64..6.28) {
        let model = system(seed, n, m, 0).to_state_space().unwrap();
        let an = norm2(model.a()).max(0.1);
        let s = Complex64::from_polar(10.0 * an, th);
        let tf = TransferFunction::new(&model, &["W"], &["Wout"]).unwrap();
        let got = tf.evaluate(s).unwrap();
        let b = model.input_matrix(&["W"]).unwrap();
        let c = model.output_matrix(&["Wout"]).unwrap();
        let mut series = model.feedthrough(&["Wout"], &["W"]).unwrap().map(|x| Complex64::new(x, 0.0));
        let mut cur = b;
        let mut sk = s;
        for _ in 0..40 {
            series += (&c * &cur).map(|x| Complex64::new(x, 0.0)) / sk;
            cur = model.a() * cur;
            sk *= s;
        }
        let scale = series.iter().fold(0.0_f64, |x, z| x.max(z.norm())).max(1e-300);
        let err = (&got - &series).iter().fold(0.0_f64, |x, z| x.max(z.norm()));
        prop_assert!(err <= 1e-8 * scale, "{err}");
    }

    #[test]
    fn noise_power_is_similarity_invariant(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3, w in 0.05f64..5.0) {
        let sys = system(seed, n, m, 0);
        let model = sys.to_state_space().unwrap();
        let mut r = rng(seed ^ 7);
        let t = gauss(&mut r, 2 * n, 2 * n) + DMatrix::identity(2 * n, 2 * n) * 4.0;
        let vars = vacuum_partition(&sys);
        let p0 = noise_power(&model, "y", &vars, w);
        let p1 = noise_power(&model.similarity(&t).unwrap(), "y", &vars, w);
        if let (Ok(p0), Ok(p1)) = (p0, p1) {
            prop_assert!((p0 - p1).abs() <= 1e-8 * p0.max(1e-12));
        }
    }

    #[test]
    fn back_action_is_silent_in_evading_loop(w in 0.01f64..20.0, m in 0.5f64..2.0, om in 0.5f64..2.0, k in 0.2f64..2.0, g in 0.5f64..3.0) {
        let cl = cf_type1(&optomech_full(m, om, k, g).unwrap(), &optomech_bae_controller(m, om, k, g).unwrap()).unwrap();
        let model = cl.to_state_space().unwrap();
        prop_assert!(check_bae(&model, &["P"], "y", &tol()).unwrap().achieved);
        let nm = NoiseModel::new(&model, "y", &vacuum(&["Q", "P"])).unwrap();
        prop_assert!(nm.port_power("P", w).unwrap() < 1e-16);
    }

    // -------------------------------------------------------- interconnect

    #[test]
    fn coherent_loops_are_realizable(seed in any::<u64>(), n in 1usize..=3, k in 1usize..=2) {
        let mut r = rng(seed);
        let plant = random_system(&mut r, n, 2, Planted::None);
        let gk = gauss(&mut r, 2 * k, 2 * k);
        let gk = (&gk + gk.transpose()) * 0.5;
        let q1 = QuantumController::type1(gk.clone(), gauss(&mut r, 4, 2 * k), gauss(&mut r, 4, 2 * k)).unwrap();
        let cl1 = cf_type1(&plant, &q1).unwrap();
        let scale = |s: &QuantumLinearSystem| 1.0 + max_abs(&s.drift()) + max_abs(s.c()).powi(2);
        prop_assert!(cl1.realizability_residual() <= 1e-12 * scale(&cl1));

        let plant2 = michelson(&MichelsonParams::default()).unwrap();
        let s_orth = random_orthogonal_symplectic(&mut r, 1);
        let q2 = QuantumController::type2(gk, gauss(&mut r, 2, 2 * k), s_orth).unwrap();
        let cl2 = cf_type2(&plant2, &q2).unwrap();
        prop_assert!(cl2.realizability_residual() <= 1e-12 * scale(&cl2));
    }

    #[test]
    fn mirrored_type1_couplings_hide_the_controller(seed in any::<u64>(), n in 1usize..=3, k in 1usize..=2) {
        let mut r = rng(seed);
        let plant = random_system(&mut r, n, 1, Planted::None);
        let c1 = gauss(&mut r, 2, 2 * k);
        let gk = DMatrix::identity(2 * k, 2 * k);
        let cl = cf_type1(&plant, &QuantumController::type1(gk, c1.clone(), -c1).unwrap()).unwrap();
        prop_assert_eq!(cl.c().columns(2 * n, 2 * k).amax(), 0.0);
    }

    #[test]
    fn zero_controllers_reproduce_the_plant(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3) {
        let plant = system(seed, n, m, 0);
        let pm = plant.to_state_space().unwrap();
        let split = plant.split();
        let l1 = mf_type1(&plant, &ClassicalController::zero(m, 2 * m), &split).unwrap();
        prop_assert_eq!(l1.a(), pm.a());
        prop_assert_eq!(l1.input_matrix(&["W"]).unwrap(), pm.input_matrix(&["W"]).unwrap());
        prop_assert_eq!(l1.output_matrix(&["y"]).unwrap(), pm.output_matrix(&["y"]).unwrap());
        // input width equals the free field width
        prop_assert_eq!(l1.input_matrix(&["W"]).unwrap().ncols(), 2 * m);
    }

    #[test]
    fn type2_zero_controller_reproduces_the_plant(seed in any::<u64>()) {
        let _ = seed;
        let plant = michelson(&MichelsonParams::default()).unwrap();
        let pm = plant.to_state_space().unwrap();
        let fb = homodyne_split(&[Quadrature::P]);
        let ev = homodyne_split(&[Quadrature::P]);
        let l2 = mf_type2(&plant, &ClassicalController::zero(1, 4), &fb, &ev).unwrap();
        prop_assert_eq!(l2.a(), pm.a());
        prop_assert_eq!(l2.input_matrix(&["W"]).unwrap(), pm.input_matrix(&["W"]).unwrap());
        prop_assert_eq!(l2.input_matrix(&["W"]).unwrap().ncols(), 4);
    }

    #[test]
    fn random_mf_loops_keep_port_widths(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3) {
        let mut r = rng(seed);
        let plant = random_system(&mut r, n, m, Planted::None);
        let ctrl = sample_classical_controller(&mut r, m, 2 * m, 0..=3);
        let l = mf_type1(&plant, &ctrl, &MeasurementSplit::random(&mut r, m)).unwrap();
        prop_assert_eq!(l.state_dim(), 2 * n + ctrl.dim());
        prop_assert_eq!(l.input_matrix(&["W"]).unwrap().ncols(), 2 * m);
        prop_assert!(ctrl.a.iter().all(|x| x.is_finite()));
        prop_assert!(qlin::linalg::eigenvalues(&ctrl.a).iter().all(|z| z.re <= -0.1 + 1e-9));
    }

    // ------------------------------------------------------------------- io

    #[test]
    fn system_json_round_trips(seed in any::<u64>(), n in 1usize..=4, m in 0usize..=3, kind in 0usize..4) {
        let s = system(seed, n, m, kind);
        let back = parse_system(&system_to_json(&s)).unwrap();
        prop_assert_eq!(back, s);
    }

    #[test]
    fn state_space_json_round_trips(seed in any::<u64>(), n in 1usize..=3, m in 1usize..=3) {
        let model: StateSpaceModel = system(seed, n, m, 0).to_state_space().unwrap();
        let ModelDoc::StateSpace(back) = parse_model(&model_to_json(&model)).unwrap() else {
            panic!("expected a state-space document");
        };
        prop_assert_eq!(back.a(), model.a());
        prop_assert_eq!(back.b(), model.b());
        prop_assert_eq!(back.c(), model.c());
        prop_assert_eq!(back.d(), model.d());
    }

    // ------------------------------------------------------------ scenarios

    #[test]
    fn scenario_catalog_is_reproducible(idx in 0usize..8) {
        let names = catalog();
        let name = names[idx % names.len()].0;
        let empty = Default::default();
        let a = by_name(name, &empty).unwrap();
        let b = by_name(name, &empty).unwrap();
        prop_assert_eq!(system_to_json(&a), system_to_json(&b));
    }

    #[test]
    fn nogo_is_deterministic(seed in any::<u64>()) {
        let plant = optomech_reduced(1.0, 1.0, 1.0).unwrap();
        let a = verify_nogo(&plant, qlin::goals::Goal::Dfs, Scheme::Mf1, 8, seed, &tol()).unwrap();
        let b = verify_nogo(&plant, qlin::goals::Goal::Dfs, Scheme::Mf1, 8, seed, &tol()).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.trials == 0 || a.worst_residual_gap > a.tolerance);
    }
}
