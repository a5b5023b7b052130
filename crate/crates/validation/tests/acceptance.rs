//! Acceptance criteria.  Each test prints one `criterion N: PASS|FAIL` line
//! with the measured quantities, then asserts the verdict.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qlin::goals::{check_bae, find_dfs, find_qnd, transfer_vanishes, witnesses_confirmed_by_transfer, Goal, Tolerances};
use qlin::interconnect::{cf_type1, cf_type2, direct_mf, direct_mf_circuit, QuantumController};
use qlin::nogo::{verify_nogo, Scheme};
use qlin::scenarios::*;
use qlin::structural::{classical_subsystem, markov_parameters, Subspace};
use qlin::xfer::{logspace, sql_curve, TransferFunction};
use qlin::random::{random_system, PLANTED};
use qlin::{StateSpaceModel, SymplecticForm};
use qlin_validation::{report, strain_noise};

fn tol() -> Tolerances {
    Tolerances::default()
}

fn xi(model: &StateSpaceModel, input: &str, output: &str, s: Complex64) -> Complex64 {
    TransferFunction::new(model, &[input], &[output]).unwrap().evaluate(s).unwrap()[(0, 0)]
}

fn optomech_loop() -> StateSpaceModel {
    let (m, w, k, g) = (1.0, 1.0, 1.0, 2.0);
    cf_type1(&optomech_full(m, w, k, g).unwrap(), &optomech_bae_controller(m, w, k, g).unwrap())
        .unwrap()
        .to_state_space()
        .unwrap()
}

#[test]
fn criterion_01_coherent_bae_on_optomechanics() {
    let t0 = Instant::now();
    let model = optomech_loop();
    let bae = check_bae(&model, &["P"], "y", &tol()).unwrap();
    let shot_terms = markov_parameters(&model, &["W1.Q"], &["y"], Some(6)).unwrap();
    let worst_q = shot_terms.iter().map(|t| t.amax()).fold(0.0_f64, f64::max);
    let one = Complex64::new(1.0, 0.0);
    let field = xi(&model, "W1.P", "y", one);
    let force = xi(&model, "F", "y", one);
    let elapsed = t0.elapsed().as_secs_f64();
    let structural = bae.achieved && bae.method_agreement && worst_q < 1e-10 && elapsed < 1.0;
    let value_ok = (field - Complex64::new(1.0 / 3.0, 0.0)).norm() <= 1e-9;
    let detail = format!(
        "BAE achieved={} (scaled residual {:.1e}), max|Markov W1.Q→y|={worst_q:.1e}, \
         Ξ_P1→y[1]={:.12} (target 1/3), Ξ_F→y[1]={:.12}, {elapsed:.3}s. {}",
        bae.achieved,
        bae.scaled_residual,
        field.re,
        force.re,
        if value_ok {
            String::new()
        } else {
            "Analysis: the reference closed form assigns √(2γ)κ/m/((s+γ)(s²+ω²)) to P̂₁ and (s−γ)/(s+γ) to F̂, \
             but the loop's output equation y = c_y·x + P̂₁ has unit feedthrough from P̂₁ and none from F̂, \
             so Ξ_P1→y must tend to 1 as |s|→∞ and Ξ_F→y must be strictly proper. \
             The realization reproduces both displayed terms exactly with their labels exchanged \
             (Ξ_P1→y = (s−γ)/(s+γ) = −1/3 at s=1, Ξ_F→y = 1/3); the value 1/3 belongs to the force channel."
                .to_string()
        }
    );
    report(1, structural && value_ok, &detail);
}

#[test]
fn criterion_02_classical_qnd_pair_on_optomechanics() {
    let (m, w, k) = (1.0_f64, 1.0_f64, 1.0_f64);
    let g = k / (m * w).sqrt();
    let model = optomech_loop();
    let v = find_qnd(&model, &["W"], "y", None, &tol()).unwrap();
    let expected = Subspace::span(&DMatrix::from_row_slice(
        6,
        2,
        &[0.0, g * w, -g, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, k / m, k, 0.0],
    ));
    let got = v.witness_subspace(6);
    let angle = if got.rank() == 2 { got.max_angle(&expected) } else { f64::INFINITY };
    let classical = classical_subsystem(&model, &got, &SymplecticForm::new(3)).unwrap();
    report(
        2,
        v.geometric_dim == 2 && angle < 1e-8 && classical && v.method_agreement,
        &format!("dim={} max principal angle={angle:.1e} classical={classical}", v.geometric_dim),
    );
}

#[test]
fn criterion_03_coherent_bae_on_interferometer() {
    let p = MichelsonParams { m: 1.0, omega: 0.01, lambda: 1.0, length: 1.0 };
    let cl = cf_type2(&michelson(&p).unwrap(), &michelson_cf_controller(&p).unwrap()).unwrap();
    let model = cl.to_state_space().unwrap();
    let out = format!("{}.out", cl.channels()[0].label);
    let terms = markov_parameters(&model, &["F"], &[&out], Some(4 * model.state_dim())).unwrap();
    let worst_f = terms.iter().map(|t| t[(0, 0)].abs()).fold(0.0_f64, f64::max);
    let bae = check_bae(&model, &["P"], "y", &tol()).unwrap();
    let soft = MichelsonParams { omega: 1e-4, ..p };
    let (eps, _) = michelson_cf_params(&soft).unwrap();
    let lim = (soft.lambda / soft.m).sqrt();
    let pass = worst_f < 1e-10 && bae.achieved && bae.residual < 1e-9 && (eps - lim).abs() < 1e-4;
    report(
        3,
        pass,
        &format!(
            "max|Markov F→Q_out|={worst_f:.1e}, BAE residual={:.1e}, ε(ω=1e-4)={eps:.8} vs √(λ/m)={lim}",
            bae.residual
        ),
    );
}

fn criterion4_grid() -> (MichelsonParams, Vec<f64>) {
    let p = MichelsonParams::default();
    (p, logspace(10.0 * p.omega, 1000.0 * p.omega, 50))
}

#[test]
fn criterion_04_sql_reproduction() {
    let (p, omegas) = criterion4_grid();
    let lambdas = logspace(1e-2, 1e2, 200);
    let sql = sql_curve(p.m, p.length, &omegas).unwrap();
    let systems: Vec<_> = lambdas.iter().map(|&l| michelson(&MichelsonParams { lambda: l, ..p }).unwrap()).collect();
    let mut worst: f64 = 0.0;
    let mut failing = Vec::new();
    for (i, &w) in omegas.iter().enumerate() {
        let best = systems
            .iter()
            .zip(&lambdas)
            .map(|(s, &l)| strain_noise(s, l, &p, w, None))
            .fold(f64::INFINITY, f64::min);
        let dev = (best / sql.values[i] - 1.0).abs();
        worst = worst.max(dev);
        if dev > 0.01 {
            failing.push((w, dev));
        }
    }
    // diagnostic: the same minimization over a λ range wide enough to
    // contain every optimum, and the oscillator's own excess Ω²/(Ω²−ω²)
    let wide: Vec<f64> = logspace(1e-4, 1e2, 400);
    let (wide_dev, wide_at) = omegas
        .iter()
        .zip(&sql.values)
        .map(|(&w, &s)| {
            let best = wide
                .iter()
                .map(|&l| strain_noise(&michelson(&MichelsonParams { lambda: l, ..p }).unwrap(), l, &p, w, None))
                .fold(f64::INFINITY, f64::min);
            ((best / s - 1.0).abs(), w)
        })
        .fold((0.0_f64, 0.0), |a, b| if b.0 > a.0 { b } else { a });
    let resonance = wide_at * wide_at / (wide_at * wide_at - p.omega * p.omega) - 1.0;
    let mut detail = format!(
        "{}/{} frequencies within 1% (worst deviation {:.2}%); with λ∈[1e-4,1e2] worst deviation {:.3}% at Ω={wide_at:.4} \
         where Ω²/(Ω²−ω²)−1 = {:.3}%",
        omegas.len() - failing.len(),
        omegas.len(),
        100.0 * worst,
        100.0 * wide_dev,
        100.0 * resonance
    );
    if !failing.is_empty() {
        let (lo, hi) = (failing.first().unwrap().0, failing.last().unwrap().0);
        detail += &format!(
            ". Analysis: the failures are the {} lowest frequencies Ω∈[{lo:.4}, {hi:.4}]. There the optimal power \
             λ*=mΩ²/2 lies below the smallest grid value λ=0.01 (λ* < 0.01 ⇔ Ω < √(0.02/m) ≈ 0.1414), so the \
             grid minimum sits on its lower edge and S/S_SQL ≈ (λ/λ* + λ*/λ)/2 = 1.25 at Ω=0.1. \
             With the λ range widened, the residual excess at the lowest frequency is the mirror resonance \
             factor Ω²/(Ω²−ω²) (≈1.0101 at Ω=10ω), which the free-mass SQL formula omits, so the 1% tolerance \
             is also marginal there. Both effects come from the prescribed grids, not from the noise model",
            failing.len()
        );
    }
    report(4, failing.is_empty(), &detail);
}

#[test]
fn criterion_05_sub_sql_with_squeezing() {
    let (p, omegas) = criterion4_grid();
    let sql = sql_curve(p.m, p.length, &omegas).unwrap();
    let mut worst_ratio: f64 = 0.0;
    for (i, &w) in omegas.iter().enumerate() {
        let l = p.m * w * w / 2.0;
        let pp = MichelsonParams { lambda: l, ..p };
        let cl = cf_type2(&michelson(&pp).unwrap(), &michelson_cf_controller(&pp).unwrap()).unwrap();
        let s = strain_noise(&cl, l, &pp, w, Some(1.0));
        worst_ratio = worst_ratio.max(s / sql.values[i]);
    }
    report(
        5,
        worst_ratio < 1.0,
        &format!("max S/S_SQL over 50 frequencies = {worst_ratio:.6} (e⁻² = {:.6})", (-2.0_f64).exp()),
    );
}

#[test]
fn criterion_06_dfs_constructions() {
    let mem = lambda_memory(1.0, 1.0, 0.5, 0.0).unwrap().to_state_space().unwrap();
    let a = find_dfs(&mem, &["W"], &["Wout"], None, &tol()).unwrap();
    let cav = two_port_cavity(1.0, 1.0).unwrap();
    let half = cav.c() * 0.5;
    let cl = cf_type1(&cav, &QuantumController::type1(cav.g().clone(), half.clone(), half).unwrap()).unwrap();
    let b = find_dfs(&cl.to_state_space().unwrap(), &["W"], &["Wout"], None, &tol()).unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mirrored = Subspace::span(&DMatrix::from_row_slice(4, 2, &[h, 0.0, 0.0, h, -h, 0.0, 0.0, -h]));
    let angle = if b.geometric_dim == 2 { b.witness_subspace(4).max_angle(&mirrored) } else { f64::INFINITY };
    report(
        6,
        a.geometric_dim == 2 && a.method_agreement && b.geometric_dim == 2 && b.method_agreement && angle < 1e-8,
        &format!("memory DFS dim={}; mirrored cavity DFS dim={} angle to [v;−v]/√2 = {angle:.1e}", a.geometric_dim, b.geometric_dim),
    );
}

#[test]
fn criterion_07_atomic_ensemble_qnd() {
    let model = atomic_ensemble_linear(1.0).unwrap().to_state_space().unwrap();
    let v = find_qnd(&model, &["W"], "y", None, &tol()).unwrap();
    report(7, v.witnesses == vec![vec![0.0, 1.0]] && v.method_agreement, &format!("witnesses {:?}", v.witnesses));
}

#[test]
fn criterion_08_nogo_suite() {
    let t0 = Instant::now();
    let reduced = optomech_reduced(1.0, 1.0, 1.0).unwrap();
    let mich = michelson(&MichelsonParams::default()).unwrap();
    let mut lines = Vec::new();
    let mut ok = true;
    for (plant, scheme) in [(&reduced, Scheme::Mf1), (&mich, Scheme::Mf2)] {
        for goal in [Goal::Bae, Goal::Qnd, Goal::Dfs] {
            let r = verify_nogo(plant, goal, scheme, 500, 2024, &tol()).unwrap();
            ok &= r.violations == 0 && r.disagreements == 0;
            lines.push(format!(
                "{}×{goal}×{scheme}: violations={} evaluated={} skipped={} gap={:.2e}",
                r.plant_id,
                r.violations,
                r.trials - r.skipped,
                r.skipped,
                r.worst_residual_gap
            ));
        }
    }
    let elapsed = t0.elapsed().as_secs_f64();
    report(8, ok && elapsed < 60.0, &format!("{} ({elapsed:.1}s)", lines.join("; ")));
}

#[test]
fn criterion_09_direct_measurement_feedback() {
    let ideal = direct_mf(1.0, 0.0).unwrap();
    let v = find_qnd(&ideal, &["W"], "y", None, &tol()).unwrap();
    let circuit = direct_mf_circuit(1.0, 1.0).unwrap();
    let gain = xi(&circuit, "y", "u", Complex64::new(0.0, 1.0)).norm_sqr();
    let lag = direct_mf(1.0, 1.0).unwrap();
    let dc = xi(&lag, "Q", "q", Complex64::new(0.0, 0.0));
    let pass = v.witnesses == vec![vec![1.0, 0.0]] && (gain - 0.5).abs() <= 1e-12 && (dc - Complex64::new(-0.5, 0.0)).norm() <= 1e-12;
    report(9, pass, &format!("τ=0 witnesses {:?}; |Ξ_y→u[i]|²={gain:.15}; Ξ_Q→q[0]={:.15}", v.witnesses, dc.re));
}

#[test]
fn criterion_10_verdict_routes_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut disagreements = Vec::new();
    let mut found = [0usize; 3];
    for case in 0..500 {
        let n = rng.random_range(1..=4);
        let m = rng.random_range(1..=3);
        let sys = random_system(&mut rng, n, m, PLANTED[case % PLANTED.len()]);
        let model = sys.to_state_space().unwrap();
        let bae = check_bae(&model, &["P"], "y", &tol()).unwrap();
        let b = model.input_matrix(&["P"]).unwrap();
        let c = model.output_matrix(&["y"]).unwrap();
        let probe_bae = transfer_vanishes(model.a(), &b, &c, &tol()).unwrap();
        let qnd = find_qnd(&model, &["W"], "y", None, &tol()).unwrap();
        let dfs = find_dfs(&model, &["W"], &["Wout"], None, &tol()).unwrap();
        let probe_qnd = witnesses_confirmed_by_transfer(&model, &qnd, &["W"], &["y"], &tol()).unwrap();
        let probe_dfs = witnesses_confirmed_by_transfer(&model, &dfs, &["W"], &["Wout"], &tol()).unwrap();
        for (i, v) in [&bae, &qnd, &dfs].iter().enumerate() {
            found[i] += v.achieved as usize;
        }
        let ok = bae.method_agreement
            && bae.achieved == probe_bae
            && qnd.method_agreement
            && probe_qnd
            && dfs.method_agreement
            && probe_dfs;
        if !ok {
            disagreements.push(case);
        }
    }
    report(
        10,
        disagreements.is_empty(),
        &format!(
            "500 systems: routes agree in {} (BAE/QND/DFS achieved in {}/{}/{}); disagreeing cases {:?}",
            500 - disagreements.len(),
            found[0],
            found[1],
            found[2],
            disagreements
        ),
    );
}
