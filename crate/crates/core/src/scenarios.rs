//! Ready-made example systems and hand-designed controllers.
//!
//! Every builder is a pure function of its parameters.  [`by_name`] exposes
//! them to the command line with `key=value` overrides.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::interconnect::{cf_type1, cf_type2, QuantumController};
use crate::model::{build_system, complex_to_quadrature, Channel, Quadrature, QuantumLinearSystem, Role};

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be strictly positive, got {v}")))
    }
}

fn non_negative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be ≥ 0, got {v}")))
    }
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Empty cavity driven through two mirrors with decay rates `κ₁`, `κ₂`.
pub fn two_port_cavity(kappa1: f64, kappa2: f64) -> Result<QuantumLinearSystem> {
    non_negative("κ₁", kappa1)?;
    non_negative("κ₂", kappa2)?;
    let mut c = DMatrix::zeros(4, 2);
    c.view_mut((0, 0), (2, 2)).fill_with_identity();
    c.view_mut((0, 0), (2, 2)).scale_mut((2.0 * kappa1).sqrt());
    c.view_mut((2, 0), (2, 2)).fill_with_identity();
    c.view_mut((2, 0), (2, 2)).scale_mut((2.0 * kappa2).sqrt());
    build_system(DMatrix::zeros(2, 2), c, crate::model::default_channels(2), None)?
        .with_mode_labels(labels(&["cavity"]))
}

/// Mechanical oscillator after eliminating a strongly damped cavity; the
/// probe field couples to position with strength `λ`, and `P` of the output
/// is measured.  Carries a force port on momentum.
pub fn optomech_reduced(m: f64, omega: f64, lambda: f64) -> Result<QuantumLinearSystem> {
    positive("m", m)?;
    non_negative("ω", omega)?;
    non_negative("λ", lambda)?;
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![m * omega * omega, 1.0 / m]));
    let c = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, lambda.sqrt(), 0.0]);
    build_system(g, c, vec![Channel::new("W1", Role::Feedback)], Some(DVector::from_vec(vec![0.0, 1.0])))?
        .with_mode_labels(labels(&["mirror"]))?
        .with_measurement(vec![Some(Quadrature::P)])
}

/// Mechanical oscillator `(q, p)` coupled with strength `κ` to a cavity mode
/// `(q_c, p_c)` that leaks at rate `γ`.
pub fn optomech_full(m: f64, omega: f64, kappa: f64, gamma: f64) -> Result<QuantumLinearSystem> {
    positive("m", m)?;
    non_negative("ω", omega)?;
    non_negative("κ", kappa)?;
    non_negative("γ", gamma)?;
    #[rustfmt::skip]
    let g = DMatrix::from_row_slice(4, 4, &[
        m * omega * omega, 0.0, -kappa, 0.0,
        0.0, 1.0 / m, 0.0, 0.0,
        -kappa, 0.0, 0.0, 0.0,
        0.0, 0.0, 0.0, 0.0,
    ]);
    let sg = (2.0 * gamma).sqrt();
    let c = DMatrix::from_row_slice(2, 4, &[0.0, 0.0, sg, 0.0, 0.0, 0.0, 0.0, sg]);
    build_system(g, c, vec![Channel::new("W1", Role::Feedback)], Some(DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0])))?
        .with_mode_labels(labels(&["mirror", "cavity"]))?
        .with_measurement(vec![Some(Quadrature::P)])
}

/// Parameters of the two-mirror interferometer.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MichelsonParams {
    pub m: f64,
    pub omega: f64,
    pub lambda: f64,
    pub length: f64,
}

impl Default for MichelsonParams {
    fn default() -> Self {
        Self { m: 1.0, omega: 0.01, lambda: 1.0, length: 1.0 }
    }
}

impl MichelsonParams {
    pub fn validate(&self) -> Result<()> {
        positive("m", self.m)?;
        positive("ω", self.omega)?;
        positive("λ", self.lambda)?;
        positive("L", self.length)
    }
}

/// Two suspended mirrors read out by two fields.  Channel `W1` (common
/// mode) is unmeasured and reserved for feedback; `W2` (differential mode)
/// is the evaluation channel with `P` measured.  The force pushes the
/// mirrors in opposite directions.
pub fn michelson(p: &MichelsonParams) -> Result<QuantumLinearSystem> {
    p.validate()?;
    let (m, w) = (p.m, p.omega);
    let g = DMatrix::from_diagonal(&DVector::from_vec(vec![m * w * w, 1.0 / m, m * w * w, 1.0 / m]));
    let sl = p.lambda.sqrt();
    #[rustfmt::skip]
    let c = DMatrix::from_row_slice(4, 4, &[
        0.0, 0.0, 0.0, 0.0,
        sl, 0.0, sl, 0.0,
        0.0, 0.0, 0.0, 0.0,
        sl, 0.0, -sl, 0.0,
    ]);
    let channels = vec![Channel::new("W1", Role::Feedback), Channel::new("W2", Role::Evaluation)];
    build_system(g, c, channels, Some(DVector::from_vec(vec![0.0, 1.0, 0.0, -1.0])))?
        .with_mode_labels(labels(&["mirror1", "mirror2"]))?
        .with_measurement(vec![None, Some(Quadrature::P)])
}

/// Linearized collective spin coupled to a probe through `p`; `Q` of the
/// output is measured.
pub fn atomic_ensemble_linear(mu: f64) -> Result<QuantumLinearSystem> {
    non_negative("μ", mu)?;
    let c = DMatrix::from_row_slice(2, 2, &[0.0, mu.sqrt(), 0.0, 0.0]);
    build_system(DMatrix::zeros(2, 2), c, vec![Channel::new("W1", Role::Evaluation)], None)?
        .with_mode_labels(labels(&["spin"]))?
        .with_measurement(vec![Some(Quadrature::Q)])
}

/// Three-level memory in the storage stage: a leaky cavity mode `a₁`
/// coupled with strength `coupling` to an excited spin wave `a₂` (detuning
/// `δ`), which would connect to the ground spin wave `a₃` through a control
/// field of Rabi frequency `rabi`.  Only `rabi = 0` is supported.
pub fn lambda_memory(kappa: f64, coupling: f64, delta: f64, rabi: f64) -> Result<QuantumLinearSystem> {
    non_negative("κ", kappa)?;
    if !coupling.is_finite() || !delta.is_finite() {
        return Err(Error::Domain("coupling and detuning must be finite".into()));
    }
    if rabi != 0.0 {
        return Err(Error::Domain(format!(
            "only the storage stage (rabi = 0) is linear time-invariant; got rabi = {rabi}"
        )));
    }
    let i = Complex64::i();
    let z = Complex64::new(0.0, 0.0);
    let w = Complex64::new(rabi, 0.0);
    #[rustfmt::skip]
    let drift = DMatrix::from_row_slice(3, 3, &[
        Complex64::new(-kappa, 0.0), i * coupling, z,
        i * coupling, -i * delta, i * w,
        z, i * w.conj(), z,
    ]);
    let ell = DVector::from_vec(vec![Complex64::new((2.0 * kappa).sqrt(), 0.0), z, z]);
    complex_to_quadrature(&drift, &[ell])?.with_mode_labels(labels(&["cavity", "excited", "ground"]))
}

/// Two-port controller oscillator that cancels back-action in
/// [`optomech_full`] under type-1 coherent feedback, with the gain
/// `g = κ/√(mω)`.
pub fn optomech_bae_controller(m: f64, omega: f64, kappa: f64, gamma: f64) -> Result<QuantumController> {
    positive("m", m)?;
    positive("ω", omega)?;
    optomech_bae_controller_with_gain(kappa / (m * omega).sqrt(), omega, gamma)
}

/// Same controller family with an arbitrary gain `g`.
pub fn optomech_bae_controller_with_gain(g: f64, omega: f64, gamma: f64) -> Result<QuantumController> {
    positive("γ", gamma)?;
    let k = g / (2.0 * gamma).sqrt();
    let shape = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
    QuantumController::type1(DMatrix::from_diagonal_element(2, 2, -omega), &shape * -k, &shape * k)
}

/// `(ε, α)` of the single-mode coherent controller that hides the force from
/// the common-mode output of [`michelson`].
pub fn michelson_cf_params(p: &MichelsonParams) -> Result<(f64, f64)> {
    p.validate()?;
    let (m, w, l) = (p.m, p.omega, p.lambda);
    let eps = 2f64.sqrt() * l / (m * (w * w + (w.powi(4) + 4.0 * l * l / (m * m)).sqrt()).sqrt());
    Ok((eps, -l / (m * eps)))
}

/// The type-2 coherent controller built from [`michelson_cf_params`].
pub fn michelson_cf_controller(p: &MichelsonParams) -> Result<QuantumController> {
    let (eps, alpha) = michelson_cf_params(p)?;
    QuantumController::type2(
        DMatrix::from_diagonal_element(2, 2, alpha),
        DMatrix::from_diagonal_element(2, 2, (2.0 * eps).sqrt()),
        crate::linalg::sigma(1),
    )
}

/// Names accepted by [`by_name`] with their default parameters.
pub fn catalog() -> Vec<(&'static str, Vec<(&'static str, f64)>)> {
    vec![
        ("two_port_cavity", vec![("kappa1", 1.0), ("kappa2", 1.0)]),
        ("optomech_reduced", vec![("m", 1.0), ("omega", 1.0), ("lambda", 1.0)]),
        ("optomech_full", vec![("m", 1.0), ("omega", 1.0), ("kappa", 1.0), ("gamma", 2.0)]),
        ("optomech_bae_loop", vec![("m", 1.0), ("omega", 1.0), ("kappa", 1.0), ("gamma", 2.0)]),
        ("michelson", vec![("m", 1.0), ("omega", 0.01), ("lambda", 1.0), ("L", 1.0)]),
        ("michelson_cf_loop", vec![("m", 1.0), ("omega", 0.01), ("lambda", 1.0), ("L", 1.0)]),
        ("atomic_ensemble", vec![("mu", 1.0)]),
        ("lambda_memory", vec![("kappa", 1.0), ("coupling", 1.0), ("delta", 0.5), ("rabi", 0.0)]),
    ]
}

/// Build a catalogued scenario, overriding defaults with `overrides`.
/// Unknown names or parameter keys are validation errors.
pub fn by_name(name: &str, overrides: &BTreeMap<String, f64>) -> Result<QuantumLinearSystem> {
    let cat = catalog();
    let Some((_, defaults)) = cat.iter().find(|(n, _)| *n == name) else {
        let names: Vec<_> = cat.iter().map(|(n, _)| *n).collect();
        return Err(Error::Validation(format!("unknown scenario `{name}`; available: {}", names.join(", "))));
    };
    let mut p: BTreeMap<&str, f64> = defaults.iter().cloned().collect();
    for (k, v) in overrides {
        match p.get_mut(k.as_str()) {
            Some(slot) => *slot = *v,
            None => {
                let keys: Vec<_> = defaults.iter().map(|(k, _)| *k).collect();
                return Err(Error::Validation(format!(
                    "scenario `{name}` has no parameter `{k}`; parameters: {}",
                    keys.join(", ")
                )));
            }
        }
    }
    let mich = || MichelsonParams { m: p["m"], omega: p["omega"], lambda: p["lambda"], length: p["L"] };
    match name {
        "two_port_cavity" => two_port_cavity(p["kappa1"], p["kappa2"]),
        "optomech_reduced" => optomech_reduced(p["m"], p["omega"], p["lambda"]),
        "optomech_full" => optomech_full(p["m"], p["omega"], p["kappa"], p["gamma"]),
        "optomech_bae_loop" => cf_type1(
            &optomech_full(p["m"], p["omega"], p["kappa"], p["gamma"])?,
            &optomech_bae_controller(p["m"], p["omega"], p["kappa"], p["gamma"])?,
        ),
        "michelson" => michelson(&mich()),
        "michelson_cf_loop" => cf_type2(&michelson(&mich())?, &michelson_cf_controller(&mich())?),
        "atomic_ensemble" => atomic_ensemble_linear(p["mu"]),
        "lambda_memory" => lambda_memory(p["kappa"], p["coupling"], p["delta"], p["rabi"]),
        _ => unreachable!("catalogue and dispatch disagree"),
    }
}
