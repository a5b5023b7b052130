//! Shared helpers for the acceptance checks in `tests/acceptance.rs`.
//!
//! The checks live in their own package so that `cargo test --workspace`
//! runs every other suite before them.

use std::io::Write;

use qlin::scenarios::MichelsonParams;
use qlin::xfer::{normalized_gw_signal, squeeze, vacuum_partition, GwParams};
use qlin::QuantumLinearSystem;

/// Print the one-line verdict for criterion `n`, then assert it.
///
/// Writes to the process stdout directly so the line survives the test
/// harness's output capture for passing criteria too.
pub fn report(n: u32, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stdout().lock(), "criterion {n}: {verdict} — {detail}");
    assert!(pass, "criterion {n} failed: {detail}");
}

/// Strain-referred noise power of the interferometer output `y` at `omega`,
/// with vacuum on every input and optionally the shot-noise port `Q`
/// squeezed by `r`.
pub fn strain_noise(sys: &QuantumLinearSystem, lambda: f64, p: &MichelsonParams, omega: f64, squeeze_q: Option<f64>) -> f64 {
    let model = sys.to_state_space().expect("scenario systems convert");
    let mut vars = vacuum_partition(sys);
    if let Some(r) = squeeze_q {
        squeeze(&mut vars, "Q", r).expect("measured loops expose Q and P");
    }
    let chain = normalized_gw_signal(&model, "y", GwParams { lambda, length: p.length, mass: p.m }).expect("force port present");
    chain.noise_model(&vars).expect("ports exist").power(omega).expect("Ω is not a pole")
}
