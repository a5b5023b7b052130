//! Transfer functions, noise spectra, the standard quantum limit and the
//! strain-normalized force-detection chain.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::model::QuantumLinearSystem;
use crate::statespace::StateSpaceModel;
use crate::structural::{krylov_subspace, KRYLOV_REL_TOL};

/// Largest accepted condition number of `(sI − A)`.
pub const MAX_CONDITION: f64 = 1e12;

/// `Ξ(s) = C(sI − A)⁻¹B + D` between two port groups.
///
/// The realization is reduced once to its controllable-and-observable part,
/// so poles cancelled by uncontrollable or unobservable modes do not make the
/// evaluation singular.
#[derive(Debug, Clone)]
pub struct TransferFunction {
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl TransferFunction {
    pub fn new(model: &StateSpaceModel, inputs: &[&str], outputs: &[&str]) -> Result<Self> {
        let b = model.input_matrix(inputs)?;
        let c = model.output_matrix(outputs)?;
        let d = model.feedthrough(outputs, inputs)?;
        let (a, b, c) = minimal(model.a(), &b, &c);
        Ok(Self {
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
            a,
            b,
            c,
            d,
        })
    }

    /// Order of the reduced realization.
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn feedthrough(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn evaluate(&self, s: Complex64) -> Result<DMatrix<Complex64>> {
        let g = resolvent_product(&self.a, &self.b, &self.c, s)?;
        Ok(g + self.d.map(|x| Complex64::new(x, 0.0)))
    }
}

/// Evaluate a transfer function at `s`.
pub fn evaluate(tf: &TransferFunction, s: Complex64) -> Result<DMatrix<Complex64>> {
    tf.evaluate(s)
}

/// Controllable part, then observable part of that.
fn minimal(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let v = krylov_subspace(a, b, KRYLOV_REL_TOL);
    let v = v.basis();
    let (ac, bc, cc) = (v.transpose() * a * v, v.transpose() * b, c * v);
    let u = krylov_subspace(&ac.transpose(), &cc.transpose(), KRYLOV_REL_TOL);
    let u = u.basis();
    (u.transpose() * &ac * u, u.transpose() * &bc, &cc * u)
}

/// `C(sI − A)⁻¹B` by LU with a conditioning guard.
pub fn resolvent_product(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    s: Complex64,
) -> Result<DMatrix<Complex64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(c.nrows(), b.ncols()));
    }
    let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
        let diag = if i == j { s } else { Complex64::new(0.0, 0.0) };
        diag - Complex64::new(a[(i, j)], 0.0)
    });
    let sv = m.clone().svd(false, false).singular_values;
    let smax = sv.iter().fold(0.0_f64, |x, &y| x.max(y));
    let smin = sv.iter().fold(f64::INFINITY, |x, &y| x.min(y));
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(cond <= MAX_CONDITION) {
        let eig = crate::linalg::eigenvalues(a);
        let nearest = eig
            .iter()
            .copied()
            .min_by(|x, y| (x - s).norm().partial_cmp(&(y - s).norm()).unwrap())
            .unwrap_or(Complex64::new(0.0, 0.0));
        return Err(Error::Singular { s, eigenvalue: nearest, cond });
    }
    let bc = b.map(|x| Complex64::new(x, 0.0));
    let x = m.lu().solve(&bc).ok_or(Error::Singular { s, eigenvalue: s, cond })?;
    Ok(c.map(|x| Complex64::new(x, 0.0)) * x)
}

/// Per-port quadrature variances; every column of a port uses the same value.
pub type NoiseVariances = BTreeMap<String, f64>;

/// Vacuum variance of one quadrature.
pub const VACUUM: f64 = 0.5;

/// Vacuum on each listed port.
pub fn vacuum(ports: &[&str]) -> NoiseVariances {
    ports.iter().map(|p| (p.to_string(), VACUUM)).collect()
}

/// Vacuum on a set of ports that together cover the whole field once: the
/// measured quadratures `Q`, `P` plus every unmeasured channel.
pub fn vacuum_partition(sys: &QuantumLinearSystem) -> NoiseVariances {
    let measured = sys.measured_channels();
    let mut v = NoiseVariances::new();
    if !measured.is_empty() {
        v.insert("Q".into(), VACUUM);
        v.insert("P".into(), VACUUM);
    }
    for (j, ch) in sys.channels().iter().enumerate() {
        if !measured.contains(&j) {
            v.insert(ch.label.clone(), VACUUM);
        }
    }
    v
}

/// Per-channel quadrature partition `<label>.Q`, `<label>.P`.
pub fn vacuum_quadratures(sys: &QuantumLinearSystem) -> NoiseVariances {
    sys.channels()
        .iter()
        .flat_map(|ch| [format!("{}.Q", ch.label), format!("{}.P", ch.label)])
        .map(|p| (p, VACUUM))
        .collect()
}

/// Squeeze `port` by `r`: its variance becomes `e^{−2r}/2` and the
/// conjugate quadrature's `e^{2r}/2`.  `port` is `Q`, `P`, or
/// `<label>.Q` / `<label>.P`; both it and its conjugate must already be in
/// `variances`.
pub fn squeeze(variances: &mut NoiseVariances, port: &str, r: f64) -> Result<()> {
    if !r.is_finite() {
        return Err(Error::Validation("squeezing parameter must be finite".into()));
    }
    let conj = if let Some(base) = port.strip_suffix('Q') {
        format!("{base}P")
    } else if let Some(base) = port.strip_suffix('P') {
        format!("{base}Q")
    } else {
        return Err(Error::Validation(format!("`{port}` is not a quadrature port")));
    };
    for p in [port, conj.as_str()] {
        if !variances.contains_key(p) {
            return Err(Error::UnknownPort(format!("{p} (not part of the noise partition)")));
        }
    }
    variances.insert(port.to_string(), VACUUM * (-2.0 * r).exp());
    variances.insert(conj, VACUUM * (2.0 * r).exp());
    Ok(())
}

/// Precomputed per-port transfer functions into one output.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    output: String,
    terms: Vec<(TransferFunction, f64)>,
    /// Scale applied to the output before squaring (e.g. strain normalization).
    gain: f64,
}

impl NoiseModel {
    pub fn new(model: &StateSpaceModel, output: &str, variances: &NoiseVariances) -> Result<Self> {
        let mut terms = Vec::new();
        for (port, &var) in variances {
            if !(var >= 0.0) || !var.is_finite() {
                return Err(Error::Validation(format!("variance for `{port}` must be finite and ≥ 0")));
            }
            terms.push((TransferFunction::new(model, &[port], &[output])?, var));
        }
        Ok(Self { output: output.to_string(), terms, gain: 1.0 })
    }

    pub fn scaled(mut self, gain: f64) -> Self {
        self.gain = gain;
        self
    }

    pub fn output(&self) -> &str {
        &self.output
    }

    /// `Σ_ports |Ξ(iΩ)|²·variance`, summed over the output rows.
    pub fn power(&self, omega: f64) -> Result<f64> {
        let s = Complex64::new(0.0, omega);
        let mut total = 0.0;
        for (tf, var) in &self.terms {
            let x = tf.evaluate(s)?;
            total += x.iter().map(|z| z.norm_sqr()).sum::<f64>() * var;
        }
        Ok(total * self.gain * self.gain)
    }

    /// Contribution of one port.
    pub fn port_power(&self, port: &str, omega: f64) -> Result<f64> {
        let s = Complex64::new(0.0, omega);
        let (tf, var) = self
            .terms
            .iter()
            .find(|(tf, _)| tf.inputs[0] == port)
            .ok_or_else(|| Error::UnknownPort(port.to_string()))?;
        let x = tf.evaluate(s)?;
        Ok(x.iter().map(|z| z.norm_sqr()).sum::<f64>() * var * self.gain * self.gain)
    }
}

/// Noise power at one frequency.
pub fn noise_power(model: &StateSpaceModel, signal_output: &str, variances: &NoiseVariances, omega: f64) -> Result<f64> {
    NoiseModel::new(model, signal_output, variances)?.power(omega)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumCurve {
    pub omegas: Vec<f64>,
    pub values: Vec<f64>,
    pub metadata: BTreeMap<String, f64>,
}

impl SpectrumCurve {
    pub fn new(omegas: Vec<f64>, values: Vec<f64>, metadata: BTreeMap<String, f64>) -> Result<Self> {
        if omegas.len() != values.len() {
            return Err(Error::Shape("omegas and values differ in length".into()));
        }
        if omegas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Validation("omegas must be strictly increasing".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Validation("spectrum values must be non-negative".into()));
        }
        Ok(Self { omegas, values, metadata })
    }

    /// CSV with header `omega,S,S_sql`; the last column is empty when no
    /// reference curve is supplied.
    pub fn to_csv(&self, sql: Option<&SpectrumCurve>) -> String {
        let mut out = String::from("omega,S,S_sql\n");
        for (i, (w, v)) in self.omegas.iter().zip(&self.values).enumerate() {
            let _ = write!(out, "{w:.16e},{v:.16e},");
            if let Some(r) = sql {
                let _ = write!(out, "{:.16e}", r.values[i]);
            }
            out.push('\n');
        }
        out
    }
}

/// `count` log-spaced points in `[lo, hi]`.
pub fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count).map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64)).collect()
        }
    }
}

/// Standard quantum limit `1/(2 m L² Ω²)`.
pub fn sql_curve(mass: f64, length: f64, omegas: &[f64]) -> Result<SpectrumCurve> {
    if !(mass > 0.0) || !(length > 0.0) {
        return Err(Error::Domain("mass and length must be positive".into()));
    }
    if omegas.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::Domain("the SQL is defined for Ω > 0 only".into()));
    }
    let values = omegas.iter().map(|w| 1.0 / (2.0 * mass * length * length * w * w)).collect();
    let mut meta = BTreeMap::new();
    meta.insert("mass".into(), mass);
    meta.insert("length".into(), length);
    SpectrumCurve::new(omegas.to_vec(), values, meta)
}

/// Parameters of the strain normalization `ỹ = y/(2√λ L)`, `F = −m L Ω² g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GwParams {
    pub lambda: f64,
    pub length: f64,
    pub mass: f64,
}

/// Force-detection chain referred to strain `g`.
#[derive(Debug, Clone)]
pub struct GwChain {
    model: StateSpaceModel,
    output: String,
    params: GwParams,
    force: TransferFunction,
}

/// Build the strain-referred chain on `output`; the model must carry a
/// force port `F`.
pub fn normalized_gw_signal(model: &StateSpaceModel, output: &str, params: GwParams) -> Result<GwChain> {
    if !(params.lambda > 0.0 && params.length > 0.0 && params.mass > 0.0) {
        return Err(Error::Domain("λ, L and m must be positive".into()));
    }
    if !model.has_input("F") {
        return Err(Error::UnknownPort("F (force port required for the strain chain)".into()));
    }
    let force = TransferFunction::new(model, &["F"], &[output])?;
    Ok(GwChain { model: model.clone(), output: output.to_string(), params, force })
}

impl GwChain {
    /// `1/(2√λ L)`.
    pub fn normalization(&self) -> f64 {
        1.0 / (2.0 * self.params.lambda.sqrt() * self.params.length)
    }

    /// `Ξ_{g→ỹ}(iΩ)`.
    pub fn strain_gain(&self, omega: f64) -> Result<Complex64> {
        let f = self.force.evaluate(Complex64::new(0.0, omega))?;
        let p = self.params;
        Ok(f[(0, 0)] * (-p.mass * p.length * omega * omega) * self.normalization())
    }

    /// Noise power of `ỹ`.
    pub fn noise_model(&self, variances: &NoiseVariances) -> Result<NoiseModel> {
        Ok(NoiseModel::new(&self.model, &self.output, variances)?.scaled(self.normalization()))
    }

    pub fn spectrum(&self, variances: &NoiseVariances, omegas: &[f64]) -> Result<SpectrumCurve> {
        let nm = self.noise_model(variances)?;
        let values = omegas.iter().map(|&w| nm.power(w)).collect::<Result<Vec<_>>>()?;
        let mut meta: BTreeMap<String, f64> = variances.iter().map(|(k, v)| (format!("var:{k}"), *v)).collect();
        meta.insert("lambda".into(), self.params.lambda);
        SpectrumCurve::new(omegas.to_vec(), values, meta)
    }
}

/// Sample points on the circle `|s| = 2‖A‖ + 1`, used to probe transfer
/// functions away from every eigenvalue.
pub fn probe_radius(a: &DMatrix<f64>) -> f64 {
    2.0 * norm2(a) + 1.0
}
