//! Closed-loop realizations: measurement feedback (type 1 and type 2),
//! coherent feedback (type 1 and type 2) and direct measurement feedback
//! through a first-order circuit.
//!
//! Every loop is assembled from explicit block formulas; no loop is closed
//! by numerical inversion.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{block2, hcat, max_abs, select_rows, sigma, vcat};
use crate::model::{
    assemble, build_system, channel_selector, embed_split, homodyne_split, Channel, FieldPorts, MeasurementSplit,
    OutputSpec, Quadrature, QuantumLinearSystem, Role, SymplecticForm,
};
use crate::statespace::StateSpaceModel;
use crate::structural::Subspace;

/// Classical linear controller `dx_K = A_K x_K + B_K y`, `u = C_K x_K`.
///
/// For type-2 loops `c` stacks `C_K1` (feedback channels) over `C_K2`
/// (evaluation channels).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalController {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl ClassicalController {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> Result<Self> {
        let k = a.nrows();
        if a.ncols() != k || b.nrows() != k || c.ncols() != k {
            return Err(Error::Shape(format!(
                "controller blocks inconsistent: A_K {}x{}, B_K {}x{}, C_K {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        if [&a, &b, &c].iter().any(|m| !crate::linalg::all_finite(m)) {
            return Err(Error::Validation("non-finite controller entry".into()));
        }
        Ok(Self { a, b, c })
    }

    /// Zero-dimensional controller with the given port widths.
    pub fn zero(inputs: usize, outputs: usize) -> Self {
        Self { a: DMatrix::zeros(0, 0), b: DMatrix::zeros(0, inputs), c: DMatrix::zeros(outputs, 0) }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Quantum controller for coherent feedback.
#[derive(Debug, Clone, PartialEq)]
pub enum QuantumController {
    /// Two field ports: `C₁` couples to the plant input, `C₂` to its output.
    Type1 { g_k: DMatrix<f64>, c1: DMatrix<f64>, c2: DMatrix<f64> },
    /// One field port `C_K`, fed through the scattering matrix `S`.
    Type2 { g_k: DMatrix<f64>, c_k: DMatrix<f64>, s: DMatrix<f64> },
}

impl QuantumController {
    pub fn type1(g_k: DMatrix<f64>, c1: DMatrix<f64>, c2: DMatrix<f64>) -> Result<Self> {
        check_gk(&g_k)?;
        if c1.shape() != c2.shape() || c1.ncols() != g_k.nrows() {
            return Err(Error::Shape("C₁, C₂ must share shape 2m×2k with G_K 2k×2k".into()));
        }
        Ok(Self::Type1 { g_k, c1, c2 })
    }

    pub fn type2(g_k: DMatrix<f64>, c_k: DMatrix<f64>, s: DMatrix<f64>) -> Result<Self> {
        check_gk(&g_k)?;
        if c_k.ncols() != g_k.nrows() || c_k.nrows() % 2 != 0 {
            return Err(Error::Shape("C_K must be 2m×2k".into()));
        }
        let m = c_k.nrows() / 2;
        if !SymplecticForm::new(m).is_orthogonal_symplectic(&s, 1e-12) {
            return Err(Error::Validation("scattering matrix must be orthogonal and symplectic".into()));
        }
        Ok(Self::Type2 { g_k, c_k, s })
    }

    pub fn g_k(&self) -> &DMatrix<f64> {
        match self {
            Self::Type1 { g_k, .. } | Self::Type2 { g_k, .. } => g_k,
        }
    }

    pub fn modes(&self) -> usize {
        self.g_k().nrows() / 2
    }
}

fn check_gk(g: &DMatrix<f64>) -> Result<()> {
    if g.nrows() != g.ncols() || g.nrows() % 2 != 0 {
        return Err(Error::Shape("G_K must be square with even size".into()));
    }
    if max_abs(&(g - g.transpose())) > 1e-12 * max_abs(g) {
        return Err(Error::Validation("G_K must be symmetric".into()));
    }
    Ok(())
}

/// Subspace `[v; 0]` of a closed loop whose first `plant_dim` coordinates are
/// the plant.
pub fn plant_block(model: &StateSpaceModel, plant_dim: usize) -> Subspace {
    Subspace::coordinate_block(model.state_dim(), 0, plant_dim)
}

fn force_port(plant: &QuantumLinearSystem, extra_states: usize) -> Vec<(String, DMatrix<f64>)> {
    plant
        .force()
        .map(|f| {
            let n = f.len();
            let mut b = DMatrix::zeros(n + extra_states, 1);
            b.view_mut((0, 0), (n, 1)).copy_from(&DMatrix::from_column_slice(n, 1, f.as_slice()));
            ("F".to_string(), b)
        })
        .into_iter()
        .collect()
}

fn channel_outputs(channels: &[Channel], c_full: &DMatrix<f64>) -> Vec<OutputSpec> {
    let m = channels.len();
    channels
        .iter()
        .enumerate()
        .map(|(j, ch)| {
            let rows = [2 * j, 2 * j + 1];
            OutputSpec::new(format!("{}.out", ch.label), select_rows(c_full, &rows), channel_selector(&[j], m).transpose())
        })
        .collect()
}

/// Type-1 measurement feedback: every channel is measured with `split` and
/// every channel input is modulated by `u = C_K x_K`.
///
/// Ports: noise views `W`, `Q` (shot), `P` (back-action), per-channel labels;
/// outputs `y`, `Wout`, `<label>.out`; force `F` when the plant has one.
pub fn mf_type1(plant: &QuantumLinearSystem, ctrl: &ClassicalController, split: &MeasurementSplit) -> Result<StateSpaceModel> {
    let m = plant.channel_count();
    let k = ctrl.dim();
    if split.channels() != m || ctrl.b.ncols() != m || ctrl.c.nrows() != 2 * m {
        return Err(Error::Shape(format!(
            "type-1 loop needs split of {m} channels, B_K with {m} columns, C_K with {} rows",
            2 * m
        )));
    }
    let a = plant.drift();
    let b = plant.noise_input();
    let c = plant.c();
    let m1 = split.m1();
    let a_e = block2(&a, &(&b * &ctrl.c), &(&ctrl.b * m1 * c), &(&ctrl.a + &ctrl.b * m1 * &ctrl.c));
    let noise_b = vcat(&[&b, &(&ctrl.b * m1)]);
    let c_full = hcat(&[c, &ctrl.c]);
    let field = FieldPorts { channels: plant.channels(), measured: (0..m).collect(), split: split.clone(), feedback: vec![] };
    let mut outs = vec![
        OutputSpec::new("y", m1 * &c_full, m1.clone()),
        OutputSpec::new("Wout", c_full.clone(), DMatrix::identity(2 * m, 2 * m)),
    ];
    outs.extend(channel_outputs(plant.channels(), &c_full));
    assemble(a_e, &noise_b, &field.views(), &outs, &force_port(plant, k))
}

/// Type-2 measurement feedback.  Channels with role `feedback` are measured
/// by `fb_split` and drive the controller; channels with role `evaluation`
/// are measured by `eval_split` to give `z`.  Both groups are modulated
/// (`C_K1`, `C_K2`); other channels are left alone.
///
/// Ports: noise views `W`, `Wfb`, `Wev`, `Q`/`P` (evaluation split), labels;
/// outputs `y`, `z`, `yz`, `Wout`, `<label>.out`; force `F`.
pub fn mf_type2(
    plant: &QuantumLinearSystem,
    ctrl: &ClassicalController,
    fb_split: &MeasurementSplit,
    eval_split: &MeasurementSplit,
) -> Result<StateSpaceModel> {
    let m = plant.channel_count();
    let fb = plant.channels_with_role(Role::Feedback);
    let ev = plant.channels_with_role(Role::Evaluation);
    if fb.is_empty() || ev.is_empty() {
        return Err(Error::Validation("type-2 loop needs at least one feedback and one evaluation channel".into()));
    }
    let (m1, m2) = (fb.len(), ev.len());
    if fb_split.channels() != m1 || eval_split.channels() != m2 {
        return Err(Error::Shape(format!("splits must cover {m1} feedback and {m2} evaluation channels")));
    }
    let k = ctrl.dim();
    if ctrl.b.ncols() != m1 || ctrl.c.nrows() != 2 * (m1 + m2) {
        return Err(Error::Shape(format!(
            "type-2 controller needs B_K with {m1} columns and C_K with {} rows",
            2 * (m1 + m2)
        )));
    }
    // modulation matrix on the whole field
    let mut ck_full = DMatrix::zeros(2 * m, k);
    for (local, &j) in fb.iter().chain(ev.iter()).enumerate() {
        ck_full.rows_mut(2 * j, 2).copy_from(&ctrl.c.rows(2 * local, 2));
    }
    let (me, _) = embed_split(fb_split, &fb, m);
    let (m1e, _) = embed_split(eval_split, &ev, m);
    let a = plant.drift();
    let b = plant.noise_input();
    let c = plant.c();
    let a_e = block2(&a, &(&b * &ck_full), &(&ctrl.b * &me * c), &(&ctrl.a + &ctrl.b * &me * &ck_full));
    let noise_b = vcat(&[&b, &(&ctrl.b * &me)]);
    let c_full = hcat(&[c, &ck_full]);
    let field = FieldPorts {
        channels: plant.channels(),
        measured: ev.clone(),
        split: eval_split.clone(),
        feedback: vec![("Wfb".into(), fb.clone()), ("Wev".into(), ev.clone())],
    };
    let yz_o = vcat(&[&me, &m1e]);
    let mut outs = vec![
        OutputSpec::new("y", &me * &c_full, me.clone()),
        OutputSpec::new("z", &m1e * &c_full, m1e.clone()),
        OutputSpec::new("yz", &yz_o * &c_full, yz_o.clone()),
        OutputSpec::new("Wout", c_full.clone(), DMatrix::identity(2 * m, 2 * m)),
    ];
    outs.extend(channel_outputs(plant.channels(), &c_full));
    assemble(a_e, &noise_b, &field.views(), &outs, &force_port(plant, k))
}

fn stacked_mode_labels(plant: &QuantumLinearSystem, k: usize) -> Vec<String> {
    plant.mode_labels().iter().cloned().chain((1..=k).map(|i| format!("ctrl{i}"))).collect()
}

fn stacked_force(plant: &QuantumLinearSystem, extra: usize) -> Option<DVector<f64>> {
    plant.force().map(|f| {
        let mut v = DVector::zeros(f.len() + extra);
        v.rows_mut(0, f.len()).copy_from(f);
        v
    })
}

/// Type-1 coherent feedback: the plant output enters the controller's
/// second port and the controller's first output drives the plant input.
pub fn cf_type1(plant: &QuantumLinearSystem, qctrl: &QuantumController) -> Result<QuantumLinearSystem> {
    let QuantumController::Type1 { g_k, c1, c2 } = qctrl else {
        return Err(Error::Validation("type-1 coherent feedback needs a two-port controller".into()));
    };
    let c = plant.c();
    if c1.nrows() != c.nrows() {
        return Err(Error::Shape(format!("controller ports have {} rows, plant field has {}", c1.nrows(), c.nrows())));
    }
    let s = sigma(plant.channel_count());
    let g = plant.g();
    let off = c.transpose() * &s * c1 * 0.5 - c.transpose() * &s * c2 * 0.5;
    let gkk = g_k + c1.transpose() * s.transpose() * c2 * 0.5 + c2.transpose() * &s * c1 * 0.5;
    let g_e = block2(g, &off, &off.transpose(), &gkk);
    let c_e = hcat(&[c, &(c1 + c2)]);
    let k = g_k.nrows();
    let sys = build_system(g_e, c_e, plant.channels().to_vec(), stacked_force(plant, k))
        .map_err(|e| Error::Inconsistent(format!("type-1 coherent loop failed validation: {e}")))?;
    sys.with_mode_labels(stacked_mode_labels(plant, k / 2))?.with_measurement(plant.measurement().to_vec())
}

/// Type-2 coherent feedback: the feedback channels' output, scattered by
/// `S`, drives the controller, whose output feeds the evaluation channels.
///
/// The closed loop has one field group whose input is `S·W_fb`; it is
/// labelled `<fb label>'` and keeps the evaluation channels' measurement.
pub fn cf_type2(plant: &QuantumLinearSystem, qctrl: &QuantumController) -> Result<QuantumLinearSystem> {
    let QuantumController::Type2 { g_k, c_k, s } = qctrl else {
        return Err(Error::Validation("type-2 coherent feedback needs a single-port controller with scattering".into()));
    };
    let fb = plant.channels_with_role(Role::Feedback);
    let ev = plant.channels_with_role(Role::Evaluation);
    if fb.len() + ev.len() != plant.channel_count() || fb.len() != ev.len() || fb.is_empty() {
        return Err(Error::Validation(
            "type-2 coherent loop needs equally many feedback and evaluation channels and no others".into(),
        ));
    }
    if c_k.nrows() != 2 * fb.len() {
        return Err(Error::Shape(format!("C_K has {} rows, feedback field has {}", c_k.nrows(), 2 * fb.len())));
    }
    let c1 = select_rows(plant.c(), &plant.channel_rows(&fb));
    let c2 = select_rows(plant.c(), &plant.channel_rows(&ev));
    let sg = sigma(fb.len());
    let g = plant.g();
    let tl = g + (c2.transpose() * &sg * s * &c1 + c1.transpose() * s.transpose() * sg.transpose() * &c2) * 0.5;
    let bl = c_k.transpose() * &sg * (s * &c1 - &c2) * 0.5;
    let g_e = block2(&tl, &bl.transpose(), &bl, g_k);
    let c_e = hcat(&[&(s * &c1 + &c2), c_k]);
    let channels: Vec<Channel> =
        fb.iter().map(|&j| Channel::new(format!("{}'", plant.channels()[j].label), Role::Evaluation)).collect();
    let k = g_k.nrows();
    let sys = build_system(g_e, c_e, channels, stacked_force(plant, k))
        .map_err(|e| Error::Inconsistent(format!("type-2 coherent loop failed validation: {e}")))?;
    let meas: Vec<Option<Quadrature>> = ev.iter().map(|&j| plant.measurement()[j]).collect();
    sys.with_mode_labels(stacked_mode_labels(plant, k / 2))?.with_measurement(meas)
}

/// Cavity with amplitude modulation under direct measurement feedback
/// through a first-order circuit `dx_K = (y − x_K)/τ`, `u = √κ x_K`.
///
/// `τ = 0` selects the ideal proportional limit `u = √κ y`, eliminated in
/// closed form.  States are `(q, p)` or `(q, p, x_K)`; ports follow the plant
/// conventions with the `Q` quadrature measured, plus outputs `q` and `u`.
pub fn direct_mf(kappa: f64, tau: f64) -> Result<StateSpaceModel> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::Domain(format!("time constant must be ≥ 0, got {tau}")));
    }
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::Domain("κ must be ≥ 0".into()));
    }
    let sk = kappa.sqrt();
    let channels = vec![Channel::new("W1", Role::Feedback)];
    let split = homodyne_split(&[Quadrature::Q]);
    let field = FieldPorts { channels: &channels, measured: vec![0], split: split.clone(), feedback: vec![] };
    let m1 = split.m1().clone();
    let c_plant = DMatrix::identity(2, 2) * sk;
    if tau == 0.0 {
        let a = DMatrix::zeros(2, 2);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, -sk]);
        let outs = vec![
            OutputSpec::new("y", &m1 * &c_plant, m1.clone()),
            OutputSpec::new("q", DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DMatrix::zeros(1, 2)),
            OutputSpec::new("u", &m1 * &c_plant * sk, &m1 * sk),
            OutputSpec::new("Wout", c_plant.clone(), DMatrix::identity(2, 2)),
        ];
        return assemble(a, &b, &field.views(), &outs, &[]);
    }
    let a = DMatrix::from_row_slice(3, 3, &[-kappa, 0.0, sk, 0.0, 0.0, 0.0, sk / tau, 0.0, -1.0 / tau]);
    let b = DMatrix::from_row_slice(3, 2, &[-sk, 0.0, 0.0, -sk, 1.0 / tau, 0.0]);
    let c_full = hcat(&[&c_plant, &DMatrix::zeros(2, 1)]);
    let outs = vec![
        OutputSpec::new("y", &m1 * &c_full, m1.clone()),
        OutputSpec::new("q", DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]), DMatrix::zeros(1, 2)),
        OutputSpec::new("u", DMatrix::from_row_slice(1, 3, &[0.0, 0.0, sk]), DMatrix::zeros(1, 2)),
        OutputSpec::new("Wout", c_full, DMatrix::identity(2, 2)),
    ];
    assemble(a, &b, &field.views(), &outs, &[])
}

/// The feedback circuit alone, from `y` to `u`.
pub fn direct_mf_circuit(kappa: f64, tau: f64) -> Result<StateSpaceModel> {
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("time constant must be ≥ 0, got {tau}")));
    }
    let sk = kappa.sqrt();
    let b = crate::statespace::Builder::new(if tau == 0.0 { DMatrix::zeros(0, 0) } else { DMatrix::from_element(1, 1, -1.0 / tau) });
    if tau == 0.0 {
        b.input("y", DMatrix::zeros(0, 1))
            .output("u", DMatrix::zeros(1, 0))
            .direct("u", "y", DMatrix::from_element(1, 1, sk))
            .build()
    } else {
        b.input("y", DMatrix::from_element(1, 1, 1.0 / tau)).output("u", DMatrix::from_element(1, 1, sk)).build()
    }
}
