//! JSON documents for systems, controllers and state-space models.
//!
//! Matrices are arrays of rows.  Non-finite numbers are rejected on input
//! (JSON has no literal for them anyway).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::interconnect::{ClassicalController, QuantumController};
use crate::model::{build_system, Channel, Quadrature, QuantumLinearSystem};
use crate::statespace::{Port, StateSpaceModel};

pub type Rows = Vec<Vec<f64>>;

pub fn to_rows(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Matrix from rows; `cols` fixes the width when there are no rows.
pub fn from_rows(rows: &Rows, cols: Option<usize>, what: &str) -> Result<DMatrix<f64>> {
    let width = rows.first().map(|r| r.len()).or(cols).unwrap_or(0);
    if let Some(c) = cols {
        if !rows.is_empty() && width != c {
            return Err(Error::Shape(format!("{what}: rows have {width} columns, expected {c}")));
        }
    }
    if rows.iter().any(|r| r.len() != width) {
        return Err(Error::Shape(format!("{what}: ragged rows")));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Validation(format!("{what}: non-finite entry")));
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}

fn quad_to_value(q: &Option<Quadrature>) -> Value {
    match q {
        None => Value::Null,
        Some(Quadrature::Q) => Value::from("q"),
        Some(Quadrature::P) => Value::from("p"),
        Some(Quadrature::Angle(t)) => Value::from(*t),
    }
}

fn quad_from_value(v: &Value) -> Result<Option<Quadrature>> {
    match v {
        Value::Null => Ok(None),
        Value::String(s) if s.eq_ignore_ascii_case("q") => Ok(Some(Quadrature::Q)),
        Value::String(s) if s.eq_ignore_ascii_case("p") => Ok(Some(Quadrature::P)),
        Value::Number(n) => {
            let t = n.as_f64().filter(|t| t.is_finite()).ok_or_else(|| Error::Validation("bad homodyne angle".into()))?;
            Ok(Some(Quadrature::Angle(t)))
        }
        other => Err(Error::Validation(format!("measurement entry must be \"q\", \"p\", an angle or null, got {other}"))),
    }
}

/// Serialized [`QuantumLinearSystem`].
#[allow(non_snake_case)]
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDoc {
    #[serde(default)]
    pub kind: Option<String>,
    pub modes: usize,
    pub G: Rows,
    pub C: Rows,
    #[serde(default)]
    pub channels: Option<Vec<Channel>>,
    #[serde(default)]
    pub force: Option<Vec<f64>>,
    #[serde(default)]
    pub mode_labels: Option<Vec<String>>,
    #[serde(default)]
    pub measure: Option<Vec<Value>>,
}

impl SystemDoc {
    pub fn from_system(sys: &QuantumLinearSystem) -> Self {
        Self {
            kind: Some("system".into()),
            modes: sys.modes(),
            G: to_rows(sys.g()),
            C: to_rows(sys.c()),
            channels: Some(sys.channels().to_vec()),
            force: sys.force().map(|f| f.iter().copied().collect()),
            mode_labels: Some(sys.mode_labels().to_vec()),
            measure: Some(sys.measurement().iter().map(quad_to_value).collect()),
        }
    }

    pub fn into_system(self) -> Result<QuantumLinearSystem> {
        let dim = 2 * self.modes;
        let g = from_rows(&self.G, Some(dim), "G")?;
        if g.nrows() != dim {
            return Err(Error::Shape(format!("G has {} rows, expected {dim}", g.nrows())));
        }
        let c = from_rows(&self.C, Some(dim), "C")?;
        if c.nrows() % 2 != 0 {
            return Err(Error::Shape("C needs an even number of rows".into()));
        }
        let m = c.nrows() / 2;
        let channels = self.channels.unwrap_or_else(|| crate::model::default_channels(m));
        let force = match self.force {
            Some(f) => {
                if f.iter().any(|x| !x.is_finite()) {
                    return Err(Error::Validation("force: non-finite entry".into()));
                }
                Some(DVector::from_vec(f))
            }
            None => None,
        };
        let mut sys = build_system(g, c, channels, force)?;
        if let Some(l) = self.mode_labels {
            sys = sys.with_mode_labels(l)?;
        }
        if let Some(ms) = self.measure {
            let sel = ms.iter().map(quad_from_value).collect::<Result<Vec<_>>>()?;
            sys = sys.with_measurement(sel)?;
        }
        Ok(sys)
    }
}

/// Serialized [`StateSpaceModel`].
#[allow(non_snake_case)]
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpaceDoc {
    pub kind: String,
    pub A: Rows,
    pub B: Rows,
    pub C: Rows,
    pub D: Rows,
    pub inputs: Vec<Port>,
    pub outputs: Vec<Port>,
}

impl StateSpaceDoc {
    pub fn from_model(m: &StateSpaceModel) -> Self {
        Self {
            kind: "statespace".into(),
            A: to_rows(m.a()),
            B: to_rows(m.b()),
            C: to_rows(m.c()),
            D: to_rows(m.d()),
            inputs: m.inputs().to_vec(),
            outputs: m.outputs().to_vec(),
        }
    }

    pub fn into_model(self) -> Result<StateSpaceModel> {
        let n = self.A.len();
        let nin: usize = self.inputs.iter().map(|p| p.width).sum();
        let a = from_rows(&self.A, Some(n), "A")?;
        let b = from_rows(&self.B, Some(nin), "B")?;
        let c = from_rows(&self.C, Some(n), "C")?;
        let d = from_rows(&self.D, Some(nin), "D")?;
        StateSpaceModel::new(a, b, c, d, self.inputs, self.outputs)
    }
}

/// Any analysable document.
#[derive(Debug, Clone)]
pub enum ModelDoc {
    System(QuantumLinearSystem),
    StateSpace(StateSpaceModel),
}

/// Parse a system or state-space document.
pub fn parse_model(text: &str) -> Result<ModelDoc> {
    let v: Value = serde_json::from_str(text).map_err(|e| Error::Validation(format!("malformed JSON: {e}")))?;
    let kind = v.get("kind").and_then(Value::as_str).unwrap_or("system").to_string();
    match kind.as_str() {
        "system" => {
            let doc: SystemDoc = serde_json::from_value(v).map_err(|e| Error::Validation(format!("bad system document: {e}")))?;
            Ok(ModelDoc::System(doc.into_system()?))
        }
        "statespace" => {
            let doc: StateSpaceDoc =
                serde_json::from_value(v).map_err(|e| Error::Validation(format!("bad state-space document: {e}")))?;
            Ok(ModelDoc::StateSpace(doc.into_model()?))
        }
        other => Err(Error::Validation(format!("unknown document kind `{other}`"))),
    }
}

pub fn parse_system(text: &str) -> Result<QuantumLinearSystem> {
    match parse_model(text)? {
        ModelDoc::System(s) => Ok(s),
        ModelDoc::StateSpace(_) => Err(Error::Validation("expected a quantum system document, got a state-space model".into())),
    }
}

pub fn system_to_json(sys: &QuantumLinearSystem) -> String {
    serde_json::to_string_pretty(&SystemDoc::from_system(sys)).expect("finite values serialize")
}

pub fn model_to_json(m: &StateSpaceModel) -> String {
    serde_json::to_string_pretty(&StateSpaceDoc::from_model(m)).expect("finite values serialize")
}

/// Controller document; `scheme` selects the variant.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase", deny_unknown_fields)]
pub enum ControllerDoc {
    Mf1 { A: Rows, B: Rows, C: Rows },
    Mf2 { A: Rows, B: Rows, C: Rows },
    Cf1 { G_K: Rows, C1: Rows, C2: Rows },
    Cf2 { G_K: Rows, C_K: Rows, S: Rows },
}

/// A parsed controller together with the loop it is meant for.
#[derive(Debug, Clone)]
pub enum ControllerSpec {
    Classical { scheme: crate::nogo::Scheme, ctrl: ClassicalController },
    Quantum(QuantumController),
}

fn classical(a: &Rows, b: &Rows, c: &Rows) -> Result<ClassicalController> {
    let k = a.len();
    let a = from_rows(a, Some(k), "A")?;
    let b = from_rows(b, None, "B")?;
    let c = from_rows(c, Some(k), "C")?;
    let b = if b.nrows() == 0 && k == 0 { DMatrix::zeros(0, b.ncols()) } else { b };
    ClassicalController::new(a, b, c)
}

/// Classical controllers of dimension 0 need the port widths, which a JSON
/// array of zero rows cannot carry; they are taken from the plant instead.
pub fn parse_controller(text: &str, plant: &QuantumLinearSystem) -> Result<ControllerSpec> {
    let doc: ControllerDoc =
        serde_json::from_str(text).map_err(|e| Error::Validation(format!("bad controller document: {e}")))?;
    use crate::model::Role;
    let fix_zero = |mut c: ClassicalController, inputs: usize, outputs: usize| {
        if c.dim() == 0 {
            c = ClassicalController::zero(inputs, outputs);
        }
        c
    };
    match doc {
        ControllerDoc::Mf1 { A, B, C } => {
            let m = plant.channel_count();
            let c = fix_zero(classical(&A, &B, &C)?, m, 2 * m);
            Ok(ControllerSpec::Classical { scheme: crate::nogo::Scheme::Mf1, ctrl: c })
        }
        ControllerDoc::Mf2 { A, B, C } => {
            let fb = plant.channels_with_role(Role::Feedback).len();
            let ev = plant.channels_with_role(Role::Evaluation).len();
            let c = fix_zero(classical(&A, &B, &C)?, fb, 2 * (fb + ev));
            Ok(ControllerSpec::Classical { scheme: crate::nogo::Scheme::Mf2, ctrl: c })
        }
        ControllerDoc::Cf1 { G_K, C1, C2 } => {
            let k = G_K.len();
            let g = from_rows(&G_K, Some(k), "G_K")?;
            Ok(ControllerSpec::Quantum(QuantumController::type1(
                g,
                from_rows(&C1, Some(k), "C1")?,
                from_rows(&C2, Some(k), "C2")?,
            )?))
        }
        ControllerDoc::Cf2 { G_K, C_K, S } => {
            let k = G_K.len();
            let g = from_rows(&G_K, Some(k), "G_K")?;
            let ck = from_rows(&C_K, Some(k), "C_K")?;
            let s = from_rows(&S, Some(S.len()), "S")?;
            Ok(ControllerSpec::Quantum(QuantumController::type2(g, ck, s)?))
        }
    }
}

#[allow(non_snake_case)]
pub fn controller_to_json(spec: &ControllerSpec) -> String {
    let doc = match spec {
        ControllerSpec::Classical { scheme, ctrl } => {
            let (A, B, C) = (to_rows(&ctrl.a), to_rows(&ctrl.b), to_rows(&ctrl.c));
            match scheme {
                crate::nogo::Scheme::Mf1 => ControllerDoc::Mf1 { A, B, C },
                crate::nogo::Scheme::Mf2 => ControllerDoc::Mf2 { A, B, C },
            }
        }
        ControllerSpec::Quantum(QuantumController::Type1 { g_k, c1, c2 }) => {
            ControllerDoc::Cf1 { G_K: to_rows(g_k), C1: to_rows(c1), C2: to_rows(c2) }
        }
        ControllerSpec::Quantum(QuantumController::Type2 { g_k, c_k, s }) => {
            ControllerDoc::Cf2 { G_K: to_rows(g_k), C_K: to_rows(c_k), S: to_rows(s) }
        }
    };
    serde_json::to_string_pretty(&doc).expect("finite values serialize")
}
