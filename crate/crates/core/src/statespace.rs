//! Generic `(A, B, C, D)` realizations with named input/output ports.
//!
//! Input ports may be alternative *views* of the same physical noise (for
//! instance the full field `W` and its measured/conjugate split `Q`, `P`).
//! Analyses therefore always address ports by name and never sum over the
//! whole `B` matrix blindly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hcat, vcat};

/// A contiguous block of columns (inputs) or rows (outputs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub name: String,
    pub start: usize,
    pub width: usize,
}

#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    A: DMatrix<f64>,
    B: DMatrix<f64>,
    C: DMatrix<f64>,
    D: DMatrix<f64>,
    inputs: Vec<Port>,
    outputs: Vec<Port>,
}

#[allow(non_snake_case)]
impl StateSpaceModel {
    pub fn new(
        A: DMatrix<f64>,
        B: DMatrix<f64>,
        C: DMatrix<f64>,
        D: DMatrix<f64>,
        inputs: Vec<Port>,
        outputs: Vec<Port>,
    ) -> Result<Self> {
        let n = A.nrows();
        if A.ncols() != n {
            return Err(Error::Shape(format!("A must be square, got {}x{}", n, A.ncols())));
        }
        if B.nrows() != n || C.ncols() != n {
            return Err(Error::Shape(format!(
                "B is {}x{}, C is {}x{} for state dimension {n}",
                B.nrows(),
                B.ncols(),
                C.nrows(),
                C.ncols()
            )));
        }
        if D.nrows() != C.nrows() || D.ncols() != B.ncols() {
            return Err(Error::Shape(format!(
                "D is {}x{}, expected {}x{}",
                D.nrows(),
                D.ncols(),
                C.nrows(),
                B.ncols()
            )));
        }
        check_ports(&inputs, B.ncols(), "input")?;
        check_ports(&outputs, C.nrows(), "output")?;
        Ok(Self { A, B, C, D, inputs, outputs })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.A
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.B
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.C
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.D
    }
    pub fn state_dim(&self) -> usize {
        self.A.nrows()
    }
    pub fn inputs(&self) -> &[Port] {
        &self.inputs
    }
    pub fn outputs(&self) -> &[Port] {
        &self.outputs
    }

    pub fn input(&self, name: &str) -> Result<&Port> {
        self.inputs
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::UnknownPort(name.to_string()))
    }

    pub fn output(&self, name: &str) -> Result<&Port> {
        self.outputs
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::UnknownPort(name.to_string()))
    }

    pub fn has_input(&self, name: &str) -> bool {
        self.inputs.iter().any(|p| p.name == name)
    }

    pub fn has_output(&self, name: &str) -> bool {
        self.outputs.iter().any(|p| p.name == name)
    }

    /// Columns of `B` for the listed ports, side by side.
    pub fn input_matrix(&self, names: &[&str]) -> Result<DMatrix<f64>> {
        let mut blocks = Vec::with_capacity(names.len());
        for n in names {
            let p = self.input(n)?;
            blocks.push(self.B.columns(p.start, p.width).into_owned());
        }
        if blocks.is_empty() {
            return Ok(DMatrix::zeros(self.state_dim(), 0));
        }
        Ok(hcat(&blocks.iter().collect::<Vec<_>>()))
    }

    /// Rows of `C` for the listed ports, stacked.
    pub fn output_matrix(&self, names: &[&str]) -> Result<DMatrix<f64>> {
        let mut blocks = Vec::with_capacity(names.len());
        for n in names {
            let p = self.output(n)?;
            blocks.push(self.C.rows(p.start, p.width).into_owned());
        }
        if blocks.is_empty() {
            return Ok(DMatrix::zeros(0, self.state_dim()));
        }
        Ok(vcat(&blocks.iter().collect::<Vec<_>>()))
    }

    /// Direct term between the listed output and input ports.
    pub fn feedthrough(&self, outputs: &[&str], inputs: &[&str]) -> Result<DMatrix<f64>> {
        let rows: Vec<&Port> = outputs.iter().map(|n| self.output(n)).collect::<Result<_>>()?;
        let cols: Vec<&Port> = inputs.iter().map(|n| self.input(n)).collect::<Result<_>>()?;
        let h: usize = rows.iter().map(|p| p.width).sum();
        let w: usize = cols.iter().map(|p| p.width).sum();
        let mut out = DMatrix::zeros(h, w);
        let mut r0 = 0;
        for rp in &rows {
            let mut c0 = 0;
            for cp in &cols {
                out.view_mut((r0, c0), (rp.width, cp.width))
                    .copy_from(&self.D.view((rp.start, cp.start), (rp.width, cp.width)));
                c0 += cp.width;
            }
            r0 += rp.width;
        }
        Ok(out)
    }

    /// Sub-realization `(A, B_in, C_out, D_out,in)` for one port pair group.
    pub fn restrict(&self, outputs: &[&str], inputs: &[&str]) -> Result<StateSpaceModel> {
        let b = self.input_matrix(inputs)?;
        let c = self.output_matrix(outputs)?;
        let d = self.feedthrough(outputs, inputs)?;
        let (bw, cw) = (b.ncols(), c.nrows());
        StateSpaceModel::new(
            self.A.clone(),
            b,
            c,
            d,
            vec![Port { name: inputs.join("+"), start: 0, width: bw }],
            vec![Port { name: outputs.join("+"), start: 0, width: cw }],
        )
    }

    /// Apply the state change `x = T x'` (with `T` invertible).
    pub fn similarity(&self, t: &DMatrix<f64>) -> Result<StateSpaceModel> {
        let n = self.state_dim();
        if t.nrows() != n || t.ncols() != n {
            return Err(Error::Shape("similarity transform must be N×N".into()));
        }
        let ti = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Validation("similarity transform is singular".into()))?;
        StateSpaceModel::new(
            &ti * &self.A * t,
            &ti * &self.B,
            &self.C * t,
            self.D.clone(),
            self.inputs.clone(),
            self.outputs.clone(),
        )
    }
}

fn check_ports(ports: &[Port], total: usize, kind: &str) -> Result<()> {
    for (i, p) in ports.iter().enumerate() {
        if p.start + p.width > total {
            return Err(Error::Shape(format!(
                "{kind} port `{}` spans {}..{} beyond width {total}",
                p.name,
                p.start,
                p.start + p.width
            )));
        }
        if ports[..i].iter().any(|q| q.name == p.name) {
            return Err(Error::Validation(format!("duplicate {kind} port `{}`", p.name)));
        }
    }
    Ok(())
}

/// Incremental assembly of a [`StateSpaceModel`] from named blocks.
#[derive(Debug, Clone)]
pub struct Builder {
    a: DMatrix<f64>,
    inputs: Vec<(String, DMatrix<f64>)>,
    outputs: Vec<(String, DMatrix<f64>)>,
    direct: Vec<(String, String, DMatrix<f64>)>,
}

impl Builder {
    pub fn new(a: DMatrix<f64>) -> Self {
        Self { a, inputs: Vec::new(), outputs: Vec::new(), direct: Vec::new() }
    }

    pub fn input(mut self, name: impl Into<String>, b: DMatrix<f64>) -> Self {
        self.inputs.push((name.into(), b));
        self
    }

    pub fn output(mut self, name: impl Into<String>, c: DMatrix<f64>) -> Self {
        self.outputs.push((name.into(), c));
        self
    }

    pub fn direct(mut self, output: impl Into<String>, input: impl Into<String>, d: DMatrix<f64>) -> Self {
        self.direct.push((output.into(), input.into(), d));
        self
    }

    pub fn build(self) -> Result<StateSpaceModel> {
        let n = self.a.nrows();
        let mut inputs = Vec::new();
        let mut k = 0;
        for (name, b) in &self.inputs {
            if b.nrows() != n {
                return Err(Error::Shape(format!("input `{name}` has {} rows, expected {n}", b.nrows())));
            }
            inputs.push(Port { name: name.clone(), start: k, width: b.ncols() });
            k += b.ncols();
        }
        let mut outputs = Vec::new();
        let mut l = 0;
        for (name, c) in &self.outputs {
            if c.ncols() != n {
                return Err(Error::Shape(format!("output `{name}` has {} columns, expected {n}", c.ncols())));
            }
            outputs.push(Port { name: name.clone(), start: l, width: c.nrows() });
            l += c.nrows();
        }
        let mut b = DMatrix::zeros(n, k);
        for (p, (_, blk)) in inputs.iter().zip(&self.inputs) {
            b.columns_mut(p.start, p.width).copy_from(blk);
        }
        let mut c = DMatrix::zeros(l, n);
        for (p, (_, blk)) in outputs.iter().zip(&self.outputs) {
            c.rows_mut(p.start, p.width).copy_from(blk);
        }
        let mut d = DMatrix::zeros(l, k);
        for (o, i, blk) in &self.direct {
            let op = outputs
                .iter()
                .find(|p| &p.name == o)
                .ok_or_else(|| Error::UnknownPort(o.clone()))?;
            let ip = inputs
                .iter()
                .find(|p| &p.name == i)
                .ok_or_else(|| Error::UnknownPort(i.clone()))?;
            if blk.nrows() != op.width || blk.ncols() != ip.width {
                return Err(Error::Shape(format!(
                    "direct term {o}<-{i} is {}x{}, expected {}x{}",
                    blk.nrows(),
                    blk.ncols(),
                    op.width,
                    ip.width
                )));
            }
            d.view_mut((op.start, ip.start), (op.width, ip.width)).copy_from(blk);
        }
        StateSpaceModel::new(self.a, b, c, d, inputs, outputs)
    }
}
