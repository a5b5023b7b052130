//! Quadrature-space open linear quantum systems, measurement splits and
//! conversions.
//!
//! Conventions: ħ = 1, interleaved ordering `(q₁, p₁, q₂, p₂, …)`, vacuum
//! quadrature variance 1/2.  A system with drift `G` and coupling `C`
//! evolves as `dx = A x dt + B dW`, `dW_out = C x dt + dW` with
//! `A = Σ(G + CᵀΣC/2)` and `B = ΣCᵀΣ`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{max_abs, select_rows, sigma, vcat};
use crate::statespace::{Builder, StateSpaceModel};

const SYM_TOL: f64 = 1e-12;

/// Block-diagonal symplectic form Σₙ.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticForm {
    n: usize,
    matrix: DMatrix<f64>,
}

impl SymplecticForm {
    pub fn new(n: usize) -> Self {
        Self { n, matrix: sigma(n) }
    }
    pub fn modes(&self) -> usize {
        self.n
    }
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
    /// `uᵀ Σ v`.
    pub fn pairing(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (u.transpose() * &self.matrix * v)[(0, 0)]
    }
    /// True when `S Σ Sᵀ = Σ` and `SᵀS = I` within `tol`.
    pub fn is_orthogonal_symplectic(&self, s: &DMatrix<f64>, tol: f64) -> bool {
        let dim = 2 * self.n;
        s.nrows() == dim
            && s.ncols() == dim
            && max_abs(&(s * &self.matrix * s.transpose() - &self.matrix)) <= tol
            && max_abs(&(s.transpose() * s - DMatrix::identity(dim, dim))) <= tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Feedback,
    Evaluation,
    Environment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub label: String,
    pub role: Role,
}

impl Channel {
    pub fn new(label: impl Into<String>, role: Role) -> Self {
        Self { label: label.into(), role }
    }
}

/// `W1, W2, …` evaluation channels.
pub fn default_channels(m: usize) -> Vec<Channel> {
    (1..=m).map(|i| Channel::new(format!("W{i}"), Role::Evaluation)).collect()
}

/// Quadrature selected by a homodyne detector on one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Quadrature {
    Q,
    P,
    /// Measures `cos θ · Q + sin θ · P`.
    Angle(f64),
}

impl Quadrature {
    /// Measured row and conjugate row of the 2×2 block.
    fn rows(&self) -> ([f64; 2], [f64; 2]) {
        match *self {
            Quadrature::Q => ([1.0, 0.0], [0.0, 1.0]),
            Quadrature::P => ([0.0, 1.0], [-1.0, 0.0]),
            Quadrature::Angle(t) => ([t.cos(), t.sin()], [-t.sin(), t.cos()]),
        }
    }
}

/// Symplectic-orthogonal pair `(M₁, M₂)`: `M₁W` is measured (shot noise),
/// `M₂W` is its conjugate (back-action noise).
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSplit {
    M1: DMatrix<f64>,
    M2: DMatrix<f64>,
}

#[allow(non_snake_case)]
impl MeasurementSplit {
    /// Validate the seven defining identities to `1e-12·m`.
    pub fn new(M1: DMatrix<f64>, M2: DMatrix<f64>) -> Result<Self> {
        let m = M1.nrows();
        if M1.ncols() != 2 * m || M2.nrows() != m || M2.ncols() != 2 * m {
            return Err(Error::Shape(format!(
                "split must be m×2m, got M1 {}x{}, M2 {}x{}",
                M1.nrows(),
                M1.ncols(),
                M2.nrows(),
                M2.ncols()
            )));
        }
        let split = Self { M1, M2 };
        let worst = split.identity_residuals().into_iter().fold(0.0, f64::max);
        if worst > 1e-12 * (m.max(1) as f64) {
            return Err(Error::Validation(format!(
                "measurement split violates symplectic/orthogonal identities (residual {worst:.3e})"
            )));
        }
        Ok(split)
    }

    pub fn channels(&self) -> usize {
        self.M1.nrows()
    }
    pub fn m1(&self) -> &DMatrix<f64> {
        &self.M1
    }
    pub fn m2(&self) -> &DMatrix<f64> {
        &self.M2
    }

    /// Max-entry residuals of the seven identities, in the order
    /// M1ΣM1ᵀ=0, M1M1ᵀ=I, M2ΣM2ᵀ=0, M2M2ᵀ=I, M1ΣM2ᵀ=I, M1M2ᵀ=0, M1ᵀM1+M2ᵀM2=I.
    pub fn identity_residuals(&self) -> [f64; 7] {
        let m = self.channels();
        let s = sigma(m);
        let i_m = DMatrix::<f64>::identity(m, m);
        let i_2m = DMatrix::<f64>::identity(2 * m, 2 * m);
        let (a, b) = (&self.M1, &self.M2);
        [
            max_abs(&(a * &s * a.transpose())),
            max_abs(&(a * a.transpose() - &i_m)),
            max_abs(&(b * &s * b.transpose())),
            max_abs(&(b * b.transpose() - &i_m)),
            max_abs(&(a * &s * b.transpose() - &i_m)),
            max_abs(&(a * b.transpose())),
            max_abs(&(a.transpose() * a + b.transpose() * b - i_2m)),
        ]
    }

    /// Mix the detector outputs by an `m×m` orthogonal matrix `r`
    /// (`M₁ → rM₁`, `M₂ → rM₂`); the defining identities are preserved.
    pub fn rotated(&self, r: &DMatrix<f64>) -> Result<Self> {
        Self::new(r * &self.M1, r * &self.M2)
    }

    /// Random split from a Haar-like unitary `U = X + iY`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Self {
        let z = DMatrix::<Complex64>::from_fn(m, m, |_, _| {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let u = if m == 0 { z } else { z.qr().q() };
        let mut M1 = DMatrix::zeros(m, 2 * m);
        let mut M2 = DMatrix::zeros(m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                let (x, y) = (u[(i, j)].re, u[(i, j)].im);
                M1[(i, 2 * j)] = x;
                M1[(i, 2 * j + 1)] = -y;
                M2[(i, 2 * j)] = y;
                M2[(i, 2 * j + 1)] = x;
            }
        }
        Self::new(M1, M2).expect("unitary-derived split is symplectic-orthogonal")
    }
}

/// Split measuring one quadrature per channel.
pub fn homodyne_split(selectors: &[Quadrature]) -> MeasurementSplit {
    let m = selectors.len();
    let mut m1 = DMatrix::zeros(m, 2 * m);
    let mut m2 = DMatrix::zeros(m, 2 * m);
    for (i, q) in selectors.iter().enumerate() {
        let (r1, r2) = q.rows();
        m1[(i, 2 * i)] = r1[0];
        m1[(i, 2 * i + 1)] = r1[1];
        m2[(i, 2 * i)] = r2[0];
        m2[(i, 2 * i + 1)] = r2[1];
    }
    MeasurementSplit { M1: m1, M2: m2 }
}

/// Open linear quantum system in quadrature form.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumLinearSystem {
    G: DMatrix<f64>,
    C: DMatrix<f64>,
    channels: Vec<Channel>,
    force: Option<DVector<f64>>,
    mode_labels: Vec<String>,
    /// Homodyne selector per channel; `None` leaves the channel unmeasured.
    measurement: Vec<Option<Quadrature>>,
}

/// Validate and assemble a [`QuantumLinearSystem`].
///
/// `G` is symmetrized only when its asymmetry is within `1e-12·‖G‖`; larger
/// asymmetry is rejected.  Every channel defaults to a `P` homodyne.
#[allow(non_snake_case)]
pub fn build_system(
    G: DMatrix<f64>,
    C: DMatrix<f64>,
    channels: Vec<Channel>,
    force: Option<DVector<f64>>,
) -> Result<QuantumLinearSystem> {
    let dim = G.nrows();
    if G.ncols() != dim || dim % 2 != 0 {
        return Err(Error::Shape(format!("G must be square with even size, got {}x{}", dim, G.ncols())));
    }
    if C.ncols() != dim || C.nrows() % 2 != 0 {
        return Err(Error::Shape(format!(
            "C must be 2m×{dim} with even row count, got {}x{}",
            C.nrows(),
            C.ncols()
        )));
    }
    if !crate::linalg::all_finite(&G) || !crate::linalg::all_finite(&C) {
        return Err(Error::Validation("non-finite matrix entry".into()));
    }
    let asym = max_abs(&(&G - G.transpose()));
    let scale = max_abs(&G);
    if asym > SYM_TOL * scale {
        return Err(Error::Validation(format!("G is not symmetric (asymmetry {asym:.3e})")));
    }
    let G = (&G + G.transpose()) * 0.5;
    let m = C.nrows() / 2;
    if channels.len() != m {
        return Err(Error::Shape(format!("{} channel labels for {m} channels", channels.len())));
    }
    for (i, ch) in channels.iter().enumerate() {
        if channels[..i].iter().any(|c| c.label == ch.label) {
            return Err(Error::Validation(format!("duplicate channel label `{}`", ch.label)));
        }
    }
    if let Some(f) = &force {
        if f.len() != dim {
            return Err(Error::Shape(format!("force has length {}, expected {dim}", f.len())));
        }
        if f.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("non-finite force entry".into()));
        }
    }
    let n = dim / 2;
    let sys = QuantumLinearSystem {
        G,
        C,
        channels,
        force,
        mode_labels: (1..=n).map(|i| format!("mode{i}")).collect(),
        measurement: vec![Some(Quadrature::P); m],
    };
    let r = sys.realizability_residual();
    if r > SYM_TOL * (1.0 + max_abs(&sys.drift()) + max_abs(&sys.C).powi(2)) {
        return Err(Error::Inconsistent(format!("realizability reconstruction failed ({r:.3e})")));
    }
    Ok(sys)
}

#[allow(non_snake_case)]
impl QuantumLinearSystem {
    pub fn modes(&self) -> usize {
        self.G.nrows() / 2
    }
    pub fn channel_count(&self) -> usize {
        self.C.nrows() / 2
    }
    pub fn g(&self) -> &DMatrix<f64> {
        &self.G
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.C
    }
    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }
    pub fn force(&self) -> Option<&DVector<f64>> {
        self.force.as_ref()
    }
    pub fn mode_labels(&self) -> &[String] {
        &self.mode_labels
    }
    pub fn measurement(&self) -> &[Option<Quadrature>] {
        &self.measurement
    }

    pub fn with_mode_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.modes() {
            return Err(Error::Shape(format!("{} mode labels for {} modes", labels.len(), self.modes())));
        }
        self.mode_labels = labels;
        Ok(self)
    }

    pub fn with_measurement(mut self, sel: Vec<Option<Quadrature>>) -> Result<Self> {
        if sel.len() != self.channel_count() {
            return Err(Error::Shape(format!(
                "{} measurement selectors for {} channels",
                sel.len(),
                self.channel_count()
            )));
        }
        self.measurement = sel;
        Ok(self)
    }

    pub fn with_roles(mut self, roles: &[Role]) -> Result<Self> {
        if roles.len() != self.channel_count() {
            return Err(Error::Shape("one role per channel required".into()));
        }
        for (c, r) in self.channels.iter_mut().zip(roles) {
            c.role = *r;
        }
        Ok(self)
    }

    /// Drift `A = Σ(G + CᵀΣC/2)`.
    ///
    /// `CᵀΣC` is accumulated channel by channel, so channels with zero
    /// coupling leave the result bit-for-bit unchanged.
    pub fn drift(&self) -> DMatrix<f64> {
        let sn = sigma(self.modes());
        let dim = self.G.nrows();
        let mut csc = DMatrix::zeros(dim, dim);
        for j in 0..self.channel_count() {
            let cq = self.C.row(2 * j).transpose();
            let cp = self.C.row(2 * j + 1).transpose();
            csc += &cq * cp.transpose() - &cp * cq.transpose();
        }
        &sn * (&self.G + csc * 0.5)
    }

    /// Noise input map `B = ΣₙCᵀΣₘ`.
    pub fn noise_input(&self) -> DMatrix<f64> {
        sigma(self.modes()) * self.C.transpose() * sigma(self.channel_count())
    }

    /// Asymmetry of `ΣᵀA − CᵀΣC/2` (zero for a physically realizable drift).
    pub fn realizability_residual(&self) -> f64 {
        let sn = sigma(self.modes());
        let sm = sigma(self.channel_count());
        let h = sn.transpose() * self.drift() - self.C.transpose() * &sm * &self.C * 0.5;
        max_abs(&(&h - h.transpose()))
    }

    pub fn channel_index(&self, label: &str) -> Result<usize> {
        self.channels
            .iter()
            .position(|c| c.label == label)
            .ok_or_else(|| Error::UnknownPort(label.to_string()))
    }

    /// Channels carrying a homodyne detector, in channel order.
    pub fn measured_channels(&self) -> Vec<usize> {
        (0..self.channel_count()).filter(|&i| self.measurement[i].is_some()).collect()
    }

    /// Split on the measured channels only.
    pub fn split(&self) -> MeasurementSplit {
        let sel: Vec<Quadrature> = self.measurement.iter().flatten().copied().collect();
        homodyne_split(&sel)
    }

    /// `(M₁, M₂)` of the measured channels embedded into the full field
    /// (zero columns for unmeasured channels).
    pub fn embedded_split(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        embed_split(&self.split(), &self.measured_channels(), self.channel_count())
    }

    /// Row indices `(2j, 2j+1)` of the listed channels.
    pub fn channel_rows(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().flat_map(|&j| [2 * j, 2 * j + 1]).collect()
    }

    pub fn channels_with_role(&self, role: Role) -> Vec<usize> {
        (0..self.channel_count()).filter(|&i| self.channels[i].role == role).collect()
    }

    /// Input ports for a BAE test: the conjugate of every measured quadrature
    /// (`P`) plus every unmeasured channel.
    pub fn ba_ports(&self) -> Vec<String> {
        let mut v = vec!["P".to_string()];
        for (i, ch) in self.channels.iter().enumerate() {
            if self.measurement[i].is_none() {
                v.push(ch.label.clone());
            }
        }
        v
    }

    /// Realization with noise views, field outputs, the measured output `y`
    /// and the force port `F`.
    pub fn to_state_space(&self) -> Result<StateSpaceModel> {
        let m = self.channel_count();
        let field = FieldPorts {
            channels: &self.channels,
            measured: self.measured_channels(),
            split: self.split(),
            feedback: vec![],
        };
        let a = self.drift();
        let bw = self.noise_input();
        let mut outs = vec![OutputSpec::new("Wout", self.C.clone(), DMatrix::identity(2 * m, 2 * m))];
        let meas = field.measured.clone();
        if !meas.is_empty() {
            let (m1e, _) = self.embedded_split();
            outs.insert(0, OutputSpec::new("y", &m1e * &self.C, m1e));
        }
        for (j, ch) in self.channels.iter().enumerate() {
            let rows = [2 * j, 2 * j + 1];
            let mut o = DMatrix::zeros(2, 2 * m);
            o[(0, 2 * j)] = 1.0;
            o[(1, 2 * j + 1)] = 1.0;
            outs.push(OutputSpec::new(format!("{}.out", ch.label), select_rows(&self.C, &rows), o));
        }
        let extra: Vec<(String, DMatrix<f64>)> = self
            .force
            .iter()
            .map(|f| ("F".to_string(), DMatrix::from_column_slice(f.len(), 1, f.as_slice())))
            .collect();
        assemble(a, &bw, &field.views(), &outs, &extra)
    }
}

pub(crate) fn embed_split(
    split: &MeasurementSplit,
    channels: &[usize],
    total: usize,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let k = channels.len();
    let mut m1 = DMatrix::zeros(k, 2 * total);
    let mut m2 = DMatrix::zeros(k, 2 * total);
    for (local, &j) in channels.iter().enumerate() {
        for r in 0..k {
            for s in 0..2 {
                m1[(r, 2 * j + s)] = split.m1()[(r, 2 * local + s)];
                m2[(r, 2 * j + s)] = split.m2()[(r, 2 * local + s)];
            }
        }
    }
    (m1, m2)
}

/// Output port description: `out = C x + O W` with `W` the physical field noise.
pub(crate) struct OutputSpec {
    pub name: String,
    pub c: DMatrix<f64>,
    pub o: DMatrix<f64>,
}

impl OutputSpec {
    pub fn new(name: impl Into<String>, c: DMatrix<f64>, o: DMatrix<f64>) -> Self {
        Self { name: name.into(), c, o }
    }
}

/// Noise view: the port value `v` enters the field as `W = E v`.
pub(crate) struct NoiseView {
    pub name: String,
    pub e: DMatrix<f64>,
}

/// Standard set of noise views for a field of labelled channels.
pub(crate) struct FieldPorts<'a> {
    pub channels: &'a [Channel],
    /// Channels measured by the evaluation split (`Q`/`P` views).
    pub measured: Vec<usize>,
    pub split: MeasurementSplit,
    /// Named channel groups, e.g. `W1` for the feedback set.
    pub feedback: Vec<(String, Vec<usize>)>,
}

impl FieldPorts<'_> {
    pub fn views(&self) -> Vec<NoiseView> {
        let m = self.channels.len();
        let mut v = vec![NoiseView { name: "W".into(), e: DMatrix::identity(2 * m, 2 * m) }];
        for (name, group) in &self.feedback {
            v.push(NoiseView { name: name.clone(), e: channel_selector(group, m) });
        }
        if !self.measured.is_empty() {
            let (m1e, m2e) = embed_split(&self.split, &self.measured, m);
            v.push(NoiseView { name: "Q".into(), e: m1e.transpose() });
            v.push(NoiseView { name: "P".into(), e: m2e.transpose() });
        }
        for (j, ch) in self.channels.iter().enumerate() {
            v.push(NoiseView { name: ch.label.clone(), e: channel_selector(&[j], m) });
            for (s, q) in ["Q", "P"].iter().enumerate() {
                let mut e = DMatrix::zeros(2 * m, 1);
                e[(2 * j + s, 0)] = 1.0;
                v.push(NoiseView { name: format!("{}.{}", ch.label, q), e });
            }
        }
        v
    }
}

/// `2m × 2|group|` matrix embedding the listed channels into the field.
pub(crate) fn channel_selector(group: &[usize], m: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(2 * m, 2 * group.len());
    for (k, &j) in group.iter().enumerate() {
        e[(2 * j, 2 * k)] = 1.0;
        e[(2 * j + 1, 2 * k + 1)] = 1.0;
    }
    e
}

/// Build a model whose noise views all derive from one physical field.
pub(crate) fn assemble(
    a: DMatrix<f64>,
    noise_b: &DMatrix<f64>,
    views: &[NoiseView],
    outputs: &[OutputSpec],
    extra_inputs: &[(String, DMatrix<f64>)],
) -> Result<StateSpaceModel> {
    let mut b = Builder::new(a);
    for v in views {
        b = b.input(v.name.clone(), noise_b * &v.e);
    }
    for (name, blk) in extra_inputs {
        b = b.input(name.clone(), blk.clone());
    }
    for o in outputs {
        b = b.output(o.name.clone(), o.c.clone());
    }
    for o in outputs {
        for v in views {
            b = b.direct(o.name.clone(), v.name.clone(), &o.o * &v.e);
        }
    }
    b.build()
}

/// Append `extra` vacuum channels with zero coupling.  `extra = 0` returns the
/// system unchanged.
pub fn augment_with_vacuum(sys: &QuantumLinearSystem, extra: usize) -> QuantumLinearSystem {
    if extra == 0 {
        return sys.clone();
    }
    let mut out = sys.clone();
    let zeros = DMatrix::zeros(2 * extra, sys.C.ncols());
    out.C = vcat(&[&sys.C, &zeros]);
    let mut k = 1;
    for _ in 0..extra {
        while out.channels.iter().any(|c| c.label == format!("V{k}")) {
            k += 1;
        }
        out.channels.push(Channel::new(format!("V{k}"), Role::Environment));
        out.measurement.push(None);
    }
    out
}

/// Convert annihilation-operator dynamics `da/dt = A_c a + …` with output
/// couplings `L_j = Σₖ ℓ_jk a_k` into quadrature form.
///
/// Each coupling row `ℓ_j = u + iv` becomes the 2×2 blocks `[[u, −v], [v, u]]`
/// of `C`; the noise input is implied (`B = ΣCᵀΣ`).
pub fn complex_to_quadrature(
    drift: &DMatrix<Complex64>,
    couplings: &[DVector<Complex64>],
) -> Result<QuantumLinearSystem> {
    let n = drift.nrows();
    if drift.ncols() != n {
        return Err(Error::Shape("complex drift must be square".into()));
    }
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    for j in 0..n {
        for k in 0..n {
            let z = drift[(j, k)];
            a[(2 * j, 2 * k)] = z.re;
            a[(2 * j, 2 * k + 1)] = -z.im;
            a[(2 * j + 1, 2 * k)] = z.im;
            a[(2 * j + 1, 2 * k + 1)] = z.re;
        }
    }
    let m = couplings.len();
    let mut c = DMatrix::zeros(2 * m, 2 * n);
    for (j, l) in couplings.iter().enumerate() {
        if l.len() != n {
            return Err(Error::Shape(format!("coupling {j} has length {}, expected {n}", l.len())));
        }
        for k in 0..n {
            let z = l[k];
            c[(2 * j, 2 * k)] = z.re;
            c[(2 * j, 2 * k + 1)] = -z.im;
            c[(2 * j + 1, 2 * k)] = z.im;
            c[(2 * j + 1, 2 * k + 1)] = z.re;
        }
    }
    from_drift(&a, c, default_channels(m))
}

/// Recover `G = ΣᵀA − CᵀΣC/2` from a quadrature drift and build the system;
/// a non-symmetric result means the drift is not physically realizable.
pub fn from_drift(a: &DMatrix<f64>, c: DMatrix<f64>, channels: Vec<Channel>) -> Result<QuantumLinearSystem> {
    let dim = a.nrows();
    if a.ncols() != dim || dim % 2 != 0 || c.ncols() != dim || c.nrows() % 2 != 0 {
        return Err(Error::Shape("drift/coupling dimensions inconsistent".into()));
    }
    let sn = sigma(dim / 2);
    let sm = sigma(c.nrows() / 2);
    let g = sn.transpose() * a - c.transpose() * &sm * &c * 0.5;
    let asym = max_abs(&(&g - g.transpose()));
    if asym > SYM_TOL * (1.0 + max_abs(a) + max_abs(&c).powi(2)) {
        return Err(Error::Validation(format!(
            "drift is not physically realizable with this coupling (asymmetry {asym:.3e})"
        )));
    }
    let g = (&g + g.transpose()) * 0.5;
    build_system(g, c, channels, None)
}

/// Inverse of [`complex_to_quadrature`] for passive systems.
pub fn quadrature_to_complex(
    sys: &QuantumLinearSystem,
) -> Result<(DMatrix<Complex64>, Vec<DVector<Complex64>>)> {
    let a = sys.drift();
    let n = sys.modes();
    let tol = 1e-12 * (1.0 + max_abs(&a));
    let mut drift = DMatrix::from_element(n, n, Complex64::new(0.0, 0.0));
    for j in 0..n {
        for k in 0..n {
            let (x, y) = (a[(2 * j, 2 * k)], a[(2 * j + 1, 2 * k)]);
            if (a[(2 * j + 1, 2 * k + 1)] - x).abs() > tol || (a[(2 * j, 2 * k + 1)] + y).abs() > tol {
                return Err(Error::Validation("drift mixes a and a† (not passive)".into()));
            }
            drift[(j, k)] = Complex64::new(x, y);
        }
    }
    let c = sys.c();
    let mut out = Vec::new();
    for j in 0..sys.channel_count() {
        let mut l = DVector::from_element(n, Complex64::new(0.0, 0.0));
        for k in 0..n {
            let (u, v) = (c[(2 * j, 2 * k)], c[(2 * j + 1, 2 * k)]);
            if (c[(2 * j + 1, 2 * k + 1)] - u).abs() > tol || (c[(2 * j, 2 * k + 1)] + v).abs() > tol {
                return Err(Error::Validation("coupling mixes a and a† (not passive)".into()));
            }
            l[k] = Complex64::new(u, v);
        }
        out.push(l);
    }
    Ok((drift, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn cavity(kappa: f64) -> QuantumLinearSystem {
        let c = DMatrix::identity(2, 2) * (2.0 * kappa).sqrt();
        build_system(DMatrix::zeros(2, 2), c, default_channels(1), None).unwrap()
    }

    #[test]
    fn lossy_cavity_drift() {
        let s = cavity(1.0);
        assert!((s.drift() + DMatrix::<f64>::identity(2, 2)).norm() < 1e-15);
        assert!((s.noise_input() + DMatrix::<f64>::identity(2, 2) * 2f64.sqrt()).norm() < 1e-15);
    }

    #[test]
    fn isolated_mode_is_zero() {
        let s = build_system(DMatrix::zeros(2, 2), DMatrix::zeros(2, 2), default_channels(1), None).unwrap();
        assert_eq!(s.drift(), DMatrix::zeros(2, 2));
        assert_eq!(s.noise_input(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn oscillator_probe_drift() {
        let (m, w, l) = (2.0_f64, 0.5_f64, 3.0_f64);
        let g = DMatrix::from_row_slice(2, 2, &[m * w * w, 0.0, 0.0, 1.0 / m]);
        let c = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, l.sqrt(), 0.0]);
        let s = build_system(g, c, default_channels(1), None).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[0.0, 1.0 / m, -m * w * w, 0.0]);
        assert!((s.drift() - want).norm() < 1e-15);
    }

    #[test]
    fn asymmetric_g_rejected() {
        let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        let r = build_system(g, DMatrix::zeros(2, 2), default_channels(1), None);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn odd_dimensions_rejected() {
        let r = build_system(DMatrix::zeros(3, 3), DMatrix::zeros(2, 3), default_channels(1), None);
        assert!(matches!(r, Err(Error::Shape(_))));
        let r = build_system(DMatrix::zeros(2, 2), DMatrix::zeros(3, 2), default_channels(1), None);
        assert!(matches!(r, Err(Error::Shape(_))));
    }

    #[test]
    fn homodyne_selectors() {
        let p = homodyne_split(&[Quadrature::P]);
        assert_eq!(p.m1().as_slice(), &[0.0, 1.0]);
        assert_eq!(p.m2().as_slice(), &[-1.0, 0.0]);
        let q = homodyne_split(&[Quadrature::Q]);
        assert_eq!(q.m1().as_slice(), &[1.0, 0.0]);
        assert_eq!(q.m2().as_slice(), &[0.0, 1.0]);
        let pp = homodyne_split(&[Quadrature::P, Quadrature::P]);
        let want = DMatrix::from_row_slice(2, 4, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(pp.m1(), &want);
        assert!(pp.identity_residuals().iter().all(|&r| r < 1e-15));
    }

    #[test]
    fn only_one_p_sign_choice_is_valid() {
        // enumerate M2 = [±1, 0] and [0, ±1] against M1 = [0, 1]
        let m1 = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        let candidates = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let valid: Vec<_> = candidates
            .iter()
            .filter(|c| MeasurementSplit::new(m1.clone(), DMatrix::from_row_slice(1, 2, &c[..])).is_ok())
            .collect();
        assert_eq!(valid, vec![&[-1.0, 0.0]]);
    }

    #[test]
    fn random_split_is_valid() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for m in 1..=5 {
            let s = MeasurementSplit::random(&mut rng, m);
            assert!(s.identity_residuals().iter().all(|&r| r < 1e-12 * m as f64));
        }
    }

    #[test]
    fn vacuum_augmentation_keeps_drift() {
        let s = cavity(0.7);
        let t = augment_with_vacuum(&s, 1);
        assert_eq!(t.channel_count(), 2);
        assert_eq!(t.drift(), s.drift());
        assert!(t.c().rows(2, 2).iter().all(|&x| x == 0.0));
        assert_eq!(augment_with_vacuum(&s, 0), s);
    }

    #[test]
    fn complex_single_mode() {
        let k = 0.8;
        let drift = DMatrix::from_element(1, 1, Complex64::new(-k, 0.0));
        let l = DVector::from_element(1, Complex64::new((2.0 * k).sqrt(), 0.0));
        let s = complex_to_quadrature(&drift, &[l]).unwrap();
        assert!((s.drift() + DMatrix::<f64>::identity(2, 2) * k).norm() < 1e-15);
        assert!((s.c() - DMatrix::<f64>::identity(2, 2) * (2.0 * k).sqrt()).norm() < 1e-15);
    }

    #[test]
    fn complex_zero_system() {
        let drift = DMatrix::from_element(2, 2, Complex64::new(0.0, 0.0));
        let s = complex_to_quadrature(&drift, &[]).unwrap();
        assert_eq!(s.drift(), DMatrix::zeros(4, 4));
        assert_eq!(s.channel_count(), 0);
    }

    #[test]
    fn non_realizable_complex_drift_rejected() {
        // amplitude damping without an output channel violates the CCR
        let drift = DMatrix::from_element(1, 1, Complex64::new(-1.0, 0.0));
        assert!(matches!(complex_to_quadrature(&drift, &[]), Err(Error::Validation(_))));
    }

    #[test]
    fn state_space_ports_of_cavity() {
        let s = cavity(1.0);
        let ss = s.to_state_space().unwrap();
        // y = P_out, shot noise is P, back-action is -Q
        let d = ss.feedthrough(&["y"], &["Q"]).unwrap();
        assert_eq!(d[(0, 0)], 1.0);
        assert_eq!(ss.feedthrough(&["y"], &["P"]).unwrap()[(0, 0)], 0.0);
        assert_eq!(ss.input_matrix(&["W"]).unwrap(), s.noise_input());
        assert_eq!(ss.input_matrix(&["W1.Q"]).unwrap().ncols(), 1);
        assert!(!ss.has_input("F"));
    }
}
