//! BAE, QND and DFS verdicts.
//!
//! Each verdict is computed by two independent routes:
//!
//! * **geometric** — orthonormal Krylov bases of the controllable and
//!   observable subspaces, combined by subspace algebra;
//! * **Markov** — explicit Markov parameters (BAE) or null spaces of the
//!   scaled stacked power matrices (QND, DFS).
//!
//! `method_agreement` records whether the routes concur.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{echelon_basis, max_abs, norm2, null_space, RankTol};
use crate::statespace::StateSpaceModel;
use crate::structural::{
    complement, controllable_subspace, intersect_tol, observable_subspace, scaled_power_stack, Subspace,
    ANGLE_TOL, STACKED_REL_TOL,
};
use crate::xfer::{probe_radius, resolvent_product};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Goal {
    Bae,
    Qnd,
    Dfs,
}

impl std::str::FromStr for Goal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bae" => Ok(Goal::Bae),
            "qnd" => Ok(Goal::Qnd),
            "dfs" => Ok(Goal::Dfs),
            _ => Err(Error::Validation(format!("unknown goal `{s}` (bae|qnd|dfs)"))),
        }
    }
}

impl std::fmt::Display for Goal {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Goal::Bae => "bae",
            Goal::Qnd => "qnd",
            Goal::Dfs => "dfs",
        })
    }
}

/// Numerical thresholds used by the verdict engines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Markov term `k` counts as zero when `max|CAᵏB| ≤ markov_rel·(1+‖A‖)ᵏ·‖B‖·‖C‖`.
    pub markov_rel: f64,
    /// Relative singular-value cutoff for the stacked power matrices.
    pub stacked_rel: f64,
    /// Principal-angle tolerance for intersections and BAE containment.
    pub angle: f64,
    /// Largest principal angle at which the two routes' witness subspaces
    /// are considered equal.
    pub agreement_angle: f64,
    /// Transfer probes count as zero below `probe_rel·‖B‖‖C‖/(|s|−‖A‖)`.
    pub probe_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { markov_rel: 1e-9, stacked_rel: STACKED_REL_TOL, angle: ANGLE_TOL, agreement_angle: 1e-6, probe_rel: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalVerdict {
    pub goal: Goal,
    pub achieved: bool,
    /// Unit-norm witness vectors (QND variables or DFS coordinates); empty
    /// for BAE.
    pub witnesses: Vec<Vec<f64>>,
    /// BAE: largest raw Markov entry `max_k max|CAᵏB|`.  QND/DFS: relative
    /// smallest singular value of the stacked constraint matrix (zero when a
    /// witness exists, the distance to achieving the goal otherwise).
    pub residual: f64,
    /// Residual on the scale the decision is taken on.
    pub scaled_residual: f64,
    /// Decision threshold for `scaled_residual`.
    pub tolerance: f64,
    pub method_agreement: bool,
    /// Dimension found by the Krylov route (BAE: 0 when containment holds).
    pub geometric_dim: usize,
    /// Dimension found by the stacked route (BAE: index of the first nonzero
    /// Markov term + 1, or 0).
    pub markov_dim: usize,
    /// Per-term `max|CAᵏB|` for BAE diagnostics.
    pub markov_terms: Vec<f64>,
}

impl GoalVerdict {
    pub fn witness_vectors(&self) -> Vec<DVector<f64>> {
        self.witnesses.iter().map(|w| DVector::from_vec(w.clone())).collect()
    }

    pub fn witness_subspace(&self, ambient: usize) -> Subspace {
        if self.witnesses.is_empty() {
            return Subspace::zero(ambient);
        }
        let m = DMatrix::from_fn(ambient, self.witnesses.len(), |i, j| self.witnesses[j][i]);
        Subspace::span(&m)
    }
}

/// Back-action evasion: no transfer from the back-action ports to the
/// measured output.
pub fn check_bae(model: &StateSpaceModel, ba_ports: &[&str], shot_output: &str, tol: &Tolerances) -> Result<GoalVerdict> {
    let b = model.input_matrix(ba_ports)?;
    let c = model.output_matrix(&[shot_output])?;
    let a = model.a();
    let n = model.state_dim();

    // geometric: Range(𝒞_P) must lie inside Ker(𝒪_y)
    let ctrl = controllable_subspace(model, ba_ports)?;
    let obs = observable_subspace(model, &[shot_output])?;
    let overlap = if ctrl.is_empty() || obs.is_empty() { 0.0 } else { norm2(&(obs.basis().transpose() * ctrl.basis())) };
    let geo_ok = overlap <= tol.angle;

    // Markov: per-term scaled zero test
    let (an, bn, cn) = (norm2(a), norm2(&b), norm2(&c));
    let mut terms = Vec::with_capacity(n);
    let mut cur = b.clone();
    let mut raw = 0.0_f64;
    let mut scaled = 0.0_f64;
    let mut first_nonzero = 0;
    for k in 0..n {
        let t = max_abs(&(&c * &cur));
        terms.push(t);
        raw = raw.max(t);
        let denom = (1.0 + an).powi(k as i32) * bn * cn;
        let st = if denom > 0.0 { t / denom } else { 0.0 };
        if st > tol.markov_rel && first_nonzero == 0 {
            first_nonzero = k + 1;
        }
        scaled = scaled.max(st);
        cur = a * cur;
    }
    let markov_ok = scaled <= tol.markov_rel;
    Ok(GoalVerdict {
        goal: Goal::Bae,
        achieved: markov_ok,
        witnesses: vec![],
        residual: raw,
        scaled_residual: scaled,
        tolerance: tol.markov_rel,
        method_agreement: geo_ok == markov_ok,
        geometric_dim: if geo_ok { 0 } else { ctrl.rank().min(obs.rank()) },
        markov_dim: first_nonzero,
        markov_terms: terms,
    })
}

/// QND variables: directions untouched by every noise port yet visible in
/// the measured output, optionally restricted to a subspace.
pub fn find_qnd(
    model: &StateSpaceModel,
    noise_ports: &[&str],
    output: &str,
    restrict_to: Option<&Subspace>,
    tol: &Tolerances,
) -> Result<GoalVerdict> {
    let n = model.state_dim();
    let restrict = check_restriction(restrict_to, n)?;
    let a = model.a();
    let b = model.input_matrix(noise_ports)?;
    let c = model.output_matrix(&[output])?;

    let unctrl = complement(&controllable_subspace(model, noise_ports)?);
    let obs = observable_subspace(model, &[output])?;
    let geo = intersect_tol(&intersect_tol(&unctrl, &obs, tol.angle)?, &restrict, tol.angle)?;

    let ctrl_rows = scaled_power_stack(a, &b).transpose();
    let unobs = unobservable_stacked(a, &c, tol);
    let rc = complement(&restrict);
    let stack = stack_rows(&[&ctrl_rows, &unobs.transpose(), &rc.basis().transpose()], n);
    finish(Goal::Qnd, geo, &stack, n, tol)
}

/// Decoherence-free subsystem: directions uncontrollable from every noise
/// port and unobservable in every listed field output.
pub fn find_dfs(
    model: &StateSpaceModel,
    noise_ports: &[&str],
    output_fields: &[&str],
    restrict_to: Option<&Subspace>,
    tol: &Tolerances,
) -> Result<GoalVerdict> {
    let n = model.state_dim();
    let restrict = check_restriction(restrict_to, n)?;
    let a = model.a();
    let b = model.input_matrix(noise_ports)?;
    let c = model.output_matrix(output_fields)?;

    let unctrl = complement(&controllable_subspace(model, noise_ports)?);
    let unobs = complement(&observable_subspace(model, output_fields)?);
    let geo = intersect_tol(&intersect_tol(&unctrl, &unobs, tol.angle)?, &restrict, tol.angle)?;

    let ctrl_rows = scaled_power_stack(a, &b).transpose();
    let obs_rows = scaled_power_stack(&a.transpose(), &c.transpose()).transpose();
    let rc = complement(&restrict);
    let stack = stack_rows(&[&ctrl_rows, &obs_rows, &rc.basis().transpose()], n);
    finish(Goal::Dfs, geo, &stack, n, tol)
}

fn check_restriction(r: Option<&Subspace>, n: usize) -> Result<Subspace> {
    match r {
        None => Ok(Subspace::full(n)),
        Some(s) if s.ambient_dim() == n => Ok(s.clone()),
        Some(s) => Err(Error::Shape(format!("restriction lives in ℝ^{}, state is ℝ^{n}", s.ambient_dim()))),
    }
}

fn unobservable_stacked(a: &DMatrix<f64>, c: &DMatrix<f64>, tol: &Tolerances) -> DMatrix<f64> {
    let n = a.nrows();
    if c.nrows() == 0 || norm2(c) == 0.0 {
        return DMatrix::identity(n, n);
    }
    let o = scaled_power_stack(&a.transpose(), &c.transpose()).transpose();
    null_space(&o, RankTol::Relative(tol.stacked_rel))
}

fn stack_rows(blocks: &[&DMatrix<f64>], n: usize) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, n);
    let mut r = 0;
    for b in blocks {
        out.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    out
}

fn finish(goal: Goal, geo: Subspace, stack: &DMatrix<f64>, n: usize, tol: &Tolerances) -> Result<GoalVerdict> {
    let (markov, gap) = if stack.nrows() == 0 {
        (Subspace::full(n), 0.0)
    } else {
        let ns = null_space(stack, RankTol::Relative(tol.stacked_rel));
        let sv = crate::linalg::singular_values(stack);
        let smax = sv.iter().fold(0.0_f64, |x, &y| x.max(y));
        let smin = if stack.nrows() < n { 0.0 } else { sv.iter().fold(f64::INFINITY, |x, &y| x.min(y)) };
        let gap = if smax > 0.0 { smin / smax } else { 0.0 };
        (Subspace::from_orthonormal(ns)?, gap)
    };
    let agree = geo.rank() == markov.rank() && (geo.is_empty() || geo.max_angle(&markov) <= tol.agreement_angle);
    let witnesses = echelon_basis(geo.basis(), 1e-9).into_iter().map(|v| v.iter().copied().collect()).collect();
    Ok(GoalVerdict {
        goal,
        achieved: !geo.is_empty(),
        witnesses,
        residual: gap,
        scaled_residual: gap,
        tolerance: tol.stacked_rel,
        method_agreement: agree,
        geometric_dim: geo.rank(),
        markov_dim: markov.rank(),
        markov_terms: vec![],
    })
}

/// Deterministic probe points on the circle `|s| = 2‖A‖+1`.
pub fn probe_points(a: &DMatrix<f64>, count: usize) -> Vec<Complex64> {
    let rho = probe_radius(a);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c0de);
    (0..count)
        .map(|_| {
            let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            Complex64::from_polar(rho, th)
        })
        .collect()
}

/// Whether the strictly proper transfer `C(sI−A)⁻¹B` vanishes, judged by
/// probing 16 points.
pub fn transfer_vanishes(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, tol: &Tolerances) -> Result<bool> {
    let scale = norm2(b) * norm2(c);
    if scale == 0.0 {
        return Ok(true);
    }
    let rho = probe_radius(a);
    let thr = tol.probe_rel * scale / (rho - norm2(a));
    let mut worst = 0.0_f64;
    let mut pts = probe_points(a, 16).into_iter();
    let mut evaluated = 0;
    while evaluated < 16 {
        let s = match pts.next() {
            Some(s) => s,
            None => {
                // resample on a slightly larger circle
                Complex64::from_polar(rho * 1.01, evaluated as f64 * 0.37)
            }
        };
        match resolvent_product(a, b, c, s) {
            Ok(g) => {
                worst = worst.max(g.iter().fold(0.0_f64, |x, z| x.max(z.norm())));
                evaluated += 1;
            }
            Err(Error::Singular { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(worst <= thr)
}

/// Markov-parameter zero test with the per-term scaling used by [`check_bae`].
pub fn markov_vanishes(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, tol: &Tolerances) -> bool {
    let (an, bn, cn) = (norm2(a), norm2(b), norm2(c));
    if bn * cn == 0.0 {
        return true;
    }
    let mut cur = b.clone();
    for k in 0..a.nrows().max(1) {
        let t = max_abs(&(c * &cur)) / ((1.0 + an).powi(k as i32) * bn * cn);
        if t > tol.markov_rel {
            return false;
        }
        cur = a * cur;
    }
    true
}

/// True when the Markov-parameter zero test and transfer probing agree for
/// the given port groups.
pub fn transfer_zero_equivalence(model: &StateSpaceModel, inputs: &[&str], outputs: &[&str], tol: &Tolerances) -> Result<bool> {
    let b = model.input_matrix(inputs)?;
    let c = model.output_matrix(outputs)?;
    Ok(markov_vanishes(model.a(), &b, &c, tol) == transfer_vanishes(model.a(), &b, &c, tol)?)
}

/// Confirm a QND/DFS verdict's witnesses through transfer probing: the noise
/// must not reach the witness coordinates, and (QND) the witnesses must reach
/// the output or (DFS) must not.
pub fn witnesses_confirmed_by_transfer(
    model: &StateSpaceModel,
    verdict: &GoalVerdict,
    noise_ports: &[&str],
    outputs: &[&str],
    tol: &Tolerances,
) -> Result<bool> {
    if verdict.witnesses.is_empty() {
        return Ok(true);
    }
    let n = model.state_dim();
    let v = DMatrix::from_fn(n, verdict.witnesses.len(), |i, j| verdict.witnesses[j][i]);
    let b = model.input_matrix(noise_ports)?;
    let c = model.output_matrix(outputs)?;
    let a = model.a();
    let untouched = transfer_vanishes(a, &b, &v.transpose(), tol)?;
    Ok(match verdict.goal {
        Goal::Qnd => untouched && v.columns(0, v.ncols()).column_iter().all(|col| {
            let col = DMatrix::from_column_slice(n, 1, col.as_slice());
            !transfer_vanishes(a, &col, &c, tol).unwrap_or(false)
        }),
        Goal::Dfs => untouched && transfer_vanishes(a, &v, &c, tol)?,
        Goal::Bae => true,
    })
}
