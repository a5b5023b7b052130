//! Randomized evidence that classical measurement feedback cannot create
//! BAE, QND variables or DFSs the plant does not already have.
//!
//! Each trial samples a stable classical controller and a random homodyne
//! split, closes the loop and runs the goal checker restricted to the plant
//! block.  Trials use independent ChaCha streams derived from one seed, so a
//! report is reproducible regardless of thread scheduling.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goals::{check_bae, find_dfs, find_qnd, Goal, GoalVerdict, Tolerances};
use crate::interconnect::{mf_type1, mf_type2, plant_block, ClassicalController};
use crate::model::{homodyne_split, MeasurementSplit, QuantumLinearSystem, Role};
use crate::statespace::StateSpaceModel;

/// Measurement-feedback configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Mf1,
    Mf2,
}

impl FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mf1" => Ok(Scheme::Mf1),
            "mf2" => Ok(Scheme::Mf2),
            _ => Err(Error::Validation(format!("unknown scheme `{s}` (expected mf1 or mf2)"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Mf1 => "mf1",
            Scheme::Mf2 => "mf2",
        })
    }
}

/// Number of the no-go statement covered by a (goal, scheme) pair.
pub fn theorem_number(goal: Goal, scheme: Scheme) -> u8 {
    let base = match goal {
        Goal::Bae => 1,
        Goal::Qnd => 2,
        Goal::Dfs => 3,
    };
    match scheme {
        Scheme::Mf1 => base,
        Scheme::Mf2 => base + 3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NogoReport {
    pub theorem: u8,
    pub plant_id: String,
    pub goal: Goal,
    pub scheme: Scheme,
    pub trials: usize,
    /// Trials whose random split already gives the bare plant the goal.
    pub skipped: usize,
    pub violations: usize,
    /// Trial indices of violations, for replay.
    pub violating_trials: Vec<usize>,
    /// Trials where the two verdict routes disagreed.
    pub disagreements: usize,
    /// Smallest closed-loop goal residual over evaluated trials
    /// (`+∞` when none were evaluated).
    pub worst_residual_gap: f64,
    /// Evaluated trials whose residual came within 100× of the tolerance.
    pub near_misses: usize,
    pub tolerance: f64,
    pub controller_dims: (usize, usize),
    pub seed: u64,
}

/// Sample a controller of dimension drawn uniformly from `dims`.
///
/// `A_K`, `B_K`, `C_K` have i.i.d. standard normal entries scaled by
/// `1/√dim`; `A_K` is then shifted by a multiple of the identity so every
/// eigenvalue has real part ≤ −0.1.
pub fn sample_classical_controller<R: Rng + ?Sized>(
    rng: &mut R,
    inputs: usize,
    outputs: usize,
    dims: std::ops::RangeInclusive<usize>,
) -> ClassicalController {
    let k = rng.random_range(dims);
    if k == 0 {
        return ClassicalController::zero(inputs, outputs);
    }
    let s = 1.0 / (k as f64).sqrt();
    let mut gauss = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| { let x: f64 = StandardNormal.sample(&mut *rng); s * x });
    let mut a = gauss(k, k);
    let b = gauss(k, inputs);
    let c = gauss(outputs, k);
    let max_re = crate::linalg::eigenvalues(&a).iter().fold(f64::NEG_INFINITY, |m, z| m.max(z.re));
    if max_re > -0.1 {
        for i in 0..k {
            a[(i, i)] -= max_re + 0.1;
        }
    }
    ClassicalController { a, b, c }
}

/// Splits a scheme needs: the driving split and, for type 2, the evaluation
/// split.
#[derive(Debug, Clone)]
pub struct LoopSplits {
    pub feedback: MeasurementSplit,
    pub evaluation: Option<MeasurementSplit>,
}

/// The splits attached to the plant's own measurement settings.
pub fn plant_splits(plant: &QuantumLinearSystem, scheme: Scheme) -> Result<LoopSplits> {
    let sel = plant.measurement();
    match scheme {
        Scheme::Mf1 => {
            let q: Option<Vec<_>> = sel.iter().copied().collect();
            let q = q.ok_or_else(|| Error::Validation("type-1 feedback needs every channel measured".into()))?;
            Ok(LoopSplits { feedback: homodyne_split(&q), evaluation: None })
        }
        Scheme::Mf2 => {
            let fb = plant.channels_with_role(Role::Feedback);
            let ev = plant.channels_with_role(Role::Evaluation);
            let pick = |idx: &[usize]| -> Result<MeasurementSplit> {
                let q: Option<Vec<_>> = idx.iter().map(|&j| sel[j]).collect();
                // unmeasured feedback channels default to a P homodyne
                Ok(homodyne_split(&q.unwrap_or_else(|| vec![crate::model::Quadrature::P; idx.len()])))
            };
            let evq: Option<Vec<_>> = ev.iter().map(|&j| sel[j]).collect();
            let evq = evq.ok_or_else(|| Error::Validation("type-2 feedback needs every evaluation channel measured".into()))?;
            Ok(LoopSplits { feedback: pick(&fb)?, evaluation: Some(homodyne_split(&evq)) })
        }
    }
}

/// Closed loop of `plant` and `ctrl` under `scheme`.
pub fn close_loop(
    plant: &QuantumLinearSystem,
    ctrl: &ClassicalController,
    scheme: Scheme,
    splits: &LoopSplits,
) -> Result<StateSpaceModel> {
    match scheme {
        Scheme::Mf1 => mf_type1(plant, ctrl, &splits.feedback),
        Scheme::Mf2 => {
            let ev = splits.evaluation.as_ref().ok_or_else(|| Error::Validation("type-2 loop needs an evaluation split".into()))?;
            mf_type2(plant, ctrl, &splits.feedback, ev)
        }
    }
}

/// Goal check on a measurement-feedback loop with the plant occupying the
/// first `plant_dim` states.
///
/// BAE uses the back-action ports (`P`, plus `Wfb` for type 2) against the
/// measured output (`y`, or `z` for type 2); QND uses all noise against the
/// measured outputs; DFS uses all noise against the full output field.
pub fn evaluate_goal(model: &StateSpaceModel, goal: Goal, scheme: Scheme, plant_dim: usize, tol: &Tolerances) -> Result<GoalVerdict> {
    let restrict = plant_block(model, plant_dim);
    match (goal, scheme) {
        (Goal::Bae, Scheme::Mf1) => check_bae(model, &["P"], "y", tol),
        (Goal::Bae, Scheme::Mf2) => check_bae(model, &["Wfb", "P"], "z", tol),
        (Goal::Qnd, Scheme::Mf1) => find_qnd(model, &["W"], "y", Some(&restrict), tol),
        (Goal::Qnd, Scheme::Mf2) => find_qnd(model, &["W"], "yz", Some(&restrict), tol),
        (Goal::Dfs, _) => find_dfs(model, &["W"], &["Wout"], Some(&restrict), tol),
    }
}

fn bare_plant_achieves(plant: &QuantumLinearSystem, goal: Goal, scheme: Scheme, splits: &LoopSplits, tol: &Tolerances) -> Result<bool> {
    let m = plant.channel_count();
    let (inputs, outputs) = match scheme {
        Scheme::Mf1 => (m, 2 * m),
        Scheme::Mf2 => (splits.feedback.channels(), 2 * (splits.feedback.channels() + splits.evaluation.as_ref().map_or(0, |s| s.channels()))),
    };
    let model = close_loop(plant, &ClassicalController::zero(inputs, outputs), scheme, splits)?;
    Ok(evaluate_goal(&model, goal, scheme, 2 * plant.modes(), tol)?.achieved)
}

enum Outcome {
    Skipped,
    Evaluated { achieved: bool, agreement: bool, residual: f64 },
}

/// Run `trials` random controllers against `plant`.
///
/// The plant must fail the goal with its own measurement settings;
/// otherwise the hypothesis is unmet and a [`Error::Hypothesis`] is returned.
pub fn verify_nogo(
    plant: &QuantumLinearSystem,
    goal: Goal,
    scheme: Scheme,
    trials: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<NogoReport> {
    let base = plant_splits(plant, scheme)?;
    if bare_plant_achieves(plant, goal, scheme, &base, tol)? {
        return Err(Error::Hypothesis(format!(
            "the plant already achieves {goal} without feedback; nothing to refute"
        )));
    }
    let n = plant.modes();
    let dims = (0, 2 * n + 2);
    let m = plant.channel_count();
    let fb_channels = base.feedback.channels();
    let (inputs, outputs) = match scheme {
        Scheme::Mf1 => (m, 2 * m),
        Scheme::Mf2 => (fb_channels, 2 * (fb_channels + base.evaluation.as_ref().map_or(0, |s| s.channels()))),
    };

    let outcomes: Vec<Result<Outcome>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            let ctrl = sample_classical_controller(&mut rng, inputs, outputs, dims.0..=dims.1);
            let splits = LoopSplits { feedback: MeasurementSplit::random(&mut rng, fb_channels), evaluation: base.evaluation.clone() };
            if bare_plant_achieves(plant, goal, scheme, &splits, tol)? {
                return Ok(Outcome::Skipped);
            }
            let model = close_loop(plant, &ctrl, scheme, &splits)?;
            let v = evaluate_goal(&model, goal, scheme, 2 * n, tol)?;
            Ok(Outcome::Evaluated { achieved: v.achieved, agreement: v.method_agreement, residual: v.scaled_residual })
        })
        .collect();

    let threshold = match goal {
        Goal::Bae => tol.markov_rel,
        _ => tol.stacked_rel,
    };
    let mut report = NogoReport {
        theorem: theorem_number(goal, scheme),
        plant_id: plant.mode_labels().join("+"),
        goal,
        scheme,
        trials,
        skipped: 0,
        violations: 0,
        violating_trials: vec![],
        disagreements: 0,
        worst_residual_gap: f64::INFINITY,
        near_misses: 0,
        tolerance: threshold,
        controller_dims: dims,
        seed,
    };
    for (t, o) in outcomes.into_iter().enumerate() {
        match o? {
            Outcome::Skipped => report.skipped += 1,
            Outcome::Evaluated { achieved, agreement, residual } => {
                if achieved {
                    report.violations += 1;
                    report.violating_trials.push(t);
                }
                if !agreement {
                    report.disagreements += 1;
                }
                report.worst_residual_gap = report.worst_residual_gap.min(residual);
                if !achieved && residual < 100.0 * threshold {
                    report.near_misses += 1;
                }
            }
        }
    }
    Ok(report)
}
