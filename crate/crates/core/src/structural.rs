//! Controllability/observability geometry: Krylov subspaces, stacked power
//! matrices, subspace algebra, Kalman coordinate splits and Markov parameters.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{complement_of_orthonormal, hcat, norm2, null_space, orth, RankTol};
use crate::model::SymplecticForm;
use crate::statespace::StateSpaceModel;

/// Relative truncation used when growing Krylov bases.
pub const KRYLOV_REL_TOL: f64 = 1e-9;
/// Relative singular-value cutoff for stacked power matrices in verdicts.
pub const STACKED_REL_TOL: f64 = 1e-10;
/// Principal-angle tolerance for subspace identity and intersection.
pub const ANGLE_TOL: f64 = 1e-8;

/// Subspace of ℝᴺ with an orthonormal basis.
#[derive(Debug, Clone, PartialEq)]
pub struct Subspace {
    basis: DMatrix<f64>,
}

impl Subspace {
    /// Orthonormalize the columns of `m` (machine-precision rank rule).
    pub fn span(m: &DMatrix<f64>) -> Self {
        Self { basis: orth(m, RankTol::Machine) }
    }

    /// Wrap a basis that is already orthonormal.
    pub fn from_orthonormal(basis: DMatrix<f64>) -> Result<Self> {
        let r = basis.ncols();
        let err = (basis.transpose() * &basis - DMatrix::identity(r, r)).amax();
        if r > 0 && err > 1e-10 {
            return Err(Error::Validation(format!("basis is not orthonormal ({err:.3e})")));
        }
        Ok(Self { basis })
    }

    pub fn zero(n: usize) -> Self {
        Self { basis: DMatrix::zeros(n, 0) }
    }

    pub fn full(n: usize) -> Self {
        Self { basis: DMatrix::identity(n, n) }
    }

    /// Coordinates `offset..offset+width` of an `n`-dimensional space, e.g.
    /// the plant block `[v; 0]` of a closed loop.
    pub fn coordinate_block(n: usize, offset: usize, width: usize) -> Self {
        let mut b = DMatrix::zeros(n, width);
        for i in 0..width {
            b[(offset + i, i)] = 1.0;
        }
        Self { basis: b }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }
    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
    pub fn is_empty(&self) -> bool {
        self.basis.ncols() == 0
    }
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Distance of `v` from the subspace relative to `‖v‖`.
    pub fn residual(&self, v: &DVector<f64>) -> f64 {
        let n = v.norm();
        if n == 0.0 {
            return 0.0;
        }
        (v - &self.basis * (self.basis.transpose() * v)).norm() / n
    }

    pub fn contains(&self, v: &DVector<f64>, tol: f64) -> bool {
        self.residual(v) <= tol
    }

    /// Sines of the principal angles between `self` and `other`, measured as
    /// the singular values of `(I − P_self)·other` (largest first).
    pub fn principal_angle_sines(&self, other: &Subspace) -> Vec<f64> {
        if other.is_empty() {
            return vec![];
        }
        let r = &other.basis - &self.basis * (self.basis.transpose() * &other.basis);
        let mut s: Vec<f64> = crate::linalg::singular_values(&r).iter().copied().collect();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s
    }

    /// Largest principal angle between two subspaces of equal dimension;
    /// `π/2` when the dimensions differ.
    pub fn max_angle(&self, other: &Subspace) -> f64 {
        if self.rank() != other.rank() || self.ambient_dim() != other.ambient_dim() {
            return std::f64::consts::FRAC_PI_2;
        }
        let a = self.principal_angle_sines(other).first().copied().unwrap_or(0.0);
        let b = other.principal_angle_sines(self).first().copied().unwrap_or(0.0);
        a.max(b).min(1.0).asin()
    }

    pub fn same_as(&self, other: &Subspace, angle_tol: f64) -> bool {
        self.max_angle(other) <= angle_tol
    }
}

/// Column space of `mat` (machine-precision rank rule).
pub fn range(mat: &DMatrix<f64>) -> Subspace {
    range_tol(mat, RankTol::Machine)
}

pub fn range_tol(mat: &DMatrix<f64>, tol: RankTol) -> Subspace {
    Subspace { basis: orth(mat, tol) }
}

/// Right null space of `mat` (machine-precision rank rule).
pub fn kernel(mat: &DMatrix<f64>) -> Subspace {
    kernel_tol(mat, RankTol::Machine)
}

pub fn kernel_tol(mat: &DMatrix<f64>, tol: RankTol) -> Subspace {
    Subspace { basis: null_space(mat, tol) }
}

pub fn complement(s: &Subspace) -> Subspace {
    Subspace { basis: complement_of_orthonormal(&s.basis) }
}

/// Intersection with the default principal-angle tolerance.
pub fn intersect(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    intersect_tol(a, b, ANGLE_TOL)
}

/// Directions shared by `a` and `b`: the null space of `[A, −B]` with
/// singular values below `tol` treated as zero.
pub fn intersect_tol(a: &Subspace, b: &Subspace, tol: f64) -> Result<Subspace> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::Shape(format!(
            "ambient dimensions differ: {} vs {}",
            a.ambient_dim(),
            b.ambient_dim()
        )));
    }
    let n = a.ambient_dim();
    if a.is_empty() || b.is_empty() {
        return Ok(Subspace::zero(n));
    }
    let stacked = hcat(&[&a.basis, &(-&b.basis)]);
    let coeffs = null_space(&stacked, RankTol::Absolute(tol));
    let ca = coeffs.rows(0, a.rank()).into_owned();
    let v = &a.basis * ca;
    Ok(Subspace { basis: orth(&v, RankTol::Absolute(0.5)) })
}

/// span(a ∪ b).
pub fn sum(a: &Subspace, b: &Subspace) -> Result<Subspace> {
    if a.ambient_dim() != b.ambient_dim() {
        return Err(Error::Shape("ambient dimensions differ".into()));
    }
    Ok(range_tol(&hcat(&[&a.basis, &b.basis]), RankTol::Relative(ANGLE_TOL)))
}

/// Smallest `A`-invariant subspace containing range(`b`), grown one Krylov
/// block at a time with re-orthogonalization.  Directions whose new
/// component is below `rel_tol·‖A‖` are discarded.
pub fn krylov_subspace(a: &DMatrix<f64>, b: &DMatrix<f64>, rel_tol: f64) -> Subspace {
    let n = a.nrows();
    let bn = norm2(b);
    if n == 0 || bn == 0.0 {
        return Subspace::zero(n);
    }
    let an = norm2(a);
    let mut basis = orth(b, RankTol::Relative(rel_tol));
    let mut fresh = basis.clone();
    let thr = rel_tol * an.max(f64::MIN_POSITIVE);
    while basis.ncols() < n && fresh.ncols() > 0 {
        let mut w = a * &fresh;
        for _ in 0..2 {
            let proj = basis.transpose() * &w;
            w -= &basis * proj;
        }
        fresh = if an == 0.0 { DMatrix::zeros(n, 0) } else { orth(&w, RankTol::Absolute(thr)) };
        if fresh.ncols() > 0 {
            // guard against drift: re-project before appending
            let proj = basis.transpose() * &fresh;
            let cleaned = &fresh - &basis * proj;
            fresh = orth(&cleaned, RankTol::Absolute(0.5));
            basis = hcat(&[&basis, &fresh]);
        }
    }
    Subspace { basis }
}

/// Range(𝒞) for the listed input ports via Krylov iteration.
pub fn controllable_subspace(model: &StateSpaceModel, inputs: &[&str]) -> Result<Subspace> {
    let b = model.input_matrix(inputs)?;
    Ok(krylov_subspace(model.a(), &b, KRYLOV_REL_TOL))
}

/// Range(𝒪ᵀ) for the listed output ports via Krylov iteration on `(Aᵀ, Cᵀ)`.
pub fn observable_subspace(model: &StateSpaceModel, outputs: &[&str]) -> Result<Subspace> {
    let c = model.output_matrix(outputs)?;
    Ok(krylov_subspace(&model.a().transpose(), &c.transpose(), KRYLOV_REL_TOL))
}

/// `[B, AB, …, A^{N−1}B]` for one input port.
pub fn controllability_matrix(model: &StateSpaceModel, input_port: &str) -> Result<DMatrix<f64>> {
    let b = model.input_matrix(&[input_port])?;
    Ok(power_stack(model.a(), &b, model.state_dim()))
}

/// `[C; CA; …; CA^{N−1}]` for one output port.
pub fn observability_matrix(model: &StateSpaceModel, output_port: &str) -> Result<DMatrix<f64>> {
    let c = model.output_matrix(&[output_port])?;
    Ok(power_stack(&model.a().transpose(), &c.transpose(), model.state_dim()).transpose())
}

/// `[B, AB, …, A^{k−1}B]`.
pub fn power_stack(a: &DMatrix<f64>, b: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let n = a.nrows();
    if k == 0 || b.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let mut blocks = Vec::with_capacity(k);
    let mut cur = b.clone();
    for _ in 0..k {
        let next = a * &cur;
        blocks.push(cur);
        cur = next;
    }
    hcat(&blocks.iter().collect::<Vec<_>>())
}

/// Power stack of the scaled pair `(A/α, B/‖B‖)` with `α = max(‖A‖, 1)`:
/// same column space as the raw matrix, bounded entries.
pub fn scaled_power_stack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let alpha = norm2(a).max(1.0);
    let bn = norm2(b);
    let bs = if bn > 0.0 { b / bn } else { b.clone() };
    power_stack(&(a / alpha), &bs, a.nrows())
}

/// `[CB, CAB, …, CA^{count−1}B]`; `count` defaults to the state dimension.
pub fn markov_parameters(
    model: &StateSpaceModel,
    input_ports: &[&str],
    output_ports: &[&str],
    count: Option<usize>,
) -> Result<Vec<DMatrix<f64>>> {
    let b = model.input_matrix(input_ports)?;
    let c = model.output_matrix(output_ports)?;
    let k = count.unwrap_or(model.state_dim());
    let mut out = Vec::with_capacity(k);
    let mut cur = b;
    for _ in 0..k {
        out.push(&c * &cur);
        cur = model.a() * cur;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompositionKind {
    Controllable,
    Observable,
}

/// Orthogonal coordinate change separating the controllable (or observable)
/// part from its complement.
#[derive(Debug, Clone)]
pub struct KalmanDecomposition {
    /// `x = T x'`, with `T` orthogonal.
    pub t: DMatrix<f64>,
    /// Dimensions of the (controllable | uncontrollable) or
    /// (observable | unobservable) blocks.
    pub block_dims: (usize, usize),
    pub kind: DecompositionKind,
    pub transformed: StateSpaceModel,
}

impl KalmanDecomposition {
    /// Largest entry of the blocks that must vanish: `A₂₁` and `B₂` for the
    /// controllable split, `A₁₂` and `C₂` for the observable split, both
    /// expressed relative to the original port used for the split.
    pub fn zero_block_residual(&self, port: &str) -> Result<f64> {
        let (r, s) = self.block_dims;
        let a = self.transformed.a();
        Ok(match self.kind {
            DecompositionKind::Controllable => {
                let b = self.transformed.input_matrix(&[port])?;
                a.view((r, 0), (s, r)).amax().max(b.rows(r, s).amax())
            }
            DecompositionKind::Observable => {
                let c = self.transformed.output_matrix(&[port])?;
                a.view((0, r), (r, s)).amax().max(c.columns(r, s).amax())
            }
        })
    }
}

pub fn kalman_decompose(model: &StateSpaceModel, port: &str, kind: DecompositionKind) -> Result<KalmanDecomposition> {
    let v = match kind {
        DecompositionKind::Controllable => controllable_subspace(model, &[port])?,
        DecompositionKind::Observable => observable_subspace(model, &[port])?,
    };
    let w = complement(&v);
    let t = hcat(&[v.basis(), w.basis()]);
    let tt = t.transpose();
    let transformed = StateSpaceModel::new(
        &tt * model.a() * &t,
        &tt * model.b(),
        model.c() * &t,
        model.d().clone(),
        model.inputs().to_vec(),
        model.outputs().to_vec(),
    )?;
    Ok(KalmanDecomposition { t, block_dims: (v.rank(), w.rank()), kind, transformed })
}

/// True when every pair of basis vectors of `candidate` commutes under the
/// symplectic form (`vᵢᵀΣvⱼ = 0` to 1e-10).
pub fn classical_subsystem(model: &StateSpaceModel, candidate: &Subspace, symplectic: &SymplecticForm) -> Result<bool> {
    let dim = 2 * symplectic.modes();
    if candidate.ambient_dim() != dim || model.state_dim() != dim {
        return Err(Error::Shape(format!(
            "candidate ambient {} / model state {} must equal 2n = {dim}",
            candidate.ambient_dim(),
            model.state_dim()
        )));
    }
    let g = candidate.basis().transpose() * symplectic.matrix() * candidate.basis();
    Ok(g.amax() <= 1e-10)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::Builder;

    fn model(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>) -> StateSpaceModel {
        Builder::new(a).input("u", b).output("y", c).build().unwrap()
    }

    #[test]
    fn zero_drift_identity_input() {
        let m = model(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        let k = controllability_matrix(&m, "u").unwrap();
        assert_eq!(k.columns(0, 2).into_owned(), DMatrix::identity(2, 2));
        assert!(k.columns(2, 2).iter().all(|&x| x == 0.0));
        let o = observability_matrix(&m, "y").unwrap();
        assert_eq!(o.rows(0, 2).into_owned(), DMatrix::identity(2, 2));
        assert!(o.rows(2, 2).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn kernel_of_diag() {
        let k = kernel(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_eq!(k.rank(), 1);
        assert!(k.contains(&DVector::from_vec(vec![0.0, 1.0]), 1e-14));
    }

    #[test]
    fn intersect_with_complement_is_empty() {
        let x = Subspace::span(&DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]));
        let i = intersect(&x, &complement(&x)).unwrap();
        assert_eq!(i.rank(), 0);
    }

    #[test]
    fn intersect_dimension_formula() {
        let a = Subspace::coordinate_block(4, 0, 2);
        let b = Subspace::coordinate_block(4, 1, 2);
        assert_eq!(intersect(&a, &b).unwrap().rank(), 1);
        assert_eq!(sum(&a, &b).unwrap().rank(), 3);
        assert!(intersect(&a, &Subspace::zero(3)).is_err());
    }

    #[test]
    fn markov_of_zero_drift() {
        let m = model(DMatrix::zeros(2, 2), DMatrix::identity(2, 2), DMatrix::identity(2, 2));
        let p = markov_parameters(&m, &["u"], &["y"], None).unwrap();
        assert_eq!(p[0], DMatrix::identity(2, 2));
        assert!(p[1].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn canonical_pair_is_not_classical() {
        let m = model(DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), DMatrix::zeros(1, 2));
        let s = SymplecticForm::new(1);
        assert!(!classical_subsystem(&m, &Subspace::full(2), &s).unwrap());
        let one = Subspace::span(&DMatrix::from_row_slice(2, 1, &[0.3, -0.8]));
        assert!(classical_subsystem(&m, &one, &s).unwrap());
    }

    #[test]
    fn fully_controllable_has_trivial_decomposition() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let m = model(a, b, DMatrix::zeros(1, 2));
        let k = kalman_decompose(&m, "u", DecompositionKind::Controllable).unwrap();
        assert_eq!(k.block_dims, (2, 0));
    }
}
