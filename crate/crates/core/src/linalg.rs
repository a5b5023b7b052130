//! Small dense linear-algebra helpers shared by the analysis modules.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Rank-decision threshold applied to singular values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RankTol {
    /// `max(rows, cols) · ε · σ_max` — the usual numerical-rank rule.
    Machine,
    /// `rel · σ_max`.
    Relative(f64),
    /// Fixed absolute cutoff.
    Absolute(f64),
}

impl Default for RankTol {
    fn default() -> Self {
        RankTol::Machine
    }
}

impl RankTol {
    pub fn threshold(&self, sigma_max: f64, rows: usize, cols: usize) -> f64 {
        match *self {
            RankTol::Machine => rows.max(cols) as f64 * f64::EPSILON * sigma_max,
            RankTol::Relative(r) => r * sigma_max,
            RankTol::Absolute(a) => a,
        }
    }
}

/// Block-diagonal symplectic form with `n` blocks `[[0,1],[-1,0]]`.
pub fn sigma(n: usize) -> DMatrix<f64> {
    let mut s = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        s[(2 * i, 2 * i + 1)] = 1.0;
        s[(2 * i + 1, 2 * i)] = -1.0;
    }
    s
}

/// Thin singular value decomposition `m = U·diag(σ)·Vᵀ`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    fn residual(&self, m: &DMatrix<f64>) -> f64 {
        let k = self.singular_values.len();
        let us = DMatrix::from_fn(self.u.nrows(), k, |i, j| self.u[(i, j)] * self.singular_values[j]);
        let recon = max_abs(&(us * &self.v_t - m));
        let ortho = max_abs(&(self.u.transpose() * &self.u - DMatrix::identity(k, k)));
        recon.max(ortho * max_abs(m))
    }
}

/// Verified SVD.  nalgebra's bidiagonal SVD occasionally returns an
/// inaccurate factorization for rank-deficient input; every result is
/// checked against `m` and recomputed by one-sided Jacobi when it fails.
pub fn svd(m: &DMatrix<f64>) -> Svd {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        let k = rows.min(cols);
        return Svd { u: DMatrix::zeros(rows, k), singular_values: DVector::zeros(k), v_t: DMatrix::zeros(k, cols) };
    }
    let scale = max_abs(m);
    if scale == 0.0 || !scale.is_finite() {
        return jacobi_svd(m);
    }
    let fast = m.clone().svd(true, true);
    let out = Svd {
        u: fast.u.expect("requested U"),
        singular_values: fast.singular_values,
        v_t: fast.v_t.expect("requested V"),
    };
    let tol = 64.0 * f64::EPSILON * (rows.max(cols) as f64) * scale;
    if out.residual(m) <= tol {
        out
    } else {
        jacobi_svd(m)
    }
}

/// Singular values of `m` (verified, unordered).
pub fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    svd(m).singular_values
}

/// One-sided (Hestenes) Jacobi SVD; slow but accurate for every input.
fn jacobi_svd(m: &DMatrix<f64>) -> Svd {
    let (rows, cols) = m.shape();
    if rows < cols {
        let t = jacobi_svd(&m.transpose());
        return Svd { u: t.v_t.transpose(), singular_values: t.singular_values, v_t: t.u.transpose() };
    }
    let mut w = m.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for (mat, n) in [(&mut w, rows), (&mut v, cols)] {
                    for i in 0..n {
                        let (x, y) = (mat[(i, p)], mat[(i, q)]);
                        mat[(i, p)] = c * x - s * y;
                        mat[(i, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sv = DVector::from_fn(cols, |j, _| w.column(j).norm());
    let smax = sv.iter().fold(0.0_f64, |a, &b| a.max(b));
    let mut u = DMatrix::zeros(rows, cols);
    let mut filled: Vec<usize> = Vec::new();
    for j in 0..cols {
        if sv[j] > f64::EPSILON * smax && sv[j] > 0.0 {
            u.set_column(j, &(w.column(j) / sv[j]));
            filled.push(j);
        }
    }
    // complete U for the zero singular values with unit vectors orthogonalized
    // against the columns already present
    let mut e = 0;
    for j in 0..cols {
        if filled.contains(&j) {
            continue;
        }
        while e < rows {
            let mut x = DVector::<f64>::zeros(rows);
            x[e] = 1.0;
            e += 1;
            for _ in 0..2 {
                for &k in &filled {
                    let d = u.column(k).dot(&x);
                    x -= u.column(k) * d;
                }
            }
            let nx = x.norm();
            if nx > 0.5 {
                u.set_column(j, &(x / nx));
                filled.push(j);
                break;
            }
        }
    }
    Svd { u, singular_values: sv, v_t: v.transpose() }
}

/// Spectral norm (largest singular value); zero for empty matrices.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    singular_values(m).iter().fold(0.0_f64, |a, &b| a.max(b))
}

/// Largest absolute entry; zero for empty matrices.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |a, &b| a.max(b.abs()))
}

pub fn all_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Eigenvalues of a real square matrix.  Sizes 0 and 1 are handled directly
/// (the general Schur path does not accept them).
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<num_complex::Complex64> {
    match a.nrows() {
        0 => vec![],
        1 => vec![num_complex::Complex64::new(a[(0, 0)], 0.0)],
        _ => a.complex_eigenvalues().iter().copied().collect(),
    }
}

/// Orthonormal basis of the column space of `m`.
pub fn orth(m: &DMatrix<f64>, tol: RankTol) -> DMatrix<f64> {
    let rows = m.nrows();
    if rows == 0 || m.ncols() == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let svd = svd(m);
    let u = svd.u;
    let smax = svd.singular_values.iter().fold(0.0_f64, |a, &b| a.max(b));
    let thr = tol.threshold(smax, rows, m.ncols());
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > thr && svd.singular_values[i] > 0.0)
        .collect();
    select_columns(&u, &keep)
}

/// Numerical rank of `m`.
pub fn rank(m: &DMatrix<f64>, tol: RankTol) -> usize {
    orth(m, tol).ncols()
}

/// Orthonormal basis of the orthogonal complement of span(`q`), where `q`
/// already has orthonormal columns.
pub fn complement_of_orthonormal(q: &DMatrix<f64>) -> DMatrix<f64> {
    let n = q.nrows();
    let r = q.ncols();
    if r == 0 {
        return DMatrix::identity(n, n);
    }
    if r >= n {
        return DMatrix::zeros(n, 0);
    }
    let p = DMatrix::identity(n, n) - q * q.transpose();
    let svd = svd(&p);
    let u = svd.u;
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap()
    });
    idx.truncate(n - r);
    idx.sort_unstable();
    let basis = select_columns(&u, &idx);
    // one re-orthonormalization pass keeps the basis clean against q
    let cleaned = &basis - q * (q.transpose() * &basis);
    orth(&cleaned, RankTol::Absolute(0.5))
}

/// Orthonormal basis of the null space of `m` (right kernel).
pub fn null_space(m: &DMatrix<f64>, tol: RankTol) -> DMatrix<f64> {
    let cols = m.ncols();
    if m.nrows() == 0 {
        return DMatrix::identity(cols, cols);
    }
    let row_space = orth(&m.transpose(), tol);
    complement_of_orthonormal(&row_space)
}

pub fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(m.nrows(), idx.len());
    for (j, &i) in idx.iter().enumerate() {
        out.set_column(j, &m.column(i));
    }
    out
}

pub fn select_rows(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(idx.len(), m.ncols());
    for (j, &i) in idx.iter().enumerate() {
        out.set_row(j, &m.row(i));
    }
    out
}

/// `[a, b]` side by side; row counts must agree.
pub fn hcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        assert_eq!(b.nrows(), rows, "hcat row mismatch");
        out.view_mut((0, c), (rows, b.ncols())).copy_from(b);
        c += b.ncols();
    }
    out
}

/// `[a; b]` stacked; column counts must agree.
pub fn vcat(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        assert_eq!(b.ncols(), cols, "vcat column mismatch");
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(b);
        r += b.nrows();
    }
    out
}

/// 2×2 block matrix `[[a, b], [c, d]]`.
pub fn block2(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    d: &DMatrix<f64>,
) -> DMatrix<f64> {
    vcat(&[&hcat(&[a, b]), &hcat(&[c, d])])
}

pub fn block_diag(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

/// Fix the sign so the first entry with magnitude above `tol` is positive,
/// then normalize to unit length.
pub fn canonical_direction(v: &DVector<f64>, tol: f64) -> DVector<f64> {
    let n = v.norm();
    if n == 0.0 {
        return v.clone();
    }
    let mut u = v / n;
    if let Some(x) = u.iter().find(|x| x.abs() > tol) {
        if *x < 0.0 {
            u = -u;
        }
    }
    u
}

const ROUNDOFF_SNAP: f64 = 1e-13;

/// Deterministic basis of span(`basis`): reduced row-echelon form of the
/// transposed basis, each row normalized.  Two orthonormal bases of the same
/// subspace produce the same output up to rounding.
pub fn echelon_basis(basis: &DMatrix<f64>, pivot_tol: f64) -> Vec<DVector<f64>> {
    let r = basis.ncols();
    let n = basis.nrows();
    let mut m = basis.transpose(); // r × n
    let mut row = 0;
    for col in 0..n {
        if row == r {
            break;
        }
        let (best, val) = (row..r)
            .map(|i| (i, m[(i, col)].abs()))
            .fold((row, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= pivot_tol {
            continue;
        }
        m.swap_rows(row, best);
        let p = m[(row, col)];
        for j in 0..n {
            m[(row, j)] /= p;
        }
        for i in 0..r {
            if i != row {
                let f = m[(i, col)];
                if f != 0.0 {
                    for j in 0..n {
                        let t = m[(row, j)];
                        m[(i, j)] -= f * t;
                    }
                }
            }
        }
        m[(row, col)] = 1.0;
        row += 1;
    }
    (0..row)
        .map(|i| {
            let mut v: DVector<f64> = m.row(i).transpose();
            // entries at round-off level are exact zeros of the echelon form
            let cut = ROUNDOFF_SNAP * v.amax();
            v.iter_mut().filter(|x| x.abs() <= cut).for_each(|x| *x = 0.0);
            canonical_direction(&v, pivot_tol)
        })
        .collect()
}
