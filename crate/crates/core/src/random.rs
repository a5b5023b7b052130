//! Random realizable systems and symplectic coordinate changes, for fuzzing
//! and property checks.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::sigma;
use crate::model::{build_system, default_channels, QuantumLinearSystem};

/// Structure deliberately planted so that the goal searches have something
/// to find.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Planted {
    None,
    /// One mode isolated from the others and from the field.
    Dfs,
    /// One mode whose `p` is conserved and unaffected by noise.
    Qnd,
    /// Roughly half of all entries set to zero.
    Sparse,
}

pub const PLANTED: [Planted; 4] = [Planted::None, Planted::Dfs, Planted::Qnd, Planted::Sparse];

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Random `n`-mode, `m`-channel system with symmetric `G` and arbitrary `C`.
pub fn random_system<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize, planted: Planted) -> QuantumLinearSystem {
    let mut g = DMatrix::from_fn(2 * n, 2 * n, |_, _| gauss(rng));
    let mut c = DMatrix::from_fn(2 * m, 2 * n, |_, _| gauss(rng) / (n as f64).sqrt());
    if planted == Planted::Sparse {
        g.iter_mut().for_each(|x| {
            if rng.random_bool(0.5) {
                *x = 0.0
            }
        });
        c.iter_mut().for_each(|x| {
            if rng.random_bool(0.5) {
                *x = 0.0
            }
        });
    }
    let mut g = (&g + g.transpose()) * 0.5;
    let k = rng.random_range(0..n);
    match planted {
        Planted::Dfs => {
            for i in 0..2 * n {
                if i / 2 != k {
                    for j in [2 * k, 2 * k + 1] {
                        g[(i, j)] = 0.0;
                        g[(j, i)] = 0.0;
                    }
                }
            }
            c.column_mut(2 * k).fill(0.0);
            c.column_mut(2 * k + 1).fill(0.0);
        }
        Planted::Qnd => {
            g.row_mut(2 * k).fill(0.0);
            g.column_mut(2 * k).fill(0.0);
            c.column_mut(2 * k).fill(0.0);
        }
        _ => {}
    }
    build_system(g, c, default_channels(m), None).expect("symmetric G is always realizable")
}

/// Random symplectic matrix `exp(ΣH)` with a small symmetric `H`.
pub fn random_symplectic<R: Rng + ?Sized>(rng: &mut R, n: usize, scale: f64) -> DMatrix<f64> {
    let h = DMatrix::from_fn(2 * n, 2 * n, |_, _| gauss(rng) * scale);
    let h = (&h + h.transpose()) * 0.5;
    (sigma(n) * h).exp()
}

/// Random orthogonal-symplectic matrix `exp(ΣH)` with `H` commuting with `Σ`.
pub fn random_orthogonal_symplectic<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let s = sigma(n);
    let h = DMatrix::from_fn(2 * n, 2 * n, |_, _| gauss(rng));
    let h = (&h + h.transpose()) * 0.5;
    // the Σ-commuting part of H generates a passive (orthogonal) transform
    let h = (&h + s.transpose() * &h * &s) * 0.5;
    (s * h).exp()
}
