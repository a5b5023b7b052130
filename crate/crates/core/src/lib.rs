//! Structural analysis of open linear quantum systems.
//!
//! The crate models linear quantum systems in quadrature form, assembles
//! measurement-based and coherent feedback loops, and decides whether a
//! configuration achieves back-action evasion (BAE), carries a quantum
//! non-demolition (QND) variable, or contains a decoherence-free subsystem
//! (DFS).  Every verdict is computed twice — from Krylov-subspace geometry and
//! from stacked Markov parameters — and the two routes are cross-checked.

pub mod error;
pub mod goals;
pub mod interconnect;
pub mod io;
pub mod linalg;
pub mod model;
pub mod nogo;
pub mod random;
pub mod scenarios;
pub mod statespace;
pub mod structural;
pub mod xfer;

pub use error::{Error, Result};
pub use model::{
    augment_with_vacuum, build_system, complex_to_quadrature, default_channels, homodyne_split,
    quadrature_to_complex, Channel, MeasurementSplit, Quadrature, QuantumLinearSystem, Role,
    SymplecticForm,
};
pub use statespace::{Port, StateSpaceModel};
