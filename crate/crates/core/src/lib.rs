//! Global propagation of the time-dependent Schrödinger equation with a
//! multidimensional time-dependent wave operator.
//!
//! The wave operator Ω(t) = P₀ + X(t) maps an m-dimensional active space onto
//! the evolving subspace spanned by the propagated active states. X is found
//! on a whole periodic time grid at once by iterating a spectral solution of
//! the linearised Bloch equation; populations, Fubini–Study distances and
//! Floquet data follow from the converged X and the effective propagator.

pub mod diagnostics;
pub mod error;
pub mod linalg;
pub mod models;
pub mod oracle;
pub mod timegrid;
pub mod waveop;

pub use error::{Error, Result};
pub use num_complex::Complex64 as C64;
