//! Semiclassical analysis of 2×2 Dirac operators with eigenvalue crossings.
//!
//! The crate covers the pointwise geometry of a Dirac symbol (Poisson-bracket
//! matrix, gap function, eigenlines, edge vector field), the linear symplectic
//! and SU(2) normal form, edge trajectories and traveling envelopes, the model
//! operator machinery (Hermite blocks, bicharacteristic flow, eikonal phases,
//! WKB amplitudes, oscillatory parametrix), a pseudospectral solver for the
//! two-dimensional evolution, and tight-binding Haldane-model geometry.

pub mod edge;
pub mod error;
pub mod expr;
pub mod fft;
pub mod haldane;
pub mod io;
pub mod model;
pub mod pauli;
pub mod pde;
pub mod scenario;
pub mod symbol;
pub mod symplectic;

pub use error::{Error, Result};
