//! Construction of exponentially localized generalized Wannier functions by
//! iterated diagonalization of projected position operators, together with
//! the tight-binding models, localization diagnostics, and topological
//! invariants used to exercise the method.

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod lattice;
pub mod linalg;
pub mod models;
pub mod position;
pub mod ipp;
pub mod rng;
pub mod runner;
pub mod wcc;

pub use error::{Error, Result};
