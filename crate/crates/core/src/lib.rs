//! Multi-parameter dyadic harmonic analysis on a finite torus.

pub mod carleson;
pub mod cases;
pub mod certify;
pub mod error;
pub mod grid;
pub mod haar;
pub mod io;
pub mod kernel;
pub mod norm;
pub mod par;
pub mod paraproduct;
pub mod quadrature;
pub mod registry;
pub mod representation;
pub mod shift;
pub mod tensor;

pub use error::{Error, Result};
