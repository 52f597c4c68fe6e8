//! Lattice simulation of two-parameter stochastic calculus: the Brownian
//! sheet, hyperbolic stochastic systems on the plane, and Monte Carlo
//! checks of integration by parts on Wiener space.

pub mod error;
pub mod hyperbolic;
pub mod lattice;
pub mod linalg;
pub mod malliavin;
pub mod polynomial;
pub mod sheet;
pub mod stochcalc;
pub mod verify;

pub use error::{Error, Result};
