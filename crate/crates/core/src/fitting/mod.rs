//! Deterministic numerical workhorses shared by the characterization,
//! mechanics and mode-spectrum modules.
//!
//! Nothing in here draws random numbers: identical inputs give bit-identical
//! outputs.

mod least_squares;
mod minimize;
mod roots;

pub use least_squares::{least_squares, FitOptions, FitProblem, FitResult, Termination};
pub use minimize::{minimize_bracketed, nelder_mead, NelderMeadResult};
pub use roots::find_root_bracketed;
