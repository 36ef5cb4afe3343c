//! Simulation and data-analysis toolkit for a Fabry-Pérot cavity holding two
//! parallel dielectric membranes (a "membrane sandwich").
//!
//! The crate is organised bottom-up:
//!
//! - [`scatter`]: exact 1-D plane-wave scattering of the mirror, membrane,
//!   membrane, mirror chain (slab coefficients, field amplitudes, cavity
//!   transmission/reflection and the resonance denominator).
//! - [`spectrum`]: cavity mode frequencies from the reduced mode equation,
//!   the explicit shift function and a brute-force `|D|²` oracle.
//! - [`coupling`]: optomechanical couplings as gradients of the mode shift.
//! - [`characterization`]: Airy, finesse, thickness, ring-down and
//!   misalignment models and fits.
//! - [`mechanics`]: stressed rectangular membrane modes and side-length fits.
//! - [`cooling`]: linearized multi-mode optomechanics and displacement spectra.
//! - [`fitting`]: shared least-squares, bracketed root finding and minimizers.
//! - [`io`] and [`cli`]: configuration, units, CSV/JSON emission and the
//!   `sandwich` command line.
//!
//! All quantities are SI internally: lengths in metres, wavenumbers in rad/m,
//! frequencies in rad/s unless a name ends in `_hz`.

pub mod characterization;
pub mod cli;
pub mod constants;
pub mod cooling;
pub mod coupling;
pub mod error;
pub mod fitting;
pub mod io;
pub mod mechanics;
pub mod scatter;
pub mod spectrum;

pub use error::{Error, Result};
pub use scatter::{CavityGeometry, FieldSolution, Membrane, ScatteringElement};
pub use spectrum::{ModeSolution, Parity, ShiftFunctionParams};
