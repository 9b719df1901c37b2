//! Mechanics with nonintegrable velocity constraints, in one coordinate
//! chart.
//!
//! The crate covers three layers of the same dynamics:
//!
//! - [`model`] declares a mechanical Lagrangian together with a linear
//!   velocity constraint and a frame spanning its kernel; [`flow`]
//!   integrates the resulting continuous dynamics in multiplier form.
//! - [`exact`] works with configuration pairs joined by the continuous
//!   flow: the nonholonomic exponential, the shooting retraction, the exact
//!   discrete Lagrangian, and the boundary one-form identity relating its
//!   variations to boundary momenta.
//! - [`integrator`] solves the discrete stationarity equations built from a
//!   discrete Lagrangian, discrete forces, and a discrete constraint, and
//!   evaluates discrete Legendre transforms and restricted Hamiltonians
//!   along the resulting configuration lattices.
//!
//! [`systems`] packages two worked systems (a constrained particle with a
//! closed-form flow, and a knife edge on an inclined plane), and
//! [`harness`] runs the drift and order experiments behind the command-line
//! interface.

pub mod error;
pub mod exact;
pub mod flow;
pub mod harness;
pub mod integrator;
pub mod model;
pub mod settings;
pub mod systems;

pub use error::{Error, Result};
pub use settings::SolverSettings;
