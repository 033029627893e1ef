//! Physical constants used throughout the crate.
//!
//! Every numerical routine reads its constants from here so that output files
//! can record a single constants version string.

/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380649e-23;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054572e-34;
/// Speed of light in vacuum, m/s.
pub const C: f64 = 2.99792458e8;
/// Newtonian gravitational constant, m^3 / (kg s^2).
pub const G: f64 = 6.674e-11;
/// Angular frequency corresponding to one electronvolt, rad/s.
pub const EV_TO_RAD_PER_S: f64 = 1.519267e15;
/// Apery's constant, zeta(3).
pub const ZETA_3: f64 = 1.202_056_903_159_594_3;

/// Recorded in the header of every emitted file.
pub const CONSTANTS_VERSION: &str = "codata2018-g6.674-v1";
