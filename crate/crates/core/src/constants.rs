//! Physical constants (CODATA 2018, SI).

/// Reduced Planck constant [J s].
pub const HBAR: f64 = 1.054_571_817e-34;
/// Speed of light in vacuum [m/s].
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Vacuum permittivity [F/m].
pub const EPSILON_0: f64 = 8.854_187_812_8e-12;
/// Boltzmann constant [J/K].
pub const K_B: f64 = 1.380_649e-23;
/// Atomic mass unit [kg].
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Mass of a helium-4 atom [kg].
pub const HELIUM_MASS: f64 = 4.002_602 * AMU;
