//! Physical constants in the unit system of this crate.

/// Boltzmann constant in μeV/K, used for every energy-side temperature
/// conversion (energies are carried in μeV throughout).
pub const KB_UEV_PER_K: f64 = 86.173;

/// Boltzmann constant in J/K (SI), used only by the noise budget where
/// spectral densities are computed in volts and amps.
pub const KB_SI: f64 = 1.380_649e-23;

/// Elementary charge in C.
pub const E_CHARGE_SI: f64 = 1.602_176_634e-19;

/// Reduced Planck constant in μeV·μs, converting energies to angular
/// frequencies in the Lindblad solver.
pub const HBAR_UEV_US: f64 = 0.6582;

/// Default gyromagnetic energy per field for electrons in silicon (g = 2),
/// in μeV/μT. Equals 0.11577 μeV/mT.
pub const G_MU_B_UEV_PER_UT: f64 = 1.1577e-4;
