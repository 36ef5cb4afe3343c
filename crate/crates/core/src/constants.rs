//! Physical constants (CODATA exact values where defined).

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Angular free spectral range `πc/L` of a cavity of length `length`.
pub fn free_spectral_range(length: f64) -> f64 {
    std::f64::consts::PI * SPEED_OF_LIGHT / length
}

/// Converts a coupling in rad/s per metre to units of 2π×MHz/nm.
pub fn to_mhz_per_nm(coupling: f64) -> f64 {
    coupling / (2.0 * std::f64::consts::PI) * 1e-6 * 1e-9
}

/// Inverse of [`to_mhz_per_nm`].
pub fn from_mhz_per_nm(value: f64) -> f64 {
    value * 2.0 * std::f64::consts::PI * 1e6 * 1e9
}
