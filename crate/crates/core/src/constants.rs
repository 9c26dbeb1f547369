//! Physical constants (SI).

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// Mass of a cesium-133 atom, kg.
pub const CESIUM_MASS: f64 = 2.2069e-25;
