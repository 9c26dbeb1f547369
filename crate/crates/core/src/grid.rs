//! Uniform periodic grid in position space and its discrete Fourier dual.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Points closer than this fraction of `dx` to a boundary count as lying on it.
const ALIGN_TOL: f64 = 1e-6;

/// Uniform grid `x_i = x_min + i dx`, `i = 0..n_points`, with `dx = (x_max - x_min) / n_points`.
///
/// The grid is periodic (the point `x_max` coincides with `x_min`), which is
/// what the FFT-based kinetic step assumes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    x_min: f64,
    x_max: f64,
    n_points: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, n_points: usize) -> Result<Self> {
        if !x_min.is_finite() || !x_max.is_finite() {
            return Err(Error::InvalidGrid("bounds must be finite".into()));
        }
        if x_max <= x_min {
            return Err(Error::InvalidGrid(format!(
                "x_max ({x_max:e}) must exceed x_min ({x_min:e})"
            )));
        }
        if n_points < 2 || !n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_points must be a power of two >= 2, got {n_points}"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            n_points,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn len(&self) -> usize {
        self.n_points
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n_points as f64
    }

    /// Spacing of the dual momentum grid, `2 pi / (n dx)`.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.length()
    }

    /// Largest representable wave number, `pi / dx`.
    pub fn k_max(&self) -> f64 {
        PI / self.dx()
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.n_points).map(move |i| self.x(i))
    }

    /// Wave number of FFT bin `j` (standard FFT ordering: non-negative
    /// frequencies first, then the negative ones).
    pub fn k(&self, j: usize) -> f64 {
        let n = self.n_points as i64;
        let j = j as i64;
        let signed = if j < n / 2 { j } else { j - n };
        signed as f64 * self.dk()
    }

    pub fn wave_numbers(&self) -> Vec<f64> {
        (0..self.n_points).map(|j| self.k(j)).collect()
    }

    /// Bin order that sorts the FFT output by increasing wave number.
    pub fn sorted_k_order(&self) -> Vec<usize> {
        let half = self.n_points / 2;
        (half..self.n_points).chain(0..half).collect()
    }

    /// Index of the first grid point with `x_i >= x` (points within a tiny
    /// fraction of `dx` below `x` count as on it). Clamped to `0..=n`.
    pub fn first_index_at_or_after(&self, x: f64) -> usize {
        if x == f64::INFINITY {
            return self.n_points;
        }
        if x == f64::NEG_INFINITY {
            return 0;
        }
        let s = (x - self.x_min) / self.dx() - ALIGN_TOL;
        if s <= 0.0 {
            0
        } else {
            (s.ceil() as usize).min(self.n_points)
        }
    }

    /// True when `x` coincides with a grid point (up to rounding).
    pub fn is_aligned(&self, x: f64) -> bool {
        let s = (x - self.x_min) / self.dx();
        (s - s.round()).abs() < ALIGN_TOL
    }
}

/// Builds a validated [`SpatialGrid`].
pub fn build_grid(x_min: f64, x_max: f64, n_points: usize) -> Result<SpatialGrid> {
    SpatialGrid::new(x_min, x_max, n_points)
}
