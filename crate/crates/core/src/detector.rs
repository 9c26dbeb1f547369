//! Detector parameterization: sensitivity profiles, the boson bath and its
//! correlation function, continuum-limit rates, and the reset operation.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::grid::SpatialGrid;
use crate::propagator::ComplexPotentialField;
use crate::wavefunction::WaveFunction;
use crate::{Error, Result};

/// Reset states with a smaller squared norm are treated as "no overlap".
pub const ZERO_OVERLAP_THRESHOLD: f64 = 1e-30;

/// Covered cell fractions within this distance of 0 or 1 are rounded.
const EDGE_SNAP: f64 = 1e-9;

/// Spatial sensitivity `chi(x)` of a detector, with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SensitivityProfile {
    /// Indicator of `[start, end)`; `end` may be `+inf` (a step function).
    Rectangular { start: f64, end: f64 },
    /// Samples on a specific grid.
    Tabulated { grid: SpatialGrid, values: Vec<f64> },
}

impl SensitivityProfile {
    pub fn rectangular(start: f64, end: f64) -> Result<Self> {
        if !start.is_finite() || end.is_nan() {
            return Err(Error::param("profile", "start must be finite"));
        }
        if end <= start {
            return Err(Error::param(
                "profile",
                format!("end ({end:e}) must exceed start ({start:e})"),
            ));
        }
        Ok(Self::Rectangular { start, end })
    }

    /// The step function `Theta(x - start)`.
    pub fn step(start: f64) -> Result<Self> {
        Self::rectangular(start, f64::INFINITY)
    }

    pub fn tabulated(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("profile", "samples must lie in [0, 1]"));
        }
        Ok(Self::Tabulated { grid, values })
    }

    /// `chi` sampled on `grid`.
    ///
    /// For a rectangle, each grid point takes the square root of the fraction
    /// of its cell `[x - dx/2, x + dx/2]` inside the interval, so that the
    /// rate `A chi^2` is the cell average of the indicator. A grid-aligned
    /// edge point gets `chi^2 = 1/2` and the discretized edge stays in place
    /// when the grid is refined.
    pub fn sample(&self, grid: &SpatialGrid) -> Result<Vec<f64>> {
        match self {
            Self::Rectangular { start, end } => {
                let h = 0.5 * grid.dx();
                Ok(grid
                    .positions()
                    .map(|x| {
                        let covered = ((x + h).min(*end) - (x - h).max(*start)).max(0.0);
                        // round-off at interior points must not leave 1 - 1e-16
                        match covered / grid.dx() {
                            f if f > 1.0 - EDGE_SNAP => 1.0,
                            f if f < EDGE_SNAP => 0.0,
                            f => f.sqrt(),
                        }
                    })
                    .collect())
            }
            Self::Tabulated { grid: own, values } => {
                if own != grid {
                    return Err(Error::GridMismatch);
                }
                Ok(values.clone())
            }
        }
    }

    /// Lower and upper end of the support.
    pub fn extent(&self) -> (f64, f64) {
        match self {
            Self::Rectangular { start, end } => (*start, *end),
            Self::Tabulated { grid, values } => {
                let first = values.iter().position(|&v| v > 0.0);
                let last = values.iter().rposition(|&v| v > 0.0);
                match (first, last) {
                    (Some(a), Some(b)) => (grid.x(a), grid.x(b) + grid.dx()),
                    _ => (f64::NAN, f64::NAN),
                }
            }
        }
    }

    /// True when the profile is an indicator function; sampled rectangles
    /// still carry fractional values at their edges.
    pub fn is_indicator(&self) -> bool {
        match self {
            Self::Rectangular { .. } => true,
            Self::Tabulated { values, .. } => values.iter().all(|&v| v == 0.0 || v == 1.0),
        }
    }
}

/// Finite bath of `n_modes` bosons with frequencies `omega_n = omega_max n / N`
/// and couplings `|g_n|^2 = G^2 omega_n / N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscreteBathSpec {
    pub n_modes: usize,
    pub omega_max: f64,
    pub coupling_g: f64,
    pub omega_0: f64,
}

impl DiscreteBathSpec {
    pub fn new(n_modes: usize, omega_max: f64, coupling_g: f64, omega_0: f64) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::param("n_modes", "must be at least 1"));
        }
        if !(omega_max > 0.0 && omega_max.is_finite()) {
            return Err(Error::param("omega_max", "must be positive"));
        }
        if !coupling_g.is_finite() {
            return Err(Error::param("coupling_g", "must be finite"));
        }
        if !(omega_0 > 0.0 && omega_0.is_finite()) {
            return Err(Error::param("omega_0", "must be positive"));
        }
        Ok(Self {
            n_modes,
            omega_max,
            coupling_g,
            omega_0,
        })
    }

    /// Frequency of mode `n` in `1..=n_modes`.
    pub fn mode_frequency(&self, n: usize) -> f64 {
        self.omega_max * n as f64 / self.n_modes as f64
    }

    /// `|g_n|^2` for mode `n` in `1..=n_modes`.
    pub fn coupling_sq(&self, n: usize) -> f64 {
        self.coupling_g * self.coupling_g * self.mode_frequency(n) / self.n_modes as f64
    }
}

/// Continuum-limit decay rate, line shift and bath correlation time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContinuumRates {
    pub decay_a: f64,
    pub shift: f64,
    pub correlation_time: f64,
}

/// Closed-form rates of a linear bath spectrum in the continuum limit.
pub fn continuum_rates(bath: &DiscreteBathSpec) -> Result<ContinuumRates> {
    let (w0, wm) = (bath.omega_0, bath.omega_max);
    if wm <= w0 {
        return Err(Error::param(
            "omega_max",
            "must exceed omega_0 for the continuum rates",
        ));
    }
    let g2 = bath.coupling_g * bath.coupling_g;
    Ok(ContinuumRates {
        decay_a: 2.0 * PI * g2 * w0 / wm,
        shift: 2.0 * g2 * ((w0 / wm) * (w0 / (wm - w0)).ln() - 1.0),
        correlation_time: 1.0 / w0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaMode {
    Discrete,
    Continuum,
}

/// Bath correlation function `kappa(tau) = sum |g_l|^2 exp(-i (omega_l - omega_0) tau)`,
/// either as the finite sum or its continuum limit. Negative `tau` uses
/// `kappa(-tau) = conj(kappa(tau))`.
pub fn kappa(bath: &DiscreteBathSpec, tau: f64, mode: KappaMode) -> Complex64 {
    if tau < 0.0 {
        return kappa(bath, -tau, mode).conj();
    }
    let g2 = bath.coupling_g * bath.coupling_g;
    match mode {
        KappaMode::Discrete => {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 1..=bath.n_modes {
                let phase = -(bath.mode_frequency(n) - bath.omega_0) * tau;
                acc += bath.coupling_sq(n) * Complex64::from_polar(1.0, phase);
            }
            acc
        }
        KappaMode::Continuum => {
            // omega_max G^2 e^{i w0 tau} int_0^1 xi e^{-i a xi} d xi, a = omega_max tau
            let a = bath.omega_max * tau;
            let integral = if a < 1.0 {
                let mut term = Complex64::new(1.0, 0.0);
                let mut sum = Complex64::new(0.5, 0.0);
                for n in 1..40 {
                    term *= Complex64::new(0.0, -a) / n as f64;
                    sum += term / (n + 2) as f64;
                }
                sum
            } else {
                let i = Complex64::i();
                ((1.0 + i * a) * Complex64::from_polar(1.0, -a) - 1.0) / (a * a)
            };
            bath.omega_max * g2 * Complex64::from_polar(1.0, bath.omega_0 * tau) * integral
        }
    }
}

/// A detector: where it is sensitive and how fast it responds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub profile: SensitivityProfile,
    pub rates: ContinuumRates,
}

impl DetectorSpec {
    /// Detector with directly supplied decay rate and line shift.
    pub fn direct(profile: SensitivityProfile, decay_a: f64, shift: f64) -> Result<Self> {
        if !(decay_a >= 0.0 && decay_a.is_finite()) {
            return Err(Error::param("decay_a", "must be finite and >= 0"));
        }
        if !shift.is_finite() {
            return Err(Error::param("shift", "must be finite"));
        }
        Ok(Self {
            profile,
            rates: ContinuumRates {
                decay_a,
                shift,
                correlation_time: 0.0,
            },
        })
    }

    pub fn from_bath(profile: SensitivityProfile, bath: &DiscreteBathSpec) -> Result<Self> {
        Ok(Self {
            profile,
            rates: continuum_rates(bath)?,
        })
    }

    pub fn decay_a(&self) -> f64 {
        self.rates.decay_a
    }

    /// Complex potential `(shift - i A) chi(x)^2` on `grid`; the shift is
    /// included only when `include_shift` is set.
    pub fn potential(&self, grid: &SpatialGrid, include_shift: bool) -> Result<ComplexPotentialField> {
        let chi = self.profile.sample(grid)?;
        let chi2: Vec<f64> = chi.iter().map(|c| c * c).collect();
        let shift = if include_shift {
            chi2.iter().map(|c| self.rates.shift * c).collect()
        } else {
            vec![0.0; grid.len()]
        };
        let decay = chi2.iter().map(|c| self.rates.decay_a * c).collect();
        ComplexPotentialField::new(*grid, shift, decay)
    }
}

/// `chi(x) psi(x)`.
pub fn project(psi: &WaveFunction, profile: &SensitivityProfile) -> Result<WaveFunction> {
    let chi = profile.sample(psi.grid())?;
    let amps = psi
        .amplitudes()
        .iter()
        .zip(&chi)
        .map(|(a, c)| a * c)
        .collect();
    WaveFunction::new(*psi.grid(), amps, psi.time())
}

/// State right after a first detection: `sqrt(A) chi(x) psi_cond(x)`.
///
/// Its squared norm is `A int chi^2 |psi|^2`, the detection density at that
/// instant. Fails with [`Error::ZeroOverlap`] when it is below
/// [`ZERO_OVERLAP_THRESHOLD`].
pub fn reset(psi_cond: &WaveFunction, det: &DetectorSpec) -> Result<WaveFunction> {
    let projected = project(psi_cond, &det.profile)?;
    let out = projected.scaled(det.rates.decay_a.sqrt());
    let norm_sq = out.norm_sq();
    if norm_sq < ZERO_OVERLAP_THRESHOLD {
        return Err(Error::ZeroOverlap { norm_sq });
    }
    Ok(out)
}
