//! Post-detection particle density from a finite boson bath.
//!
//! For a bath of `N` modes the density right after the first boson emission
//! within `[0, dt]`, per unit `dt`, is
//!
//! ```text
//! rho(x) = (1/dt) sum_l |g_l|^2 | int_0^dt ds e^{i(w_l - w0)s} <x| U(dt - s) chi U(s) |psi> |^2
//! ```
//!
//! with `U` the free propagator. Writing `U(dt - s) = U(dt) U(-s)`, the time
//! integral is accumulated per mode in momentum space and propagated forward
//! once at the end. This is compared with the continuum reset state
//! `A |chi psi|^2`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{continuum_rates, DiscreteBathSpec, SensitivityProfile};
use crate::fourier::Fourier;
use crate::grid::SpatialGrid;
use crate::quadrature::trapezoid_weights;
use crate::wavefunction::{gaussian_free_state, GaussianPacketSpec, ParticleSpec};
use crate::{Error, Result};

/// Minimum number of time samples per period of the fastest bath phase.
pub const SAMPLES_PER_PERIOD: f64 = 20.0;

/// Time samples handled by one work item; fixed so the summation order does
/// not depend on the number of threads.
const CHUNK: usize = 64;
const CHUNKS_PER_BATCH: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteResetConfig {
    pub particle: ParticleSpec,
    pub bath: DiscreteBathSpec,
    pub packet: GaussianPacketSpec,
    pub profile: SensitivityProfile,
    pub delta_t: f64,
    pub n_time_samples: usize,
}

impl DiscreteResetConfig {
    /// Largest `|omega_l - omega_0|` over the bath modes.
    pub fn max_detuning(&self) -> f64 {
        (1..=self.bath.n_modes)
            .map(|n| (self.bath.mode_frequency(n) - self.bath.omega_0).abs())
            .fold(0.0, f64::max)
    }

    /// Fewest samples that resolve the fastest bath phase.
    pub fn min_time_samples(&self) -> usize {
        let periods = self.max_detuning() * self.delta_t / (2.0 * std::f64::consts::PI);
        ((SAMPLES_PER_PERIOD * periods).ceil() as usize + 1).max(2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return Err(Error::param("delta_t", "must be positive"));
        }
        let need = self.min_time_samples();
        if self.n_time_samples < need {
            return Err(Error::param(
                "n_time_samples",
                format!(
                    "{} samples under-resolve the bath phases; need at least {need}",
                    self.n_time_samples
                ),
            ));
        }
        Ok(())
    }
}

/// A non-negative density on a grid together with its integral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityProfile {
    pub grid: SpatialGrid,
    pub values: Vec<f64>,
    pub normalization: f64,
}

impl DensityProfile {
    pub fn new(grid: SpatialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::param("density", "values must be finite and >= 0"));
        }
        let normalization = values.iter().sum::<f64>() * grid.dx();
        Ok(Self {
            grid,
            values,
            normalization,
        })
    }

    pub fn unit_normalized(&self) -> Result<Vec<f64>> {
        if !(self.normalization > 0.0) {
            return Err(Error::ZeroNorm);
        }
        Ok(self.values.iter().map(|v| v / self.normalization).collect())
    }
}

/// Reset density of the finite bath (per unit `delta_t`), see the module docs.
pub fn discrete_reset_density(cfg: &DiscreteResetConfig, grid: &SpatialGrid) -> Result<DensityProfile> {
    cfg.validate()?;
    let n = grid.len();
    let chi = cfg.profile.sample(grid)?;
    let n_modes = cfg.bath.n_modes;
    let times: Vec<f64> = (0..cfg.n_time_samples)
        .map(|j| cfg.delta_t * j as f64 / (cfg.n_time_samples - 1) as f64)
        .collect();
    let weights = trapezoid_weights(&times);
    let detunings: Vec<f64> = (1..=n_modes)
        .map(|l| cfg.bath.mode_frequency(l) - cfg.bath.omega_0)
        .collect();
    let energy_rate: Vec<f64> = (0..n)
        .map(|j| {
            let k = grid.k(j);
            0.5 * cfg.particle.hbar_over_mass() * k * k
        })
        .collect();

    // per-chunk partial sums of S_l(k) = sum_j w_j e^{i d_l t_j} e^{i E_k t_j} F[chi psi(t_j)](k)
    let chunk_sum = |c: usize| -> Result<Vec<Complex64>> {
        let mut fourier = Fourier::new(n);
        let mut acc = vec![Complex64::new(0.0, 0.0); n_modes * n];
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(times.len());
        for j in lo..hi {
            let t = times[j];
            let psi = gaussian_free_state(&cfg.packet, &cfg.particle, t, grid)?;
            let mut v: Vec<Complex64> = psi
                .amplitudes()
                .iter()
                .zip(&chi)
                .map(|(a, c)| a * c)
                .collect();
            fourier.forward(&mut v);
            for (a, e) in v.iter_mut().zip(&energy_rate) {
                *a *= Complex64::from_polar(weights[j], e * t);
            }
            for (l, d) in detunings.iter().enumerate() {
                let phase = Complex64::from_polar(1.0, d * t);
                for (s, a) in acc[l * n..(l + 1) * n].iter_mut().zip(&v) {
                    *s += phase * a;
                }
            }
        }
        Ok(acc)
    };

    let n_chunks = times.len().div_ceil(CHUNK);
    let mut total = vec![Complex64::new(0.0, 0.0); n_modes * n];
    for batch in (0..n_chunks).step_by(CHUNKS_PER_BATCH) {
        let parts: Vec<Result<Vec<Complex64>>> = (batch..(batch + CHUNKS_PER_BATCH).min(n_chunks))
            .into_par_iter()
            .map(chunk_sum)
            .collect();
        for part in parts {
            for (t, p) in total.iter_mut().zip(part?) {
                *t += p;
            }
        }
    }

    let mut fourier = Fourier::new(n);
    let forward: Vec<Complex64> = energy_rate
        .iter()
        .map(|e| Complex64::from_polar(1.0 / n as f64, -e * cfg.delta_t))
        .collect();
    let mut density = vec![0.0; n];
    for l in 0..n_modes {
        let s = &mut total[l * n..(l + 1) * n];
        for (a, f) in s.iter_mut().zip(&forward) {
            *a *= f;
        }
        fourier.inverse(s);
        let g2 = cfg.bath.coupling_sq(l + 1);
        for (d, a) in density.iter_mut().zip(s.iter()) {
            *d += g2 * a.norm_sqr();
        }
    }
    for d in density.iter_mut() {
        *d /= cfg.delta_t;
    }
    DensityProfile::new(*grid, density)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergedDensity {
    pub profile: DensityProfile,
    pub n_time_samples: usize,
    /// L1 distance between the unit-normalized profiles at `n` and `2n - 1`
    /// samples.
    pub l1_change: f64,
}

/// [`discrete_reset_density`] with a doubling check: the quadrature is
/// refined once and the two unit-normalized profiles must differ by less
/// than `tolerance` in L1.
pub fn discrete_reset_density_converged(
    cfg: &DiscreteResetConfig,
    grid: &SpatialGrid,
    tolerance: f64,
) -> Result<ConvergedDensity> {
    let coarse = discrete_reset_density(cfg, grid)?;
    let refined_cfg = DiscreteResetConfig {
        n_time_samples: 2 * cfg.n_time_samples - 1,
        ..cfg.clone()
    };
    let fine = discrete_reset_density(&refined_cfg, grid)?;
    let change = compare_densities(&coarse, &fine, (0.0, 0.0))?.l1_full;
    if change >= tolerance {
        return Err(Error::ConvergenceFailed {
            what: "discrete reset density time quadrature".into(),
            change,
            tolerance,
        });
    }
    Ok(ConvergedDensity {
        profile: fine,
        n_time_samples: refined_cfg.n_time_samples,
        l1_change: change,
    })
}

/// Continuum reset density `A |chi psi(delta_t)|^2` with `A` from the
/// continuum limit of the bath.
pub fn continuum_reset_density(cfg: &DiscreteResetConfig, grid: &SpatialGrid) -> Result<DensityProfile> {
    let a = continuum_rates(&cfg.bath)?.decay_a;
    let chi = cfg.profile.sample(grid)?;
    let psi = gaussian_free_state(&cfg.packet, &cfg.particle, cfg.delta_t, grid)?;
    let values = psi
        .amplitudes()
        .iter()
        .zip(&chi)
        .map(|(p, c)| a * c * c * p.norm_sqr())
        .collect();
    DensityProfile::new(*grid, values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonMetrics {
    /// L1 distance of the unit-normalized densities over the whole grid.
    pub l1_full: f64,
    /// The same, leaving out grid points inside `exclusion`.
    pub l1_masked: f64,
    pub exclusion: (f64, f64),
}

/// L1 distances between two densities after normalizing each to unit mass.
/// Points with `exclusion.0 <= x <= exclusion.1` are left out of the masked
/// distance.
pub fn compare_densities(
    a: &DensityProfile,
    b: &DensityProfile,
    exclusion: (f64, f64),
) -> Result<ComparisonMetrics> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let (ua, ub) = (a.unit_normalized()?, b.unit_normalized()?);
    let dx = a.grid.dx();
    let mut full = 0.0;
    let mut masked = 0.0;
    for (i, x) in a.grid.positions().enumerate() {
        let d = (ua[i] - ub[i]).abs() * dx;
        full += d;
        if x < exclusion.0 || x > exclusion.1 {
            masked += d;
        }
    }
    Ok(ComparisonMetrics {
        l1_full: full,
        l1_masked: masked,
        exclusion,
    })
}

/// The window `edge +- 2 sigma_x` around a detector edge, where the discrete
/// and continuum reset densities are expected to differ.
pub fn edge_exclusion(edge: f64, sigma_x: f64) -> (f64, f64) {
    (edge - 2.0 * sigma_x, edge + 2.0 * sigma_x)
}
