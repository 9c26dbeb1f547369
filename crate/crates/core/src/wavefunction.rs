//! Wave functions on a [`SpatialGrid`], analytic free Gaussian packets, and
//! position/momentum moments.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constants::{CESIUM_MASS, HBAR};
use crate::fourier::Fourier;
use crate::grid::SpatialGrid;
use crate::{Error, Result};

/// Allowed excess of the squared norm above one for physical states.
pub const NORM_TOLERANCE: f64 = 1e-9;

/// Largest tolerated deviation of the sampled Gaussian's norm from one.
const PACKET_NORM_TOLERANCE: f64 = 1e-10;

/// Number of momentum standard deviations that must fit below `k_max`.
const PACKET_K_MARGIN: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParticleSpec {
    /// Mass in kg.
    pub mass: f64,
    /// Reduced Planck constant in J s.
    pub hbar: f64,
}

impl ParticleSpec {
    pub fn new(mass: f64) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::param("mass", format!("must be positive, got {mass:e}")));
        }
        Ok(Self { mass, hbar: HBAR })
    }

    pub fn cesium() -> Self {
        Self {
            mass: CESIUM_MASS,
            hbar: HBAR,
        }
    }

    /// `hbar / m`, m^2/s.
    pub fn hbar_over_mass(&self) -> f64 {
        self.hbar / self.mass
    }

    pub fn kinetic_energy(&self, velocity: f64) -> f64 {
        0.5 * self.mass * velocity * velocity
    }

    pub fn wave_number(&self, velocity: f64) -> f64 {
        velocity / self.hbar_over_mass()
    }
}

/// Minimal-uncertainty Gaussian packet
/// `psi(x, 0) = (2 pi sigma^2)^(-1/4) exp(-(x - x0)^2 / (4 sigma^2)) exp(i m v0 x / hbar)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPacketSpec {
    pub center_x0: f64,
    /// Position standard deviation of `|psi|^2` at t = 0.
    pub sigma_x: f64,
    pub mean_velocity_v0: f64,
}

impl GaussianPacketSpec {
    pub fn new(center_x0: f64, sigma_x: f64, mean_velocity_v0: f64) -> Result<Self> {
        if !(sigma_x > 0.0 && sigma_x.is_finite()) {
            return Err(Error::param("sigma_x", format!("must be positive, got {sigma_x:e}")));
        }
        if !center_x0.is_finite() || !mean_velocity_v0.is_finite() {
            return Err(Error::param("packet", "center and velocity must be finite"));
        }
        Ok(Self {
            center_x0,
            sigma_x,
            mean_velocity_v0,
        })
    }

    /// Wave-number standard deviation, `1 / (2 sigma_x)`.
    pub fn sigma_k(&self) -> f64 {
        0.5 / self.sigma_x
    }

    /// Position width of the freely evolved packet at time `t`.
    pub fn sigma_at(&self, particle: &ParticleSpec, t: f64) -> f64 {
        let s = particle.hbar_over_mass() * t / (2.0 * self.sigma_x * self.sigma_x);
        self.sigma_x * (1.0 + s * s).sqrt()
    }

    pub fn center_at(&self, t: f64) -> f64 {
        self.center_x0 + self.mean_velocity_v0 * t
    }

    /// Analytic amplitude of the freely evolved packet.
    pub fn amplitude(&self, particle: &ParticleSpec, x: f64, t: f64) -> Complex64 {
        let k0 = particle.wave_number(self.mean_velocity_v0);
        let hm = particle.hbar_over_mass();
        // complex width sigma_t = sigma (1 + i hbar t / (2 m sigma^2))
        let sigma_t = Complex64::new(self.sigma_x, hm * t / (2.0 * self.sigma_x));
        let prefactor =
            (2.0 * PI * self.sigma_x * self.sigma_x).powf(-0.25) * (self.sigma_x / sigma_t).sqrt();
        let y = x - self.center_at(t);
        let gauss = -(y * y) / (4.0 * self.sigma_x * sigma_t);
        let phase = Complex64::new(0.0, k0 * x - 0.5 * hm * k0 * k0 * t);
        prefactor * (gauss + phase).exp()
    }

    /// Momentum-space amplitude `phi(k) = (2 pi)^(-1/2) int psi(x, 0) e^{-ikx} dx`.
    pub fn momentum_amplitude(&self, particle: &ParticleSpec, k: f64) -> Complex64 {
        let k0 = particle.wave_number(self.mean_velocity_v0);
        let s = self.sigma_x;
        let magnitude =
            (2.0 * s * s / PI).powf(0.25) * (-(s * s) * (k - k0) * (k - k0)).exp();
        magnitude * Complex64::new(0.0, -(k - k0) * self.center_x0).exp()
    }
}

/// Complex amplitudes sampled on a grid at a given time.
///
/// The squared norm is `sum |psi_i|^2 dx`. Conditional states have norm at
/// most one; reset states carry the detection density as their squared norm
/// (units 1/s), so the bound is checked by [`WaveFunction::check_physical_norm`]
/// rather than at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: SpatialGrid,
    amplitudes: Vec<Complex64>,
    time: f64,
}

impl WaveFunction {
    pub fn new(grid: SpatialGrid, amplitudes: Vec<Complex64>, time: f64) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if amplitudes.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite { step: 0, time });
        }
        Ok(Self {
            grid,
            amplitudes,
            time,
        })
    }

    pub(crate) fn from_parts_unchecked(
        grid: SpatialGrid,
        amplitudes: Vec<Complex64>,
        time: f64,
    ) -> Self {
        debug_assert_eq!(amplitudes.len(), grid.len());
        Self {
            grid,
            amplitudes,
            time,
        }
    }

    pub fn zeros(grid: SpatialGrid, time: f64) -> Self {
        Self {
            grid,
            amplitudes: vec![Complex64::new(0.0, 0.0); grid.len()],
            time,
        }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub(crate) fn set_time(&mut self, time: f64) {
        self.time = time;
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn norm_sq(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid,
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
            time: self.time,
        }
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_sq();
        if n <= 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(self.scaled(1.0 / n.sqrt()))
    }

    /// `<self|other>` with the grid measure.
    pub fn inner(&self, other: &WaveFunction) -> Result<Complex64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let s: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(s * self.grid.dx())
    }

    /// L2 distance `||self - other||`.
    pub fn l2_distance(&self, other: &WaveFunction) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let s: f64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        Ok((s * self.grid.dx()).sqrt())
    }

    pub fn check_physical_norm(&self) -> Result<()> {
        let n = self.norm_sq();
        if n > 1.0 + NORM_TOLERANCE {
            return Err(Error::param(
                "wave function",
                format!("squared norm {n} exceeds 1 + {NORM_TOLERANCE:e}"),
            ));
        }
        Ok(())
    }

    /// Discrete approximation of `phi(k) = (2 pi)^(-1/2) int psi(x) e^{-ikx} dx`
    /// in FFT bin order.
    pub fn momentum_amplitudes(&self) -> Vec<Complex64> {
        let mut buf = self.amplitudes.clone();
        Fourier::new(buf.len()).forward(&mut buf);
        let dx = self.grid.dx();
        let x0 = self.grid.x_min();
        let scale = dx / (2.0 * PI).sqrt();
        buf.iter()
            .enumerate()
            .map(|(j, a)| {
                let k = self.grid.k(j);
                a * scale * Complex64::new(0.0, -k * x0).exp()
            })
            .collect()
    }

    /// Momentum density `rho(p)` (s/(kg m)) on increasing momenta `p = hbar k`,
    /// normalized so that `sum rho dp` equals the squared norm.
    pub fn momentum_density(&self, particle: &ParticleSpec) -> (Vec<f64>, Vec<f64>) {
        let phi = self.momentum_amplitudes();
        let order = self.grid.sorted_k_order();
        let p = order.iter().map(|&j| particle.hbar * self.grid.k(j)).collect();
        let rho = order
            .iter()
            .map(|&j| phi[j].norm_sqr() / particle.hbar)
            .collect();
        (p, rho)
    }
}

/// Squared norm and first two moments in position and momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub norm_sq: f64,
    pub mean_x: f64,
    pub std_x: f64,
    pub mean_p: f64,
    pub std_p: f64,
}

impl Moments {
    /// `std_x std_p / (hbar / 2)`, at least one for any state.
    pub fn uncertainty_ratio(&self, particle: &ParticleSpec) -> f64 {
        self.std_x * self.std_p / (0.5 * particle.hbar)
    }
}

/// Freely evolved Gaussian packet sampled on `grid` at time `t`.
///
/// Fails when the grid truncates more than `1e-10` of the probability or
/// cannot resolve the packet's momentum content.
pub fn gaussian_free_state(
    packet: &GaussianPacketSpec,
    particle: &ParticleSpec,
    t: f64,
    grid: &SpatialGrid,
) -> Result<WaveFunction> {
    let k0 = particle.wave_number(packet.mean_velocity_v0);
    let k_needed = k0.abs() + PACKET_K_MARGIN * packet.sigma_k();
    if k_needed > grid.k_max() {
        return Err(Error::PacketNotRepresented(format!(
            "|k0| + {PACKET_K_MARGIN} sigma_k = {k_needed:e} 1/m exceeds k_max = {:e} 1/m",
            grid.k_max()
        )));
    }
    let amplitudes: Vec<Complex64> = grid
        .positions()
        .map(|x| packet.amplitude(particle, x, t))
        .collect();
    let psi = WaveFunction::from_parts_unchecked(*grid, amplitudes, t);
    let deficit = 1.0 - psi.norm_sq();
    if deficit.abs() > PACKET_NORM_TOLERANCE {
        return Err(Error::PacketNotRepresented(format!(
            "sampled norm misses unity by {deficit:e} (tail truncated or under-resolved)"
        )));
    }
    Ok(psi)
}

/// Squared norm and position/momentum moments of `psi`.
///
/// Momentum moments come from the discrete Fourier dual; by Parseval its norm
/// equals the position-space norm.
pub fn observables(psi: &WaveFunction, particle: &ParticleSpec) -> Result<Moments> {
    let grid = psi.grid();
    let density = psi.density();
    let total: f64 = density.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::ZeroNorm);
    }
    let mean_x = grid
        .positions()
        .zip(&density)
        .map(|(x, d)| x * d)
        .sum::<f64>()
        / total;
    let var_x = grid
        .positions()
        .zip(&density)
        .map(|(x, d)| (x - mean_x) * (x - mean_x) * d)
        .sum::<f64>()
        / total;

    let mut phi = psi.amplitudes().to_vec();
    Fourier::new(phi.len()).forward(&mut phi);
    let weights: Vec<f64> = phi.iter().map(|a| a.norm_sqr()).collect();
    let total_k: f64 = weights.iter().sum();
    let mean_k = weights
        .iter()
        .enumerate()
        .map(|(j, w)| grid.k(j) * w)
        .sum::<f64>()
        / total_k;
    let var_k = weights
        .iter()
        .enumerate()
        .map(|(j, w)| (grid.k(j) - mean_k).powi(2) * w)
        .sum::<f64>()
        / total_k;

    Ok(Moments {
        norm_sq: total * grid.dx(),
        mean_x,
        std_x: var_x.max(0.0).sqrt(),
        mean_p: particle.hbar * mean_k,
        std_p: particle.hbar * var_k.max(0.0).sqrt(),
    })
}
