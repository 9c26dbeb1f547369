//! Conditional time evolution under
//! `H_cond = p^2 / 2m + (hbar / 2) [shift(x) - i decay(x)]`.
//!
//! The scheme is second-order Strang splitting: half a potential step
//! (exact pointwise exponential), a full kinetic step in Fourier space, and
//! another half potential step. Consecutive half steps are merged, so a step
//! costs one FFT pair and one pointwise pass.
//!
//! Besides the detector, a potential may carry an absorbing layer at both
//! grid ends. Norm lost there is bookkept separately from detections: it
//! stands for particles leaving the apparatus undetected, and it keeps the
//! periodic grid from wrapping fast components back into the detectors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fourier::Fourier;
use crate::grid::SpatialGrid;
use crate::quadrature::density_moments;
use crate::wavefunction::{ParticleSpec, WaveFunction};
use crate::{Error, Result};

/// Quadratic absorbing ramps of the given width at both ends of the grid.
///
/// The rate rises from zero at distance `width` from a grid end to
/// `strength` at the end itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorbingBoundary {
    pub width: f64,
    pub strength: f64,
}

impl AbsorbingBoundary {
    pub fn none() -> Self {
        Self {
            width: 0.0,
            strength: 0.0,
        }
    }

    pub fn new(width: f64, strength: f64) -> Result<Self> {
        if !(width >= 0.0 && width.is_finite()) {
            return Err(Error::param("absorber width", "must be finite and >= 0"));
        }
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(Error::param("absorber strength", "must be finite and >= 0"));
        }
        Ok(Self { width, strength })
    }

    pub fn is_active(&self) -> bool {
        self.width > 0.0 && self.strength > 0.0
    }

    pub fn rates(&self, grid: &SpatialGrid) -> Vec<f64> {
        if !self.is_active() {
            return vec![0.0; grid.len()];
        }
        grid.positions()
            .map(|x| {
                let depth = (self.width - (x - grid.x_min()))
                    .max(self.width - (grid.x_max() - x))
                    .max(0.0);
                let s = depth / self.width;
                self.strength * s * s
            })
            .collect()
    }
}

/// Samples of the complex potential on a grid, in rate units (1/s):
/// the Hamiltonian term is `(hbar / 2) (real_shift - i decay_rate)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexPotentialField {
    grid: SpatialGrid,
    real_shift: Vec<f64>,
    decay_rate: Vec<f64>,
    boundary_rate: Vec<f64>,
}

impl ComplexPotentialField {
    pub fn new(grid: SpatialGrid, real_shift: Vec<f64>, decay_rate: Vec<f64>) -> Result<Self> {
        if real_shift.len() != grid.len() || decay_rate.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        if real_shift.iter().chain(&decay_rate).any(|v| !v.is_finite()) {
            return Err(Error::param("potential", "samples must be finite"));
        }
        if decay_rate.iter().any(|&a| a < 0.0) {
            return Err(Error::param("decay_rate", "must be non-negative everywhere"));
        }
        Ok(Self {
            grid,
            real_shift,
            decay_rate,
            boundary_rate: vec![0.0; grid.len()],
        })
    }

    pub fn zero(grid: SpatialGrid) -> Self {
        Self {
            grid,
            real_shift: vec![0.0; grid.len()],
            decay_rate: vec![0.0; grid.len()],
            boundary_rate: vec![0.0; grid.len()],
        }
    }

    pub fn uniform_decay(grid: SpatialGrid, rate: f64) -> Result<Self> {
        Self::new(grid, vec![0.0; grid.len()], vec![rate; grid.len()])
    }

    pub fn with_boundary(mut self, boundary: &AbsorbingBoundary) -> Self {
        self.boundary_rate = boundary.rates(&self.grid);
        self
    }

    /// Adds another field's shift and decay (not its boundary layer).
    pub fn superpose(mut self, other: &ComplexPotentialField) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        for (a, b) in self.real_shift.iter_mut().zip(&other.real_shift) {
            *a += b;
        }
        for (a, b) in self.decay_rate.iter_mut().zip(&other.decay_rate) {
            *a += b;
        }
        Ok(self)
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn real_shift(&self) -> &[f64] {
        &self.real_shift
    }

    pub fn decay_rate(&self) -> &[f64] {
        &self.decay_rate
    }

    pub fn boundary_rate(&self) -> &[f64] {
        &self.boundary_rate
    }

    /// First-detection density `w1 = int decay(x) |psi(x)|^2 dx`.
    pub fn detection_rate(&self, psi: &WaveFunction) -> Result<f64> {
        if psi.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(psi
            .amplitudes()
            .iter()
            .zip(&self.decay_rate)
            .map(|(a, r)| r * a.norm_sqr())
            .sum::<f64>()
            * self.grid.dx())
    }
}

/// Survival probability and first-detection density sampled in time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub times: Vec<f64>,
    pub survival_p0: Vec<f64>,
    pub density_w1: Vec<f64>,
    pub cumulative_detected: Vec<f64>,
    /// Cumulative norm removed by the absorbing boundary layer.
    pub boundary_loss: Vec<f64>,
}

impl DetectionRecord {
    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            survival_p0: Vec::with_capacity(n),
            density_w1: Vec::with_capacity(n),
            cumulative_detected: Vec::with_capacity(n),
            boundary_loss: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn total_detected(&self) -> f64 {
        self.cumulative_detected.last().copied().unwrap_or(0.0)
    }

    pub fn final_survival(&self) -> f64 {
        self.survival_p0.last().copied().unwrap_or(0.0)
    }

    pub fn total_boundary_loss(&self) -> f64 {
        self.boundary_loss.last().copied().unwrap_or(0.0)
    }

    pub fn peak_index(&self) -> usize {
        self.density_w1
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &w)| {
                if w > best.1 {
                    (i, w)
                } else {
                    best
                }
            })
            .0
    }

    /// Time of the maximum of `w1`, refined by a parabola through the
    /// largest sample and its neighbours.
    pub fn peak_time(&self) -> f64 {
        let i = self.peak_index();
        if i == 0 || i + 1 >= self.len() {
            return self.times[i];
        }
        let (y0, y1, y2) = (
            self.density_w1[i - 1],
            self.density_w1[i],
            self.density_w1[i + 1],
        );
        let h = self.times[i] - self.times[i - 1];
        let denom = y0 - 2.0 * y1 + y2;
        if denom >= 0.0 {
            return self.times[i];
        }
        self.times[i] + 0.5 * h * (y0 - y2) / denom
    }

    /// Mass, mean and standard deviation of `w1` over the recorded times.
    pub fn moments(&self) -> Option<(f64, f64, f64)> {
        density_moments(&self.times, &self.density_w1)
    }

    /// `-dP0/dt` at sample `i` by central differences.
    pub fn survival_derivative(&self, i: usize) -> Option<f64> {
        if i == 0 || i + 1 >= self.len() {
            return None;
        }
        Some(
            -(self.survival_p0[i + 1] - self.survival_p0[i - 1])
                / (self.times[i + 1] - self.times[i - 1]),
        )
    }

    /// Largest `|P0 + detected + boundary loss - P0(0)|` over the samples.
    pub fn bookkeeping_error(&self) -> f64 {
        let p_init = self.survival_p0.first().copied().unwrap_or(0.0);
        (0..self.len())
            .map(|i| {
                (self.survival_p0[i] + self.cumulative_detected[i] + self.boundary_loss[i]
                    - p_init)
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

/// When to end an evolution before its step budget is spent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StopRule {
    Never,
    /// Stop once the squared norm falls below the given value.
    NormBelow(f64),
    /// Stop once more than half of the initial norm has been detected and the
    /// detection density has dropped below `relative` times its maximum, or
    /// once the squared norm falls below `norm`.
    DetectionFinished { relative: f64, norm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub sample_stride: usize,
    /// Step indices at which to keep a copy of the state (sorted ascending).
    pub capture_steps: Vec<usize>,
    pub stop: StopRule,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            sample_stride: 1,
            capture_steps: Vec::new(),
            stop: StopRule::Never,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub state: WaveFunction,
    pub record: DetectionRecord,
    pub captured: Vec<WaveFunction>,
    pub steps_taken: usize,
}

#[derive(Clone, Copy, Default)]
struct Rates {
    norm_sq: f64,
    detect: f64,
    boundary: f64,
}

/// Split-operator propagator for a fixed potential, particle and time step.
pub struct Propagator {
    grid: SpatialGrid,
    dt: f64,
    half: Vec<Complex64>,
    full: Vec<Complex64>,
    inv_half: Vec<Complex64>,
    kinetic: Vec<Complex64>,
    decay: Vec<f64>,
    boundary: Vec<f64>,
    // |half|^2 and rate * |half|^2: observables of the merged intermediate state
    norm_weight: Vec<f64>,
    detect_weight: Vec<f64>,
    boundary_weight: Vec<f64>,
    fourier: Fourier,
}

impl Propagator {
    pub fn new(pot: &ComplexPotentialField, particle: &ParticleSpec, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", format!("must be positive, got {dt:e}")));
        }
        let grid = *pot.grid();
        let n = grid.len();
        let exponent = |i: usize, tau: f64| {
            // exp(-i H_pot tau / hbar) with H_pot = (hbar/2)(shift - i(decay + boundary))
            Complex64::new(
                -0.5 * (pot.decay_rate[i] + pot.boundary_rate[i]) * tau,
                -0.5 * pot.real_shift[i] * tau,
            )
        };
        let half: Vec<Complex64> = (0..n).map(|i| exponent(i, 0.5 * dt).exp()).collect();
        let full: Vec<Complex64> = (0..n).map(|i| exponent(i, dt).exp()).collect();
        let inv_half: Vec<Complex64> = (0..n).map(|i| (-exponent(i, 0.5 * dt)).exp()).collect();
        let hm = particle.hbar_over_mass();
        let inv_n = 1.0 / n as f64;
        let kinetic = (0..n)
            .map(|j| {
                let k = grid.k(j);
                Complex64::new(0.0, -0.5 * hm * k * k * dt).exp() * inv_n
            })
            .collect();
        let norm_weight: Vec<f64> = half.iter().map(|h| h.norm_sqr()).collect();
        let detect_weight = norm_weight
            .iter()
            .zip(&pot.decay_rate)
            .map(|(w, r)| w * r)
            .collect();
        let boundary_weight = norm_weight
            .iter()
            .zip(&pot.boundary_rate)
            .map(|(w, r)| w * r)
            .collect();
        Ok(Self {
            grid,
            dt,
            half,
            full,
            inv_half,
            kinetic,
            decay: pot.decay_rate.clone(),
            boundary: pot.boundary_rate.clone(),
            norm_weight,
            detect_weight,
            boundary_weight,
            fourier: Fourier::new(n),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    fn kinetic_step(&mut self, u: &mut [Complex64]) {
        self.fourier.forward(u);
        for (a, k) in u.iter_mut().zip(&self.kinetic) {
            *a *= k;
        }
        self.fourier.inverse(u);
    }

    /// One plain Strang step, in place.
    pub fn step(&mut self, psi: &mut WaveFunction) -> Result<()> {
        if psi.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let t = psi.time() + self.dt;
        let u = psi.amplitudes_mut();
        for (a, h) in u.iter_mut().zip(&self.half) {
            *a *= h;
        }
        self.kinetic_step(u);
        for (a, h) in u.iter_mut().zip(&self.half) {
            *a *= h;
        }
        if u.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::NonFinite { step: 1, time: t });
        }
        psi.set_time(t);
        Ok(())
    }

    fn plain_rates(&self, u: &[Complex64]) -> Rates {
        let mut r = Rates::default();
        for ((a, d), b) in u.iter().zip(&self.decay).zip(&self.boundary) {
            let p = a.norm_sqr();
            r.norm_sq += p;
            r.detect += d * p;
            r.boundary += b * p;
        }
        r.scaled(self.grid.dx())
    }

    /// Rates of `half * u`, then `u *= full`.
    #[allow(clippy::needless_range_loop)]
    fn observe_and_advance_potential(&self, u: &mut [Complex64]) -> Rates {
        let mut r = Rates::default();
        for i in 0..u.len() {
            let p = u[i].norm_sqr();
            r.norm_sq += self.norm_weight[i] * p;
            r.detect += self.detect_weight[i] * p;
            r.boundary += self.boundary_weight[i] * p;
            u[i] *= self.full[i];
        }
        r.scaled(self.grid.dx())
    }

    /// Evolves `psi0` for up to `n_steps` steps, recording every
    /// `sample_stride`-th step and the last one.
    pub fn evolve(
        &mut self,
        psi0: &WaveFunction,
        n_steps: usize,
        opts: &EvolveOptions,
    ) -> Result<Evolution> {
        if psi0.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        if opts.sample_stride == 0 {
            return Err(Error::param("sample_stride", "must be >= 1"));
        }
        let t0 = psi0.time();
        let stride = opts.sample_stride;
        let mut record = DetectionRecord::with_capacity(n_steps / stride + 2);
        let mut captured = Vec::with_capacity(opts.capture_steps.len());
        let mut capture_iter = opts.capture_steps.iter().copied().peekable();

        let rates0 = self.plain_rates(psi0.amplitudes());
        if !rates0.is_finite() {
            return Err(Error::NonFinite { step: 0, time: t0 });
        }
        let mut cum_detect = 0.0;
        let mut cum_boundary = 0.0;
        let mut max_detect = rates0.detect;
        let mut prev = rates0;
        let push = |rec: &mut DetectionRecord, t: f64, r: &Rates, cd: f64, cb: f64| {
            rec.times.push(t);
            rec.survival_p0.push(r.norm_sq);
            rec.density_w1.push(r.detect);
            rec.cumulative_detected.push(cd);
            rec.boundary_loss.push(cb);
        };
        push(&mut record, t0, &rates0, 0.0, 0.0);
        while capture_iter.next_if(|&s| s == 0).is_some() {
            captured.push(psi0.clone());
        }
        if n_steps == 0 || self.should_stop(opts.stop, &rates0, 0.0, max_detect, rates0.norm_sq)
        {
            return Ok(Evolution {
                state: psi0.clone(),
                record,
                captured,
                steps_taken: 0,
            });
        }

        let p_init = rates0.norm_sq;
        let mut u = psi0.amplitudes().to_vec();
        for (a, h) in u.iter_mut().zip(&self.half) {
            *a *= h;
        }
        let mut steps_taken = n_steps;
        for n in 1..=n_steps {
            self.kinetic_step(&mut u);
            let t = t0 + n as f64 * self.dt;
            if capture_iter.peek() == Some(&n) {
                let state: Vec<Complex64> =
                    u.iter().zip(&self.half).map(|(a, h)| a * h).collect();
                let wf = WaveFunction::from_parts_unchecked(self.grid, state, t);
                while capture_iter.next_if(|&s| s == n).is_some() {
                    captured.push(wf.clone());
                }
            }
            // u now holds full * (state at step n) / half; undo on exit
            let rates = self.observe_and_advance_potential(&mut u);
            if !rates.is_finite() {
                return Err(Error::NonFinite { step: n, time: t });
            }
            cum_detect += 0.5 * self.dt * (prev.detect + rates.detect);
            cum_boundary += 0.5 * self.dt * (prev.boundary + rates.boundary);
            max_detect = max_detect.max(rates.detect);
            prev = rates;
            let stop = self.should_stop(opts.stop, &rates, cum_detect, max_detect, p_init);
            let is_last = n == n_steps || stop;
            if n % stride == 0 || is_last {
                push(&mut record, t, &rates, cum_detect, cum_boundary);
            }
            if is_last {
                steps_taken = n;
                break;
            }
        }
        // state = half * (u / full) = u * inv_half
        for (a, h) in u.iter_mut().zip(&self.inv_half) {
            *a *= h;
        }
        let state = WaveFunction::from_parts_unchecked(
            self.grid,
            u,
            t0 + steps_taken as f64 * self.dt,
        );
        Ok(Evolution {
            state,
            record,
            captured,
            steps_taken,
        })
    }

    fn should_stop(
        &self,
        rule: StopRule,
        rates: &Rates,
        cum_detect: f64,
        max_detect: f64,
        p_init: f64,
    ) -> bool {
        match rule {
            StopRule::Never => false,
            StopRule::NormBelow(limit) => rates.norm_sq < limit,
            StopRule::DetectionFinished { relative, norm } => {
                rates.norm_sq < norm
                    || (max_detect > 0.0
                        && cum_detect > 0.5 * p_init
                        && rates.detect < relative * max_detect)
            }
        }
    }
}

impl Rates {
    fn scaled(mut self, dx: f64) -> Self {
        self.norm_sq *= dx;
        self.detect *= dx;
        self.boundary *= dx;
        self
    }

    fn is_finite(&self) -> bool {
        self.norm_sq.is_finite() && self.detect.is_finite() && self.boundary.is_finite()
    }
}

/// Advances `psi` by one step of size `dt`.
pub fn step(
    psi: &WaveFunction,
    pot: &ComplexPotentialField,
    particle: &ParticleSpec,
    dt: f64,
) -> Result<WaveFunction> {
    if psi.grid() != pot.grid() {
        return Err(Error::GridMismatch);
    }
    let mut prop = Propagator::new(pot, particle, dt)?;
    let mut out = psi.clone();
    prop.step(&mut out)?;
    Ok(out)
}

/// Number of whole steps of size `dt` from `t0` to `t_final` (rounded).
pub fn steps_between(t0: f64, t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) {
        return Err(Error::param("dt", "must be positive"));
    }
    if !(t_final > t0) {
        return Err(Error::param(
            "t_final",
            format!("must be later than the initial time {t0:e}"),
        ));
    }
    Ok((((t_final - t0) / dt).round() as usize).max(1))
}

/// Evolves `psi0` to `t_final` (rounded to a whole number of steps),
/// returning the unnormalized conditional state and the detection record.
pub fn evolve_conditional(
    psi0: &WaveFunction,
    pot: &ComplexPotentialField,
    particle: &ParticleSpec,
    t_final: f64,
    dt: f64,
    sample_stride: usize,
) -> Result<(WaveFunction, DetectionRecord)> {
    let n = steps_between(psi0.time(), t_final, dt)?;
    let mut prop = Propagator::new(pot, particle, dt)?;
    let evo = prop.evolve(
        psi0,
        n,
        &EvolveOptions {
            sample_stride,
            ..Default::default()
        },
    )?;
    Ok((evo.state, evo.record))
}

/// Relative changes of the mean and standard deviation of `w1` between two
/// records (reference first).
pub fn w1_moment_changes(reference: &DetectionRecord, refined: &DetectionRecord) -> (f64, f64) {
    let (_, m0, s0) = reference.moments().unwrap_or((0.0, 0.0, 0.0));
    let (_, m1, s1) = refined.moments().unwrap_or((0.0, 0.0, 0.0));
    let rel = |a: f64, b: f64| {
        if a == b {
            0.0
        } else {
            (a - b).abs() / a.abs().max(b.abs())
        }
    };
    (rel(m0, m1), rel(s0, s1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use crate::wavefunction::{gaussian_free_state, GaussianPacketSpec};
    use approx::assert_relative_eq;

    fn setup() -> (SpatialGrid, ParticleSpec, GaussianPacketSpec) {
        (
            build_grid(-64e-6, 192e-6, 8192).unwrap(),
            ParticleSpec::cesium(),
            GaussianPacketSpec::new(-6e-6, 1e-6, 7.17e-3).unwrap(),
        )
    }

    #[test]
    fn free_step_is_unitary() {
        let (g, p, packet) = setup();
        let psi = gaussian_free_state(&packet, &p, 0.0, &g).unwrap();
        let mut prop = Propagator::new(&ComplexPotentialField::zero(g), &p, 1e-6).unwrap();
        let mut cur = psi.clone();
        for _ in 0..20 {
            let before = cur.norm_sq();
            prop.step(&mut cur).unwrap();
            assert!((cur.norm_sq() - before).abs() < 1e-12);
        }
    }

    #[test]
    fn merged_evolution_equals_repeated_plain_steps() {
        let (g, p, packet) = setup();
        let chi: Vec<f64> = g.positions().map(|x| if x >= -6e-6 { 3e4 } else { 0.0 }).collect();
        let shift: Vec<f64> = g.positions().map(|x| if x >= -6e-6 { 1e4 } else { 0.0 }).collect();
        let pot = ComplexPotentialField::new(g, shift, chi).unwrap();
        let psi = gaussian_free_state(&packet, &p, 0.0, &g).unwrap();
        let mut prop = Propagator::new(&pot, &p, 2e-7).unwrap();
        let mut plain = psi.clone();
        for _ in 0..50 {
            prop.step(&mut plain).unwrap();
        }
        let evo = prop.evolve(&psi, 50, &EvolveOptions::default()).unwrap();
        assert!(evo.state.l2_distance(&plain).unwrap() < 1e-12);
        assert_relative_eq!(evo.state.time(), plain.time(), max_relative = 1e-12);
        assert_relative_eq!(
            *evo.record.survival_p0.last().unwrap(),
            plain.norm_sq(),
            max_relative = 1e-12
        );
        assert_relative_eq!(
            *evo.record.density_w1.last().unwrap(),
            pot.detection_rate(&plain).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn uniform_decay_is_exponential() {
        let (g, p, packet) = setup();
        let a = 2.3895e4;
        let pot = ComplexPotentialField::uniform_decay(g, a).unwrap();
        let psi = gaussian_free_state(&packet, &p, 0.0, &g).unwrap();
        let (end, rec) = evolve_conditional(&psi, &pot, &p, 1e-4, 1e-6, 10).unwrap();
        for (t, p0) in rec.times.iter().zip(&rec.survival_p0) {
            assert!((p0 - (-a * t).exp()).abs() < 1e-8);
        }
        assert!((end.norm_sq() - (-a * 1e-4f64).exp()).abs() < 1e-8);
        assert_relative_eq!(rec.density_w1[3], a * rec.survival_p0[3], max_relative = 1e-12);
    }

    #[test]
    fn zero_decay_means_no_detection() {
        let (g, p, packet) = setup();
        let psi = gaussian_free_state(&packet, &p, 0.0, &g).unwrap();
        let (_, rec) =
            evolve_conditional(&psi, &ComplexPotentialField::zero(g), &p, 2e-4, 1e-6, 7).unwrap();
        assert!(rec.density_w1.iter().all(|&w| w == 0.0));
        assert!(rec.survival_p0.iter().all(|&s| (s - 1.0).abs() < 1e-11));
        // the last step is always recorded
        assert_relative_eq!(*rec.times.last().unwrap(), 2e-4, max_relative = 1e-12);
    }

    #[test]
    fn real_shift_conserves_norm() {
        let (g, p, packet) = setup();
        let shift: Vec<f64> = g.positions().map(|x| if x > -6e-6 { 5e4 } else { 0.0 }).collect();
        let pot = ComplexPotentialField::new(g, shift, vec![0.0; g.len()]).unwrap();
        let psi = gaussian_free_state(&packet, &p, 0.0, &g).unwrap();
        let (end, _) = evolve_conditional(&psi, &pot, &p, 1e-4, 1e-6, 1).unwrap();
        assert!((end.norm_sq() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (g, p, packet) = setup();
        let other = build_grid(-64e-6, 192e-6, 4096).unwrap();
        let psi = gaussian_free_state(&packet, &p, 0.0, &g).unwrap();
        let pot = ComplexPotentialField::zero(other);
        assert_eq!(step(&psi, &pot, &p, 1e-6).unwrap_err(), Error::GridMismatch);
        let pot = ComplexPotentialField::zero(g);
        assert!(step(&psi, &pot, &p, 0.0).is_err());
        assert!(evolve_conditional(&psi, &pot, &p, -1e-3, 1e-6, 1).is_err());
        assert!(ComplexPotentialField::uniform_decay(g, -1.0).is_err());
        assert!(ComplexPotentialField::new(g, vec![f64::NAN; g.len()], vec![0.0; g.len()]).is_err());
    }

    #[test]
    fn overflowing_potential_is_reported() {
        let g = build_grid(-64e-6, 192e-6, 256).unwrap();
        let p = ParticleSpec::cesium();
        let mut amps = vec![Complex64::new(0.0, 0.0); 256];
        amps[100] = Complex64::new(1.0, 0.0);
        let psi = WaveFunction::new(g, amps, 0.0).unwrap();
        // a huge negative decay is rejected up front; a huge positive real
        // shift with dt large still stays finite, so check the guard through
        // a hand-made propagator instead
        let mut prop = Propagator::new(&ComplexPotentialField::zero(g), &p, 1e-6).unwrap();
        prop.half[100] = Complex64::new(f64::INFINITY, 0.0);
        prop.norm_weight[100] = f64::INFINITY;
        let err = prop.evolve(&psi, 3, &EvolveOptions::default()).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }));
    }

    #[test]
    fn boundary_layer_absorbs_and_is_bookkept_separately() {
        let g = build_grid(-64e-6, 192e-6, 4096).unwrap();
        let p = ParticleSpec::cesium();
        // packet heading into the right-hand absorber
        let packet = GaussianPacketSpec::new(160e-6, 1e-6, 7.17e-3).unwrap();
        let psi = gaussian_free_state(&packet, &p, 0.0, &g).unwrap();
        let layer = AbsorbingBoundary::new(16e-6, 2e4).unwrap();
        let pot = ComplexPotentialField::zero(g).with_boundary(&layer);
        let (end, rec) = evolve_conditional(&psi, &pot, &p, 8e-3, 1e-6, 10).unwrap();
        assert!(end.norm_sq() < 1e-4, "residual {}", end.norm_sq());
        assert!(rec.total_detected() == 0.0);
        assert!(rec.bookkeeping_error() < 1e-4, "{}", rec.bookkeeping_error());
        assert!(rec.total_boundary_loss() > 0.9999);
    }

    #[test]
    fn absorber_rates_vanish_in_the_interior() {
        let g = build_grid(0.0, 1.0, 64).unwrap();
        let r = AbsorbingBoundary::new(0.25, 10.0).unwrap().rates(&g);
        assert_eq!(r[32], 0.0);
        assert_relative_eq!(r[0], 10.0);
        assert!(r[63] > 8.5);
        assert!(AbsorbingBoundary::none().rates(&g).iter().all(|&v| v == 0.0));
        assert!(AbsorbingBoundary::new(-1.0, 1.0).is_err());
    }
}
