//! Two-detector passage-time experiment and reference distributions.
//!
//! Stage 1 evolves the incoming packet under the first detector only and
//! records the arrival density `w1(T)`. At a set of entry times `T` the
//! conditional state is reset, `psi_T = sqrt(A) chi psi_cond(T)`, whose
//! squared norm is `w1(T)`. Stage 2 evolves each reset state under the second
//! detector with its clock starting at `T`, and the passage-time density is
//!
//! ```text
//! G(tau) = int dT w2(tau; psi_T) = tr[rho W2(tau)],   rho = int dT |psi_T><psi_T|
//! ```
//!
//! Because `w2` is bilinear in the state, the entry-time integral can be done
//! before the evolution: `rho` is diagonalized and only its significant
//! eigenmodes are evolved ([`PassageMethod::Compressed`]). Evolving every
//! reset state separately ([`PassageMethod::Direct`]) gives the same result
//! up to the discarded eigenvalue mass.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{reset, DetectorSpec};
use crate::grid::SpatialGrid;
use crate::propagator::{
    w1_moment_changes, AbsorbingBoundary, ComplexPotentialField, DetectionRecord, EvolveOptions,
    Propagator, StopRule,
};
use crate::quadrature::{density_moments, trapezoid, trapezoid_weights};
use crate::wavefunction::{gaussian_free_state, GaussianPacketSpec, ParticleSpec, WaveFunction};
use crate::{Error, Result};

/// Detection probability below which the detector is considered leaky.
pub const LOW_DETECTION: f64 = 0.9;
/// Largest negative-momentum probability accepted by the reference distributions.
pub const NEGATIVE_MOMENTUM_LIMIT: f64 = 1e-6;
/// Packet widths between the packet centre and the first detector at the start.
pub const START_CLEARANCE_WIDTHS: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EntryTimes {
    /// `n_points` uniform times between the `tail` and `1 - tail` quantiles
    /// of the arrival density.
    Auto { n_points: usize, tail: f64 },
    Explicit { times: Vec<f64> },
}

impl Default for EntryTimes {
    fn default() -> Self {
        Self::Auto {
            n_points: 256,
            tail: 5e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PassageMethod {
    /// Evolve eigenmodes of the reset ensemble until the discarded
    /// eigenvalue mass is below `tolerance` times the trace.
    Compressed { tolerance: f64 },
    /// Evolve every reset state.
    Direct,
}

impl Default for PassageMethod {
    fn default() -> Self {
        Self::Compressed { tolerance: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub particle: ParticleSpec,
    pub packet: GaussianPacketSpec,
    pub detector1: DetectorSpec,
    pub detector2: DetectorSpec,
    /// Include the line shift in the detector potentials.
    pub include_shift: bool,
    pub grid: SpatialGrid,
    pub absorber: AbsorbingBoundary,
    /// Start of stage 1; `None` places the packet clear of detector 1.
    pub t_start: Option<f64>,
    /// Latest end of stage 1 (it stops earlier once detection is complete).
    pub arrival_t_max: f64,
    /// Stage-1 time step.
    pub dt: f64,
    /// Stage-1 recording stride in steps.
    pub sample_stride: usize,
    /// Stage-2 time step.
    pub passage_dt: f64,
    /// Stage-2 recording stride; the tau grid spacing is `passage_dt * passage_stride`.
    pub passage_stride: usize,
    pub tau_max: f64,
    pub entry_times: EntryTimes,
    pub method: PassageMethod,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dt", self.dt),
            ("passage_dt", self.passage_dt),
            ("tau_max", self.tau_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v:e}")));
            }
        }
        if self.sample_stride == 0 || self.passage_stride == 0 {
            return Err(Error::param("stride", "must be >= 1"));
        }
        let (a1, b1) = self.detector1.profile.extent();
        let (a2, b2) = self.detector2.profile.extent();
        if !(a1.is_finite() && a2.is_finite()) {
            return Err(Error::param("detector", "profiles must have a finite start"));
        }
        if !(b1 <= a2) {
            return Err(Error::param(
                "detector2",
                format!("must lie downstream of detector 1 (detector 1 ends at {b1:e} m, detector 2 starts at {a2:e} m)"),
            ));
        }
        if !(b2 <= self.grid.x_max() && a1 >= self.grid.x_min()) {
            return Err(Error::param("grid", "must contain both detectors"));
        }
        let t0 = self.start_time();
        if !(self.arrival_t_max > t0) {
            return Err(Error::param("arrival_t_max", "must be later than the start time"));
        }
        if let EntryTimes::Auto { n_points, tail } = self.entry_times {
            if n_points < 2 {
                return Err(Error::param("entry_times", "need at least two points"));
            }
            if !(tail > 0.0 && tail < 0.5) {
                return Err(Error::param("entry_times", "tail must lie in (0, 0.5)"));
            }
        }
        if let PassageMethod::Compressed { tolerance } = self.method {
            if !(tolerance > 0.0 && tolerance < 1.0) {
                return Err(Error::param("compression tolerance", "must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Distance between the starting edges of the two detectors.
    pub fn passage_distance(&self) -> f64 {
        self.detector2.profile.extent().0 - self.detector1.profile.extent().0
    }

    pub fn start_time(&self) -> f64 {
        self.t_start.unwrap_or_else(|| {
            default_start_time(
                &self.packet,
                &self.particle,
                self.detector1.profile.extent().0,
            )
        })
    }

    /// The same experiment with half the time steps and twice the grid points.
    pub fn refined(&self) -> Result<Self> {
        let grid = SpatialGrid::new(self.grid.x_min(), self.grid.x_max(), 2 * self.grid.len())?;
        Ok(Self {
            grid,
            dt: 0.5 * self.dt,
            sample_stride: 2 * self.sample_stride,
            passage_dt: 0.5 * self.passage_dt,
            passage_stride: 2 * self.passage_stride,
            ..self.clone()
        })
    }

    fn stage_one_potential(&self) -> Result<ComplexPotentialField> {
        Ok(self
            .detector1
            .potential(&self.grid, self.include_shift)?
            .with_boundary(&self.absorber))
    }

    fn stage_two_potential(&self) -> Result<ComplexPotentialField> {
        Ok(self
            .detector2
            .potential(&self.grid, self.include_shift)?
            .with_boundary(&self.absorber))
    }

    fn passage_steps(&self) -> usize {
        let n = (self.tau_max / self.passage_dt).round().max(1.0) as usize;
        n.div_ceil(self.passage_stride) * self.passage_stride
    }
}

/// Latest start time at which the free packet's centre is
/// [`START_CLEARANCE_WIDTHS`] widths to the left of `edge`.
pub fn default_start_time(packet: &GaussianPacketSpec, particle: &ParticleSpec, edge: f64) -> f64 {
    let v = packet.mean_velocity_v0;
    if v <= 0.0 {
        return 0.0;
    }
    // fixed point of t = (edge - c sigma(t) - x0) / v; sigma grows with |t|
    let mut t = (edge - START_CLEARANCE_WIDTHS * packet.sigma_x - packet.center_x0) / v;
    for _ in 0..100 {
        let next = (edge - START_CLEARANCE_WIDTHS * packet.sigma_at(particle, t) - packet.center_x0) / v;
        if (next - t).abs() <= 1e-15 * t.abs().max(1e-30) {
            t = next;
            break;
        }
        t = next;
    }
    t.min(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    /// A detector fires with probability below [`LOW_DETECTION`].
    LowDetection { stage: u8, probability: f64 },
    /// The entry-time grid covers less than 99.9% of the arrival probability.
    EntryGridIncomplete { covered: f64 },
    /// More than 1e-3 of the reset ensemble is still undetected at `tau_max`.
    TauGridTooShort { remaining: f64 },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::LowDetection { stage, probability } => write!(
                f,
                "detector {stage} fires with probability {probability:.4}; transmission or reflection without detection is significant"
            ),
            Self::EntryGridIncomplete { covered } => write!(
                f,
                "entry-time grid covers only {covered:.5} of the arrival probability"
            ),
            Self::TauGridTooShort { remaining } => write!(
                f,
                "{remaining:.3e} of the reset ensemble is still undetected at tau_max"
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ArrivalStage {
    pub record: DetectionRecord,
    pub entry_times: Vec<f64>,
    pub entry_weights: Vec<f64>,
    /// Unnormalized reset states at the entry times.
    pub reset_states: Vec<WaveFunction>,
    pub detection_probability: f64,
    pub residual_norm: f64,
    pub boundary_loss: f64,
    /// Quadrature of `w1` over the entry grid.
    pub entry_mass: f64,
    pub warnings: Vec<Warning>,
}

/// Stage-1 record only (no reset states).
pub fn arrival_record(cfg: &ExperimentConfig) -> Result<DetectionRecord> {
    cfg.validate()?;
    let t0 = cfg.start_time();
    let psi0 = gaussian_free_state(&cfg.packet, &cfg.particle, t0, &cfg.grid)?;
    let mut prop = Propagator::new(&cfg.stage_one_potential()?, &cfg.particle, cfg.dt)?;
    let n_max = ((cfg.arrival_t_max - t0) / cfg.dt).round() as usize;
    let evo = prop.evolve(
        &psi0,
        n_max,
        &EvolveOptions {
            sample_stride: cfg.sample_stride,
            capture_steps: Vec::new(),
            stop: StopRule::DetectionFinished {
                relative: 1e-7,
                norm: 1e-10,
            },
        },
    )?;
    if !(evo.record.total_detected() > 0.0) {
        return Err(Error::NoDetection);
    }
    Ok(evo.record)
}

/// Time at which the cumulative detection reaches `level`, by linear
/// interpolation between samples.
fn cumulative_quantile(rec: &DetectionRecord, level: f64) -> f64 {
    let c = &rec.cumulative_detected;
    let i = c.partition_point(|&v| v < level);
    if i == 0 {
        return rec.times[0];
    }
    if i >= c.len() {
        return *rec.times.last().unwrap();
    }
    let f = (level - c[i - 1]) / (c[i] - c[i - 1]);
    rec.times[i - 1] + f * (rec.times[i] - rec.times[i - 1])
}

fn cumulative_at(rec: &DetectionRecord, t: f64) -> f64 {
    let i = rec.times.partition_point(|&s| s < t);
    if i == 0 {
        return 0.0;
    }
    if i >= rec.len() {
        return rec.total_detected();
    }
    let f = (t - rec.times[i - 1]) / (rec.times[i] - rec.times[i - 1]);
    rec.cumulative_detected[i - 1] + f * (rec.cumulative_detected[i] - rec.cumulative_detected[i - 1])
}

/// Stage 1: arrival density at detector 1 and the reset states on the entry grid.
pub fn arrival_stage(cfg: &ExperimentConfig) -> Result<ArrivalStage> {
    let record = arrival_record(cfg)?;
    let t0 = cfg.start_time();
    let total = record.total_detected();
    let mut warnings = Vec::new();
    if total < LOW_DETECTION {
        warnings.push(Warning::LowDetection {
            stage: 1,
            probability: total,
        });
    }

    let requested: Vec<f64> = match &cfg.entry_times {
        EntryTimes::Auto { n_points, tail } => {
            let lo = cumulative_quantile(&record, tail * total);
            let hi = cumulative_quantile(&record, (1.0 - tail) * total);
            (0..*n_points)
                .map(|i| lo + (hi - lo) * i as f64 / (*n_points - 1) as f64)
                .collect()
        }
        EntryTimes::Explicit { times } => times.clone(),
    };
    let last_recorded = *record.times.last().unwrap();
    let auto = matches!(cfg.entry_times, EntryTimes::Auto { .. });
    let n_requested = requested.len();
    let mut steps: Vec<usize> = requested
        .iter()
        .enumerate()
        .filter(|&(_, &t)| t >= t0 && t <= last_recorded)
        .map(|(i, &t)| {
            let s = (t - t0) / cfg.dt;
            // the automatic grid snaps its ends outwards so it keeps its coverage
            if auto && i == 0 {
                s.floor() as usize
            } else if auto && i + 1 == n_requested {
                s.ceil() as usize
            } else {
                s.round() as usize
            }
        })
        .collect();
    steps.sort_unstable();
    steps.dedup();
    if steps.len() < 2 {
        return Err(Error::param(
            "entry_times",
            "fewer than two entry times fall inside the recorded arrival window",
        ));
    }
    let entry_times: Vec<f64> = steps.iter().map(|&s| t0 + s as f64 * cfg.dt).collect();
    let covered = (cumulative_at(&record, *entry_times.last().unwrap())
        - cumulative_at(&record, entry_times[0]))
        / total;
    if covered < 0.999 - 1e-9 {
        warnings.push(Warning::EntryGridIncomplete { covered });
    }

    let psi0 = gaussian_free_state(&cfg.packet, &cfg.particle, t0, &cfg.grid)?;
    let mut prop = Propagator::new(&cfg.stage_one_potential()?, &cfg.particle, cfg.dt)?;
    let evo = prop.evolve(
        &psi0,
        *steps.last().unwrap(),
        &EvolveOptions {
            sample_stride: steps.last().unwrap().max(&1).to_owned(),
            capture_steps: steps.clone(),
            stop: StopRule::Never,
        },
    )?;
    let weights = trapezoid_weights(&entry_times);
    let mut kept_times = Vec::with_capacity(steps.len());
    let mut kept_weights = Vec::with_capacity(steps.len());
    let mut reset_states = Vec::with_capacity(steps.len());
    let mut entry_mass = 0.0;
    for ((psi, &t), &w) in evo.captured.iter().zip(&entry_times).zip(&weights) {
        match reset(psi, &cfg.detector1) {
            Ok(r) => {
                entry_mass += w * r.norm_sq();
                kept_times.push(t);
                kept_weights.push(w);
                reset_states.push(r);
            }
            Err(Error::ZeroOverlap { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if reset_states.is_empty() {
        return Err(Error::NoDetection);
    }
    Ok(ArrivalStage {
        residual_norm: record.final_survival(),
        boundary_loss: record.total_boundary_loss(),
        detection_probability: total,
        record,
        entry_times: kept_times,
        entry_weights: kept_weights,
        reset_states,
        entry_mass,
        warnings,
    })
}

/// Reset states after a first detection at each of `times`, snapped to the
/// stage-1 time grid. The returned states carry the snapped times.
pub fn reset_states_at(cfg: &ExperimentConfig, times: &[f64]) -> Result<Vec<WaveFunction>> {
    cfg.validate()?;
    let t0 = cfg.start_time();
    if times.is_empty() {
        return Err(Error::param("times", "need at least one time"));
    }
    if let Some(t) = times.iter().find(|&&t| !(t >= t0 && t.is_finite())) {
        return Err(Error::param(
            "times",
            format!("{t:e} s lies before the start time {t0:e} s"),
        ));
    }
    let steps: Vec<usize> = times.iter().map(|&t| ((t - t0) / cfg.dt).round() as usize).collect();
    let mut sorted = steps.clone();
    sorted.sort_unstable();
    sorted.dedup();
    let psi0 = gaussian_free_state(&cfg.packet, &cfg.particle, t0, &cfg.grid)?;
    let mut prop = Propagator::new(&cfg.stage_one_potential()?, &cfg.particle, cfg.dt)?;
    let last = *sorted.last().unwrap();
    let evo = prop.evolve(
        &psi0,
        last,
        &EvolveOptions {
            sample_stride: last.max(1),
            capture_steps: sorted.clone(),
            stop: StopRule::Never,
        },
    )?;
    steps
        .iter()
        .map(|s| {
            let psi = &evo.captured[sorted.binary_search(s).unwrap()];
            reset(psi, &cfg.detector1)
        })
        .collect()
}

/// Where probability went that does not show up in `G(tau)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    /// Undetected norm left on the grid at the end of stage 1.
    pub stage1_residual: f64,
    /// Norm absorbed at the grid ends during stage 1.
    pub stage1_boundary_loss: f64,
    /// Arrival probability outside the entry-time grid.
    pub entry_truncation: f64,
    /// Reset-ensemble norm absorbed at the grid ends in stage 2, i.e. passing
    /// detector 2 or moving backwards without detection.
    pub undetected_transmission: f64,
    /// Reset-ensemble norm still on the grid at `tau_max`.
    pub residual_norm: f64,
    /// Eigenvalue mass discarded by the ensemble compression.
    pub compression_dropped: f64,
}

impl LeakageReport {
    pub fn total(&self) -> f64 {
        self.stage1_residual
            + self.stage1_boundary_loss
            + self.entry_truncation
            + self.undetected_transmission
            + self.residual_norm
            + self.compression_dropped
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassageDistribution {
    pub tau: Vec<f64>,
    pub g_tau: Vec<f64>,
    pub total_probability: f64,
    pub mean_tau: f64,
    pub std_tau: f64,
    pub leakage: LeakageReport,
    /// Number of stage-2 evolutions performed.
    pub evolutions: usize,
    /// Upper bound on `|G - G_exact|` from the compression (1/s).
    pub compression_error_bound: f64,
    pub warnings: Vec<Warning>,
}

/// Evolves one reset state under detector 2 with the clock starting at zero.
pub fn evolve_reset_state(cfg: &ExperimentConfig, psi: &WaveFunction) -> Result<DetectionRecord> {
    let pot = cfg.stage_two_potential()?;
    let mut prop = Propagator::new(&pot, &cfg.particle, cfg.passage_dt)?;
    let start = psi.clone().with_time(0.0);
    let norm = start.norm_sq();
    let evo = prop.evolve(
        &start,
        cfg.passage_steps(),
        &EvolveOptions {
            sample_stride: cfg.passage_stride,
            capture_steps: Vec::new(),
            stop: StopRule::NormBelow(1e-9 * norm),
        },
    )?;
    Ok(evo.record)
}

/// Mode weights and normalized eigenmodes of `sum_T c_T |psi_T><psi_T|`,
/// largest first, plus the discarded eigenvalue mass.
pub fn compress_ensemble(
    states: &[WaveFunction],
    weights: &[f64],
    tolerance: f64,
) -> Result<(Vec<f64>, Vec<WaveFunction>, f64)> {
    if states.is_empty() || states.len() != weights.len() {
        return Err(Error::param("ensemble", "need one weight per state"));
    }
    let grid = *states[0].grid();
    if states.iter().any(|s| s.grid() != &grid) {
        return Err(Error::GridMismatch);
    }
    // restrict to points where any state is non-zero
    let support: Vec<usize> = (0..grid.len())
        .filter(|&i| states.iter().any(|s| s.amplitudes()[i] != Complex64::new(0.0, 0.0)))
        .collect();
    let m = states.len();
    let scaled: Vec<Vec<Complex64>> = states
        .iter()
        .zip(weights)
        .map(|(s, &c)| {
            let f = (c * grid.dx()).sqrt();
            support.iter().map(|&i| s.amplitudes()[i] * f).collect()
        })
        .collect();
    let gram = DMatrix::from_fn(m, m, |r, c| {
        scaled[r]
            .iter()
            .zip(&scaled[c])
            .map(|(a, b)| a.conj() * b)
            .sum::<Complex64>()
    });
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambdas: Vec<f64> = order.iter().map(|&k| eig.eigenvalues[k].max(0.0)).collect();
    let trace: f64 = lambdas.iter().sum();
    let mut kept = 0;
    let mut tail = trace;
    while kept < m && tail > tolerance * trace {
        tail -= lambdas[kept];
        kept += 1;
    }
    let tail = tail.max(0.0);
    let mut modes = Vec::with_capacity(kept);
    for &k in &order[..kept] {
        let lambda = eig.eigenvalues[k];
        let mut amps = vec![Complex64::new(0.0, 0.0); grid.len()];
        for (t, col) in scaled.iter().enumerate() {
            let v = eig.eigenvectors[(t, k)];
            for (j, &i) in support.iter().enumerate() {
                amps[i] += col[j] * v;
            }
        }
        let f = 1.0 / (lambda * grid.dx()).sqrt();
        for a in amps.iter_mut() {
            *a *= f;
        }
        modes.push(WaveFunction::new(grid, amps, 0.0)?);
    }
    Ok((lambdas[..kept].to_vec(), modes, tail))
}

/// Stage 2 on top of a finished stage 1.
pub fn passage_from_arrival(cfg: &ExperimentConfig, stage: &ArrivalStage) -> Result<PassageDistribution> {
    cfg.validate()?;
    let (weights, states, dropped): (Vec<f64>, Vec<WaveFunction>, f64) = match cfg.method {
        PassageMethod::Compressed { tolerance } => {
            compress_ensemble(&stage.reset_states, &stage.entry_weights, tolerance)?
        }
        PassageMethod::Direct => (
            stage.entry_weights.clone(),
            stage.reset_states.clone(),
            0.0,
        ),
    };
    let records: Vec<Result<DetectionRecord>> = states
        .par_iter()
        .map(|s| evolve_reset_state(cfg, s))
        .collect();
    let n_samples = cfg.passage_steps() / cfg.passage_stride + 1;
    let tau: Vec<f64> = (0..n_samples)
        .map(|i| (i * cfg.passage_stride) as f64 * cfg.passage_dt)
        .collect();
    let mut g_tau = vec![0.0; n_samples];
    let mut residual = 0.0;
    let mut boundary = 0.0;
    for (rec, &w) in records.into_iter().zip(&weights) {
        let rec = rec?;
        for (g, d) in g_tau.iter_mut().zip(&rec.density_w1) {
            *g += w * d;
        }
        residual += w * rec.final_survival();
        boundary += w * rec.total_boundary_loss();
    }
    let total_probability = trapezoid(&tau, &g_tau);
    let (mean_tau, std_tau) = match density_moments(&tau, &g_tau) {
        Some((_, m, s)) => (m, s),
        None => return Err(Error::NoDetection),
    };
    let mut warnings = stage.warnings.clone();
    if total_probability < LOW_DETECTION {
        warnings.push(Warning::LowDetection {
            stage: 2,
            probability: total_probability,
        });
    }
    if residual > 1e-3 {
        warnings.push(Warning::TauGridTooShort { remaining: residual });
    }
    let leakage = LeakageReport {
        stage1_residual: stage.residual_norm,
        stage1_boundary_loss: stage.boundary_loss,
        entry_truncation: stage.detection_probability - stage.entry_mass,
        undetected_transmission: boundary,
        residual_norm: residual,
        compression_dropped: dropped,
    };
    Ok(PassageDistribution {
        tau,
        g_tau,
        total_probability,
        mean_tau,
        std_tau,
        leakage,
        evolutions: states.len(),
        compression_error_bound: cfg.detector2.decay_a() * dropped,
        warnings,
    })
}

/// Full two-detector experiment.
pub fn passage_distribution(cfg: &ExperimentConfig) -> Result<PassageDistribution> {
    let stage = arrival_stage(cfg)?;
    passage_from_arrival(cfg, &stage)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub mean_change: f64,
    pub std_change: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl ConvergenceReport {
    fn new(mean_change: f64, std_change: f64, tolerance: f64) -> Self {
        Self {
            mean_change,
            std_change,
            tolerance,
            passed: mean_change < tolerance && std_change < tolerance,
        }
    }

    pub fn into_result(self, what: &str) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::ConvergenceFailed {
                what: what.to_string(),
                change: self.mean_change.max(self.std_change),
                tolerance: self.tolerance,
            })
        }
    }
}

/// Moments of the stage-1 arrival density at the configured resolution
/// against half the time step and twice the grid points.
pub fn arrival_self_convergence(cfg: &ExperimentConfig, tolerance: f64) -> Result<ConvergenceReport> {
    let coarse = arrival_record(cfg)?;
    let fine = arrival_record(&cfg.refined()?)?;
    let (m, s) = w1_moment_changes(&coarse, &fine);
    Ok(ConvergenceReport::new(m, s, tolerance))
}

/// Relative change of the passage-time moments between two runs.
pub fn passage_moment_changes(
    reference: &PassageDistribution,
    other: &PassageDistribution,
    tolerance: f64,
) -> ConvergenceReport {
    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    ConvergenceReport::new(
        rel(reference.mean_tau, other.mean_tau),
        rel(reference.std_tau, other.std_tau),
        tolerance,
    )
}

/// Probability of `k <= 0` in the packet's momentum distribution.
pub fn negative_momentum_mass(packet: &GaussianPacketSpec, particle: &ParticleSpec) -> f64 {
    let k0 = particle.wave_number(packet.mean_velocity_v0);
    let sk = packet.sigma_k();
    let lo = k0 - 40.0 * sk;
    if lo >= 0.0 {
        return 0.0;
    }
    let n = 4001;
    let ks: Vec<f64> = (0..n).map(|i| lo + (0.0 - lo) * i as f64 / (n - 1) as f64).collect();
    let dens: Vec<f64> = ks
        .iter()
        .map(|&k| packet.momentum_amplitude(particle, k).norm_sqr())
        .collect();
    trapezoid(&ks, &dens)
}

fn check_right_moving(packet: &GaussianPacketSpec, particle: &ParticleSpec) -> Result<()> {
    let mass = negative_momentum_mass(packet, particle);
    if mass > NEGATIVE_MOMENTUM_LIMIT {
        return Err(Error::NegativeMomentum { mass });
    }
    Ok(())
}

/// Passage-time density over distance `d` for classical particles with the
/// packet's momentum distribution.
pub fn classical_passage(
    packet: &GaussianPacketSpec,
    particle: &ParticleSpec,
    d: f64,
    tau: &[f64],
) -> Result<Vec<f64>> {
    check_right_moving(packet, particle)?;
    if !(d > 0.0) {
        return Err(Error::param("d", "must be positive"));
    }
    let md = d / particle.hbar_over_mass();
    Ok(tau
        .iter()
        .map(|&t| {
            if t <= 0.0 {
                0.0
            } else {
                packet.momentum_amplitude(particle, md / t).norm_sqr() * md / (t * t)
            }
        })
        .collect())
}

/// Kijowski's arrival-time density at `x` for the free packet:
/// `(hbar / 2 pi m) |int_0^inf dk sqrt(k) phi(k) e^{i k x - i hbar k^2 t / 2m}|^2`.
pub fn kijowski_distribution(
    packet: &GaussianPacketSpec,
    particle: &ParticleSpec,
    x: f64,
    t: &[f64],
) -> Result<Vec<f64>> {
    check_right_moving(packet, particle)?;
    let hm = particle.hbar_over_mass();
    let k0 = particle.wave_number(packet.mean_velocity_v0);
    let sk = packet.sigma_k();
    let k_lo = (k0 - 12.0 * sk).max(0.0);
    let k_hi = k0 + 12.0 * sk;
    let t_span = t.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    // resolve the phase k (x - x0) - hbar k^2 t / 2m across the window
    let travel = (x - packet.center_x0).abs() + hm * k_hi * t_span;
    let n = ((20.0 * (k_hi - k_lo) * travel / (2.0 * PI)).ceil() as usize).clamp(2049, 1 << 20);
    let h = (k_hi - k_lo) / (n - 1) as f64;
    let base: Vec<(f64, Complex64)> = (0..n)
        .map(|i| {
            let k = k_lo + h * i as f64;
            let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
            (k, w * k.sqrt() * packet.momentum_amplitude(particle, k) * Complex64::from_polar(1.0, k * x))
        })
        .collect();
    let prefactor = hm / (2.0 * PI);
    Ok(t
        .par_iter()
        .map(|&tt| {
            let amp: Complex64 = base
                .iter()
                .map(|&(k, b)| b * Complex64::from_polar(1.0, -0.5 * hm * k * k * tt))
                .sum();
            prefactor * amp.norm_sqr()
        })
        .collect())
}
