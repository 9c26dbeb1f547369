//! Width estimate of the passage-time density, optimal detector parameters,
//! and the simulated energy scaling of the optimal width.
//!
//! The width budget adds three contributions: the detection delay in both
//! detectors (`2/A`), the spatial width of the reset state (`dx/v0`), and the
//! spread of transit times caused by its momentum width
//! (`hbar d / (2 m v0^2 dx)`). The last two balance at
//! `dx_opt = sqrt(hbar d / 2 m v0)`; choosing `A = v0 / (2 dx_opt)` then gives
//! a width proportional to `E^(-3/4)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{DetectorSpec, SensitivityProfile};
use crate::grid::SpatialGrid;
use crate::passage::{
    arrival_self_convergence, passage_distribution, ConvergenceReport, EntryTimes,
    ExperimentConfig,
};
use crate::propagator::AbsorbingBoundary;
use crate::wavefunction::{GaussianPacketSpec, ParticleSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WidthBudget {
    /// `2/A`: detection delay, counted once per detector.
    pub delay_term: f64,
    pub reset_x_term: f64,
    pub reset_p_term: f64,
    pub total: f64,
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(name, format!("must be positive, got {v:e}")))
    }
}

pub fn width_estimate(
    delta_x_reset: f64,
    a: f64,
    d: f64,
    particle: &ParticleSpec,
    v0: f64,
) -> Result<WidthBudget> {
    positive("delta_x_reset", delta_x_reset)?;
    positive("a", a)?;
    positive("d", d)?;
    positive("v0", v0)?;
    let delay_term = 2.0 / a;
    let reset_x_term = delta_x_reset / v0;
    let reset_p_term = particle.hbar * d / (2.0 * particle.mass * v0 * v0 * delta_x_reset);
    Ok(WidthBudget {
        delay_term,
        reset_x_term,
        reset_p_term,
        total: delay_term + reset_x_term + reset_p_term,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalPlan {
    pub delta_x_opt: f64,
    pub a_opt: f64,
    /// `sqrt(5 hbar d sqrt(m/2)) E^(-3/4)`.
    pub delta_tau_opt: f64,
    pub energy: f64,
    /// Typical penetration depth `v0 / A` before the first detection.
    pub detection_length: f64,
}

/// Decay rate matched to a packet of width `delta_x`: `v0 / (2 delta_x)`.
pub fn matched_decay_rate(delta_x: f64, v0: f64) -> f64 {
    v0 / (2.0 * delta_x)
}

pub fn optimal_plan(d: f64, particle: &ParticleSpec, v0: f64) -> Result<OptimalPlan> {
    positive("d", d)?;
    positive("v0", v0)?;
    let m = particle.mass;
    let delta_x_opt = (particle.hbar * d / (2.0 * m * v0)).sqrt();
    let a_opt = matched_decay_rate(delta_x_opt, v0);
    let energy = particle.kinetic_energy(v0);
    let delta_tau_opt = (5.0 * particle.hbar * d * (0.5 * m).sqrt()).sqrt() * energy.powf(-0.75);
    Ok(OptimalPlan {
        delta_x_opt,
        a_opt,
        delta_tau_opt,
        energy,
        detection_length: v0 / a_opt,
    })
}

/// Numerical settings that turn a velocity into a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    /// Detector length in units of the detection length `v0 / A`.
    pub detector_length_factor: f64,
    /// Required `k_max / k0`.
    pub k_max_factor: f64,
    /// `A dt` in stage 1.
    pub a_dt_arrival: f64,
    /// `A dt` in stage 2.
    pub a_dt_passage: f64,
    /// Number of tau samples per predicted optimal width.
    pub tau_samples_per_width: f64,
    pub entry_points: usize,
    pub compression_tolerance: f64,
    /// Self-convergence tolerance each run must meet.
    pub convergence_tolerance: f64,
    /// Absorbing layer width (m) and its peak rate at the reference velocity.
    pub absorber_width: f64,
    pub absorber_strength: f64,
    pub reference_velocity: f64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            detector_length_factor: 4.0,
            k_max_factor: 3.0,
            a_dt_arrival: 2e-4,
            a_dt_passage: 2e-3,
            tau_samples_per_width: 50.0,
            entry_points: 256,
            compression_tolerance: 1e-8,
            convergence_tolerance: 1e-3,
            absorber_width: 16e-6,
            absorber_strength: 2e4,
            reference_velocity: 7.17e-3,
        }
    }
}

/// Experiment at velocity `v0` with the optimal packet width and decay rate,
/// detectors starting at `0` and `d`.
pub fn sweep_config(
    particle: &ParticleSpec,
    d: f64,
    v0: f64,
    settings: &SweepSettings,
) -> Result<ExperimentConfig> {
    let plan = optimal_plan(d, particle, v0)?;
    let k0 = particle.wave_number(v0);
    let dx_max = std::f64::consts::PI / (settings.k_max_factor * k0);
    // d is a whole number of cells so both detector starts are grid points
    let dx = d / (d / dx_max).ceil();
    let det_len = settings.detector_length_factor * plan.detection_length;
    if det_len >= d {
        return Err(Error::param(
            "v0",
            format!("detectors of length {det_len:e} m would overlap at d = {d:e} m"),
        ));
    }
    let margin = settings.absorber_width + 10.0 * plan.delta_x_opt + 16e-6;
    let n_left = (margin / dx).ceil() as usize;
    let span = n_left as f64 * dx + d + det_len + margin;
    let n_points = ((span / dx).ceil() as usize).next_power_of_two();
    let x_min = -(n_left as f64) * dx;
    let grid = SpatialGrid::new(x_min, x_min + n_points as f64 * dx, n_points)?;
    let a = plan.a_opt;
    let detector = |start: f64| {
        DetectorSpec::direct(SensitivityProfile::rectangular(start, start + det_len)?, a, 0.0)
    };
    let passage_dt = settings.a_dt_passage / a;
    let tau_spacing = plan.delta_tau_opt / settings.tau_samples_per_width;
    let passage_stride = ((tau_spacing / passage_dt).floor() as usize).max(1);
    let transit = d / v0;
    Ok(ExperimentConfig {
        particle: *particle,
        packet: GaussianPacketSpec::new(0.0, plan.delta_x_opt, v0)?,
        detector1: detector(0.0)?,
        detector2: detector(d)?,
        include_shift: false,
        grid,
        absorber: AbsorbingBoundary::new(
            settings.absorber_width,
            settings.absorber_strength * v0 / settings.reference_velocity,
        )?,
        t_start: None,
        arrival_t_max: transit,
        dt: settings.a_dt_arrival / a,
        sample_stride: 10,
        passage_dt,
        passage_stride,
        tau_max: 2.0 * transit + 20.0 * plan.delta_tau_opt,
        entry_times: EntryTimes::Auto {
            n_points: settings.entry_points,
            tail: 5e-4,
        },
        method: crate::passage::PassageMethod::Compressed {
            tolerance: settings.compression_tolerance,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub v0: f64,
    pub energy: f64,
    pub std_tau: f64,
    pub mean_tau: f64,
    pub total_probability: f64,
    pub delta_tau_opt: f64,
    pub convergence: ConvergenceReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Slope of `ln std_tau` against `ln E`.
    pub exponent: f64,
    /// Intercept of the same fit.
    pub log_prefactor: f64,
}

/// Least-squares line through `(x, y)`; returns (slope, intercept).
pub fn fit_loglog(energies: &[f64], widths: &[f64]) -> Result<(f64, f64)> {
    if energies.len() != widths.len() || energies.len() < 2 {
        return Err(Error::DegenerateFit("need at least two points".into()));
    }
    if energies.iter().chain(widths).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::DegenerateFit("values must be positive".into()));
    }
    let x: Vec<f64> = energies.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = widths.iter().map(|w| w.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 1e-12 * (1.0 + mx * mx) * n {
        return Err(Error::DegenerateFit("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Passage-time width at each velocity with optimal parameters, and the
/// fitted energy exponent. Every run must pass its stage-1 self-convergence
/// check.
pub fn scaling_sweep(
    particle: &ParticleSpec,
    d: f64,
    v0_values: &[f64],
    settings: &SweepSettings,
) -> Result<SweepResult> {
    let energies: Vec<f64> = v0_values.iter().map(|&v| particle.kinetic_energy(v)).collect();
    fit_loglog(&energies, &vec![1.0; energies.len()])?;
    let points: Vec<Result<SweepPoint>> = v0_values
        .par_iter()
        .map(|&v0| {
            let cfg = sweep_config(particle, d, v0, settings)?;
            let what = format!("arrival density at v0 = {v0:e} m/s");
            let convergence =
                arrival_self_convergence(&cfg, settings.convergence_tolerance)?.into_result(&what)?;
            let dist = passage_distribution(&cfg)?;
            let plan = optimal_plan(d, particle, v0)?;
            Ok(SweepPoint {
                v0,
                energy: plan.energy,
                std_tau: dist.std_tau,
                mean_tau: dist.mean_tau,
                total_probability: dist.total_probability,
                delta_tau_opt: plan.delta_tau_opt,
                convergence,
            })
        })
        .collect();
    let points = points.into_iter().collect::<Result<Vec<_>>>()?;
    let (exponent, log_prefactor) = fit_loglog(
        &points.iter().map(|p| p.energy).collect::<Vec<_>>(),
        &points.iter().map(|p| p.std_tau).collect::<Vec<_>>(),
    )?;
    Ok(SweepResult {
        points,
        exponent,
        log_prefactor,
    })
}

/// `n` log-spaced values from `lo` to `hi`.
pub fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    const D: f64 = 100e-6;
    const V0: f64 = 7.17e-3;

    #[test]
    fn optimal_values_for_the_reference_packet() {
        let p = optimal_plan(D, &ParticleSpec::cesium(), V0).unwrap();
        assert!((p.delta_x_opt - 1.83e-6).abs() < 0.005e-6);
        assert!((p.a_opt - 1.96e3).abs() < 0.005e3);
        assert_relative_eq!(matched_decay_rate(1e-6, V0), 3.585e3, max_relative = 1e-12);
        // sqrt(5 hbar d sqrt(m/2)) E^-3/4 evaluated independently
        let m: f64 = 2.2069e-25;
        let e = 0.5 * m * V0 * V0;
        let expected = (5.0 * 1.054571817e-34 * D * (m / 2.0).sqrt()).sqrt() / e.powf(0.75);
        assert_relative_eq!(p.delta_tau_opt, expected, max_relative = 1e-12);
        assert!((p.delta_tau_opt - 1.14e-3).abs() < 0.005e-3);
        assert!((p.energy - 5.673e-30).abs() < 0.001e-30);
        assert!(p.detection_length <= D);
    }

    #[test]
    fn reset_terms_balance_at_the_optimum() {
        let cs = ParticleSpec::cesium();
        let p = optimal_plan(D, &cs, V0).unwrap();
        let w = width_estimate(p.delta_x_opt, p.a_opt, D, &cs, V0).unwrap();
        assert_relative_eq!(w.reset_x_term, w.reset_p_term, max_relative = 1e-12);
        let w = width_estimate(1.83e-6, 1.959e3, D, &cs, V0).unwrap();
        assert_relative_eq!(w.reset_x_term, w.reset_p_term, max_relative = 5e-3);
    }

    #[test]
    fn extreme_detectors_are_dominated_by_one_term() {
        let cs = ParticleSpec::cesium();
        let fast = width_estimate(1e-9, 1e9, D, &cs, V0).unwrap();
        assert!(fast.reset_p_term > 0.99 * fast.total);
        let slow = width_estimate(1.83e-6, 1e-1, D, &cs, V0).unwrap();
        assert!(slow.delay_term > 0.99 * slow.total);
        assert!(width_estimate(0.0, 1.0, D, &cs, V0).is_err());
    }

    #[test]
    fn grid_search_finds_the_analytic_minimizer() {
        let cs = ParticleSpec::cesium();
        let opt = optimal_plan(D, &cs, V0).unwrap().delta_x_opt;
        let xs: Vec<f64> = (1..=4000).map(|i| i as f64 * 1e-9).collect();
        let best = xs
            .iter()
            .map(|&x| (x, width_estimate(x, 1e3, D, &cs, V0).unwrap().total))
            .fold((0.0, f64::INFINITY), |b, c| if c.1 < b.1 { c } else { b })
            .0;
        assert!((best - opt).abs() <= 1e-9);
    }

    #[test]
    fn closed_form_scaling_laws() {
        let cs = ParticleSpec::cesium();
        let a = optimal_plan(D, &cs, V0).unwrap();
        let b = optimal_plan(4.0 * D, &cs, V0).unwrap();
        assert_relative_eq!(b.delta_tau_opt / a.delta_tau_opt, 2.0, max_relative = 1e-12);
        // E grows by 16 when v0 grows by 4
        let c = optimal_plan(D, &cs, 4.0 * V0).unwrap();
        assert_relative_eq!(a.delta_tau_opt / c.delta_tau_opt, 8.0, max_relative = 1e-12);
    }

    #[test]
    fn fit_recovers_slope_and_rejects_degenerate_input() {
        let e = [1.0, 2.0, 4.0, 8.0];
        let w: Vec<f64> = e.iter().map(|x: &f64| 3.0 * x.powf(-0.75)).collect();
        let (s, c) = fit_loglog(&e, &w).unwrap();
        assert_relative_eq!(s, -0.75, max_relative = 1e-12);
        assert_relative_eq!(c, 3.0f64.ln(), max_relative = 1e-12);
        assert!(matches!(fit_loglog(&[2.0, 2.0], &[1.0, 3.0]), Err(Error::DegenerateFit(_))));
        assert!(fit_loglog(&[2.0], &[1.0]).is_err());
        let cs = ParticleSpec::cesium();
        assert!(matches!(
            scaling_sweep(&cs, D, &[7e-3, 7e-3], &SweepSettings::default()),
            Err(Error::DegenerateFit(_))
        ));
    }

    #[test]
    fn sweep_configs_are_valid_and_aligned() {
        let cs = ParticleSpec::cesium();
        for v0 in log_spaced(3e-3, 30e-3, 5) {
            let cfg = sweep_config(&cs, D, v0, &SweepSettings::default()).unwrap();
            cfg.validate().unwrap();
            assert!(cfg.grid.is_aligned(0.0) && cfg.grid.is_aligned(D));
            assert!(cfg.grid.k_max() >= 3.0 * cs.wave_number(v0));
            assert_relative_eq!(cfg.passage_distance(), D, max_relative = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn optimum_minimizes_the_reset_part(v0 in 1e-3f64..0.1, d in 1e-5f64..1e-3, f in 0.2f64..5.0) {
            let cs = ParticleSpec::cesium();
            let p = optimal_plan(d, &cs, v0).unwrap();
            let at = width_estimate(p.delta_x_opt, 1.0, d, &cs, v0).unwrap();
            let off = width_estimate(f * p.delta_x_opt, 1.0, d, &cs, v0).unwrap();
            prop_assert!(at.reset_x_term + at.reset_p_term
                <= (off.reset_x_term + off.reset_p_term) * (1.0 + 1e-12));
        }
    }
}
