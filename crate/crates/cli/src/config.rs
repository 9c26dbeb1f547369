//! Run configuration read from TOML.
//!
//! Every section and field is optional; missing values fall back to the
//! cesium two-detector experiment (1 µm packet at 0.717 cm/s, detectors at
//! [0, 20] µm and [100, 120] µm). Unknown keys are rejected.

use std::path::Path;

use qpassage::detector::{DetectorSpec, DiscreteBathSpec, SensitivityProfile};
use qpassage::discrete_oracle::DiscreteResetConfig;
use qpassage::grid::SpatialGrid;
use qpassage::passage::{EntryTimes, ExperimentConfig, PassageMethod};
use qpassage::precision::SweepSettings;
use qpassage::propagator::AbsorbingBoundary;
use qpassage::wavefunction::{GaussianPacketSpec, ParticleSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::units::{Coupling, Length, Mass, Quantity, Rate, Time, Velocity};

type Q<D> = Quantity<D>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParticleConfig {
    pub mass: Q<Mass>,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self {
            mass: Q::si(qpassage::constants::CESIUM_MASS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PacketConfig {
    /// Centre at `t = 0`.
    pub center: Q<Length>,
    pub width: Q<Length>,
    pub velocity: Q<Velocity>,
}

impl Default for PacketConfig {
    fn default() -> Self {
        Self {
            center: Q::si(0.0),
            width: Q::si(1e-6),
            velocity: Q::si(7.17e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub start: Q<Length>,
    pub end: Q<Length>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub decay_rate: Q<Rate>,
    pub shift: Q<Rate>,
    pub include_shift: bool,
    pub first: Span,
    pub second: Span,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            decay_rate: Q::si(2.3895e3),
            shift: Q::si(0.0),
            include_shift: false,
            first: Span {
                start: Q::si(0.0),
                end: Q::si(20e-6),
            },
            second: Span {
                start: Q::si(100e-6),
                end: Q::si(120e-6),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub x_min: Q<Length>,
    pub x_max: Q<Length>,
    pub points: usize,
    pub absorber_width: Q<Length>,
    pub absorber_strength: Q<Rate>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            x_min: Q::si(-64e-6),
            x_max: Q::si(192e-6),
            points: 8192,
            absorber_width: Q::si(16e-6),
            absorber_strength: Q::si(2e4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrivalConfig {
    /// Defaults to the latest time at which the packet is clear of detector 1.
    pub t_start: Option<Q<Time>>,
    pub t_max: Q<Time>,
    pub dt: Q<Time>,
    pub sample_stride: usize,
}

impl Default for ArrivalConfig {
    fn default() -> Self {
        Self {
            t_start: None,
            t_max: Q::si(5e-3),
            dt: Q::si(1e-7),
            sample_stride: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Compressed,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PassageConfig {
    pub dt: Q<Time>,
    pub stride: usize,
    pub tau_max: Q<Time>,
    pub entry_points: usize,
    /// Arrival probability left out at each end of the automatic entry grid.
    pub entry_tail: f64,
    /// Explicit entry times; replaces the automatic grid when present.
    pub entry_times: Option<Vec<Q<Time>>>,
    pub method: MethodName,
    pub compression_tolerance: f64,
}

impl Default for PassageConfig {
    fn default() -> Self {
        Self {
            dt: Q::si(2e-6),
            stride: 5,
            tau_max: Q::si(100e-3),
            entry_points: 256,
            entry_tail: 5e-4,
            entry_times: None,
            method: MethodName::Compressed,
            compression_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    /// Repeat stage 1 with half the time step and twice the grid points.
    pub check: bool,
    /// Largest accepted relative change of the arrival-density moments.
    pub tolerance: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self {
            check: true,
            tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsConfig {
    /// Probability missing from a distribution above which a run is flagged.
    pub max_leakage: f64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self { max_leakage: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResetStateConfig {
    /// Detection times at which the reset state is written out.
    pub times: Vec<Q<Time>>,
}

impl Default for ResetStateConfig {
    fn default() -> Self {
        Self {
            times: vec![Q::si(0.041e-3), Q::si(0.167e-3)],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KijowskiConfig {
    pub position: Q<Length>,
    pub t_min: Q<Time>,
    pub t_max: Q<Time>,
    pub samples: usize,
}

impl Default for KijowskiConfig {
    fn default() -> Self {
        Self {
            position: Q::si(0.0),
            t_min: Q::si(-0.5e-3),
            t_max: Q::si(1e-3),
            samples: 1501,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiscreteConfig {
    pub modes: usize,
    pub omega_0: Q<Rate>,
    pub omega_max: Q<Rate>,
    pub coupling: Q<Coupling>,
    /// Defaults to `100 / omega_0`.
    pub delta_t: Option<Q<Time>>,
    pub time_samples: usize,
    /// Repeat with twice the time samples and report the change.
    pub check_quadrature: bool,
    pub packet_width: Q<Length>,
    pub velocity: Q<Velocity>,
    /// Detector edge; the packet is centred on it.
    pub edge: Q<Length>,
    pub x_min: Q<Length>,
    pub x_max: Q<Length>,
    pub points: usize,
}

impl Default for DiscreteConfig {
    fn default() -> Self {
        let w0 = 2.38e12;
        Self {
            modes: 15,
            omega_0: Q::si(w0),
            omega_max: Q::si(4.6 * w0),
            coupling: Q::si(2.782e3),
            delta_t: None,
            time_samples: 8192,
            check_quadrature: true,
            packet_width: Q::si(50e-9),
            velocity: Q::si(1.79),
            edge: Q::si(0.0),
            x_min: Q::si(-512e-9),
            x_max: Q::si(512e-9),
            points: 4096,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub v0_min: Q<Velocity>,
    pub v0_max: Q<Velocity>,
    pub points: usize,
    pub distance: Q<Length>,
    /// Detector length in units of `v0 / A`.
    pub detector_length_factor: f64,
    pub k_max_factor: f64,
    pub a_dt_arrival: f64,
    pub a_dt_passage: f64,
    pub tau_samples_per_width: f64,
    pub entry_points: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let s = SweepSettings::default();
        Self {
            v0_min: Q::si(3e-3),
            v0_max: Q::si(30e-3),
            points: 5,
            distance: Q::si(100e-6),
            detector_length_factor: s.detector_length_factor,
            k_max_factor: s.k_max_factor,
            a_dt_arrival: s.a_dt_arrival,
            a_dt_passage: s.a_dt_passage,
            tau_samples_per_width: s.tau_samples_per_width,
            entry_points: s.entry_points,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub particle: ParticleConfig,
    pub packet: PacketConfig,
    pub detectors: DetectorConfig,
    pub grid: GridConfig,
    pub arrival: ArrivalConfig,
    pub passage: PassageConfig,
    pub convergence: ConvergenceConfig,
    pub limits: LimitsConfig,
    pub reset_state: ResetStateConfig,
    pub kijowski: KijowskiConfig,
    pub discrete: DiscreteConfig,
    pub sweep: SweepConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: format!("cannot read config file: {e}"),
        })?;
        Self::from_toml_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn particle(&self) -> qpassage::Result<ParticleSpec> {
        ParticleSpec::new(self.particle.mass.value())
    }

    pub fn experiment(&self) -> qpassage::Result<ExperimentConfig> {
        let d = &self.detectors;
        let detector = |s: &Span| {
            DetectorSpec::direct(
                SensitivityProfile::rectangular(s.start.value(), s.end.value())?,
                d.decay_rate.value(),
                d.shift.value(),
            )
        };
        let p = &self.passage;
        let cfg = ExperimentConfig {
            particle: self.particle()?,
            packet: GaussianPacketSpec::new(
                self.packet.center.value(),
                self.packet.width.value(),
                self.packet.velocity.value(),
            )?,
            detector1: detector(&d.first)?,
            detector2: detector(&d.second)?,
            include_shift: d.include_shift,
            grid: SpatialGrid::new(self.grid.x_min.value(), self.grid.x_max.value(), self.grid.points)?,
            absorber: AbsorbingBoundary::new(
                self.grid.absorber_width.value(),
                self.grid.absorber_strength.value(),
            )?,
            t_start: self.arrival.t_start.map(|t| t.value()),
            arrival_t_max: self.arrival.t_max.value(),
            dt: self.arrival.dt.value(),
            sample_stride: self.arrival.sample_stride,
            passage_dt: p.dt.value(),
            passage_stride: p.stride,
            tau_max: p.tau_max.value(),
            entry_times: match &p.entry_times {
                Some(t) => EntryTimes::Explicit {
                    times: t.iter().map(|q| q.value()).collect(),
                },
                None => EntryTimes::Auto {
                    n_points: p.entry_points,
                    tail: p.entry_tail,
                },
            },
            method: match p.method {
                MethodName::Compressed => PassageMethod::Compressed {
                    tolerance: p.compression_tolerance,
                },
                MethodName::Direct => PassageMethod::Direct,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn discrete_reset(&self) -> qpassage::Result<(DiscreteResetConfig, SpatialGrid)> {
        let c = &self.discrete;
        let cfg = DiscreteResetConfig {
            particle: self.particle()?,
            bath: DiscreteBathSpec::new(
                c.modes,
                c.omega_max.value(),
                c.coupling.value(),
                c.omega_0.value(),
            )?,
            packet: GaussianPacketSpec::new(c.edge.value(), c.packet_width.value(), c.velocity.value())?,
            profile: SensitivityProfile::step(c.edge.value())?,
            delta_t: c.delta_t.map_or(100.0 / c.omega_0.value(), |t| t.value()),
            n_time_samples: c.time_samples,
        };
        cfg.validate()?;
        let grid = SpatialGrid::new(c.x_min.value(), c.x_max.value(), c.points)?;
        Ok((cfg, grid))
    }

    pub fn sweep_settings(&self) -> SweepSettings {
        let s = &self.sweep;
        SweepSettings {
            detector_length_factor: s.detector_length_factor,
            k_max_factor: s.k_max_factor,
            a_dt_arrival: s.a_dt_arrival,
            a_dt_passage: s.a_dt_passage,
            tau_samples_per_width: s.tau_samples_per_width,
            entry_points: s.entry_points,
            compression_tolerance: self.passage.compression_tolerance,
            convergence_tolerance: self.convergence.tolerance,
            absorber_width: self.grid.absorber_width.value(),
            absorber_strength: self.grid.absorber_strength.value(),
            reference_velocity: self.packet.velocity.value(),
        }
    }
}
