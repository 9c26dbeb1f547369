//! Subcommand implementations.

use std::path::Path;

use qpassage::discrete_oracle::{
    compare_densities, continuum_reset_density, discrete_reset_density, edge_exclusion,
    DiscreteResetConfig,
};
use qpassage::passage::{
    arrival_record, arrival_self_convergence, arrival_stage, classical_passage,
    kijowski_distribution, passage_from_arrival, reset_states_at, ConvergenceReport,
    ExperimentConfig, LOW_DETECTION,
};
use qpassage::precision::{log_spaced, optimal_plan, scaling_sweep};
use qpassage::propagator::DetectionRecord;
use qpassage::quadrature::{density_moments, full_width_half_max};
use qpassage::wavefunction::{observables, GaussianPacketSpec};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::error::{exit, CliError};
use crate::output::{create_dir, plot_script, write_file, write_summary, Summary, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Arrival,
    Passage,
    ResetState,
    DiscreteCompare,
    Kijowski,
    PrecisionSweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Arrival => "arrival",
            Self::Passage => "passage",
            Self::ResetState => "reset-state",
            Self::DiscreteCompare => "discrete-compare",
            Self::Kijowski => "kijowski",
            Self::PrecisionSweep => "precision-sweep",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    pub exit_code: i32,
}

struct Product {
    results: Value,
    convergence: Option<(Value, bool)>,
    warnings: Vec<String>,
    tables: Vec<Table>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result types serialize to JSON")
}

/// Runs `command`, writes its CSV tables and `summary.json` into `out_dir`,
/// and picks the exit code: convergence failure before physical warnings.
pub fn run(command: Command, cfg: &RunConfig, out_dir: &Path, emit_plots: bool) -> Result<Outcome, CliError> {
    let product = match command {
        Command::Arrival => arrival(cfg)?,
        Command::Passage => passage(cfg)?,
        Command::ResetState => reset_state(cfg)?,
        Command::DiscreteCompare => discrete_compare(cfg)?,
        Command::Kijowski => kijowski(cfg)?,
        Command::PrecisionSweep => precision_sweep(cfg)?,
    };
    create_dir(out_dir)?;
    let mut files = Vec::new();
    for t in &product.tables {
        write_file(&out_dir.join(&t.file), &t.to_csv())?;
        files.push(t.file.clone());
    }
    if emit_plots {
        write_file(&out_dir.join("plot.py"), &plot_script(&product.tables))?;
        files.push("plot.py".into());
    }
    let converged = product.convergence.as_ref().is_none_or(|c| c.1);
    let exit_code = if !converged {
        exit::NOT_CONVERGED
    } else if !product.warnings.is_empty() {
        exit::PHYSICAL_WARNING
    } else {
        exit::SUCCESS
    };
    let summary = Summary {
        command: command.name().into(),
        results: product.results,
        convergence: product.convergence.map(|c| c.0),
        warnings: product.warnings,
        files,
        config: cfg.clone(),
    };
    write_summary(out_dir, &summary)?;
    Ok(Outcome { summary, exit_code })
}

fn convergence_check(cfg: &RunConfig, exp: &ExperimentConfig) -> Result<Option<(Value, bool)>, CliError> {
    if !cfg.convergence.check {
        return Ok(None);
    }
    let report: ConvergenceReport = arrival_self_convergence(exp, cfg.convergence.tolerance)?;
    Ok(Some((to_value(&report), report.passed)))
}

fn density_table(file: &str, times: &[f64], density: &[f64]) -> Table {
    Table::new(
        file,
        vec!["t_or_tau_seconds", "density_per_second"],
        vec![times.to_vec(), density.to_vec()],
    )
}

#[derive(Serialize)]
struct ArrivalResults {
    start_time: f64,
    detection_probability: f64,
    residual_norm: f64,
    boundary_loss: f64,
    bookkeeping_error: f64,
    mean_time: f64,
    std_time: f64,
    peak_time: f64,
}

fn arrival_results(exp: &ExperimentConfig, rec: &DetectionRecord) -> ArrivalResults {
    let (_, mean_time, std_time) = rec.moments().unwrap_or((0.0, f64::NAN, f64::NAN));
    ArrivalResults {
        start_time: exp.start_time(),
        detection_probability: rec.total_detected(),
        residual_norm: rec.final_survival(),
        boundary_loss: rec.total_boundary_loss(),
        bookkeeping_error: rec.bookkeeping_error(),
        mean_time,
        std_time,
        peak_time: rec.peak_time(),
    }
}

fn arrival(cfg: &RunConfig) -> Result<Product, CliError> {
    let exp = cfg.experiment()?;
    let rec = arrival_record(&exp)?;
    let results = arrival_results(&exp, &rec);
    let mut warnings = Vec::new();
    if results.detection_probability < LOW_DETECTION {
        warnings.push(format!(
            "detector 1 registers only {:.4} of the packet",
            results.detection_probability
        ));
    }
    let missing = 1.0 - results.detection_probability;
    if missing > cfg.limits.max_leakage {
        warnings.push(format!(
            "undetected probability {missing:.4} exceeds the limit {}",
            cfg.limits.max_leakage
        ));
    }
    Ok(Product {
        results: to_value(&results),
        convergence: convergence_check(cfg, &exp)?,
        warnings,
        tables: vec![
            density_table("arrival.csv", &rec.times, &rec.density_w1),
            Table::new(
                "arrival_survival.csv",
                vec!["t_seconds", "survival_probability", "cumulative_detected", "boundary_loss"],
                vec![
                    rec.times.clone(),
                    rec.survival_p0.clone(),
                    rec.cumulative_detected.clone(),
                    rec.boundary_loss.clone(),
                ],
            ),
        ],
    })
}

fn passage(cfg: &RunConfig) -> Result<Product, CliError> {
    let exp = cfg.experiment()?;
    let stage = arrival_stage(&exp)?;
    let dist = passage_from_arrival(&exp, &stage)?;
    let d = exp.passage_distance();
    let mut warnings: Vec<String> = dist.warnings.iter().map(|w| w.to_string()).collect();
    let leaked = dist.leakage.total();
    if leaked > cfg.limits.max_leakage {
        warnings.push(format!(
            "probability missing from G(tau) is {leaked:.4}, above the limit {}",
            cfg.limits.max_leakage
        ));
    }
    let mut tables = vec![
        density_table("passage.csv", &dist.tau, &dist.g_tau),
        density_table("arrival.csv", &stage.record.times, &stage.record.density_w1),
    ];
    match classical_passage(&exp.packet, &exp.particle, d, &dist.tau) {
        Ok(g) => tables.push(density_table("passage_classical.csv", &dist.tau, &g)),
        Err(e) => warnings.push(format!("classical reference unavailable: {e}")),
    }
    let results = json!({
        "total_probability": dist.total_probability,
        "mean_tau": dist.mean_tau,
        "std_tau": dist.std_tau,
        "fwhm_tau": full_width_half_max(&dist.tau, &dist.g_tau),
        "transit_time": d / exp.packet.mean_velocity_v0,
        "leakage": dist.leakage,
        "leakage_total": leaked,
        "evolutions": dist.evolutions,
        "entry_points": stage.entry_times.len(),
        "compression_error_bound": dist.compression_error_bound,
        "arrival": arrival_results(&exp, &stage.record),
    });
    Ok(Product {
        results,
        convergence: convergence_check(cfg, &exp)?,
        warnings,
        tables,
    })
}

fn reset_state(cfg: &RunConfig) -> Result<Product, CliError> {
    let exp = cfg.experiment()?;
    let times: Vec<f64> = cfg.reset_state.times.iter().map(|t| t.value()).collect();
    let states = reset_states_at(&exp, &times)?;
    let mut tables = Vec::new();
    let mut entries = Vec::new();
    for (i, psi) in states.iter().enumerate() {
        let m = observables(psi, &exp.particle)?;
        let unit = psi.normalized()?;
        let xs: Vec<f64> = exp.grid.positions().collect();
        tables.push(Table::new(
            format!("reset_state_{i}_position.csv"),
            vec!["x_meters", "density_per_meter"],
            vec![xs, unit.density()],
        ));
        let (p, rho) = unit.momentum_density(&exp.particle);
        tables.push(Table::new(
            format!("reset_state_{i}_momentum.csv"),
            vec!["p_kilogram_meters_per_second", "density_seconds_per_kilogram_meter"],
            vec![p, rho],
        ));
        entries.push(json!({
            "time": psi.time(),
            "detection_density": m.norm_sq,
            "mean_x": m.mean_x,
            "std_x": m.std_x,
            "mean_p": m.mean_p,
            "std_p": m.std_p,
            "uncertainty_ratio": m.uncertainty_ratio(&exp.particle),
        }));
    }
    let incoming_std_p = exp.particle.hbar / (2.0 * exp.packet.sigma_x);
    Ok(Product {
        results: json!({ "states": entries, "incoming_std_p": incoming_std_p }),
        convergence: None,
        warnings: Vec::new(),
        tables,
    })
}

fn discrete_compare(cfg: &RunConfig) -> Result<Product, CliError> {
    let (dcfg, grid) = cfg.discrete_reset()?;
    let discrete = discrete_reset_density(&dcfg, &grid)?;
    let continuum = continuum_reset_density(&dcfg, &grid)?;
    let metrics = compare_densities(&discrete, &continuum, edge_exclusion(cfg.discrete.edge.value(), dcfg.packet.sigma_x))?;
    let convergence = if cfg.discrete.check_quadrature {
        let tolerance = 1e-2;
        let refined = DiscreteResetConfig {
            n_time_samples: 2 * dcfg.n_time_samples - 1,
            ..dcfg.clone()
        };
        let fine = discrete_reset_density(&refined, &grid)?;
        let change = compare_densities(&discrete, &fine, (0.0, 0.0))?.l1_full;
        Some((
            json!({ "l1_change": change, "tolerance": tolerance, "passed": change < tolerance }),
            change < tolerance,
        ))
    } else {
        None
    };
    let xs: Vec<f64> = grid.positions().collect();
    Ok(Product {
        results: json!({
            "metrics": metrics,
            "modes": dcfg.bath.n_modes,
            "delta_t": dcfg.delta_t,
            "time_samples": dcfg.n_time_samples,
            "discrete_normalization": discrete.normalization,
            "continuum_normalization": continuum.normalization,
        }),
        convergence,
        warnings: Vec::new(),
        tables: vec![Table::new(
            "discrete_compare.csv",
            vec!["x_meters", "discrete_density_per_meter", "continuum_density_per_meter"],
            vec![xs, discrete.unit_normalized()?, continuum.unit_normalized()?],
        )],
    })
}

fn kijowski(cfg: &RunConfig) -> Result<Product, CliError> {
    let particle = cfg.particle()?;
    let packet = GaussianPacketSpec::new(
        cfg.packet.center.value(),
        cfg.packet.width.value(),
        cfg.packet.velocity.value(),
    )?;
    let k = &cfg.kijowski;
    if k.samples < 2 || !(k.t_max.value() > k.t_min.value()) {
        return Err(CliError::Invalid(qpassage::Error::InvalidParameter {
            name: "kijowski",
            reason: "need t_max > t_min and at least two samples".into(),
        }));
    }
    let (t0, t1) = (k.t_min.value(), k.t_max.value());
    let times: Vec<f64> = (0..k.samples)
        .map(|i| t0 + (t1 - t0) * i as f64 / (k.samples - 1) as f64)
        .collect();
    let density = kijowski_distribution(&packet, &particle, k.position.value(), &times)?;
    let (norm, mean, std) = density_moments(&times, &density).unwrap_or((0.0, f64::NAN, f64::NAN));
    let peak = times[density
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > density[b] { i } else { b })];
    let mut warnings = Vec::new();
    if (1.0 - norm).abs() > cfg.limits.max_leakage {
        warnings.push(format!("time window holds {norm:.4} of the distribution"));
    }
    Ok(Product {
        results: json!({
            "position": k.position.value(),
            "normalization": norm,
            "mean_time": mean,
            "std_time": std,
            "peak_time": peak,
        }),
        convergence: None,
        warnings,
        tables: vec![density_table("kijowski.csv", &times, &density)],
    })
}

fn precision_sweep(cfg: &RunConfig) -> Result<Product, CliError> {
    let particle = cfg.particle()?;
    let s = &cfg.sweep;
    let d = s.distance.value();
    let v0s = log_spaced(s.v0_min.value(), s.v0_max.value(), s.points);
    let sweep = scaling_sweep(&particle, d, &v0s, &cfg.sweep_settings())?;
    let reference = optimal_plan(d, &particle, cfg.packet.velocity.value())?;
    let mut warnings = Vec::new();
    for p in &sweep.points {
        if 1.0 - p.total_probability > cfg.limits.max_leakage {
            warnings.push(format!(
                "at v0 = {:.4e} m/s only {:.4} of the probability reaches G(tau)",
                p.v0, p.total_probability
            ));
        }
    }
    let col = |f: fn(&qpassage::precision::SweepPoint) -> f64| sweep.points.iter().map(f).collect::<Vec<_>>();
    let table = Table::new(
        "precision_sweep.csv",
        vec!["v0_meters_per_second", "energy_joules", "std_tau_seconds", "delta_tau_opt_seconds"],
        vec![col(|p| p.v0), col(|p| p.energy), col(|p| p.std_tau), col(|p| p.delta_tau_opt)],
    );
    Ok(Product {
        results: json!({
            "exponent": sweep.exponent,
            "log_prefactor": sweep.log_prefactor,
            "points": sweep.points,
            "reference_plan": reference,
        }),
        convergence: Some((
            to_value(&sweep.points.iter().map(|p| p.convergence).collect::<Vec<_>>()),
            true,
        )),
        warnings,
        tables: vec![table],
    })
}
