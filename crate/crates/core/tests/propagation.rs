use std::time::Instant;

use qpassage::grid::build_grid;
use qpassage::propagator::{evolve_conditional, ComplexPotentialField, EvolveOptions, Propagator};
use qpassage::wavefunction::{gaussian_free_state, observables, GaussianPacketSpec, ParticleSpec};

fn rectangular_decay(grid: &qpassage::grid::SpatialGrid, a: f64, lo: f64, hi: f64) -> Vec<f64> {
    let i0 = grid.first_index_at_or_after(lo);
    let i1 = grid.first_index_at_or_after(hi);
    (0..grid.len())
        .map(|i| if i >= i0 && i < i1 { a } else { 0.0 })
        .collect()
}

#[test]
fn free_evolution_matches_analytic_packet() {
    let grid = build_grid(-64e-6, 192e-6, 8192).unwrap();
    let particle = ParticleSpec::cesium();
    let packet = GaussianPacketSpec::new(0.0, 1e-6, 7.17e-3).unwrap();
    let t0 = -0.5e-3;
    let psi0 = gaussian_free_state(&packet, &particle, t0, &grid).unwrap();
    let pot = ComplexPotentialField::zero(grid);
    let mut prop = Propagator::new(&pot, &particle, 1e-6).unwrap();
    let evo = prop.evolve(&psi0, 1000, &EvolveOptions::default()).unwrap();
    let exact = gaussian_free_state(&packet, &particle, evo.state.time(), &grid).unwrap();
    let dist = evo.state.l2_distance(&exact).unwrap();
    assert!(dist < 1e-8, "L2 distance {dist:e}");
    let m = observables(&evo.state, &particle).unwrap();
    assert!(m.std_x * m.std_p >= 0.5 * particle.hbar * (1.0 - 1e-6));
}

#[test]
fn detection_bookkeeping_and_density_consistency() {
    let grid = build_grid(-64e-6, 192e-6, 8192).unwrap();
    let particle = ParticleSpec::cesium();
    let packet = GaussianPacketSpec::new(0.0, 1e-6, 7.17e-3).unwrap();
    let psi0 = gaussian_free_state(&packet, &particle, -0.85e-3, &grid).unwrap();
    let a = 2.3895e4;
    let pot = ComplexPotentialField::new(
        grid,
        vec![0.0; grid.len()],
        rectangular_decay(&grid, a, 0.0, 20e-6),
    )
    .unwrap();
    let started = Instant::now();
    let (_, rec) = evolve_conditional(&psi0, &pot, &particle, 1e-3, 1e-7, 1).unwrap();
    eprintln!(
        "{} steps on {} points in {:.2?}",
        rec.len() - 1,
        grid.len(),
        started.elapsed()
    );

    assert!(rec.bookkeeping_error() < 1e-5, "{:e}", rec.bookkeeping_error());
    assert!(rec.density_w1.iter().all(|&w| w >= 0.0));
    assert!(rec.survival_p0.windows(2).all(|w| w[1] <= w[0] + 1e-15));

    let peak = rec.peak_index();
    let numeric = rec.survival_derivative(peak).unwrap();
    let rel = (numeric - rec.density_w1[peak]).abs() / rec.density_w1[peak];
    assert!(rel < 1e-3, "relative mismatch {rel:e}");
    assert!(rec.total_detected() > 0.99);
}
