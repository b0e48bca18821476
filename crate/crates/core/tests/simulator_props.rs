mod common;

use lbm_ce::exec::Execution;
use lbm_ce::scheme::builtin;
use lbm_ce::simulator::{fourier_single_mode_check, measure_mode, Initialization, Lattice, ModeConfig, Simulation};

use common::{random_scheme, rng, Shape};

#[test]
fn conserved_totals_drift_below_roundoff_on_random_schemes() {
    let mut r = rng(401);
    for shape in [Shape::new(1, 5, 2), Shape::new(2, 5, 1), Shape::new(2, 6, 2)] {
        let s = random_scheme(&mut r, shape);
        let n = if s.dim == 1 { 256 } else { 32 };
        let mut sim = Simulation::new(&s, Lattice::cubic(s.dim, n), Execution::Sequential).unwrap();
        let nc = s.conserved;
        sim.set_moments(|x| {
            let phase = x.iter().map(|&c| c as f64).sum::<f64>() * 0.37;
            (0..s.q()).map(|k| if k < nc { 1.0 + 0.1 * (phase + k as f64).sin() } else { 0.01 * (phase * 2.0).cos() }).collect()
        });
        let before = sim.conserved_totals();
        // Random schemes may be unstable, so roundoff is measured against
        // Σ_x Σ_j |M_kj f_j| rather than the initial total.
        sim.run(20);
        assert!(sim.is_finite());
        for (k, (a, b)) in before.iter().zip(sim.conserved_totals()).enumerate() {
            let scale: f64 = sim
                .grid
                .f
                .chunks(s.q())
                .map(|f| f.iter().enumerate().map(|(j, x)| (sim.scheme.m[(k, j)] * x).abs()).sum::<f64>())
                .sum::<f64>()
                .max(a.abs());
            assert!(((a - b) / scale).abs() < 1e-13, "{}: {a} -> {b} (scale {scale:e})", s.name);
        }
    }
}

#[test]
fn totals_detect_a_perturbation() {
    let s = builtin("d2q9-advection").unwrap();
    let mut sim = Simulation::new(&s, Lattice::cubic(2, 8), Execution::Sequential).unwrap();
    sim.set_equilibrium(|_| vec![1.0]);
    let before = sim.conserved_totals()[0];
    sim.grid.f[5] += 1e-9;
    assert!((sim.conserved_totals()[0] - before - 1e-9).abs() < 1e-13);
}

#[test]
fn measured_rates_are_linear_in_amplitude() {
    let s = builtin("d2q9-oblique").unwrap();
    let base = ModeConfig::new(2, 32, 300);
    let a = measure_mode(&s, &base).unwrap();
    let b = measure_mode(&s, &ModeConfig { amplitude: base.amplitude / 2.0, ..base.clone() }).unwrap();
    let rel = |x: Option<f64>, y: Option<f64>| ((x.unwrap() - y.unwrap()) / x.unwrap()).abs();
    assert!(rel(a.measured_decay, b.measured_decay) < 1e-6);
    assert!(rel(a.measured_frequency, b.measured_frequency) < 1e-6);
}

#[test]
fn corrected_initialization_shrinks_the_initial_layer() {
    let s = builtin("d2q9-advection").unwrap();
    let base = ModeConfig::new(2, 32, 300);
    let eq = measure_mode(&s, &base).unwrap();
    let corrected = measure_mode(&s, &ModeConfig { init: Initialization::FirstOrderCorrected, ..base }).unwrap();
    assert!(corrected.initial_layer < eq.initial_layer, "{} vs {}", corrected.initial_layer, eq.initial_layer);
}

#[test]
fn single_mode_follows_the_amplification_matrix_on_random_schemes() {
    let mut r = rng(402);
    for shape in [Shape::new(1, 4, 1), Shape::new(2, 5, 2)] {
        let s = random_scheme(&mut r, shape);
        let mode = if s.dim == 1 { vec![3] } else { vec![1, -2] };
        // Random schemes can be unstable: after a few steps roundoff seeded in
        // the fastest-growing eigendirection outgrows the predicted mode.
        let err = fourier_single_mode_check(&s, 16, &mode, 10, Execution::Sequential).unwrap();
        assert!(err < 1e-10, "{}: {err:e}", s.name);
    }
}

#[test]
fn sequential_and_parallel_runs_agree_bitwise() {
    let s = builtin("d2q9-oblique").unwrap();
    let mut sims: Vec<Simulation> = [Execution::Sequential, Execution::Parallel]
        .into_iter()
        .map(|e| Simulation::new(&s, Lattice::cubic(2, 24), e).unwrap())
        .collect();
    for sim in &mut sims {
        sim.set_equilibrium(|x| vec![1.0 + 0.01 * ((x[0] * 7 + x[1] * 3) % 11) as f64]);
        sim.run(50);
    }
    assert_eq!(sims[0].grid.f, sims[1].grid.f);
}
