//! Cross-module consistency checks on the bundled benchmark system.

use nalgebra::{DMatrix, DVector};
use ncsq_core::aggregate::{build_augmented, shift_matrix};
use ncsq_core::channel::mss_spectral_radius;
use ncsq_core::linalg::spectral_radius;
use ncsq_core::reference::{benchmark_plant, benchmark_weights, BENCHMARK_HORIZON};
use ncsq_core::synth::{
    dare_residual, prediction_matrices, solve_dare, ControllerSynthesis, CostWeights, Plant,
};

fn benchmark_synthesis() -> (Plant<f64>, CostWeights<f64>, ControllerSynthesis<f64>) {
    let plant = benchmark_plant();
    let weights = benchmark_weights();
    let synth = ControllerSynthesis::synthesize(&plant, &weights).unwrap();
    (plant, weights, synth)
}

#[test]
fn benchmark_riccati_solution_is_valid() {
    let (plant, weights, synth) = benchmark_synthesis();
    let residual = dare_residual(&plant.a, &plant.b1, &weights.q, weights.r, &synth.riccati);
    assert!(residual <= 1e-8, "residual {residual}");
    let asym = (&synth.riccati - synth.riccati.transpose()).norm();
    assert!(asym <= 1e-12 * synth.riccati.norm());
    let min_eig = synth.riccati.clone().symmetric_eigen().eigenvalues.min();
    assert!(min_eig > 0.0, "Riccati solution must be positive definite");
}

#[test]
fn benchmark_prediction_blocks_are_matrix_powers() {
    let (plant, _, synth) = benchmark_synthesis();
    let p = plant.dim();
    let (input_pred, free_pred) = prediction_matrices(&plant.a, &plant.b1, BENCHMARK_HORIZON);
    assert_eq!(input_pred.nrows(), BENCHMARK_HORIZON * p);
    assert_eq!(free_pred.nrows(), BENCHMARK_HORIZON * p);
    // third block row, first column: two applications of the transition
    let block = input_pred.view((2 * p, 0), (p, 1)).clone_owned();
    let expected = &plant.a * &plant.a * &plant.b1;
    assert!((block - expected).norm() < 1e-12);
    assert_eq!(synth.input_pred, input_pred);
}

#[test]
fn benchmark_condensed_cost_is_positive_definite() {
    let (_, _, synth) = benchmark_synthesis();
    let asym = (&synth.hessian - synth.hessian.transpose()).norm();
    assert!(asym <= 1e-12 * (1.0 + synth.hessian.norm()));
    let min_eig = synth.hessian.clone().symmetric_eigen().eigenvalues.min();
    assert!(min_eig > 0.0, "Hessian min eigenvalue {min_eig}");
    // gain solves the normal equations
    let gain_residual = (&synth.hessian * &synth.gain - synth.cross.transpose()).norm();
    assert!(gain_residual <= 1e-8);
}

#[test]
fn benchmark_closed_loop_is_stable_and_open_loop_is_not() {
    let (plant, _, synth) = benchmark_synthesis();
    let agg = build_augmented(&plant, &synth.gain);
    let rho_recv = spectral_radius(&agg.a_recv);
    assert!(rho_recv < 1.0, "closed loop radius {rho_recv}");
    let rho_drop = spectral_radius(&agg.a_drop);
    assert!(
        (rho_drop - 1.659).abs() < 1e-3,
        "open loop radius {rho_drop}"
    );
}

#[test]
fn benchmark_stability_test_over_drop_probabilities() {
    let (plant, _, synth) = benchmark_synthesis();
    let agg = build_augmented(&plant, &synth.gain);
    let rho_zero = mss_spectral_radius(&agg.a_recv, &agg.a_drop, 0.0).unwrap();
    let rho_recv = spectral_radius(&agg.a_recv);
    assert!((rho_zero - rho_recv * rho_recv).abs() < 1e-10);

    let rho_ten = mss_spectral_radius(&agg.a_recv, &agg.a_drop, 0.10).unwrap();
    assert!(rho_ten < 1.0, "must be mean-square stable at 10% dropouts");

    let rho_one = mss_spectral_radius(&agg.a_recv, &agg.a_drop, 1.0).unwrap();
    assert!(
        rho_one > 1.0,
        "certain dropouts leave the unstable open loop"
    );
    let rho_drop = spectral_radius(&agg.a_drop);
    assert!((rho_one - rho_drop * rho_drop).abs() < 1e-8);
}

#[test]
fn noiseless_aggregated_state_decays_at_the_closed_loop_rate() {
    let (plant, _, synth) = benchmark_synthesis();
    let agg = build_augmented(&plant, &synth.gain);
    let rho = spectral_radius(&agg.a_recv);
    let dim = agg.dim();
    let mut theta = DVector::from_fn(dim, |i, _| ((i * 7 + 3) as f64 * 0.37).sin());
    let mut norms = Vec::new();
    for _ in 0..60 {
        norms.push(theta.norm());
        theta = &agg.a_recv * &theta;
    }
    // after the transient the per-step contraction approaches the radius
    let late = (norms[55] / norms[40]).powf(1.0 / 15.0);
    assert!(
        (late - rho).abs() < 0.05,
        "empirical decay {late} vs spectral radius {rho}"
    );
    assert!(norms[59] < norms[0] * rho.powi(40), "decay is geometric");
}

#[test]
fn shift_matrix_matches_aggregated_dropout_block() {
    let (plant, _, synth) = benchmark_synthesis();
    let agg = build_augmented(&plant, &synth.gain);
    let p = plant.dim();
    let n = BENCHMARK_HORIZON;
    let block = agg.a_drop.view((p, p), (n, n)).clone_owned();
    assert_eq!(block, shift_matrix::<f64>(n));
}

#[test]
fn generic_scalar_instantiates_at_single_precision() {
    // the numerics are scalar-generic; a single-precision pass on a small
    // system must reproduce the double-precision solution coarsely
    let a64 = DMatrix::<f64>::from_row_slice(2, 2, &[0.9, 0.2, -0.1, 0.5]);
    let b64 = DVector::<f64>::from_vec(vec![1.0, 0.5]);
    let q64 = DMatrix::<f64>::identity(2, 2);
    let x64 = solve_dare(&a64, &b64, &q64, 1.0).unwrap();

    let a32 = a64.map(|v| v as f32);
    let b32 = b64.map(|v| v as f32);
    let q32 = DMatrix::<f32>::identity(2, 2);
    let x32 = solve_dare(&a32, &b32, &q32, 1.0f32).unwrap();
    let diff = (x32.map(|v| v as f64) - &x64).norm();
    assert!(diff < 1e-3, "f32 and f64 solutions diverge: {diff}");
}
