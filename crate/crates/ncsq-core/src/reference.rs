//! The bundled benchmark system used by the experiment presets and the
//! oracle tests: a fifth-order open-loop unstable plant driven through all
//! states, unit noise variance, identity state weight, unit input weight
//! and a horizon of five.

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::synth::{CostWeights, Plant};

/// State dimension of the benchmark plant.
pub const BENCHMARK_DIM: usize = 5;
/// Horizon (and buffer) length used with the benchmark plant.
pub const BENCHMARK_HORIZON: usize = 5;
/// Dictionary sections used with the benchmark plant.
pub const BENCHMARK_SECTIONS: usize = 2;

/// The benchmark plant. Open-loop unstable (largest eigenvalue modulus
/// about 1.659) and fully controllable.
pub fn benchmark_plant() -> Plant<f64> {
    let a = DMatrix::from_row_slice(
        5,
        5,
        &[
            -0.758, -0.325, -0.085, 0.060, -2.256, //
            0.432, -0.356, 0.002, 0.007, -0.171, //
            -0.173, 1.063, 0.366, 0.671, 0.939, //
            0.951, 0.667, 0.737, -0.434, 0.352, //
            1.054, 0.484, -0.158, 0.454, -0.264,
        ],
    );
    let b = DVector::from_element(5, 1.0);
    Plant::new(a, b.clone(), b, 1.0).expect("benchmark plant is controllable")
}

/// Identity state weight, unit input weight, horizon five.
pub fn benchmark_weights() -> CostWeights<f64> {
    CostWeights::new(DMatrix::identity(5, 5), 1.0, BENCHMARK_HORIZON)
        .expect("benchmark weights are valid")
}

/// Two-state transition matrix used by the correlated-dropout experiments:
/// a persistent good state and a bad state visited a sixth of the time.
pub fn benchmark_transitions() -> Matrix2<f64> {
    Matrix2::new(0.95, 0.05, 0.25, 0.75)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::spectral_radius;

    #[test]
    fn benchmark_plant_is_open_loop_unstable() {
        let plant = benchmark_plant();
        let rho = spectral_radius(&plant.a);
        assert!((rho - 1.659).abs() < 1e-3, "open-loop radius {rho}");
    }
}
