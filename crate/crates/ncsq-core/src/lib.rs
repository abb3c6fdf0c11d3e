//! Simulation laboratory for fixed-rate vector-quantized packetized
//! predictive control of linear plants over lossy networks.
//!
//! The crate covers the full pipeline:
//!
//! 1. [`synth`] - LQ controller synthesis: Riccati solution, horizon
//!    prediction matrices, condensed cost and feedback gain;
//! 2. [`aggregate`] - the plant-plus-buffer jump-linear model and the
//!    elementary stepping primitives;
//! 3. [`channel`] - memoryless and two-state Markov dropout channels plus
//!    the lifted mean-square stability test;
//! 4. [`stationary`] - closed-form stationary second moments of the
//!    unquantized loop, used to shape quantizer dictionaries;
//! 5. [`dictionary`] - sectioned Gaussian dictionary generation and the
//!    rate bookkeeping;
//! 6. [`encoder`] - greedy and exhaustive codeword search with the
//!    index/bitstream codecs;
//! 7. [`sim`] - the seeded closed-loop Monte-Carlo harness.
//!
//! All numerics are generic over the scalar type through [`Scalar`];
//! the aliases below fix the default double-precision instantiation.

pub mod aggregate;
pub mod channel;
pub mod dictionary;
pub mod encoder;
pub mod linalg;
pub mod reference;
pub mod scalar;
pub mod seeding;
pub mod sim;
pub mod stationary;
pub mod synth;

pub use scalar::Scalar;

/// Default double-precision matrix type.
pub type Mat = nalgebra::DMatrix<f64>;
/// Default double-precision column vector type.
pub type Vect = nalgebra::DVector<f64>;

/// Double-precision plant.
pub type Plant64 = synth::Plant<f64>;
/// Double-precision cost weights.
pub type CostWeights64 = synth::CostWeights<f64>;
/// Double-precision controller synthesis.
pub type ControllerSynthesis64 = synth::ControllerSynthesis<f64>;
/// Double-precision aggregated model.
pub type AggregatedModel64 = aggregate::AggregatedModel<f64>;
/// Double-precision dropout model.
pub type DropoutModel64 = channel::DropoutModel<f64>;
/// Double-precision dictionary.
pub type Dictionary64 = dictionary::Dictionary<f64>;
/// Double-precision simulation configuration.
pub type SimulationConfig64 = sim::SimulationConfig<f64>;
/// Double-precision run record.
pub type RunRecord64 = sim::RunRecord<f64>;
