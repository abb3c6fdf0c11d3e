//! Closed-loop Monte-Carlo simulation of the quantized networked loop.
//!
//! Each step encodes a control plan from the current state (quantized
//! through the dictionary, or the exact feedback plan for the baseline),
//! sends it through the dropout channel, advances the buffer, applies the
//! buffered input to the plant and accumulates the running quadratic cost.
//! Per-run noise, channel and dictionary streams are derived from the
//! master seed, so a baseline and a quantized run with the same run index
//! consume identical disturbance and dropout sequences.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::aggregate::{build_augmented, plant_step, AggregatedModel, BufferState};
use crate::channel::{initial_state, step_channel, ChannelError, ChannelState, DropoutModel};
use crate::dictionary::{
    achieved_rate, build_dictionary, DictError, Dictionary, DictionaryFamily, DictionaryShape,
};
use crate::encoder::{greedy_encode, EncoderWorkspace};
use crate::scalar::{real, Scalar};
use crate::seeding::{derive_child, derive_stream, StreamKind};
use crate::synth::{ControllerSynthesis, CostWeights, Plant, SynthError};

/// Default simulation length.
pub const DEFAULT_STEPS: usize = 50_000;
/// Default instability threshold on the state amplitude.
pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1e9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Dictionary(#[from] DictError),
}

/// How a quantized controller's dictionary is built for a run.
#[derive(Debug, Clone)]
pub struct QuantizerSpec<T: Scalar> {
    pub family: DictionaryFamily,
    pub sections: usize,
    pub words_per_section: usize,
    pub shape: DictionaryShape<T>,
    pub scale: T,
}

impl<T: Scalar> QuantizerSpec<T> {
    pub fn achieved_rate(&self, horizon: usize) -> f64 {
        achieved_rate(horizon, self.sections, self.words_per_section)
    }
}

/// Controller variant simulated in the loop.
#[derive(Debug, Clone)]
pub enum ControlLaw<T: Scalar> {
    /// The exact feedback plan, no quantizer.
    Unquantized,
    /// One dictionary, searched greedily every step.
    Quantized(QuantizerSpec<T>),
    /// One dictionary per network state; both sides follow the state.
    QuantizedSwitched(Box<[QuantizerSpec<T>; 2]>),
}

/// Whether a fresh dictionary is generated per run or one dictionary is
/// shared by all runs of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DictionarySeedMode {
    PerRun,
    Shared,
}

/// Starting network state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialChannelState {
    /// Sampled from the stationary distribution (one channel-stream draw).
    Stationary,
    /// Fixed zero-based state index.
    Fixed(usize),
}

/// Complete description of one simulation cell.
#[derive(Debug, Clone)]
pub struct SimulationConfig<T: Scalar> {
    pub plant: Plant<T>,
    pub weights: CostWeights<T>,
    pub channel: DropoutModel<T>,
    pub law: ControlLaw<T>,
    pub steps: usize,
    /// Steps simulated before cost accounting starts; zero by default
    /// (long-run averages wash the initial condition out anyway).
    pub burn_in: usize,
    pub master_seed: u64,
    /// Initial plant state; zeros by default (steady-state experiments).
    pub x0: DVector<T>,
    pub divergence_threshold: T,
    pub dict_seed_mode: DictionarySeedMode,
    pub initial_channel_state: InitialChannelState,
}

impl<T: Scalar> SimulationConfig<T> {
    pub fn new(
        plant: Plant<T>,
        weights: CostWeights<T>,
        channel: DropoutModel<T>,
        law: ControlLaw<T>,
    ) -> Self {
        let dim = plant.dim();
        Self {
            plant,
            weights,
            channel,
            law,
            steps: DEFAULT_STEPS,
            burn_in: 0,
            master_seed: 0,
            x0: DVector::zeros(dim),
            divergence_threshold: real::<T>(DEFAULT_DIVERGENCE_THRESHOLD),
            dict_seed_mode: DictionarySeedMode::PerRun,
            initial_channel_state: InitialChannelState::Stationary,
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        if self.steps == 0 {
            return Err(SimError::ConfigInvalid("steps must be at least 1".into()));
        }
        if self.divergence_threshold <= T::zero() {
            return Err(SimError::ConfigInvalid(
                "divergence threshold must be positive".into(),
            ));
        }
        if self.x0.len() != self.plant.dim() {
            return Err(SimError::ConfigInvalid(format!(
                "x0 has length {}, plant dimension is {}",
                self.x0.len(),
                self.plant.dim()
            )));
        }
        let check_spec = |spec: &QuantizerSpec<T>| -> Result<(), SimError> {
            if spec.sections == 0 || spec.words_per_section == 0 {
                return Err(SimError::ConfigInvalid("empty dictionary structure".into()));
            }
            if let DictionaryShape::Covariance(cov) = &spec.shape {
                if cov.nrows() != self.weights.horizon || cov.ncols() != self.weights.horizon {
                    return Err(SimError::ConfigInvalid(
                        "shaping covariance does not match the horizon".into(),
                    ));
                }
            }
            Ok(())
        };
        match &self.law {
            ControlLaw::Unquantized => {}
            ControlLaw::Quantized(spec) => check_spec(spec)?,
            ControlLaw::QuantizedSwitched(specs) => {
                if self.channel.state_count() != 2 {
                    return Err(SimError::ConfigInvalid(
                        "switched quantizer requires a two-state channel".into(),
                    ));
                }
                check_spec(&specs[0])?;
                check_spec(&specs[1])?;
                if specs[0].sections != specs[1].sections
                    || specs[0].words_per_section != specs[1].words_per_section
                {
                    return Err(SimError::ConfigInvalid(
                        "switched dictionaries must share the section structure".into(),
                    ));
                }
            }
        }
        if let InitialChannelState::Fixed(index) = self.initial_channel_state {
            if index >= self.channel.state_count() {
                return Err(SimError::ConfigInvalid(format!(
                    "initial channel state {index} out of range"
                )));
            }
        }
        Ok(())
    }

    /// Validate and synthesize the controller once for all runs.
    pub fn prepare(self) -> Result<PreparedSim<T>, SimError> {
        self.validate()?;
        let synthesis = ControllerSynthesis::synthesize(&self.plant, &self.weights)?;
        let aggregated = build_augmented(&self.plant, &synthesis.gain);
        Ok(PreparedSim {
            config: self,
            synthesis,
            aggregated,
        })
    }
}

/// A validated configuration with the synthesized controller attached.
#[derive(Debug, Clone)]
pub struct PreparedSim<T: Scalar> {
    config: SimulationConfig<T>,
    synthesis: ControllerSynthesis<T>,
    aggregated: AggregatedModel<T>,
}

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord<T: Scalar> {
    /// Time-averaged quadratic cost; `None` when the run diverged
    /// (reported as infinite).
    pub mse: Option<T>,
    /// `10 log10` of the time-averaged cost, defined only for stable runs.
    pub mse_db: Option<T>,
    pub stable: bool,
    pub steps: usize,
    pub dropout_count: u64,
    /// Fraction of steps spent in each network state.
    pub state_occupancy: (f64, f64),
    pub master_seed: u64,
    pub run_index: u64,
    /// Achieved bit rate of the quantizer, `None` for the baseline.
    pub achieved_rate: Option<f64>,
}

/// Compensated accumulation for long cost sums.
struct CompensatedSum<T: Scalar> {
    sum: T,
    carry: T,
}

impl<T: Scalar> CompensatedSum<T> {
    fn new() -> Self {
        Self {
            sum: T::zero(),
            carry: T::zero(),
        }
    }

    fn add(&mut self, value: T) {
        let y = value - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }
}

enum RunQuantizer<T: Scalar> {
    None,
    Single {
        dict: Dictionary<T>,
        workspace: EncoderWorkspace<T>,
        rate: f64,
    },
    Switched {
        dicts: [Dictionary<T>; 2],
        workspaces: [EncoderWorkspace<T>; 2],
        rate: f64,
    },
}

impl<T: Scalar> PreparedSim<T> {
    pub fn config(&self) -> &SimulationConfig<T> {
        &self.config
    }

    pub fn synthesis(&self) -> &ControllerSynthesis<T> {
        &self.synthesis
    }

    pub fn aggregated(&self) -> &AggregatedModel<T> {
        &self.aggregated
    }

    fn dictionary_seed(&self, run_index: u64) -> u64 {
        let lane = match self.config.dict_seed_mode {
            DictionarySeedMode::PerRun => run_index,
            DictionarySeedMode::Shared => 0,
        };
        derive_stream(self.config.master_seed, lane, StreamKind::Dictionary)
    }

    fn build_quantizer(
        &self,
        law: &ControlLaw<T>,
        run_index: u64,
    ) -> Result<RunQuantizer<T>, SimError> {
        let horizon = self.config.weights.horizon;
        match law {
            ControlLaw::Unquantized => Ok(RunQuantizer::None),
            ControlLaw::Quantized(spec) => {
                let dict = build_dictionary(
                    spec.family,
                    horizon,
                    spec.sections,
                    spec.words_per_section,
                    &spec.shape,
                    spec.scale,
                    self.dictionary_seed(run_index),
                )?;
                let workspace =
                    EncoderWorkspace::new(&dict, &self.synthesis.hessian, &self.synthesis.cross);
                Ok(RunQuantizer::Single {
                    workspace,
                    rate: dict.achieved_rate(),
                    dict,
                })
            }
            ControlLaw::QuantizedSwitched(specs) => {
                let base = self.dictionary_seed(run_index);
                let build =
                    |spec: &QuantizerSpec<T>, lane: u64| -> Result<Dictionary<T>, SimError> {
                        Ok(build_dictionary(
                            spec.family,
                            horizon,
                            spec.sections,
                            spec.words_per_section,
                            &spec.shape,
                            spec.scale,
                            derive_child(base, lane),
                        )?)
                    };
                let dict1 = build(&specs[0], 1)?;
                let dict2 = build(&specs[1], 2)?;
                let ws1 =
                    EncoderWorkspace::new(&dict1, &self.synthesis.hessian, &self.synthesis.cross);
                let ws2 =
                    EncoderWorkspace::new(&dict2, &self.synthesis.hessian, &self.synthesis.cross);
                let rate = dict1.achieved_rate();
                Ok(RunQuantizer::Switched {
                    dicts: [dict1, dict2],
                    workspaces: [ws1, ws2],
                    rate,
                })
            }
        }
    }

    /// Simulate one run under the configured control law.
    pub fn run(&self, run_index: u64) -> Result<RunRecord<T>, SimError> {
        self.execute(run_index, &self.config.law)
    }

    /// Simulate one run with the quantizer removed, consuming the same
    /// noise and channel streams as [`PreparedSim::run`] at this index.
    pub fn run_baseline(&self, run_index: u64) -> Result<RunRecord<T>, SimError> {
        self.execute(run_index, &ControlLaw::Unquantized)
    }

    fn execute(&self, run_index: u64, law: &ControlLaw<T>) -> Result<RunRecord<T>, SimError> {
        let cfg = &self.config;
        let mut noise_rng = ChaCha20Rng::seed_from_u64(derive_stream(
            cfg.master_seed,
            run_index,
            StreamKind::Noise,
        ));
        let mut channel_rng = ChaCha20Rng::seed_from_u64(derive_stream(
            cfg.master_seed,
            run_index,
            StreamKind::Channel,
        ));
        let quantizer = self.build_quantizer(law, run_index)?;

        let horizon = cfg.weights.horizon;
        let noise_sd = cfg.plant.noise_var.sqrt();
        let mut x = cfg.x0.clone();
        let mut buffer = BufferState::empty(horizon);
        let mut state = match cfg.initial_channel_state {
            InitialChannelState::Stationary => initial_state(&cfg.channel, &mut channel_rng)?,
            InitialChannelState::Fixed(index) => ChannelState { index },
        };

        let mut cost = CompensatedSum::new();
        let mut dropout_count = 0u64;
        let mut occupancy = [0u64; 2];
        let mut stable = true;

        for step in 0..cfg.burn_in + cfg.steps {
            if x.amax() > cfg.divergence_threshold {
                stable = false;
                break;
            }
            let plan = match &quantizer {
                RunQuantizer::None => -(&self.synthesis.gain) * &x,
                RunQuantizer::Single {
                    dict, workspace, ..
                } => {
                    greedy_encode(
                        dict,
                        workspace,
                        &self.synthesis.hessian,
                        &self.synthesis.cross,
                        &x,
                    )
                    .codeword
                }
                RunQuantizer::Switched {
                    dicts, workspaces, ..
                } => {
                    let i = state.index.min(1);
                    greedy_encode(
                        &dicts[i],
                        &workspaces[i],
                        &self.synthesis.hessian,
                        &self.synthesis.cross,
                        &x,
                    )
                    .codeword
                }
            };
            occupancy[state.index.min(1)] += 1;
            let (next_state, dropped) = step_channel(&cfg.channel, state, &mut channel_rng);
            dropout_count += dropped as u64;
            buffer.update(&plan, dropped);
            let input = buffer.applied_input();

            if step >= cfg.burn_in {
                let state_cost = x.dot(&(&cfg.weights.q * &x));
                cost.add(state_cost + cfg.weights.r * input * input);
            }

            let disturbance = real::<T>(StandardNormal.sample(&mut noise_rng)) * noise_sd;
            x = plant_step(&cfg.plant, &x, input, disturbance);
            state = next_state;
        }

        let observed = occupancy[0] + occupancy[1];
        let state_occupancy = if observed == 0 {
            (0.0, 0.0)
        } else {
            (
                occupancy[0] as f64 / observed as f64,
                occupancy[1] as f64 / observed as f64,
            )
        };
        let rate = match &quantizer {
            RunQuantizer::None => None,
            RunQuantizer::Single { rate, .. } | RunQuantizer::Switched { rate, .. } => Some(*rate),
        };
        let (mse, mse_db) = if stable {
            let mean = cost.sum / real::<T>(cfg.steps as f64);
            let db = real::<T>(10.0) * mean.log10();
            (Some(mean), Some(db))
        } else {
            (None, None)
        };
        Ok(RunRecord {
            mse,
            mse_db,
            stable,
            steps: cfg.steps,
            dropout_count,
            state_occupancy,
            master_seed: cfg.master_seed,
            run_index,
            achieved_rate: rate,
        })
    }

    /// Empirical second moments of the unquantized loop: time averages of
    /// the state and planned-control outer products over one baseline run.
    pub fn empirical_moments(&self, run_index: u64) -> Result<LoopMoments<T>, SimError> {
        let cfg = &self.config;
        let mut noise_rng = ChaCha20Rng::seed_from_u64(derive_stream(
            cfg.master_seed,
            run_index,
            StreamKind::Noise,
        ));
        let mut channel_rng = ChaCha20Rng::seed_from_u64(derive_stream(
            cfg.master_seed,
            run_index,
            StreamKind::Channel,
        ));
        let p = cfg.plant.dim();
        let horizon = cfg.weights.horizon;
        let noise_sd = cfg.plant.noise_var.sqrt();
        let mut x = cfg.x0.clone();
        let mut buffer = BufferState::empty(horizon);
        let mut state = match cfg.initial_channel_state {
            InitialChannelState::Stationary => initial_state(&cfg.channel, &mut channel_rng)?,
            InitialChannelState::Fixed(index) => ChannelState { index },
        };
        let mut sum_state = DMatrix::<T>::zeros(p, p);
        let mut sum_plan = DMatrix::<T>::zeros(horizon, horizon);
        for _ in 0..cfg.steps {
            let plan = -(&self.synthesis.gain) * &x;
            sum_state += &x * x.transpose();
            sum_plan += &plan * plan.transpose();
            let (next_state, dropped) = step_channel(&cfg.channel, state, &mut channel_rng);
            buffer.update(&plan, dropped);
            let input = buffer.applied_input();
            let disturbance = real::<T>(StandardNormal.sample(&mut noise_rng)) * noise_sd;
            x = plant_step(&cfg.plant, &x, input, disturbance);
            state = next_state;
        }
        let scale = T::one() / real::<T>(cfg.steps as f64);
        Ok(LoopMoments {
            cov_state: sum_state * scale,
            cov_plan: sum_plan * scale,
            steps: cfg.steps,
        })
    }
}

/// Empirical covariances gathered from a baseline run.
#[derive(Debug, Clone)]
pub struct LoopMoments<T: Scalar> {
    pub cov_state: DMatrix<T>,
    pub cov_plan: DMatrix<T>,
    pub steps: usize,
}

/// Convenience wrapper: prepare and run a single closed-loop simulation.
pub fn run_closed_loop<T: Scalar>(
    config: SimulationConfig<T>,
    run_index: u64,
) -> Result<RunRecord<T>, SimError> {
    config.prepare()?.run(run_index)
}

/// Convenience wrapper: prepare and run the unquantized baseline.
pub fn run_unquantized<T: Scalar>(
    config: SimulationConfig<T>,
    run_index: u64,
) -> Result<RunRecord<T>, SimError> {
    config.prepare()?.run_baseline(run_index)
}

/// Aggregate of the runs of one experiment cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary<T: Scalar> {
    /// Arithmetic mean of the per-run linear MSE; `None` when the cell is
    /// unstable.
    pub mean_mse: Option<T>,
    /// Decibel conversion applied after averaging.
    pub mean_mse_db: Option<T>,
    /// A cell is unstable as soon as any of its runs is.
    pub stable: bool,
    pub runs: usize,
}

/// Average the records of a cell. Any unstable run marks the whole cell
/// unstable.
pub fn aggregate_runs<T: Scalar>(records: &[RunRecord<T>]) -> CellSummary<T> {
    assert!(!records.is_empty(), "cannot aggregate zero runs");
    let stable = records.iter().all(|r| r.stable);
    if !stable {
        return CellSummary {
            mean_mse: None,
            mean_mse_db: None,
            stable: false,
            runs: records.len(),
        };
    }
    let mut acc = CompensatedSum::new();
    for record in records {
        acc.add(record.mse.expect("stable run carries an MSE"));
    }
    let mean = acc.sum / real::<T>(records.len() as f64);
    CellSummary {
        mean_mse: Some(mean),
        mean_mse_db: Some(real::<T>(10.0) * mean.log10()),
        stable: true,
        runs: records.len(),
    }
}
