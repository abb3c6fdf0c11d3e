//! Packet-dropout channel models and the mean-square stability test.
//!
//! Two models are provided: memoryless Bernoulli dropouts and a two-state
//! Markov channel in the Gilbert-Elliott style, where a "good" state sees
//! few dropouts and a "bad" state models disturbed periods with frequent
//! losses. The dropout indicator is drawn conditionally on the current
//! network state, then the state transitions.

use nalgebra::{DMatrix, Matrix2};
use rand::Rng;
use thiserror::Error;

use crate::linalg::spectral_radius;
use crate::scalar::{real, Scalar};

/// Default cap on the aggregated dimension for the lifted stability test
/// (the lifted operator is dense of size `dim^2 x dim^2`).
pub const DEFAULT_MSS_DIM_CAP: usize = 40;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("transition matrix rows must sum to 1 (row {row} sums to {sum})")]
    NotRowStochastic { row: usize, sum: f64 },
    #[error("chain is reducible (both off-diagonal transition probabilities must be positive)")]
    Reducible,
    #[error("aggregated dimension {dim} exceeds the stability-test cap {cap}")]
    DimensionTooLarge { dim: usize, cap: usize },
    #[error("dynamics matrices must be square and of equal size")]
    DimensionMismatch,
}

/// Dropout channel: memoryless or two-state Markov.
#[derive(Debug, Clone)]
pub enum DropoutModel<T: Scalar> {
    /// Independent dropouts with a fixed probability.
    Iid { drop_prob: T },
    /// Two network states with per-state dropout probabilities and a
    /// row-stochastic transition matrix.
    TwoState {
        transitions: Matrix2<T>,
        drop_probs: [T; 2],
    },
}

impl<T: Scalar> DropoutModel<T> {
    pub fn iid(drop_prob: T) -> Result<Self, ChannelError> {
        check_probability(drop_prob)?;
        Ok(Self::Iid { drop_prob })
    }

    /// Two-state model. Rows of `transitions` must sum to one; a reducible
    /// chain is accepted here (stepping is well defined) but stationary
    /// quantities will report [`ChannelError::Reducible`].
    pub fn two_state(
        transitions: Matrix2<T>,
        drop_prob_state1: T,
        drop_prob_state2: T,
    ) -> Result<Self, ChannelError> {
        check_probability(drop_prob_state1)?;
        check_probability(drop_prob_state2)?;
        for row in 0..2 {
            for col in 0..2 {
                check_probability(transitions[(row, col)])?;
            }
            let sum = transitions[(row, 0)] + transitions[(row, 1)];
            if (sum - T::one()).abs() > real::<T>(1e-12) {
                return Err(ChannelError::NotRowStochastic {
                    row: row + 1,
                    sum: sum.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(Self::TwoState {
            transitions,
            drop_probs: [drop_prob_state1, drop_prob_state2],
        })
    }

    /// Number of network states (1 or 2).
    pub fn state_count(&self) -> usize {
        match self {
            Self::Iid { .. } => 1,
            Self::TwoState { .. } => 2,
        }
    }

    /// Long-run dropout frequency: the drop probability for the memoryless
    /// model, the stationary mixture for the two-state model.
    pub fn mean_drop_prob(&self) -> Result<T, ChannelError> {
        match self {
            Self::Iid { drop_prob } => Ok(*drop_prob),
            Self::TwoState {
                transitions,
                drop_probs,
            } => {
                let (pi1, pi2) = stationary_distribution(transitions)?;
                Ok(pi1 * drop_probs[0] + pi2 * drop_probs[1])
            }
        }
    }
}

fn check_probability<T: Scalar>(p: T) -> Result<(), ChannelError> {
    if p < T::zero() || p > T::one() {
        return Err(ChannelError::InvalidProbability(
            p.to_f64().unwrap_or(f64::NAN),
        ));
    }
    Ok(())
}

/// Current network state. Zero-based index: `0` is the first state (the
/// only one for memoryless channels), `1` the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelState {
    pub index: usize,
}

impl ChannelState {
    pub fn first() -> Self {
        Self { index: 0 }
    }

    pub fn second() -> Self {
        Self { index: 1 }
    }
}

/// Draw the dropout indicator for this step, then advance the network
/// state. Consumes one uniform draw for the dropout and, for the two-state
/// model, one more for the transition.
pub fn step_channel<T: Scalar, R: Rng + ?Sized>(
    model: &DropoutModel<T>,
    state: ChannelState,
    rng: &mut R,
) -> (ChannelState, bool) {
    match model {
        DropoutModel::Iid { drop_prob } => {
            let dropped = rng.random::<f64>() < drop_prob.to_f64().unwrap();
            (state, dropped)
        }
        DropoutModel::TwoState {
            transitions,
            drop_probs,
        } => {
            debug_assert!(state.index < 2);
            let dropped = rng.random::<f64>() < drop_probs[state.index].to_f64().unwrap();
            let stay_first = transitions[(state.index, 0)].to_f64().unwrap();
            let next = if rng.random::<f64>() < stay_first {
                ChannelState::first()
            } else {
                ChannelState::second()
            };
            (next, dropped)
        }
    }
}

/// Initial network state: the first state for memoryless channels, a
/// stationary sample for the two-state model (consumes one uniform draw).
pub fn initial_state<T: Scalar, R: Rng + ?Sized>(
    model: &DropoutModel<T>,
    rng: &mut R,
) -> Result<ChannelState, ChannelError> {
    match model {
        DropoutModel::Iid { .. } => Ok(ChannelState::first()),
        DropoutModel::TwoState { transitions, .. } => {
            let (pi1, _) = stationary_distribution(transitions)?;
            if rng.random::<f64>() < pi1.to_f64().unwrap() {
                Ok(ChannelState::first())
            } else {
                Ok(ChannelState::second())
            }
        }
    }
}

/// Stationary distribution of an irreducible two-state chain, in closed
/// form: `pi1 = p21 / (p12 + p21)`.
pub fn stationary_distribution<T: Scalar>(
    transitions: &Matrix2<T>,
) -> Result<(T, T), ChannelError> {
    let p12 = transitions[(0, 1)];
    let p21 = transitions[(1, 0)];
    if p12 <= T::zero() || p21 <= T::zero() {
        return Err(ChannelError::Reducible);
    }
    let total = p12 + p21;
    Ok((p21 / total, p12 / total))
}

/// Spectral radius of the lifted second-moment operator
/// `(1 - p) A_recv (x) A_recv + p A_drop (x) A_drop` for memoryless
/// dropouts with probability `p`. The loop is mean-square stable iff the
/// returned value is below one.
pub fn mss_spectral_radius<T: Scalar>(
    a_recv: &DMatrix<T>,
    a_drop: &DMatrix<T>,
    drop_prob: T,
) -> Result<T, ChannelError> {
    mss_spectral_radius_with_cap(a_recv, a_drop, drop_prob, DEFAULT_MSS_DIM_CAP)
}

/// As [`mss_spectral_radius`], with an explicit cap on the aggregated
/// dimension.
pub fn mss_spectral_radius_with_cap<T: Scalar>(
    a_recv: &DMatrix<T>,
    a_drop: &DMatrix<T>,
    drop_prob: T,
    dim_cap: usize,
) -> Result<T, ChannelError> {
    let dim = a_recv.nrows();
    if a_recv.ncols() != dim || a_drop.nrows() != dim || a_drop.ncols() != dim {
        return Err(ChannelError::DimensionMismatch);
    }
    if dim > dim_cap {
        return Err(ChannelError::DimensionTooLarge { dim, cap: dim_cap });
    }
    check_probability(drop_prob)?;
    let lifted =
        a_recv.kronecker(a_recv) * (T::one() - drop_prob) + a_drop.kronecker(a_drop) * drop_prob;
    Ok(spectral_radius(&lifted))
}
