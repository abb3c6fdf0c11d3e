//! Stationary second moments of the unquantized networked loop.
//!
//! For memoryless dropouts the stationary covariance of the aggregated
//! state solves
//!
//! ```text
//! Q = M Q M' + p(1-p) D Q D' + noise_var * g g'
//! ```
//!
//! with `M` the dropout-averaged dynamics, `D` the difference between the
//! dropout and reception dynamics and `g` the noise gain. Expanding the
//! square shows this equals the exact mixture
//! `(1-p) A_recv Q A_recv' + p A_drop Q A_drop'`, so the fixed point is the
//! true second moment and contracts whenever the lifted stability operator
//! has spectral radius below one.
//!
//! For the two-state Markov channel the per-state partial covariances are
//! coupled through the transition probabilities. The recursion implemented
//! here factorizes the conditional expectation through the per-state mean
//! dynamics, which drops the per-state dropout-variance term; the gap is
//! quantified against Monte-Carlo empirics in the test suite rather than
//! silently corrected.
//!
//! These moments deliberately neglect quantization effects: they describe
//! the loop the dictionaries are shaped for.

use nalgebra::{DMatrix, DVector, Matrix2};
use thiserror::Error;

use crate::channel::{mss_spectral_radius_with_cap, stationary_distribution, ChannelError};
use crate::linalg::{psd_clip, symmetrize, unvectorize, vectorize};
use crate::scalar::{real, Scalar};

/// Relative change at which the fixed-point iterations stop.
const FIXED_POINT_TOL: f64 = 1e-10;
/// Iteration cap for the fixed-point solvers.
const FIXED_POINT_MAX_ITER: usize = 1_000_000;
/// Residual accepted on a returned covariance, relative to its norm.
const RESIDUAL_TOL: f64 = 1e-8;
/// Divergence guard: bail out once the iterate norm exceeds this multiple
/// of the forcing-term norm.
const DIVERGENCE_FACTOR: f64 = 1e15;

#[derive(Debug, Error)]
pub enum StatError {
    #[error("loop is not mean-square stable (lifted spectral radius {rho})")]
    NotMss { rho: f64 },
    #[error("fixed-point iteration did not converge within {0} iterations")]
    NonConvergent(usize),
    #[error("lifted linear system is singular (eigenvalue at one)")]
    SingularSystem,
    #[error("dynamics matrices must be square and of equal size")]
    DimensionMismatch,
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

/// Dropout-averaged dynamics `p * A_drop + (1 - p) * A_recv`.
pub fn mean_dynamics<T: Scalar>(
    a_recv: &DMatrix<T>,
    a_drop: &DMatrix<T>,
    drop_prob: T,
) -> DMatrix<T> {
    a_drop * drop_prob + a_recv * (T::one() - drop_prob)
}

/// Difference between the dropout and reception dynamics.
pub fn dynamics_gap<T: Scalar>(a_recv: &DMatrix<T>, a_drop: &DMatrix<T>) -> DMatrix<T> {
    a_drop - a_recv
}

fn check_dims<T: Scalar>(
    a_recv: &DMatrix<T>,
    a_drop: &DMatrix<T>,
    noise_gain: &DVector<T>,
) -> Result<usize, StatError> {
    let dim = a_recv.nrows();
    if a_recv.ncols() != dim
        || a_drop.nrows() != dim
        || a_drop.ncols() != dim
        || noise_gain.len() != dim
    {
        return Err(StatError::DimensionMismatch);
    }
    Ok(dim)
}

/// Stationary covariance of the aggregated state under memoryless dropouts,
/// by fixed-point iteration. Verifies mean-square stability first.
pub fn stationary_cov_single<T: Scalar>(
    a_recv: &DMatrix<T>,
    a_drop: &DMatrix<T>,
    noise_gain: &DVector<T>,
    drop_prob: T,
    noise_var: T,
) -> Result<DMatrix<T>, StatError> {
    let dim = check_dims(a_recv, a_drop, noise_gain)?;
    let rho = mss_spectral_radius_with_cap(a_recv, a_drop, drop_prob, dim)?;
    if rho >= T::one() {
        return Err(StatError::NotMss {
            rho: rho.to_f64().unwrap_or(f64::NAN),
        });
    }

    let mean = mean_dynamics(a_recv, a_drop, drop_prob);
    let gap = dynamics_gap(a_recv, a_drop);
    let variance_weight = drop_prob * (T::one() - drop_prob);
    let forcing = (noise_gain * noise_gain.transpose()) * noise_var;
    let forcing_norm = forcing.norm().max(T::one());

    let tol = real::<T>(FIXED_POINT_TOL).max(T::default_epsilon() * real::<T>(100.0));
    let guard = real::<T>(DIVERGENCE_FACTOR);
    let mut cov = forcing.clone();
    for _ in 0..FIXED_POINT_MAX_ITER {
        let next = &mean * &cov * mean.transpose()
            + (&gap * &cov * gap.transpose()) * variance_weight
            + &forcing;
        let change = (&next - &cov).norm() / next.norm().max(T::one());
        cov = next;
        if change <= tol {
            let cov = psd_clip(&cov);
            debug_assert!(
                single_state_residual(a_recv, a_drop, noise_gain, drop_prob, noise_var, &cov)
                    <= real::<T>(RESIDUAL_TOL) * cov.norm().max(T::one())
            );
            return Ok(cov);
        }
        if cov.norm() > guard * forcing_norm {
            return Err(StatError::NonConvergent(FIXED_POINT_MAX_ITER));
        }
    }
    Err(StatError::NonConvergent(FIXED_POINT_MAX_ITER))
}

/// Residual of the single-state stationary equation at `cov`.
pub fn single_state_residual<T: Scalar>(
    a_recv: &DMatrix<T>,
    a_drop: &DMatrix<T>,
    noise_gain: &DVector<T>,
    drop_prob: T,
    noise_var: T,
    cov: &DMatrix<T>,
) -> T {
    let mean = mean_dynamics(a_recv, a_drop, drop_prob);
    let gap = dynamics_gap(a_recv, a_drop);
    let variance_weight = drop_prob * (T::one() - drop_prob);
    let rhs = &mean * cov * mean.transpose()
        + (&gap * cov * gap.transpose()) * variance_weight
        + (noise_gain * noise_gain.transpose()) * noise_var;
    (rhs - cov).norm()
}

/// Closed-form single-state covariance: solves the vectorized linear system
/// `(I - M (x) M - p(1-p) D (x) D) vec(Q) = noise_var * vec(g g')`.
pub fn stationary_cov_single_closedform<T: Scalar>(
    a_recv: &DMatrix<T>,
    a_drop: &DMatrix<T>,
    noise_gain: &DVector<T>,
    drop_prob: T,
    noise_var: T,
) -> Result<DMatrix<T>, StatError> {
    let dim = check_dims(a_recv, a_drop, noise_gain)?;
    let mean = mean_dynamics(a_recv, a_drop, drop_prob);
    let gap = dynamics_gap(a_recv, a_drop);
    let variance_weight = drop_prob * (T::one() - drop_prob);

    let lifted = DMatrix::<T>::identity(dim * dim, dim * dim)
        - mean.kronecker(&mean)
        - gap.kronecker(&gap) * variance_weight;
    let forcing = (noise_gain * noise_gain.transpose()) * noise_var;
    let rhs = vectorize(&forcing);

    let lu = lifted.clone().lu();
    let solution = lu.solve(&rhs).ok_or(StatError::SingularSystem)?;
    let residual = (&lifted * &solution - &rhs).norm();
    if residual > real::<T>(1e-6) * rhs.norm().max(T::one()) {
        return Err(StatError::SingularSystem);
    }
    Ok(psd_clip(&unvectorize(&solution, dim, dim)))
}

/// Stationary covariance under the two-state Markov channel: fixed point of
/// the coupled per-state recursion, summed over states.
pub fn stationary_cov_two_state<T: Scalar>(
    a_recv: &DMatrix<T>,
    a_drop: &DMatrix<T>,
    noise_gain: &DVector<T>,
    transitions: &Matrix2<T>,
    drop_prob_state1: T,
    drop_prob_state2: T,
    noise_var: T,
) -> Result<DMatrix<T>, StatError> {
    let partial = two_state_partials(
        a_recv,
        a_drop,
        noise_gain,
        transitions,
        drop_prob_state1,
        drop_prob_state2,
        noise_var,
    )?;
    Ok(psd_clip(&(&partial[0] + &partial[1])))
}

/// Residual of the coupled two-state recursion at given per-state partials.
pub fn two_state_residual<T: Scalar>(
    a_recv: &DMatrix<T>,
    a_drop: &DMatrix<T>,
    noise_gain: &DVector<T>,
    transitions: &Matrix2<T>,
    drop_probs: [T; 2],
    noise_var: T,
    partial: &[DMatrix<T>; 2],
) -> Result<T, StatError> {
    let (pi1, pi2) = stationary_distribution(transitions)?;
    let pis = [pi1, pi2];
    let state_dyn = [
        mean_dynamics(a_recv, a_drop, drop_probs[0]),
        mean_dynamics(a_recv, a_drop, drop_probs[1]),
    ];
    let forcing_base = noise_gain * noise_gain.transpose() * noise_var;
    let mut residual = T::zero();
    for target in 0..2 {
        let mut rhs = &forcing_base * pis[target];
        for source in 0..2 {
            rhs += (&state_dyn[target] * &partial[source] * state_dyn[target].transpose())
                * transitions[(source, target)];
        }
        residual += (rhs - &partial[target]).norm();
    }
    Ok(residual)
}

/// Per-state partial covariances of the two-state fixed point (their sum is
/// the stationary covariance).
pub fn two_state_partials<T: Scalar>(
    a_recv: &DMatrix<T>,
    a_drop: &DMatrix<T>,
    noise_gain: &DVector<T>,
    transitions: &Matrix2<T>,
    drop_prob_state1: T,
    drop_prob_state2: T,
    noise_var: T,
) -> Result<[DMatrix<T>; 2], StatError> {
    check_dims(a_recv, a_drop, noise_gain)?;
    let (pi1, pi2) = stationary_distribution(transitions)?;
    let state_dyn = [
        mean_dynamics(a_recv, a_drop, drop_prob_state1),
        mean_dynamics(a_recv, a_drop, drop_prob_state2),
    ];
    let forcing_base = noise_gain * noise_gain.transpose() * noise_var;
    let forcing = [&forcing_base * pi1, &forcing_base * pi2];
    let forcing_norm = forcing_base.norm().max(T::one());
    let tol = real::<T>(FIXED_POINT_TOL).max(T::default_epsilon() * real::<T>(100.0));
    let guard = real::<T>(DIVERGENCE_FACTOR);
    let mut partial = [forcing[0].clone(), forcing[1].clone()];
    for _ in 0..FIXED_POINT_MAX_ITER {
        let mut next = [forcing[0].clone(), forcing[1].clone()];
        for (target, item) in next.iter_mut().enumerate() {
            for source in 0..2 {
                let weight = transitions[(source, target)];
                *item += (&state_dyn[target] * &partial[source] * state_dyn[target].transpose())
                    * weight;
            }
        }
        let change = ((&next[0] - &partial[0]).norm() + (&next[1] - &partial[1]).norm())
            / (next[0].norm() + next[1].norm()).max(T::one());
        partial = next;
        if change <= tol {
            return Ok([symmetrize(&partial[0]), symmetrize(&partial[1])]);
        }
        if partial[0].norm() + partial[1].norm() > guard * forcing_norm {
            return Err(StatError::NonConvergent(FIXED_POINT_MAX_ITER));
        }
    }
    Err(StatError::NonConvergent(FIXED_POINT_MAX_ITER))
}

/// Covariance of the planned control vector `-gain * x`: propagates the
/// leading plant-state block of the aggregated covariance through the gain.
pub fn control_covariance<T: Scalar>(
    cov_aggregated: &DMatrix<T>,
    gain: &DMatrix<T>,
    state_dim: usize,
) -> DMatrix<T> {
    assert!(cov_aggregated.nrows() >= state_dim && cov_aggregated.ncols() >= state_dim);
    assert_eq!(gain.ncols(), state_dim);
    let cov_state = cov_aggregated.view((0, 0), (state_dim, state_dim));
    symmetrize(&(gain * cov_state * gain.transpose()))
}

/// Bundle of stationary statistics used to shape dictionaries.
#[derive(Debug, Clone)]
pub struct StationaryStats<T: Scalar> {
    /// Stationary covariance of the aggregated state.
    pub cov_aggregated: DMatrix<T>,
    /// Covariance of the planned control vector.
    pub cov_control: DMatrix<T>,
    /// Mean dynamics per network state (one entry for memoryless channels).
    pub mean_dyn: Vec<DMatrix<T>>,
    /// Difference between dropout and reception dynamics.
    pub dyn_gap: DMatrix<T>,
}

impl<T: Scalar> StationaryStats<T> {
    /// Statistics for memoryless dropouts.
    pub fn single_state(
        a_recv: &DMatrix<T>,
        a_drop: &DMatrix<T>,
        noise_gain: &DVector<T>,
        gain: &DMatrix<T>,
        state_dim: usize,
        drop_prob: T,
        noise_var: T,
    ) -> Result<Self, StatError> {
        let cov = stationary_cov_single(a_recv, a_drop, noise_gain, drop_prob, noise_var)?;
        let cov_control = control_covariance(&cov, gain, state_dim);
        Ok(Self {
            cov_aggregated: cov,
            cov_control,
            mean_dyn: vec![mean_dynamics(a_recv, a_drop, drop_prob)],
            dyn_gap: dynamics_gap(a_recv, a_drop),
        })
    }

    /// Statistics for the two-state Markov channel.
    #[allow(clippy::too_many_arguments)]
    pub fn two_state(
        a_recv: &DMatrix<T>,
        a_drop: &DMatrix<T>,
        noise_gain: &DVector<T>,
        gain: &DMatrix<T>,
        state_dim: usize,
        transitions: &Matrix2<T>,
        drop_prob_state1: T,
        drop_prob_state2: T,
        noise_var: T,
    ) -> Result<Self, StatError> {
        let cov = stationary_cov_two_state(
            a_recv,
            a_drop,
            noise_gain,
            transitions,
            drop_prob_state1,
            drop_prob_state2,
            noise_var,
        )?;
        let cov_control = control_covariance(&cov, gain, state_dim);
        Ok(Self {
            cov_aggregated: cov,
            cov_control,
            mean_dyn: vec![
                mean_dynamics(a_recv, a_drop, drop_prob_state1),
                mean_dynamics(a_recv, a_drop, drop_prob_state2),
            ],
            dyn_gap: dynamics_gap(a_recv, a_drop),
        })
    }
}
