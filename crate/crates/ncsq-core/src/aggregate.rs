//! Aggregated plant-plus-buffer dynamics.
//!
//! Stacking the plant state with the buffered input plan gives a jump-linear
//! system whose matrix switches on the dropout indicator: one matrix for
//! successful reception (buffer overwritten with the fresh plan) and one for
//! a dropout (buffer shifted up one slot).

use nalgebra::{DMatrix, DVector};

use crate::scalar::Scalar;
use crate::synth::Plant;

/// Upper-shift matrix of size `n`: ones on the first superdiagonal.
/// Advances the buffered plan by one step; nilpotent of index `n`.
pub fn shift_matrix<T: Scalar>(n: usize) -> DMatrix<T> {
    let mut m = DMatrix::<T>::zeros(n, n);
    for i in 0..n.saturating_sub(1) {
        m[(i, i + 1)] = T::one();
    }
    m
}

/// The jump-linear aggregation of plant and buffer.
///
/// With the aggregated state `[x; b_prev]` of size `p + n`:
/// * `a_recv` is the dynamics when the packet arrives (the fresh plan
///   `-gain * x` lands in the buffer and its first entry is applied);
/// * `a_drop` is the dynamics under a dropout (the buffer shifts and its
///   first entry is applied);
/// * `noise_gain` injects the scalar disturbance into the plant states.
#[derive(Debug, Clone)]
pub struct AggregatedModel<T: Scalar> {
    pub a_recv: DMatrix<T>,
    pub a_drop: DMatrix<T>,
    pub noise_gain: DVector<T>,
    pub shift: DMatrix<T>,
    pub state_dim: usize,
    pub horizon: usize,
}

impl<T: Scalar> AggregatedModel<T> {
    /// Aggregated dimension `p + n`.
    pub fn dim(&self) -> usize {
        self.state_dim + self.horizon
    }

    /// Dynamics matrix for dropout indicator `d`.
    pub fn dynamics(&self, dropped: bool) -> &DMatrix<T> {
        if dropped {
            &self.a_drop
        } else {
            &self.a_recv
        }
    }
}

/// Build the aggregated model from the plant and the feedback gain.
pub fn build_augmented<T: Scalar>(plant: &Plant<T>, gain: &DMatrix<T>) -> AggregatedModel<T> {
    let p = plant.dim();
    let n = gain.nrows();
    assert_eq!(gain.ncols(), p, "gain must be horizon x state_dim");
    let dim = p + n;
    let shift = shift_matrix::<T>(n);

    // Reception: x' = (A - b1 e1' K) x, b' = -K x.
    let mut a_recv = DMatrix::<T>::zeros(dim, dim);
    let first_row = gain.row(0);
    let top_left = &plant.a - &plant.b1 * first_row;
    a_recv.view_mut((0, 0), (p, p)).copy_from(&top_left);
    a_recv.view_mut((p, 0), (n, p)).copy_from(&(-gain));

    // Dropout: x' = A x + b1 e1' M b, b' = M b.
    let mut a_drop = DMatrix::<T>::zeros(dim, dim);
    a_drop.view_mut((0, 0), (p, p)).copy_from(&plant.a);
    let first_shift_row = shift.row(0);
    let top_right = &plant.b1 * first_shift_row;
    a_drop.view_mut((0, p), (p, n)).copy_from(&top_right);
    a_drop.view_mut((p, p), (n, n)).copy_from(&shift);

    let mut noise_gain = DVector::<T>::zeros(dim);
    noise_gain.rows_mut(0, p).copy_from(&plant.b2);

    AggregatedModel {
        a_recv,
        a_drop,
        noise_gain,
        shift,
        state_dim: p,
        horizon: n,
    }
}

/// Buffer contents: the stored future inputs. The applied actuator input is
/// always the first entry.
#[derive(Debug, Clone)]
pub struct BufferState<T: Scalar> {
    contents: DVector<T>,
}

impl<T: Scalar> BufferState<T> {
    /// Empty buffer (all zeros) of the given horizon length.
    pub fn empty(horizon: usize) -> Self {
        Self {
            contents: DVector::zeros(horizon),
        }
    }

    pub fn contents(&self) -> &DVector<T> {
        &self.contents
    }

    /// The input applied to the actuator this step.
    pub fn applied_input(&self) -> T {
        self.contents[0]
    }

    /// Advance the buffer: take the fresh plan on reception, shift up on
    /// dropout.
    pub fn update(&mut self, fresh_plan: &DVector<T>, dropped: bool) {
        self.contents = buffer_update(&self.contents, fresh_plan, dropped);
    }
}

/// One buffer transition: returns the fresh plan when the packet arrives,
/// the shifted previous contents (zero-filled at the end) on a dropout.
pub fn buffer_update<T: Scalar>(
    previous: &DVector<T>,
    fresh_plan: &DVector<T>,
    dropped: bool,
) -> DVector<T> {
    assert_eq!(previous.len(), fresh_plan.len());
    if !dropped {
        return fresh_plan.clone();
    }
    let n = previous.len();
    let mut out = DVector::<T>::zeros(n);
    for i in 0..n.saturating_sub(1) {
        out[i] = previous[i + 1];
    }
    out
}

/// One plant step `A x + b1 u + b2 w`.
pub fn plant_step<T: Scalar>(plant: &Plant<T>, x: &DVector<T>, u: T, w: T) -> DVector<T> {
    &plant.a * x + &plant.b1 * u + &plant.b2 * w
}
