//! LQ controller synthesis for the packetized predictive loop.
//!
//! Solves the discrete algebraic Riccati equation, builds the horizon
//! prediction matrices and the condensed cost, and extracts the
//! stabilizing feedback gain applied by the unquantized controller.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::{spectral_radius, symmetrize};
use crate::scalar::{real, Scalar};

/// Riccati fixed-point iteration: tolerance on the step change.
const DARE_TOL: f64 = 1e-10;
/// Riccati fixed-point iteration: iteration cap.
const DARE_MAX_ITER: usize = 100_000;
/// Residual accepted on the returned Riccati solution and gain.
const RESIDUAL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("plant dimensions are inconsistent: {0}")]
    Dimension(String),
    #[error("the pair (A, B1) is not controllable (controllability matrix rank {rank} < {dim})")]
    NotControllable { rank: usize, dim: usize },
    #[error("state weight Q must be symmetric positive semidefinite")]
    InvalidStateWeight,
    #[error("input weight R must be positive")]
    InvalidInputWeight,
    #[error("horizon must be at least 1")]
    InvalidHorizon,
    #[error("noise variance must be nonnegative")]
    InvalidNoiseVariance,
    #[error("Riccati iteration did not converge within {0} iterations")]
    NonConvergent(usize),
    #[error("condensed cost Hessian is numerically singular")]
    SingularW,
    #[error("Riccati residual {residual} exceeds tolerance {tol}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("closed loop is unstable: spectral radius {0}")]
    UnstableClosedLoop(f64),
}

/// Discrete-time LTI plant with scalar input and scalar disturbance:
/// `x(k+1) = A x(k) + b1 u(k) + b2 w(k)`, `w(k) ~ N(0, noise_var)`.
#[derive(Debug, Clone)]
pub struct Plant<T: Scalar> {
    pub a: DMatrix<T>,
    pub b1: DVector<T>,
    pub b2: DVector<T>,
    pub noise_var: T,
}

impl<T: Scalar> Plant<T> {
    /// Validates dimensions and requires `(A, b1)` to be controllable.
    pub fn new(
        a: DMatrix<T>,
        b1: DVector<T>,
        b2: DVector<T>,
        noise_var: T,
    ) -> Result<Self, SynthError> {
        let p = a.nrows();
        if a.ncols() != p {
            return Err(SynthError::Dimension(format!(
                "A is {}x{}, expected square",
                a.nrows(),
                a.ncols()
            )));
        }
        if b1.len() != p || b2.len() != p {
            return Err(SynthError::Dimension(format!(
                "b1 has length {}, b2 has length {}, expected {}",
                b1.len(),
                b2.len(),
                p
            )));
        }
        if noise_var < T::zero() {
            return Err(SynthError::InvalidNoiseVariance);
        }
        let rank = controllability_rank(&a, &b1);
        if rank < p {
            return Err(SynthError::NotControllable { rank, dim: p });
        }
        Ok(Self {
            a,
            b1,
            b2,
            noise_var,
        })
    }

    /// State dimension.
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Numerical rank of `[b1, A b1, ..., A^(p-1) b1]` from singular values,
/// threshold `p * eps * sigma_max`.
fn controllability_rank<T: Scalar>(a: &DMatrix<T>, b1: &DVector<T>) -> usize {
    let p = a.nrows();
    let mut ctrb = DMatrix::<T>::zeros(p, p);
    let mut col = b1.clone();
    for j in 0..p {
        ctrb.set_column(j, &col);
        col = a * &col;
    }
    let sv = ctrb.svd(false, false).singular_values;
    let sigma_max = sv.iter().fold(T::zero(), |acc, &s| acc.max(s));
    if sigma_max == T::zero() {
        return 0;
    }
    let threshold = real::<T>(p as f64) * T::default_epsilon() * sigma_max;
    sv.iter().filter(|&&s| s > threshold).count()
}

/// LQ cost weights: per-step state weight `q`, input weight `r`, and the
/// prediction horizon (which equals the buffer length).
#[derive(Debug, Clone)]
pub struct CostWeights<T: Scalar> {
    pub q: DMatrix<T>,
    pub r: T,
    pub horizon: usize,
}

impl<T: Scalar> CostWeights<T> {
    pub fn new(q: DMatrix<T>, r: T, horizon: usize) -> Result<Self, SynthError> {
        if horizon == 0 {
            return Err(SynthError::InvalidHorizon);
        }
        if r <= T::zero() {
            return Err(SynthError::InvalidInputWeight);
        }
        if q.nrows() != q.ncols() {
            return Err(SynthError::InvalidStateWeight);
        }
        let sym_err = (&q - q.transpose()).norm();
        if sym_err > real::<T>(1e-12) * (T::one() + q.norm()) {
            return Err(SynthError::InvalidStateWeight);
        }
        let min_eig = symmetrize(&q)
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(T::zero(), |acc, &v| acc.min(v));
        if min_eig < -real::<T>(1e-10) * (T::one() + q.norm()) {
            return Err(SynthError::InvalidStateWeight);
        }
        Ok(Self { q, r, horizon })
    }
}

/// Everything the predictive controller precomputes.
#[derive(Debug, Clone)]
pub struct ControllerSynthesis<T: Scalar> {
    /// Riccati solution terminating the horizon cost.
    pub riccati: DMatrix<T>,
    /// Forced-response prediction matrix (stacked `A^(i-j) b1` blocks), `Np x N`.
    pub input_pred: DMatrix<T>,
    /// Free-response prediction matrix (stacked `A^i`), `Np x p`.
    pub free_pred: DMatrix<T>,
    /// Quadratic term of the condensed cost, `N x N`, symmetric positive definite.
    pub hessian: DMatrix<T>,
    /// State-input cross term of the condensed cost, `p x N`.
    pub cross: DMatrix<T>,
    /// Feedback gain: the unquantized plan is `u(k) = -gain * x(k)`, `N x p`.
    pub gain: DMatrix<T>,
    /// Block-diagonal stacked state weight (horizon copies of `q`, then the
    /// Riccati solution), `Np x Np`.
    pub stacked_state_weight: DMatrix<T>,
    /// Diagonal stacked input weight `r * I`, `N x N`.
    pub stacked_input_weight: DMatrix<T>,
}

/// Solve `X = A'XA + Q - A'X b1 (R + b1'X b1)^-1 b1'X A` by fixed-point
/// iteration from `X = Q`.
pub fn solve_dare<T: Scalar>(
    a: &DMatrix<T>,
    b1: &DVector<T>,
    q: &DMatrix<T>,
    r: T,
) -> Result<DMatrix<T>, SynthError> {
    // floor the tolerance at what the scalar type can resolve
    let tol = real::<T>(DARE_TOL).max(T::default_epsilon() * real::<T>(100.0));
    let mut x = q.clone();
    for _ in 0..DARE_MAX_ITER {
        // Symmetrize each iterate: the exact recursion preserves symmetry,
        // and asymmetric round-off is re-amplified through unstable
        // open-loop dynamics instead of contracting.
        let next = symmetrize(&riccati_step(a, b1, q, r, &x));
        let change = (&next - &x).norm();
        x = next;
        if change <= tol {
            return Ok(x);
        }
    }
    Err(SynthError::NonConvergent(DARE_MAX_ITER))
}

fn riccati_step<T: Scalar>(
    a: &DMatrix<T>,
    b1: &DVector<T>,
    q: &DMatrix<T>,
    r: T,
    x: &DMatrix<T>,
) -> DMatrix<T> {
    let xa = x * a;
    let xb = x * b1;
    let denom = r + b1.dot(&xb);
    let atxb = a.transpose() * &xb;
    a.transpose() * &xa + q - (&atxb * atxb.transpose()) / denom
}

/// Frobenius norm of the Riccati equation residual at `x`.
pub fn dare_residual<T: Scalar>(
    a: &DMatrix<T>,
    b1: &DVector<T>,
    q: &DMatrix<T>,
    r: T,
    x: &DMatrix<T>,
) -> T {
    (riccati_step(a, b1, q, r, x) - x).norm()
}

/// Horizon prediction matrices: the stacked predicted states are
/// `free_pred * x + input_pred * u'` for a planned input sequence `u'`.
pub fn prediction_matrices<T: Scalar>(
    a: &DMatrix<T>,
    b1: &DVector<T>,
    horizon: usize,
) -> (DMatrix<T>, DMatrix<T>) {
    assert!(horizon >= 1);
    let p = a.nrows();
    let mut input_pred = DMatrix::<T>::zeros(horizon * p, horizon);
    let mut free_pred = DMatrix::<T>::zeros(horizon * p, p);

    // powers[i] = A^i b1
    let mut impulse = Vec::with_capacity(horizon);
    impulse.push(b1.clone());
    for i in 1..horizon {
        let next = a * &impulse[i - 1];
        impulse.push(next);
    }
    for i in 0..horizon {
        for j in 0..=i {
            input_pred
                .view_mut((i * p, j), (p, 1))
                .copy_from(&impulse[i - j]);
        }
    }

    let mut power = a.clone();
    for i in 0..horizon {
        free_pred.view_mut((i * p, 0), (p, p)).copy_from(&power);
        power = a * &power;
    }
    (input_pred, free_pred)
}

/// Condensed cost matrices `(hessian, cross)` from the prediction matrices,
/// per-step weight `q`, Riccati terminal weight and input weight `r`.
pub fn cost_matrices<T: Scalar>(
    input_pred: &DMatrix<T>,
    free_pred: &DMatrix<T>,
    q: &DMatrix<T>,
    riccati: &DMatrix<T>,
    r: T,
) -> (DMatrix<T>, DMatrix<T>) {
    let horizon = input_pred.ncols();
    let stacked = stacked_state_weight(q, riccati, horizon);
    let qphi = &stacked * input_pred;
    let mut hessian = input_pred.transpose() * &qphi;
    for i in 0..horizon {
        hessian[(i, i)] += r;
    }
    let cross = free_pred.transpose() * &qphi;
    (symmetrize(&hessian), cross)
}

/// Block diagonal of `horizon - 1` copies of `q` followed by the terminal
/// weight.
pub fn stacked_state_weight<T: Scalar>(
    q: &DMatrix<T>,
    terminal: &DMatrix<T>,
    horizon: usize,
) -> DMatrix<T> {
    let p = q.nrows();
    let mut out = DMatrix::<T>::zeros(horizon * p, horizon * p);
    for i in 0..horizon {
        let block = if i + 1 == horizon { terminal } else { q };
        out.view_mut((i * p, i * p), (p, p)).copy_from(block);
    }
    out
}

/// Feedback gain solving `hessian * gain = cross^T` via Cholesky
/// factorization (the Hessian is positive definite; no explicit inverse).
pub fn feedback_gain<T: Scalar>(
    hessian: &DMatrix<T>,
    cross: &DMatrix<T>,
) -> Result<DMatrix<T>, SynthError> {
    let chol = hessian.clone().cholesky().ok_or(SynthError::SingularW)?;
    Ok(chol.solve(&cross.transpose()))
}

impl<T: Scalar> ControllerSynthesis<T> {
    /// Full synthesis pipeline with invariant checks: Riccati residual,
    /// gain residual and closed-loop stability.
    pub fn synthesize(plant: &Plant<T>, weights: &CostWeights<T>) -> Result<Self, SynthError> {
        if weights.q.nrows() != plant.dim() {
            return Err(SynthError::Dimension(format!(
                "Q is {}x{}, plant dimension is {}",
                weights.q.nrows(),
                weights.q.ncols(),
                plant.dim()
            )));
        }
        let riccati = solve_dare(&plant.a, &plant.b1, &weights.q, weights.r)?;
        let residual = dare_residual(&plant.a, &plant.b1, &weights.q, weights.r, &riccati)
            .to_f64()
            .unwrap_or(f64::INFINITY);
        if residual > RESIDUAL_TOL {
            return Err(SynthError::ResidualTooLarge {
                residual,
                tol: RESIDUAL_TOL,
            });
        }
        let (input_pred, free_pred) = prediction_matrices(&plant.a, &plant.b1, weights.horizon);
        let (hessian, cross) =
            cost_matrices(&input_pred, &free_pred, &weights.q, &riccati, weights.r);
        let gain = feedback_gain(&hessian, &cross)?;

        let gain_residual = (&hessian * &gain - cross.transpose()).norm();
        if gain_residual > real::<T>(RESIDUAL_TOL) {
            return Err(SynthError::SingularW);
        }

        // The closed loop under ideal reception applies the first planned
        // input, so its nonzero spectrum is that of A - b1 * gain[0, :].
        let rho = closed_loop_radius(plant, &gain)
            .to_f64()
            .unwrap_or(f64::INFINITY);
        if rho >= 1.0 {
            return Err(SynthError::UnstableClosedLoop(rho));
        }

        let stacked_state_weight = stacked_state_weight(&weights.q, &riccati, weights.horizon);
        let mut stacked_input_weight = DMatrix::<T>::zeros(weights.horizon, weights.horizon);
        for i in 0..weights.horizon {
            stacked_input_weight[(i, i)] = weights.r;
        }

        Ok(Self {
            riccati,
            input_pred,
            free_pred,
            hessian,
            cross,
            gain,
            stacked_state_weight,
            stacked_input_weight,
        })
    }

    /// Horizon length.
    pub fn horizon(&self) -> usize {
        self.hessian.nrows()
    }
}

/// Spectral radius of `A - b1 * gain[0, :]`, the plant dynamics under
/// ideal reception of the first planned input.
pub fn closed_loop_radius<T: Scalar>(plant: &Plant<T>, gain: &DMatrix<T>) -> T {
    let first_row = gain.row(0);
    let closed = &plant.a - &plant.b1 * first_row;
    spectral_radius(&closed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn dare_with_zero_a_returns_q() {
        let a = DMatrix::<f64>::zeros(3, 3);
        let b1 = DVector::from_vec(vec![1.0, 0.5, -0.25]);
        let q = DMatrix::<f64>::identity(3, 3);
        let x = solve_dare(&a, &b1, &q, 1.0).unwrap();
        assert!((x - q).norm() < 1e-12);
    }

    #[test]
    fn scalar_dare_matches_quadratic_root() {
        // x = a^2 x + q - a^2 x^2 b^2 / (r + b^2 x) reduces to
        // x^2 - 0.25 x - 1 = 0 for a = 0.5, b = q = r = 1.
        let a = DMatrix::from_element(1, 1, 0.5);
        let b1 = DVector::from_element(1, 1.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        let x = solve_dare(&a, &b1, &q, 1.0).unwrap()[(0, 0)];
        let root = (0.25 + (0.0625f64 + 4.0).sqrt()) / 2.0;
        assert!((x - root).abs() < 1e-9, "x = {x}, root = {root}");
        assert!((x - 1.13278).abs() < 1e-5);
    }

    #[test]
    fn prediction_matrices_single_step() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -0.5, 0.25]);
        let b1 = DVector::from_vec(vec![1.0, 2.0]);
        let (input_pred, free_pred) = prediction_matrices(&a, &b1, 1);
        assert_eq!(input_pred, DMatrix::from_column_slice(2, 1, &[1.0, 2.0]));
        assert_eq!(free_pred, a);
    }

    #[test]
    fn prediction_matrices_identity_plant() {
        let a = DMatrix::<f64>::identity(2, 2);
        let b1 = DVector::from_vec(vec![1.0, 0.0]);
        let (input_pred, free_pred) = prediction_matrices(&a, &b1, 2);
        let expected_input =
            DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let expected_free =
            DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(input_pred, expected_input);
        assert_eq!(free_pred, expected_free);
    }

    #[test]
    fn cost_matrices_zero_prediction() {
        let horizon = 3;
        let p = 2;
        let input_pred = DMatrix::<f64>::zeros(horizon * p, horizon);
        let free_pred = DMatrix::<f64>::zeros(horizon * p, p);
        let q = DMatrix::identity(p, p);
        let x = DMatrix::identity(p, p);
        let r = 2.5;
        let (hessian, cross) = cost_matrices(&input_pred, &free_pred, &q, &x, r);
        assert!((hessian - DMatrix::from_diagonal_element(horizon, horizon, r)).norm() < 1e-14);
        assert!(cross.norm() == 0.0);
    }

    #[test]
    fn cost_matrices_single_block() {
        let a = DMatrix::from_row_slice(2, 2, &[0.2, 0.1, 0.0, 0.3]);
        let b1 = DVector::from_vec(vec![1.0, -1.0]);
        let q = DMatrix::<f64>::identity(2, 2);
        let r = 0.7;
        let x = solve_dare(&a, &b1, &q, r).unwrap();
        let (input_pred, free_pred) = prediction_matrices(&a, &b1, 1);
        let (hessian, cross) = cost_matrices(&input_pred, &free_pred, &q, &x, r);
        let expected_w = r + (b1.transpose() * &x * &b1)[(0, 0)];
        let expected_f = a.transpose() * &x * &b1;
        assert!((hessian[(0, 0)] - expected_w).abs() < 1e-12);
        assert!((cross - expected_f).norm() < 1e-12);
    }

    #[test]
    fn feedback_gain_trivial_cases() {
        let w = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.5]);
        let f_zero = DMatrix::<f64>::zeros(3, 2);
        assert_eq!(feedback_gain(&w, &f_zero).unwrap(), DMatrix::zeros(2, 3));

        let identity = DMatrix::<f64>::identity(2, 2);
        let f = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let k = feedback_gain(&identity, &f).unwrap();
        assert!((k - f.transpose()).norm() < 1e-14);
    }

    #[test]
    fn rejects_uncontrollable_pair() {
        // b1 in the kernel direction: second state unreachable.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]);
        let b1 = DVector::from_vec(vec![1.0, 0.0]);
        let b2 = b1.clone();
        match Plant::new(a, b1, b2, 1.0) {
            Err(SynthError::NotControllable { rank: 1, dim: 2 }) => {}
            other => panic!("expected NotControllable, got {other:?}"),
        }
    }

    #[test]
    fn unconstrained_minimizer_is_feedback_plan() {
        let a = DMatrix::from_row_slice(2, 2, &[1.1, 0.3, -0.2, 0.8]);
        let b1 = DVector::from_vec(vec![1.0, 0.4]);
        let plant = Plant::new(a, b1, DVector::from_vec(vec![0.0, 1.0]), 1.0).unwrap();
        let weights = CostWeights::new(DMatrix::identity(2, 2), 1.0, 4).unwrap();
        let synth = ControllerSynthesis::synthesize(&plant, &weights).unwrap();

        let cost = |u: &DVector<f64>, x: &DVector<f64>| -> f64 {
            (u.transpose() * &synth.hessian * u)[(0, 0)]
                + 2.0 * (x.transpose() * &synth.cross * u)[(0, 0)]
        };
        let mut lcg = 123456789u64;
        let mut next = || {
            lcg = lcg
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((lcg >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..50 {
            let x = DVector::from_fn(2, |_, _| next());
            let u_star = -(&synth.gain) * &x;
            let base = cost(&u_star, &x);
            for _ in 0..10 {
                let delta = DVector::from_fn(4, |_, _| next() * 0.1);
                assert!(cost(&(&u_star + &delta), &x) >= base - 1e-9);
            }
        }
    }
}
