//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{ComplexField, DMatrix, DVector};

use crate::scalar::{real, Scalar};

/// Spectral radius of a square matrix (largest eigenvalue modulus).
pub fn spectral_radius<T: Scalar>(m: &DMatrix<T>) -> T {
    assert_eq!(m.nrows(), m.ncols(), "spectral radius of non-square matrix");
    m.complex_eigenvalues()
        .iter()
        .map(|ev| ev.modulus())
        .fold(T::zero(), T::max)
}

/// Frobenius norm of the difference of two matrices.
pub fn frobenius_distance<T: Scalar>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    (a - b).norm()
}

/// Force exact symmetry by averaging with the transpose.
pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * real::<T>(0.5)
}

/// Clip negative eigenvalues of a symmetric matrix to zero.
///
/// Round-off can leave tiny negative eigenvalues on computed covariances;
/// sampling requires a factorizable (positive semidefinite) matrix.
pub fn psd_clip<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let eig = symmetrize(m).symmetric_eigen();
    let clipped = eig.eigenvalues.map(|v| v.max(T::zero()));
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&clipped);
    symmetrize(&(scaled * eig.eigenvectors.transpose()))
}

/// Symmetric square root of a positive semidefinite matrix, with negative
/// eigenvalues clipped to zero. Satisfies `S * S^T = m` up to round-off.
pub fn psd_sqrt<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let eig = symmetrize(m).symmetric_eigen();
    let roots = eig.eigenvalues.map(|v| v.max(T::zero()).sqrt());
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    symmetrize(&(scaled * eig.eigenvectors.transpose()))
}

/// Column-stack a matrix into a vector.
pub fn vectorize<T: Scalar>(m: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vectorize`]: reshape a vector into an `rows x cols` matrix.
pub fn unvectorize<T: Scalar>(v: &DVector<T>, rows: usize, cols: usize) -> DMatrix<T> {
    assert_eq!(v.len(), rows * cols);
    DMatrix::from_column_slice(rows, cols, v.as_slice())
}
