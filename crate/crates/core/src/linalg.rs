//! Small dense linear-algebra helpers shared by the graph, smoothing and
//! certificate modules. All matrices here are tiny (agents, agent dimensions,
//! or the 5×5 contraction matrix), so simple iterative methods suffice.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub const POWER_TOL: f64 = 1e-12;
pub const POWER_MAX_ITER: usize = 10_000;

/// Deterministic, irregular start vector so power iterations never begin
/// orthogonal to a structured eigenvector such as the all-ones vector.
fn start_vector(n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| 1.0 + 0.37 * (i as f64) + 0.11 * ((i * i) % 7) as f64)
}

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration with Rayleigh-quotient stopping.
pub fn psd_top_eigenvalue(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = start_vector(n);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = m * &v;
        let next = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        v = w / norm;
        if (next - lambda).abs() <= tol * next.abs().max(1.0) {
            // one more Rayleigh quotient at the converged vector
            return v.dot(&(m * &v)).max(0.0);
        }
        lambda = next;
    }
    lambda.max(0.0)
}

/// Spectral (operator 2-) norm: square root of the top eigenvalue of `MᵀM`.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    let gram = m.transpose() * m;
    psd_top_eigenvalue(&gram, POWER_TOL, POWER_MAX_ITER).sqrt()
}

/// Spectral radius of an entrywise non-negative square matrix.
///
/// Power iteration runs on `M + I` (same Perron vector, primitive whenever
/// `M` is irreducible) and stops when the Collatz–Wielandt lower and upper
/// bounds agree to `tol`.
pub fn nonnegative_spectral_radius(m: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::InvalidInput("spectral radius needs a square matrix".into()));
    }
    if m.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidInput("spectral radius by power iteration needs a finite non-negative matrix".into()));
    }
    if n == 0 {
        return Ok(0.0);
    }
    let shifted = m + DMatrix::identity(n, n);
    let mut v = DVector::from_element(n, 1.0);
    let mut hi = f64::INFINITY;
    for _ in 0..max_iter {
        let w = &shifted * &v;
        let mut lo = f64::INFINITY;
        hi = 0.0;
        for i in 0..n {
            let r = w[i] / v[i];
            lo = f64::min(lo, r);
            hi = f64::max(hi, r);
        }
        if hi - lo <= tol * hi.max(1.0) {
            return Ok(0.5 * (lo + hi) - 1.0);
        }
        let next = &w / w.max();
        // Reducible matrices: the lower bound need not close, but the
        // iterate and the upper bound still settle.
        if (&next - &v).amax() <= tol {
            return Ok(hi - 1.0);
        }
        v = next;
    }
    Ok(hi - 1.0)
}

/// Spectral radius of an arbitrary real square matrix from its complex
/// eigenvalues.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Symmetric part `(M + Mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().min()
}

/// Largest eigenvalue of a symmetric matrix.
pub fn max_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigenvalues().max()
}

/// Check a symmetric matrix is positive semidefinite (eigenvalues ≥ −tol).
pub fn check_psd(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidInput(format!("{what} must be square")));
    }
    let asym = (m - m.transpose()).abs().max();
    let scale = m.abs().max().max(1.0);
    if asym > 1e-10 * scale {
        return Err(Error::InvalidInput(format!("{what} must be symmetric")));
    }
    if m.nrows() > 0 && min_symmetric_eigenvalue(&symmetrize(m)) < -1e-12 * scale {
        return Err(Error::NotPositiveDefinite(format!("{what} has a negative eigenvalue")));
    }
    Ok(())
}

/// Lower Cholesky-like factor `L` with `L Lᵀ = M` for a PSD matrix, via the
/// symmetric eigendecomposition (works for singular covariances).
pub fn psd_sqrt_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(m).symmetric_eigen();
    let d = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&d)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}
