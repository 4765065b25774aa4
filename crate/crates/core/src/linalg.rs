//! Small dense helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, Schur};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Largest singular value.
pub fn spectral_norm<T: Real>(m: &DMatrix<T>) -> T {
    if m.is_empty() {
        return T::zero();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(T::zero(), |acc, &s| acc.max(s))
}

pub fn vector_norm<T: Real>(v: &DVector<T>) -> T {
    v.norm()
}

/// Spectral radius of a square matrix.
///
/// Uses a real Schur decomposition; if that fails to converge the radius
/// is estimated with Gelfand's formula on repeated squares.
pub fn spectral_radius<T: Real>(m: &DMatrix<T>) -> T {
    assert!(m.is_square(), "spectral radius of a non-square matrix");
    let n = m.nrows();
    if n == 0 {
        return T::zero();
    }
    if n == 1 {
        return m[(0, 0)].abs();
    }
    match Schur::try_new(m.clone(), T::default_epsilon(), 10_000) {
        Some(schur) => schur
            .complex_eigenvalues()
            .iter()
            .map(|z| (z.re * z.re + z.im * z.im).sqrt())
            .fold(T::zero(), |acc, r| acc.max(r)),
        None => gelfand_estimate(m),
    }
}

fn gelfand_estimate<T: Real>(m: &DMatrix<T>) -> T {
    // rho = lim ||M^(2^k)||^(1/2^k), tracked in log space with renormalization
    let mut log_rho = T::zero();
    let mut power = m.clone();
    let mut weight = T::one();
    for _ in 0..60 {
        let norm = spectral_norm(&power);
        if norm == T::zero() {
            return T::zero();
        }
        log_rho += weight * norm.ln();
        power /= norm;
        power = &power * &power;
        weight /= lit(2.0);
    }
    let norm = spectral_norm(&power);
    if norm > T::zero() {
        log_rho += weight * norm.ln();
    }
    log_rho.exp()
}

/// Returns `(M + Mᵀ)/2` and the relative asymmetry `‖M − Mᵀ‖_F / ‖M‖_F`.
pub fn symmetrize<T: Real>(m: &DMatrix<T>) -> (DMatrix<T>, T) {
    let sym = (m + m.transpose()) * lit::<T>(0.5);
    let scale = m.norm();
    let asym = if scale > T::zero() {
        (m - m.transpose()).norm() / scale
    } else {
        T::zero()
    };
    (sym, asym)
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn symmetric_eigenvalues<T: Real>(m: &DMatrix<T>) -> Vec<T> {
    if m.is_empty() {
        return Vec::new();
    }
    let (sym, _) = symmetrize(m);
    let mut eig: Vec<T> = sym.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    eig
}

pub fn min_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    symmetric_eigenvalues(m).first().copied().unwrap_or(T::zero())
}

pub fn max_eigenvalue<T: Real>(m: &DMatrix<T>) -> T {
    symmetric_eigenvalues(m).last().copied().unwrap_or(T::zero())
}

pub fn inverse<T: Real>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    m.clone()
        .try_inverse()
        .filter(|inv| inv.iter().all(|x| x.is_finite()))
        .ok_or_else(|| Error::Singular(what.to_string()))
}

/// Solves `S X = rhs` for symmetric positive definite `S`.
pub fn spd_solve<T: Real>(s: &DMatrix<T>, rhs: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let (sym, _) = symmetrize(s);
    match sym.clone().cholesky() {
        Some(chol) => Ok(chol.solve(rhs)),
        None => sym
            .lu()
            .solve(rhs)
            .ok_or_else(|| Error::Singular(what.to_string())),
    }
}

/// `‖a − b‖_F / max(1, ‖a‖_F, ‖b‖_F)`.
pub fn relative_difference<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    let scale = T::one().max(a.norm()).max(b.norm());
    (a - b).norm() / scale
}

pub fn identity<T: Real>(n: usize) -> DMatrix<T> {
    DMatrix::identity(n, n)
}
