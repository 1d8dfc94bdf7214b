//! Small complex linear-algebra helpers shared by the fiber calculus.

use nalgebra::{Complex, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

pub const I: C64 = Complex { re: 0.0, im: 1.0 };

pub fn to_complex(m: &DMatrix<f64>) -> CMatrix {
    m.map(c)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .fold(0.0_f64, |acc, &s| acc.max(s))
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖m − m^†‖_F`, zero for Hermitian matrices.
pub fn hermitian_defect(m: &CMatrix) -> f64 {
    frobenius(&(m - m.adjoint()))
}

/// Eigen-decomposition of a Hermitian matrix (the input is symmetrized first).
pub fn hermitian_eigen(m: &CMatrix) -> SymmetricEigen<C64, Dyn> {
    let sym = (m + m.adjoint()) * c(0.5);
    SymmetricEigen::new(sym)
}

/// Sorted real eigenvalues of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let mut ev: Vec<f64> = hermitian_eigen(m).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Eigenvalues of a general complex square matrix. Rows or columns that are
/// zero off the diagonal are split off first (the permutation step of
/// balancing); the rest goes through the Schur form, real Schur for real input.
pub fn eigenvalues(m: &CMatrix) -> Result<Vec<C64>> {
    let n = m.nrows();
    let mut active: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    loop {
        let isolated = active.iter().position(|&i| {
            let row = active.iter().all(|&j| j == i || m[(i, j)] == c(0.0));
            let col = active.iter().all(|&j| j == i || m[(j, i)] == c(0.0));
            row || col
        });
        match isolated {
            Some(k) => {
                let i = active.remove(k);
                out.push(m[(i, i)]);
            }
            None => break,
        }
    }
    if active.is_empty() {
        return Ok(out);
    }
    let sub = m.select_rows(&active).select_columns(&active);
    if sub.iter().all(|z| z.im == 0.0) {
        let real = sub.map(|z| z.re);
        let schur = nalgebra::linalg::Schur::try_new(real, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Internal("real Schur iteration did not converge".into()))?;
        out.extend(schur.complex_eigenvalues().iter().copied());
    } else {
        let schur = nalgebra::linalg::Schur::try_new(sub, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Internal("Schur iteration did not converge".into()))?;
        let (_, t) = schur.unpack();
        out.extend((0..t.nrows()).map(|i| t[(i, i)]));
    }
    Ok(out)
}

pub fn inverse(m: &CMatrix) -> Result<CMatrix> {
    m.clone().try_inverse().ok_or(Error::SingularForm)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Positive square root and its inverse of a positive definite Hermitian matrix.
pub fn sqrt_positive(m: &CMatrix) -> Result<(CMatrix, CMatrix)> {
    let eig = hermitian_eigen(m);
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Input("matrix is not positive definite".into()));
    }
    let u = &eig.eigenvectors;
    let sqrt_d = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| c(l.sqrt())));
    let inv_sqrt_d = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| c(1.0 / l.sqrt())));
    Ok((u * sqrt_d * u.adjoint(), u * inv_sqrt_d * u.adjoint()))
}

/// One classical fourth-order step for a matrix-valued ODE `dy/dt = f(t, y)`.
pub fn rk4_step<F>(t: f64, y: &CMatrix, h: f64, f: F) -> CMatrix
where
    F: Fn(f64, &CMatrix) -> CMatrix,
{
    let half = c(0.5 * h);
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y + &k1 * half));
    let k3 = f(t + 0.5 * h, &(y + &k2 * half));
    let k4 = f(t + h, &(y + &k3 * c(h)));
    y + (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0)
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    sxy / sxx
}
