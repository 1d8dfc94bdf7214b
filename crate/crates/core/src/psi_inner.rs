//! Fiber-level calculus of pseudodifferential inner products: adjoints and
//! imaginary parts relative to a Hermitian form, the factorization ODE, the
//! Jordan-block model and the tensor-power bound.

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{
    c, frobenius, hermitian_eigenvalues, identity, inverse, kron, rk4_step, spectral_norm, sqrt_positive,
    CMatrix, C64, I,
};
use crate::subprincipal::gaussian;

/// Hermitian fiber form `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianForm {
    b: CMatrix,
    positive: bool,
}

impl HermitianForm {
    pub fn new(b: CMatrix) -> Result<Self> {
        if !b.is_square() || b.nrows() == 0 {
            return Err(Error::Input("form must be a non-empty square matrix".into()));
        }
        if b.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Input("form has non-finite entries".into()));
        }
        let scale = frobenius(&b).max(1.0);
        if frobenius(&(&b - b.adjoint())) > 1e-12 * scale {
            return Err(Error::Input("form is not Hermitian".into()));
        }
        let positive = hermitian_eigenvalues(&b)[0] > 0.0;
        Ok(Self { b, positive })
    }

    /// Like [`HermitianForm::new`] but requires positive definiteness.
    pub fn positive(b: CMatrix) -> Result<Self> {
        let f = Self::new(b)?;
        if !f.positive {
            return Err(Error::Input("form is not positive definite".into()));
        }
        Ok(f)
    }

    pub fn identity(n: usize) -> Self {
        Self { b: identity(n), positive: true }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.b
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }

    fn require_positive(&self) -> Result<()> {
        if self.positive { Ok(()) } else { Err(Error::Input("form is not positive definite".into())) }
    }
}

fn check_dims(p: &CMatrix, b: &HermitianForm) -> Result<()> {
    if p.shape() != (b.dim(), b.dim()) {
        return Err(Error::Input(format!(
            "matrix is {}×{} but the form is {}×{}",
            p.nrows(),
            p.ncols(),
            b.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// `P^{*b} = b⁻¹ P^† b`.
pub fn adjoint_wrt(p: &CMatrix, b: &HermitianForm) -> Result<CMatrix> {
    check_dims(p, b)?;
    let bi = inverse(&b.b)?;
    Ok(bi * p.adjoint() * &b.b)
}

/// `Im^b P = (1/2i)(P − P^{*b})`.
pub fn im_wrt(p: &CMatrix, b: &HermitianForm) -> Result<CMatrix> {
    let adj = adjoint_wrt(p, b)?;
    Ok((p - adj) * (c(0.5) / I))
}

/// Operator norm in the geometry of a positive form: `‖c R c⁻¹‖₂`, `c = √b`.
pub fn b_norm(r: &CMatrix, b: &HermitianForm) -> Result<f64> {
    check_dims(r, b)?;
    b.require_positive()?;
    let (s, si) = sqrt_positive(&b.b)?;
    Ok(spectral_norm(&(s * r * si)))
}

/// Eigenvalues of a `b`-self-adjoint matrix, computed after the similarity
/// `c M c⁻¹` to the Euclidean geometry.
pub fn b_selfadjoint_eigenvalues(m: &CMatrix, b: &HermitianForm) -> Result<Vec<f64>> {
    check_dims(m, b)?;
    b.require_positive()?;
    let (s, si) = sqrt_positive(&b.b)?;
    Ok(hermitian_eigenvalues(&(s * m * si)))
}

/// Solution `q₁` of `∂_t q = ½ q b_t⁻¹ (b − b₀)`, `q₀ = id`,
/// `b_t = (1 − t) b₀ + t b`, so that `q₁^† b₀ q₁ = b`.
pub fn ode_factorize(b: &HermitianForm, b0: &HermitianForm, steps: usize) -> Result<CMatrix> {
    ode_factorize_until(b, b0, steps, 1.0)
}

/// The same flow stopped at `t_end ∈ [0, 1]` using `steps` equal steps.
pub fn ode_factorize_until(b: &HermitianForm, b0: &HermitianForm, steps: usize, t_end: f64) -> Result<CMatrix> {
    if b.dim() != b0.dim() {
        return Err(Error::Input("forms must have equal size".into()));
    }
    b.require_positive()?;
    b0.require_positive()?;
    if steps == 0 || !(0.0..=1.0).contains(&t_end) {
        return Err(Error::Input("need steps ≥ 1 and t_end in [0, 1]".into()));
    }
    let diff = &b.b - &b0.b;
    let n = b.dim();
    let h = t_end / steps as f64;
    let rhs = |t: f64, q: &CMatrix| -> CMatrix {
        let bt = &b0.b * c(1.0 - t) + &b.b * c(t);
        // b_t is a convex combination of positive forms; a failed inverse is a bug
        let bti = bt.try_inverse().expect("b_t lost invertibility");
        q * bti * &diff * c(0.5)
    };
    let mut q = identity(n);
    for k in 0..steps {
        q = rk4_step(k as f64 * h, &q, h, rhs);
    }
    if q.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Internal("factorization lost finiteness".into()));
    }
    Ok(q)
}

/// `‖q^† b₀ q − target‖₂`.
pub fn factorization_residual(q: &CMatrix, b0: &HermitianForm, target: &CMatrix) -> f64 {
    spectral_norm(&(q.adjoint() * &b0.b * q - target))
}

#[derive(Debug, Clone, PartialEq)]
pub struct JordanExample {
    /// The Jordan block in the rescaled frame `e′_j = ε^j e_j`.
    pub generator: CMatrix,
    pub im: CMatrix,
    pub norm: f64,
}

/// Nilpotent `N × N` Jordan block with the frame rescaled by `ε^j`.
pub fn jordan_example(n: usize, eps: f64) -> Result<JordanExample> {
    if n < 2 {
        return Err(Error::Input("Jordan block needs N ≥ 2".into()));
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Input("eps must be positive".into()));
    }
    let mut a = CMatrix::zeros(n, n);
    for j in 0..n - 1 {
        a[(j, j + 1)] = c(1.0);
    }
    let d = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |j, _| c(eps.powi(j as i32 + 1))));
    let d_inv = CMatrix::from_diagonal(&nalgebra::DVector::from_fn(n, |j, _| c(eps.powi(-(j as i32 + 1)))));
    let generator = d_inv * a * d;
    let im = im_wrt(&generator, &HermitianForm::identity(n))?;
    let norm = spectral_norm(&im);
    Ok(JordanExample { generator, im, norm })
}

/// Result of the tensor-power construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivationBound {
    pub k: usize,
    /// `R_k = Σ id^{⊗(i−1)} ⊗ R ⊗ id^{⊗(k−i)}`.
    pub r: CMatrix,
    /// `‖R_k‖_{b_k}`.
    pub norm_b: f64,
    /// `‖R‖_b`.
    pub base_norm_b: f64,
}

/// Largest `N^k` accepted by [`tensor_power`].
pub const TENSOR_SIZE_LIMIT: usize = 4096;

pub fn kron_power(m: &CMatrix, k: usize) -> CMatrix {
    let mut out = m.clone();
    for _ in 1..k {
        out = kron(&out, m);
    }
    out
}

/// The derivation `R_k` induced on the `k`-fold tensor power, and its norm in
/// the tensor-power form `b_k = b^{⊗k}`.
pub fn tensor_power(b: &HermitianForm, r: &CMatrix, k: usize) -> Result<DerivationBound> {
    check_dims(r, b)?;
    if k == 0 {
        return Err(Error::Input("k must be at least 1".into()));
    }
    let n = b.dim();
    let dim = n.checked_pow(k as u32).filter(|&d| d <= TENSOR_SIZE_LIMIT).ok_or(Error::SizeGuard {
        dim: n.saturating_pow(k as u32),
        limit: TENSOR_SIZE_LIMIT,
    })?;
    b.require_positive()?;
    let id = identity(n);
    let derivation = |m: &CMatrix| {
        let mut out = CMatrix::zeros(dim, dim);
        for i in 0..k {
            let mut term = if i == 0 { m.clone() } else { id.clone() };
            for j in 1..k {
                term = kron(&term, if j == i { m } else { &id });
            }
            out += term;
        }
        out
    };
    let rk = derivation(r);
    // (√b)^{⊗k} is the positive square root of b^{⊗k}, and conjugating the
    // derivation by it conjugates each slot by √b
    let (sq, sq_inv) = sqrt_positive(&b.b)?;
    let m = &sq * r * &sq_inv;
    let norm_b = spectral_norm(&derivation(&m));
    let base_norm_b = spectral_norm(&m);
    Ok(DerivationBound { k, base_norm_b, r: rk, norm_b })
}

/// `Im^b(S₀) + ½ b⁻¹ ∂_t b` at each sample of a uniformly sampled path, with
/// `∂_t b` by central differences (second-order one-sided at the ends).
pub fn im_symbol_along_flow(b_path: &[HermitianForm], s0_path: &[CMatrix], dt: f64) -> Result<Vec<CMatrix>> {
    let m = b_path.len();
    if m < 3 {
        return Err(Error::Input("need at least three samples".into()));
    }
    if s0_path.len() != m {
        return Err(Error::Input("b and S0 paths differ in length".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Input("dt must be positive".into()));
    }
    let h = c(1.0 / (2.0 * dt));
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        b_path[i].require_positive()?;
        let db = if i == 0 {
            (b_path[0].matrix() * c(-3.0) + b_path[1].matrix() * c(4.0) - b_path[2].matrix()) * h
        } else if i == m - 1 {
            (b_path[m - 1].matrix() * c(3.0) - b_path[m - 2].matrix() * c(4.0) + b_path[m - 3].matrix()) * h
        } else {
            (b_path[i + 1].matrix() - b_path[i - 1].matrix()) * h
        };
        let corr = inverse(b_path[i].matrix())? * db * c(0.5);
        out.push(im_wrt(&s0_path[i], &b_path[i])? + corr);
    }
    Ok(out)
}

/// Complex matrix with independent standard Gaussian real and imaginary parts.
pub fn random_matrix(n: usize, rng: &mut impl Rng) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| C64::new(gaussian(rng), gaussian(rng)))
}

/// Random positive form `c^†c + 10⁻³ id` with `c = id + G/(2√(2N))`, `G`
/// complex Gaussian.
pub fn random_positive_form(n: usize, rng: &mut impl Rng) -> HermitianForm {
    let g = random_matrix(n, rng) * c(0.5 / (2.0 * n as f64).sqrt());
    let cm = identity(n) + g;
    let b = cm.adjoint() * &cm + identity(n) * c(1e-3);
    let b = (&b + b.adjoint()) * c(0.5);
    HermitianForm::positive(b).expect("c^†c + δ id is positive")
}

/// Summary of a factorization check at two step counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RichardsonCheck {
    pub coarse_steps: usize,
    pub coarse_residual: f64,
    pub fine_residual: f64,
    pub ratio: f64,
}

pub fn richardson(b: &HermitianForm, b0: &HermitianForm, coarse_steps: usize) -> Result<RichardsonCheck> {
    let r1 = factorization_residual(&ode_factorize(b, b0, coarse_steps)?, b0, b.matrix());
    let r2 = factorization_residual(&ode_factorize(b, b0, 2 * coarse_steps)?, b0, b.matrix());
    Ok(RichardsonCheck { coarse_steps, coarse_residual: r1, fine_residual: r2, ratio: r1 / r2 })
}
