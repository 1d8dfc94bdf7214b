//! Fiber matrices of the 1-form wave operator at the spacetime trapped set.
//!
//! Fibers are split as `u = u_TT + u_TN α⁻¹dr + u_N α dt` and written in the
//! orthonormal frame `(η̂, e₂, …, e_{n−2}, TN, N)` with `η̂ = η/|η|`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hamiltonian_flow::{trapped_point, PhasePoint};
use crate::linalg::{c, eigenvalues, frobenius, identity, ls_slope, rk4_step, spectral_norm, CMatrix, CVector, C64, I};
use crate::sds_metric::SdsParams;
use crate::sphere::complete_orthonormal;

/// Orthonormal fiber frame at a point of `Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub omega: DVector<f64>,
    /// `η̂` followed by a completion to an orthonormal basis of `ω^⊥`.
    pub tt: Vec<DVector<f64>>,
}

impl Frame {
    pub fn dim(&self) -> usize {
        self.tt.len() + 2
    }

    pub fn tn_index(&self) -> usize {
        self.tt.len()
    }

    pub fn n_index(&self) -> usize {
        self.tt.len() + 1
    }

    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (i, a) in self.tt.iter().enumerate() {
            worst = worst.max(a.dot(&self.omega).abs());
            for (j, b) in self.tt.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((a.dot(b) - target).abs());
            }
        }
        worst
    }
}

/// A complex 1-form fiber element.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberVector {
    /// Tangential part as a vector in `ℂ^{n−1}`, orthogonal to `ω`.
    pub v_tt: CVector,
    pub v_tn: C64,
    pub v_n: C64,
}

impl FiberVector {
    pub fn new(frame: &Frame, v_tt: CVector, v_tn: C64, v_n: C64) -> Result<Self> {
        if v_tt.len() != frame.omega.len() {
            return Err(Error::Input("tangential part has the wrong length".into()));
        }
        let along: C64 = v_tt.iter().zip(frame.omega.iter()).map(|(a, w)| a * w).sum();
        if along.norm() > 1e-12 * v_tt.norm() {
            return Err(Error::Input("tangential part must be orthogonal to omega".into()));
        }
        Ok(Self { v_tt, v_tn, v_n })
    }

    pub fn to_coords(&self, frame: &Frame) -> CVector {
        let mut out = CVector::zeros(frame.dim());
        for (i, e) in frame.tt.iter().enumerate() {
            out[i] = self.v_tt.iter().zip(e.iter()).map(|(a, x)| a * x).sum();
        }
        out[frame.tn_index()] = self.v_tn;
        out[frame.n_index()] = self.v_n;
        out
    }

    pub fn from_coords(frame: &Frame, coords: &CVector) -> Self {
        let mut v_tt = CVector::zeros(frame.omega.len());
        for (i, e) in frame.tt.iter().enumerate() {
            v_tt += e.map(c) * coords[i];
        }
        Self { v_tt, v_tn: coords[frame.tn_index()], v_n: coords[frame.n_index()] }
    }
}

/// Complex `n × n` matrix acting on fibers, in the coordinates of `frame`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    pub matrix: CMatrix,
    pub frame: Frame,
}

impl OperatorMatrix {
    pub fn apply(&self, v: &FiberVector) -> FiberVector {
        FiberVector::from_coords(&self.frame, &(&self.matrix * v.to_coords(&self.frame)))
    }
}

/// A point of the spacetime trapped set: `r = r_p`, `ξ = 0`, `σ² = Ψ²|η|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaPointData {
    pub omega: DVector<f64>,
    pub eta: DVector<f64>,
    pub sigma: f64,
    pub r: f64,
    pub alpha: f64,
    pub psi: f64,
}

impl GammaPointData {
    pub fn new(params: &SdsParams, omega: DVector<f64>, eta: DVector<f64>, sigma: f64) -> Result<Self> {
        let ps = params.photon_sphere()?;
        if omega.len() != params.n() - 1 || eta.len() != omega.len() {
            return Err(Error::Input("omega and eta must have n − 1 components".into()));
        }
        if (omega.norm() - 1.0).abs() > 1e-12 || eta.dot(&omega).abs() > 1e-12 * eta.norm() {
            return Err(Error::Input("omega must be unit and eta orthogonal to it".into()));
        }
        let psi = ps.psi_p;
        let rel = psi * psi * eta.norm_squared();
        if (sigma * sigma - rel).abs() > 1e-12 * sigma * sigma || sigma == 0.0 {
            return Err(Error::Input("σ² = Ψ²|η|² fails; the point is not on Γ".into()));
        }
        Ok(Self { omega, eta, sigma, r: ps.r_p, alpha: psi * ps.r_p, psi })
    }

    /// Lift of a point of `Γ_ℏ` with `σ = sgn(z) Ψ|η|`.
    pub fn from_phase_point(params: &SdsParams, x: &PhasePoint) -> Result<Self> {
        let rp = params.photon_radius();
        if (x.r - rp).abs() > 1e-12 * rp || x.xi.abs() > 1e-12 {
            return Err(Error::Input("phase point is not on the trapped set".into()));
        }
        let psi = params.photon_sphere()?.psi_p;
        let sigma = x.z.signum() * psi * x.eta.norm();
        Self::new(params, x.omega.clone(), x.eta.clone(), sigma)
    }

    /// Same base point with a different `σ`, not validated (generally off `Γ`).
    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self { sigma, ..self.clone() }
    }

    pub fn eta_norm(&self) -> f64 {
        self.eta.norm()
    }

    pub fn frame(&self) -> Frame {
        let hat = &self.eta / self.eta.norm();
        let mut tt = vec![hat.clone()];
        tt.extend(complete_orthonormal(&[self.omega.clone(), hat], self.omega.len()));
        Frame { omega: self.omega.clone(), tt }
    }
}

/// Lifts of random points of `Γ_ℏ`: uniform `ω`, random tangent direction for
/// `η`, and `z = ±1` with equal probability (so `|σ| = 1`).
pub fn random_gamma_points(params: &SdsParams, count: usize, seed: u64) -> Result<Vec<GammaPointData>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = params.n() - 1;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w = DVector::from_fn(d, |_, _| gaussian(&mut rng));
        let e = DVector::from_fn(d, |_, _| gaussian(&mut rng));
        if w.norm() < 1e-3 {
            continue;
        }
        let w = &w / w.norm();
        if (&e - &w * w.dot(&e)).norm() < 1e-3 {
            continue;
        }
        let z = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let x = trapped_point(params, &w, &e, z)?;
        out.push(GammaPointData::from_phase_point(params, &x)?);
    }
    Ok(out)
}

pub(crate) fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `s = [[0, Ψr²η, 0], [−Ψ i_η, 0, rσ], [0, rσ, 0]]`.
pub fn s_matrix(g: &GammaPointData) -> OperatorMatrix {
    let frame = g.frame();
    let n = frame.dim();
    let (tn, nn) = (frame.tn_index(), frame.n_index());
    let e = g.eta_norm();
    let mut m = CMatrix::zeros(n, n);
    m[(0, tn)] = c(g.psi * g.r * g.r * e);
    m[(tn, 0)] = c(-g.psi * e);
    m[(tn, nn)] = c(g.r * g.sigma);
    m[(nn, tn)] = c(g.r * g.sigma);
    OperatorMatrix { matrix: m, frame }
}

/// Zeroth-order part of `i S_sub(□₁)` at `Γ`: `−2r⁻² s`.
pub fn subprincipal_zeroth(g: &GammaPointData) -> OperatorMatrix {
    let s = s_matrix(g);
    let k = c(-2.0 / (g.r * g.r));
    OperatorMatrix { matrix: s.matrix * k, frame: s.frame }
}

/// Zeroth-order part of `S_sub(□₁)` itself: `−i · (−2r⁻² s) = 2i r⁻² s`.
pub fn subprincipal_zeroth_s(g: &GammaPointData) -> OperatorMatrix {
    let z = subprincipal_zeroth(g);
    OperatorMatrix { matrix: z.matrix * (-I), frame: z.frame }
}

/// Fiber form `G = (−r⁻²Ω) ⊕ (−1) ⊕ 1` in the orthonormal frame.
pub fn g_form(g: &GammaPointData, dim: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    for i in 0..dim - 2 {
        m[(i, i)] = c(-1.0 / (g.r * g.r));
    }
    m[(dim - 2, dim - 2)] = c(-1.0);
    m[(dim - 1, dim - 1)] = c(1.0);
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetryResidual {
    /// `‖GZ − (GZ)^†‖_F`.
    pub residual: f64,
    /// `‖GZ‖_F`.
    pub scale: f64,
}

impl SymmetryResidual {
    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 { 0.0 } else { self.residual / self.scale }
    }
}

fn symmetry_residual(form: &CMatrix, z: &CMatrix) -> SymmetryResidual {
    let gz = form * z;
    SymmetryResidual { residual: frobenius(&(&gz - gz.adjoint())), scale: frobenius(&gz) }
}

/// Hermitian defect of `G · Z` with `Z` the zeroth-order part of `S_sub(□₁)`.
pub fn check_g_symmetry(g: &GammaPointData) -> SymmetryResidual {
    let z = subprincipal_zeroth_s(g);
    symmetry_residual(&g_form(g, z.frame.dim()), &z.matrix)
}

/// Same defect measured against the positive form `B₀ = Ω ⊕ 1 ⊕ 1`.
pub fn check_b0_symmetry(g: &GammaPointData) -> SymmetryResidual {
    let z = subprincipal_zeroth_s(g);
    symmetry_residual(&identity(z.frame.dim()), &z.matrix)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NilpotencyCheck {
    pub s_norm: f64,
    /// Largest entry of `|s³|`.
    pub cube_max_entry: f64,
    /// Largest entry of `|s²|`.
    pub square_max_entry: f64,
    /// Largest eigenvalue modulus reported by the Schur eigensolver.
    pub max_eigenvalue_modulus: f64,
}

pub fn nilpotency(g: &GammaPointData) -> Result<NilpotencyCheck> {
    let s = s_matrix(g).matrix;
    let s2 = &s * &s;
    let s3 = &s2 * &s;
    let max_entry = |m: &CMatrix| m.iter().fold(0.0_f64, |a, z| a.max(z.norm()));
    let ev = eigenvalues(&s)?;
    Ok(NilpotencyCheck {
        s_norm: spectral_norm(&s),
        cube_max_entry: max_entry(&s3),
        square_max_entry: max_entry(&s2),
        max_eigenvalue_modulus: ev.iter().fold(0.0_f64, |a, z| a.max(z.norm())),
    })
}

/// The change-of-basis matrix `q` and its block-triangular inverse.
#[derive(Debug, Clone, PartialEq)]
pub struct Conjugator {
    pub q: OperatorMatrix,
    pub q_inv: CMatrix,
    /// `‖q q⁻¹ − id‖_F / ‖q‖_F`.
    pub inverse_defect: f64,
}

pub fn conjugator_q(g: &GammaPointData, eps: f64) -> Result<Conjugator> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::Input(format!("eps must be positive, got {eps}")));
    }
    let e = g.eta_norm();
    if e == 0.0 {
        return Err(Error::Input("q is singular at η = 0".into()));
    }
    let frame = g.frame();
    let n = frame.dim();
    let (tn, nn) = (frame.tn_index(), frame.n_index());
    let (r, psi) = (g.r, g.psi);
    let mut q = identity(n);
    q[(tn, tn)] = c(psi * r * r / eps);
    // −ε⁻²|η|⁻¹Ψ²r² i_η, evaluated on the frame vector η̂
    q[(nn, 0)] = c(-psi * psi * r * r / (eps * eps));
    q[(nn, nn)] = c(psi * r.powi(3) * g.sigma / (eps * eps * e));
    q[(nn, nn)].re.is_finite().then_some(()).ok_or(Error::Domain("q is not finite".into()))?;

    let mut qi = identity(n);
    qi[(tn, tn)] = c(1.0 / q[(tn, tn)].re);
    qi[(nn, nn)] = c(1.0 / q[(nn, nn)].re);
    qi[(nn, 0)] = c(-q[(nn, 0)].re / q[(nn, nn)].re);
    let defect = frobenius(&(&q * &qi - identity(n))) / frobenius(&q);
    Ok(Conjugator { q: OperatorMatrix { matrix: q, frame }, q_inv: qi, inverse_defect: defect })
}

/// `q s q⁻¹` in the frame of `g`.
pub fn conjugated_s(g: &GammaPointData, eps: f64) -> Result<CMatrix> {
    let cj = conjugator_q(g, eps)?;
    Ok(&cj.q.matrix * s_matrix(g).matrix * &cj.q_inv)
}

/// The strictly upper triangular target `[[0, εη, 0], [0, 0, ε|η|], [0, 0, 0]]`.
pub fn conjugated_target(g: &GammaPointData, eps: f64) -> CMatrix {
    let n = g.omega.len() + 1;
    let mut m = CMatrix::zeros(n, n);
    m[(0, n - 2)] = c(eps * g.eta_norm());
    m[(n - 2, n - 1)] = c(eps * g.eta_norm());
    m
}

/// `‖Im^{B₀} Z_q‖_{B₀} / |σ|` with `Z_q = 2i r⁻² q s q⁻¹` the conjugated
/// zeroth-order part of `S_sub(□₁)` and `B₀ = Ω ⊕ 1 ⊕ 1` (the identity in the
/// orthonormal frame).
pub fn conjugated_im_norm(g: &GammaPointData, eps: f64) -> Result<f64> {
    let n = conjugated_s(g, eps)?;
    let z = n * (I * c(2.0 / (g.r * g.r)));
    let im = (&z - z.adjoint()) * (c(0.5) / I);
    Ok(spectral_norm(&im) / g.sigma.abs())
}

/// Ratio between the conjugated entries as printed with a factor `r²` and the
/// value recomputed from `s` with `r⁻²`.
pub fn display_factor(g: &GammaPointData) -> f64 {
    g.r.powi(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GrowthKind {
    Polynomial,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthLog {
    pub times: Vec<f64>,
    pub log_norms: Vec<f64>,
    /// Least-squares slope of `log‖U‖` against `log t` over `[T/10, T]`.
    pub loglog_slope: f64,
    /// Least-squares slope of `log‖U‖` against `t` over `[T/5, T]`.
    pub exp_rate: f64,
    pub kind: GrowthKind,
}

/// Step of the transport integration.
pub const TRANSPORT_STEP: f64 = 1e-2;

/// Transport `dU/dt = (2r⁻² s + L0) U`, `U(0) = id`, in a parallel frame along
/// the `Γ` geodesic, where `s` is constant. The zeroth-order part of
/// `S_sub = −i∇_{H_G} + (2i r⁻² s)` yields the generator `2r⁻² s`.
pub fn transport_growth(g: &GammaPointData, t_final: f64, l0: Option<&CMatrix>) -> Result<GrowthLog> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::Input("T must be positive".into()));
    }
    let s = s_matrix(g).matrix;
    let n = s.nrows();
    let mut gen = s * c(2.0 / (g.r * g.r));
    if let Some(l) = l0 {
        if l.shape() != (n, n) {
            return Err(Error::Input(format!("perturbation must be {n}×{n}")));
        }
        gen += l;
    }
    transport_with_generator(&gen, t_final)
}

pub fn transport_with_generator(gen: &CMatrix, t_final: f64) -> Result<GrowthLog> {
    let n = gen.nrows();
    let steps = (t_final / TRANSPORT_STEP).round().max(1.0) as usize;
    let h = t_final / steps as f64;
    let mut u = identity(n);
    let mut times = vec![0.0];
    let mut log_norms = vec![spectral_norm(&u).ln()];
    let mut log_scale = 0.0;
    for k in 1..=steps {
        u = rk4_step(0.0, &u, h, |_, y| gen * y);
        let nu = spectral_norm(&u);
        if !nu.is_finite() || nu == 0.0 {
            return Err(Error::Internal("transport matrix lost finiteness".into()));
        }
        u /= c(nu);
        log_scale += nu.ln();
        times.push(k as f64 * h);
        log_norms.push(log_scale);
    }
    let window = |lo: f64| -> (Vec<f64>, Vec<f64>) {
        times
            .iter()
            .zip(&log_norms)
            .filter(|(t, _)| **t >= lo * t_final && **t > 0.0)
            .map(|(t, l)| (*t, *l))
            .unzip()
    };
    let (ts, ls) = window(0.1);
    let log_ts: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let loglog_slope = ls_slope(&log_ts, &ls);
    let (ts, ls) = window(0.2);
    let exp_rate = ls_slope(&ts, &ls);
    let kind = if loglog_slope <= 2.1 { GrowthKind::Polynomial } else { GrowthKind::Exponential };
    Ok(GrowthLog { times, log_norms, loglog_slope, exp_rate, kind })
}

/// Largest real part of the spectrum of the transport generator.
pub fn generator_max_real_eigenvalue(g: &GammaPointData, l0: Option<&CMatrix>) -> Result<f64> {
    let mut gen = s_matrix(g).matrix * c(2.0 / (g.r * g.r));
    if let Some(l) = l0 {
        gen += l;
    }
    Ok(eigenvalues(&gen)?.iter().fold(f64::NEG_INFINITY, |a, z| a.max(z.re)))
}

/// `a · diag(0, …, 0, 1, −1)` acting on `(TN, N)`.
pub fn normal_perturbation(dim: usize, a: f64) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    m[(dim - 2, dim - 2)] = c(a);
    m[(dim - 1, dim - 1)] = c(-a);
    m
}

/// Real skeleton of a fiber matrix (all entries of `s` are real).
pub fn real_part(m: &CMatrix) -> DMatrix<f64> {
    m.map(|z| z.re)
}
