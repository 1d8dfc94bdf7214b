//! The rescaled null-bicharacteristic flow on `T*X`.
//!
//! With `Δ_r = r²μ` the symbol is `p = Δ_r ξ² − (r⁴/Δ_r) z² + |η|²` and the
//! flow decouples into a radial part in `(r, ξ)` and the geodesic flow of the
//! round sphere in `(ω, η)`. The trapped set is
//! `Γ_ℏ = {r = r_p, ξ = 0, (r⁴/Δ_r) z² = |η|²}`.

use nalgebra::{DVector, Matrix2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::ls_slope;
use crate::sds_metric::SdsParams;
use crate::sphere::{complete_orthonormal, geodesic_closed_form, geodesic_rhs, renormalize};

/// Phase-space point `(r, ω; ξ, η)` together with the frequency sign `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub r: f64,
    pub omega: DVector<f64>,
    pub xi: f64,
    pub eta: DVector<f64>,
    pub z: f64,
}

impl PhasePoint {
    pub fn new(r: f64, omega: DVector<f64>, xi: f64, eta: DVector<f64>, z: f64) -> Result<Self> {
        if omega.len() != eta.len() || omega.len() < 3 {
            return Err(Error::Input("omega and eta must share a length of at least 3".into()));
        }
        if (omega.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Input("omega must be a unit vector".into()));
        }
        if eta.dot(&omega).abs() > 1e-12 * eta.norm() {
            return Err(Error::Input("eta must be orthogonal to omega".into()));
        }
        if z != 1.0 && z != -1.0 {
            return Err(Error::Input(format!("z must be ±1, got {z}")));
        }
        if !r.is_finite() || !xi.is_finite() {
            return Err(Error::Input("r and xi must be finite".into()));
        }
        Ok(Self { r, omega, xi, eta, z })
    }
}

/// Components of `H_p` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldValue {
    pub dr: f64,
    pub dxi: f64,
    pub domega: DVector<f64>,
    pub deta: DVector<f64>,
}

fn nonzero_delta(params: &SdsParams, r: f64) -> Result<f64> {
    let d = params.delta_r(r);
    if d == 0.0 || !d.is_finite() {
        return Err(Error::Domain(format!("Δ_r vanishes at r = {r}")));
    }
    Ok(d)
}

pub fn symbol_p(params: &SdsParams, x: &PhasePoint) -> Result<f64> {
    let d = nonzero_delta(params, x.r)?;
    Ok(d * x.xi * x.xi - x.r.powi(4) / d * x.z * x.z + x.eta.norm_squared())
}

/// `∂_r (r⁴/Δ_r) = ∂_r (1/μ̃) = −μ̃′/μ̃²`.
fn inv_tilde_mu_prime(params: &SdsParams, r: f64) -> f64 {
    let tm = params.tilde_mu(r);
    -params.tilde_mu_prime(r) / (tm * tm)
}

fn inv_tilde_mu_second(params: &SdsParams, r: f64) -> f64 {
    let tm = params.tilde_mu(r);
    let d1 = params.tilde_mu_prime(r);
    -params.tilde_mu_second(r) / (tm * tm) + 2.0 * d1 * d1 / (tm * tm * tm)
}

fn radial_rhs(params: &SdsParams, r: f64, xi: f64, z: f64) -> (f64, f64) {
    let d = params.delta_r(r);
    let dr = 2.0 * d * xi;
    let dxi = -(params.delta_r_prime(r) * xi * xi - inv_tilde_mu_prime(params, r) * z * z);
    (dr, dxi)
}

pub fn hamilton_field(params: &SdsParams, x: &PhasePoint) -> Result<FieldValue> {
    nonzero_delta(params, x.r)?;
    let (dr, dxi) = radial_rhs(params, x.r, x.xi, x.z);
    let (domega, deta) = geodesic_rhs(&x.omega, &x.eta);
    Ok(FieldValue { dr, dxi, domega, deta })
}

/// Jacobian of the radial field `(ṙ, ξ̇)` with respect to `(r, ξ)`.
pub fn radial_jacobian(params: &SdsParams, r: f64, xi: f64, z: f64) -> Matrix2<f64> {
    let d = params.delta_r(r);
    let d1 = params.delta_r_prime(r);
    let d2 = params.delta_r_second(r);
    Matrix2::new(
        2.0 * d1 * xi,
        2.0 * d,
        -d2 * xi * xi + inv_tilde_mu_second(params, r) * z * z,
        -2.0 * d1 * xi,
    )
}

/// `(H_p F, H_p² F)` for the escape function `F = (r − r_p)²`.
pub fn escape_derivatives(params: &SdsParams, x: &PhasePoint) -> Result<(f64, f64)> {
    let d = nonzero_delta(params, x.r)?;
    let rp = params.photon_radius();
    let (hp_r, hp_xi) = radial_rhs(params, x.r, x.xi, x.z);
    let hp2_r = 2.0 * params.delta_r_prime(x.r) * x.xi * hp_r + 2.0 * d * hp_xi;
    let dr = x.r - rp;
    Ok((2.0 * dr * hp_r, 2.0 * hp_r * hp_r + 2.0 * dr * hp2_r))
}

/// Point of `Γ_ℏ` over `omega` with covector along `eta_dir`.
pub fn trapped_point(
    params: &SdsParams,
    omega: &DVector<f64>,
    eta_dir: &DVector<f64>,
    z: f64,
) -> Result<PhasePoint> {
    let rp = params.photon_sphere()?.r_p;
    if omega.len() != params.n() - 1 {
        return Err(Error::Input(format!(
            "omega must have {} components for n = {}",
            params.n() - 1,
            params.n()
        )));
    }
    let w = omega / omega.norm();
    let t = eta_dir - &w * w.dot(eta_dir);
    if t.norm() <= 1e-12 * eta_dir.norm().max(1.0) {
        return Err(Error::Input("eta direction must not be parallel to omega".into()));
    }
    let mag = rp * rp * z.abs() / params.delta_r(rp).sqrt();
    let eta = &t * (mag / t.norm());
    PhasePoint::new(rp, w, 0.0, eta, z)
}

/// Seed on `Γ_ℏ` over the first basis vector with covector along the second.
pub fn default_trapped_point(params: &SdsParams, z: f64) -> Result<PhasePoint> {
    let d = params.n() - 1;
    let mut omega = DVector::zeros(d);
    omega[0] = 1.0;
    let mut eta = DVector::zeros(d);
    eta[1] = 1.0;
    trapped_point(params, &omega, &eta, z)
}

/// Seed at `r_p` with `ξ = delta` and `|η|` chosen so that `p = 0`.
pub fn perturbed_point(params: &SdsParams, delta: f64, z: f64) -> Result<PhasePoint> {
    let mut x = default_trapped_point(params, z)?;
    let d = params.delta_r(x.r);
    let eta2 = x.r.powi(4) / d * z * z - d * delta * delta;
    if !(eta2 > 0.0) || !delta.is_finite() {
        return Err(Error::Input(format!("|ξ| = {} is too large for a characteristic seed at r_p", delta.abs())));
    }
    x.xi = delta;
    x.eta *= eta2.sqrt() / x.eta.norm();
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExitSide {
    BlackHole,
    Cosmological,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Exit {
    pub t: f64,
    pub side: ExitSide,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub point: PhasePoint,
}

/// Variational matrix `V(t) = e^{log_scale} · v`, `‖v‖_F = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariationalSample {
    pub log_scale: f64,
    pub v: Matrix2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub p_drift: f64,
    pub eta_drift: f64,
    pub exit: Option<Exit>,
    pub variational: Option<Vec<VariationalSample>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub t_final: f64,
    pub dt: f64,
    pub variational: bool,
}

/// Number of steps `floor(T/dt)`, tolerant of representation error in `T/dt`.
pub fn step_count(t_final: f64, dt: f64) -> usize {
    ((t_final / dt) * (1.0 + 1e-12)).floor() as usize
}

/// Fixed-step RK4 integration of `H_p`, truncated when the trajectory leaves
/// `(r_- + m, r_+ − m)` with `m = 10⁻³ (r_+ − r_-)`.
///
/// The radial motion is stepped in `(r, u)` with `u = Δ_r ξ`. Along the flow
/// `u̇ = Δ_r′ (p − |η|²) + 4r³z²` with `p` and `|η|` constant, which stays
/// regular at the horizons where `ξ` blows up. The equation is evaluated as an
/// increment over its value at the seed so that `Γ_ℏ` is an exact fixed point.
/// The sphere factor is the closed-form rotation of the `|η|²` flow.
pub fn integrate(params: &SdsParams, x0: &PhasePoint, opts: IntegrateOptions) -> Result<Trajectory> {
    if !(opts.dt > 0.0) || !(opts.t_final >= 0.0) || !opts.t_final.is_finite() {
        return Err(Error::Input("dt must be positive and T finite and non-negative".into()));
    }
    if x0.omega.len() != params.n() - 1 {
        return Err(Error::Input("seed dimension does not match the parameters".into()));
    }
    let (r_minus, r_plus) = params.horizons()?;
    let margin = 1e-3 * (r_plus - r_minus);
    let (lo, hi) = (r_minus + margin, r_plus - margin);
    if !(x0.r > lo && x0.r < hi) {
        return Err(Error::Domain(format!("seed radius {} is outside ({lo}, {hi})", x0.r)));
    }
    let rp = params.photon_radius();
    let z = x0.z;
    let z2 = z * z;
    let h = opts.dt;
    let steps = step_count(opts.t_final, h);
    let with_v = opts.variational;

    let p0 = symbol_p(params, x0)?;
    let eta0 = x0.eta.norm();
    let r0 = x0.r;
    let d0 = params.delta_r(r0);
    let k_const = p0 - x0.eta.norm_squared();
    let dp0 = params.delta_r_prime(r0);
    let udot0 = dp0 * d0 * x0.xi * x0.xi
        - z2 * r0.powi(4) * params.tilde_mu_prime(r0) / params.tilde_mu(r0);
    let r0_cubed = r0.powi(3);

    // (ṙ, u̇, V̇) at (r, u, V)
    let deriv = |r: f64, u: f64, v: &Matrix2<f64>| -> (f64, f64, Matrix2<f64>) {
        let du = (params.delta_r_prime(r) - dp0) * k_const + 4.0 * (r.powi(3) - r0_cubed) * z2 + udot0;
        let dv = if with_v {
            radial_jacobian(params, r, u / params.delta_r(r), z) * v
        } else {
            Matrix2::zeros()
        };
        (2.0 * u, du, dv)
    };

    let mut r = r0;
    let mut u = d0 * x0.xi;
    let mut v: Matrix2<f64> = Matrix2::identity();
    let mut log_scale = v.norm().ln();
    v /= v.norm();

    let mut samples = Vec::with_capacity(steps + 1);
    samples.push(Sample { t: 0.0, point: x0.clone() });
    let mut var = with_v.then(|| vec![VariationalSample { log_scale, v }]);
    let (mut p_drift, mut eta_drift) = (0.0_f64, 0.0_f64);
    let mut exit = None;

    for k in 1..=steps {
        let (a_r, a_u, a_v) = deriv(r, u, &v);
        let (b_r, b_u, b_v) = deriv(r + 0.5 * h * a_r, u + 0.5 * h * a_u, &(v + a_v * (0.5 * h)));
        let (c_r, c_u, c_v) = deriv(r + 0.5 * h * b_r, u + 0.5 * h * b_u, &(v + b_v * (0.5 * h)));
        let (d_r, d_u, d_v) = deriv(r + h * c_r, u + h * c_u, &(v + c_v * h));
        let r_next = r + h / 6.0 * (a_r + 2.0 * b_r + 2.0 * c_r + d_r);
        let u_next = u + h / 6.0 * (a_u + 2.0 * b_u + 2.0 * c_u + d_u);
        let t = k as f64 * h;
        if !(r_next > lo && r_next < hi) || !u_next.is_finite() {
            let side = if r_next < rp || (r_next.is_nan() && r < rp) {
                ExitSide::BlackHole
            } else {
                ExitSide::Cosmological
            };
            exit = Some(Exit { t, side });
            break;
        }
        r = r_next;
        u = u_next;
        if with_v {
            v += (a_v + b_v * 2.0 + c_v * 2.0 + d_v) * (h / 6.0);
            let nv = v.norm();
            v /= nv;
            log_scale += nv.ln();
        }
        let (mut omega, mut eta) = geodesic_closed_form(&x0.omega, &x0.eta, t);
        renormalize(&mut omega, &mut eta);
        let point = PhasePoint { r, omega, xi: u / params.delta_r(r), eta, z };
        p_drift = p_drift.max((symbol_p(params, &point)? - p0).abs());
        eta_drift = eta_drift.max((point.eta.norm() - eta0).abs());
        samples.push(Sample { t, point });
        if let Some(var) = var.as_mut() {
            var.push(VariationalSample { log_scale, v });
        }
    }

    Ok(Trajectory { samples, p_drift, eta_drift, exit, variational: var })
}

/// Linearized flow at `Γ_ℏ` in the normal coordinates `(r − r_p, ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Linearization {
    /// Row-major `[[0, a], [b, 0]]`.
    pub matrix: [[f64; 2]; 2],
    /// Eigenvalues of `matrix` from a numerical eigensolver, ascending.
    pub eigenvalues_numeric: [f64; 2],
    /// Largest imaginary part returned by the eigensolver (zero for a hyperbolic pair).
    pub eigenvalues_numeric_imag: f64,
    /// `2 r_p ((n−1)/(1 − (n−1)/(n−3) r_p² λ))^{1/2}`.
    pub eigenvalue_closed: f64,
    /// `2 r_p⁻¹ ((n−1)/(1 − (n−1)/(n−3) r_p² λ))^{1/2}`.
    pub nu_min_closed: f64,
}

pub fn linearization(params: &SdsParams, z: f64) -> Result<Linearization> {
    let rp = params.photon_sphere()?.r_p;
    let n = params.n() as f64;
    let tm = params.tilde_mu(rp);
    let a = 2.0 * rp.powi(4) * tm;
    let b = 2.0 * (n - 3.0) * rp.powi(-4) / (tm * tm) * z * z;
    let m = Matrix2::new(0.0, a, b, 0.0);
    let ev = m.complex_eigenvalues();
    let mut re = [ev[0].re, ev[1].re];
    re.sort_by(|x, y| x.total_cmp(y));
    let root = ((n - 1.0) / (1.0 - (n - 1.0) / (n - 3.0) * rp * rp * params.lambda())).sqrt();
    Ok(Linearization {
        matrix: [[0.0, a], [b, 0.0]],
        eigenvalues_numeric: re,
        eigenvalues_numeric_imag: ev[0].im.abs().max(ev[1].im.abs()),
        eigenvalue_closed: 2.0 * rp * root,
        nu_min_closed: 2.0 / rp * root,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub rate: f64,
    pub window_samples: usize,
    /// Set when the regression window is too short to trust the fit.
    pub warning: Option<String>,
}

/// Fraction of leading samples discarded before the log-norm regression.
pub const TRANSIENT_FRACTION: f64 = 0.2;

fn fit_window(ts: &[f64], logs: &[f64]) -> (f64, usize) {
    let start = (TRANSIENT_FRACTION * ts.len() as f64).ceil() as usize;
    let xs = &ts[start.min(ts.len())..];
    let ys = &logs[start.min(logs.len())..];
    if xs.len() < 2 {
        return (f64::NAN, xs.len());
    }
    (ls_slope(xs, ys), xs.len())
}

fn short_window_warning(rate: f64, samples: usize, t_final: f64) -> Option<String> {
    if samples < 16 {
        Some(format!("only {samples} samples in the regression window"))
    } else if rate.abs() * (1.0 - TRANSIENT_FRACTION) * t_final < 10.0 {
        Some(format!("log-norm grows by less than 10 over the window (T = {t_final})"))
    } else {
        None
    }
}

/// Top Lyapunov exponent of the variational `(r, ξ)` flow along a trajectory
/// seeded on `Γ_ℏ`.
pub fn lyapunov_normal_from(
    params: &SdsParams,
    seed: &PhasePoint,
    t_final: f64,
    dt: f64,
) -> Result<LyapunovEstimate> {
    let traj = integrate(params, seed, IntegrateOptions { t_final, dt, variational: true })?;
    if traj.exit.is_some() {
        return Err(Error::Domain("seed left the static region; it is not trapped".into()));
    }
    let var = traj.variational.expect("variational history requested");
    let ts: Vec<f64> = traj.samples.iter().map(|s| s.t).collect();
    let logs: Vec<f64> = var.iter().map(|v| v.log_scale).collect();
    let (rate, window) = fit_window(&ts, &logs);
    Ok(LyapunovEstimate { rate, window_samples: window, warning: short_window_warning(rate, window, t_final) })
}

pub fn lyapunov_normal(params: &SdsParams, t_final: f64, dt: f64) -> Result<LyapunovEstimate> {
    let seed = default_trapped_point(params, 1.0)?;
    lyapunov_normal_from(params, &seed, t_final, dt)
}

/// Largest log-norm growth rate of the linearized sphere flow at `Γ_ℏ`,
/// over variations tangent to the trapped set (`δr = δξ = 0`, `|η|` fixed).
/// Variations are measured in `|δω|² + |δη|²/|η|²`.
pub fn tangential_rate(params: &SdsParams, seed: &PhasePoint, t_final: f64, dt: f64) -> Result<f64> {
    let _ = params.photon_sphere()?;
    let e = seed.eta.norm();
    if e == 0.0 {
        return Err(Error::Input("eta must be nonzero on the trapped set".into()));
    }
    let d = seed.omega.len();
    let w0 = seed.omega.clone();
    let hat = &seed.eta / e;
    let mut variations: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    // along the flow
    variations.push((hat.clone(), &w0 * (-e)));
    for perp in complete_orthonormal(&[w0.clone(), hat.clone()], d) {
        variations.push((perp.clone(), DVector::zeros(d)));
        variations.push((DVector::zeros(d), &perp * e));
    }
    let steps = step_count(t_final, dt);
    let mut best = f64::NEG_INFINITY;
    for (dw0, de0) in variations {
        let (mut w, mut et, mut dw, mut de) = (w0.clone(), seed.eta.clone(), dw0, de0);
        let rhs = |w: &DVector<f64>, et: &DVector<f64>, dw: &DVector<f64>, de: &DVector<f64>| {
            let (a, b) = geodesic_rhs(w, et);
            let c = de * 2.0;
            let dd = w * (-4.0 * et.dot(de)) - dw * (2.0 * et.norm_squared());
            (a, b, c, dd)
        };
        let norm = |dw: &DVector<f64>, de: &DVector<f64>| (dw.norm_squared() + de.norm_squared() / (e * e)).sqrt();
        let mut ts = vec![0.0];
        let mut logs = vec![norm(&dw, &de).ln()];
        for k in 1..=steps {
            let (a1, b1, c1, d1) = rhs(&w, &et, &dw, &de);
            let hh = 0.5 * dt;
            let (a2, b2, c2, d2) = rhs(&(&w + &a1 * hh), &(&et + &b1 * hh), &(&dw + &c1 * hh), &(&de + &d1 * hh));
            let (a3, b3, c3, d3) = rhs(&(&w + &a2 * hh), &(&et + &b2 * hh), &(&dw + &c2 * hh), &(&de + &d2 * hh));
            let (a4, b4, c4, d4) = rhs(&(&w + &a3 * dt), &(&et + &b3 * dt), &(&dw + &c3 * dt), &(&de + &d3 * dt));
            w += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
            et += (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (dt / 6.0);
            dw += (c1 + c2 * 2.0 + c3 * 2.0 + c4) * (dt / 6.0);
            de += (d1 + d2 * 2.0 + d3 * 2.0 + d4) * (dt / 6.0);
            renormalize(&mut w, &mut et);
            // keep the variation tangent to Γ_ℏ: ω·δω = 0, η·δη = 0, η·δω + ω·δη = 0
            let hat_t = &et / et.norm();
            dw -= &w * w.dot(&dw);
            de -= &w * w.dot(&de) + &hat_t * hat_t.dot(&de);
            de -= &w * et.dot(&dw);
            ts.push(k as f64 * dt);
            logs.push(norm(&dw, &de).ln());
        }
        let (slope, _) = fit_window(&ts, &logs);
        best = best.max(slope);
    }
    Ok(best)
}

/// Escape-function dichotomy check on a grid of characteristic points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EscapeGrid {
    pub n_r: usize,
    pub n_xi: usize,
    pub z: f64,
}

impl Default for EscapeGrid {
    fn default() -> Self {
        Self { n_r: 100, n_xi: 100, z: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeViolation {
    pub r: f64,
    pub xi: f64,
    pub hp_f: f64,
    pub hp2_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeScan {
    pub checked: usize,
    /// Points with `H_p F = 0`.
    pub critical: usize,
    /// Critical points lying on `Γ_ℏ`.
    pub exempt: usize,
    pub violations: Vec<EscapeViolation>,
}

/// Characteristic points of the scan: `r` uniform inside the truncated static
/// region (the node nearest `r_p` replaced by `r_p`), `ξ = s r²/Δ_r` with `s`
/// uniform in `[−0.99, 0.99]` (the node nearest 0 replaced by 0), and `|η|`
/// solving `p = 0`.
pub fn escape_grid_points(params: &SdsParams, grid: &EscapeGrid) -> Result<Vec<PhasePoint>> {
    if grid.n_r < 2 || grid.n_xi < 2 {
        return Err(Error::Input("escape grid needs at least two nodes per axis".into()));
    }
    let (rm, rpl) = params.horizons()?;
    let rp = params.photon_radius();
    let margin = 1e-3 * (rpl - rm);
    let (lo, hi) = (rm + 2.0 * margin, rpl - 2.0 * margin);
    let mut rs: Vec<f64> = (0..grid.n_r).map(|i| lo + (hi - lo) * i as f64 / (grid.n_r - 1) as f64).collect();
    let near = nearest(&rs, rp);
    rs[near] = rp;
    let mut ss: Vec<f64> = (0..grid.n_xi).map(|j| -0.99 + 1.98 * j as f64 / (grid.n_xi - 1) as f64).collect();
    let near = nearest(&ss, 0.0);
    ss[near] = 0.0;

    let d = params.n() - 1;
    let mut omega = DVector::zeros(d);
    omega[0] = 1.0;
    let mut out = Vec::with_capacity(rs.len() * ss.len());
    for &r in &rs {
        let delta = params.delta_r(r);
        let scale = r * r / delta * grid.z.abs();
        for &s in &ss {
            let mut eta = DVector::zeros(d);
            // |η|² = r⁴z²/Δ − Δ ξ² = (r⁴/Δ)(1 − s²)
            eta[1] = (r.powi(4) / delta * (1.0 - s * s)).sqrt() * grid.z.abs();
            out.push(PhasePoint { r, omega: omega.clone(), xi: s * scale, eta, z: grid.z });
        }
    }
    Ok(out)
}

fn nearest(xs: &[f64], target: f64) -> usize {
    xs.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

pub fn escape_scan(params: &SdsParams, grid: &EscapeGrid) -> Result<EscapeScan> {
    let rp = params.photon_radius();
    let points = escape_grid_points(params, grid)?;
    let mut scan = EscapeScan { checked: 0, critical: 0, exempt: 0, violations: Vec::new() };
    for x in &points {
        let (hp_f, hp2_f) = escape_derivatives(params, x)?;
        scan.checked += 1;
        let hp_r = 2.0 * params.delta_r(x.r) * x.xi;
        let tol = 1e-12 * rp * (1.0 + hp_r.abs());
        if hp_f.abs() > tol {
            continue;
        }
        scan.critical += 1;
        let on_gamma = (x.r - rp).abs() <= 1e-12 * rp && hp_r.abs() <= 1e-12;
        if on_gamma {
            scan.exempt += 1;
        } else if !(hp2_f > 0.0) {
            scan.violations.push(EscapeViolation { r: x.r, xi: x.xi, hp_f, hp2_f });
        }
    }
    Ok(scan)
}
