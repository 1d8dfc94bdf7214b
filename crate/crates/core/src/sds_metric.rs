//! Closed-form geometry of n-dimensional Schwarzschild-de Sitter space.
//!
//! The static region is `R_t × (r_-, r_+) × S^{n-2}` with
//! `g = μ dt² − (μ⁻¹ dr² + r² dω²)` and `μ = 1 − 2M/r^{n−3} − λ r²`,
//! `λ = 2Λ/((n−2)(n−1))`. Angular directions are handled through a
//! gnomonic chart of the sphere embedded in `R^{n−1}` (see [`crate::sphere`]).

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sphere::GnomonicChart;

/// Relative tolerance used to terminate horizon root finding.
pub const ROOT_TOL: f64 = 1e-13;

/// Mass, cosmological constant and spacetime dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SdsParams {
    n: usize,
    mass: f64,
    lambda_cosmo: f64,
    lambda: f64,
}

/// Outcome of the nondegeneracy test `M² λ^{n−3} < (n−3)^{n−3} / (n−1)^{n−1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Validity {
    pub valid: bool,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`; positive exactly when the parameters admit two horizons.
    pub margin: f64,
}

/// Metric scalars evaluated at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricValues {
    pub r: f64,
    pub mu: f64,
    pub mu_prime: f64,
    pub tilde_mu: f64,
    pub tilde_mu_prime: f64,
    pub delta_r: f64,
    /// `√μ`, present only where `μ > 0`.
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhotonSphere {
    pub r_p: f64,
    /// `Ψ = α/r` at the photon sphere.
    pub psi_p: f64,
}

impl SdsParams {
    /// Builds parameters from the cosmological constant `Λ`.
    pub fn new(n: usize, mass: f64, lambda_cosmo: f64) -> Result<Self> {
        if !mass.is_finite() || !lambda_cosmo.is_finite() {
            return Err(Error::Input("mass and cosmological constant must be finite".into()));
        }
        if n < 4 {
            return Err(Error::Input(format!("dimension must be at least 4, got {n}")));
        }
        if mass <= 0.0 || lambda_cosmo <= 0.0 {
            return Err(Error::Input(
                "mass and cosmological constant must be positive".into(),
            ));
        }
        let lambda = 2.0 * lambda_cosmo / (((n - 2) * (n - 1)) as f64);
        Ok(Self { n, mass, lambda_cosmo, lambda })
    }

    /// Builds parameters from the reduced constant `λ` directly.
    pub fn with_reduced_lambda(n: usize, mass: f64, lambda: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::Input(format!("dimension must be at least 4, got {n}")));
        }
        let lambda_cosmo = lambda * (((n - 2) * (n - 1)) as f64) / 2.0;
        let mut p = Self::new(n, mass, lambda_cosmo)?;
        p.lambda = lambda;
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn lambda_cosmo(&self) -> f64 {
        self.lambda_cosmo
    }

    /// Reduced cosmological constant `λ = 2Λ/((n−2)(n−1))`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Exponent `n − 3` of the mass term.
    fn m(&self) -> i32 {
        (self.n - 3) as i32
    }

    pub fn validate(&self) -> Validity {
        let m = self.m();
        let lhs = self.mass * self.mass * self.lambda.powi(m);
        let rhs = ((self.n - 3) as f64).powi(m) / ((self.n - 1) as f64).powi(self.n as i32 - 1);
        Validity { valid: lhs < rhs, lhs, rhs, margin: rhs - lhs }
    }

    /// Reduced constant at which the two horizons merge for this mass and dimension.
    pub fn critical_lambda(&self) -> f64 {
        let rp = self.photon_radius();
        (self.n - 3) as f64 / ((self.n - 1) as f64 * rp * rp)
    }

    /// `r_p = ((n−1)M)^{1/(n−3)}`; defined for any parameters.
    pub fn photon_radius(&self) -> f64 {
        ((self.n - 1) as f64 * self.mass).powf(1.0 / self.m() as f64)
    }

    pub fn mu(&self, r: f64) -> f64 {
        1.0 - 2.0 * self.mass / r.powi(self.m()) - self.lambda * r * r
    }

    pub fn mu_prime(&self, r: f64) -> f64 {
        let m = self.m();
        2.0 * m as f64 * self.mass / r.powi(m + 1) - 2.0 * self.lambda * r
    }

    pub fn tilde_mu(&self, r: f64) -> f64 {
        1.0 / (r * r) - 2.0 * self.mass / r.powi(self.n as i32 - 1) - self.lambda
    }

    /// `μ̃′ = −2 r^{−n} (r^{n−3} − r_p^{n−3})`, with the bracket expanded as
    /// `(r − r_p) Σ r^k r_p^{n−4−k}` so that it vanishes exactly at `r = r_p`.
    pub fn tilde_mu_prime(&self, r: f64) -> f64 {
        let rp = self.photon_radius();
        let m = self.n - 3;
        let sum: f64 = (0..m).map(|k| r.powi(k as i32) * rp.powi((m - 1 - k) as i32)).sum();
        -2.0 * (r - rp) * sum / r.powi(self.n as i32)
    }

    pub fn tilde_mu_second(&self, r: f64) -> f64 {
        let n = self.n as i32;
        6.0 / r.powi(4) - 2.0 * (n * (n - 1)) as f64 * self.mass / r.powi(n + 1)
    }

    /// `Δ_r = r² μ`.
    pub fn delta_r(&self, r: f64) -> f64 {
        r * r - self.lambda * r.powi(4) - 2.0 * self.mass * r.powi(5 - self.n as i32)
    }

    pub fn delta_r_prime(&self, r: f64) -> f64 {
        let k = 5 - self.n as i32;
        2.0 * r - 4.0 * self.lambda * r.powi(3) - 2.0 * k as f64 * self.mass * r.powi(k - 1)
    }

    pub fn delta_r_second(&self, r: f64) -> f64 {
        let k = 5 - self.n as i32;
        2.0 - 12.0 * self.lambda * r * r
            - 2.0 * (k * (k - 1)) as f64 * self.mass * r.powi(k - 2)
    }

    /// `α′ = μ′ / (2α)`; requires `μ(r) > 0`.
    pub fn alpha_prime(&self, r: f64) -> Result<f64> {
        let mu = self.mu(r);
        if !(mu > 0.0) {
            return Err(Error::Domain(format!("mu({r}) = {mu} is not positive")));
        }
        Ok(self.mu_prime(r) / (2.0 * mu.sqrt()))
    }

    pub fn metric_values(&self, r: f64) -> Result<MetricValues> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(Error::Domain(format!("radius must be positive, got {r}")));
        }
        let mu = self.mu(r);
        Ok(MetricValues {
            r,
            mu,
            mu_prime: self.mu_prime(r),
            tilde_mu: self.tilde_mu(r),
            tilde_mu_prime: self.tilde_mu_prime(r),
            delta_r: self.delta_r(r),
            alpha: (mu > 0.0).then(|| mu.sqrt()),
        })
    }

    fn require_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.valid {
            Ok(())
        } else {
            Err(Error::NoHorizon { margin: v.margin })
        }
    }

    pub fn photon_sphere(&self) -> Result<PhotonSphere> {
        self.require_valid()?;
        let r_p = self.photon_radius();
        Ok(PhotonSphere { r_p, psi_p: self.mu(r_p).sqrt() / r_p })
    }

    /// Black hole and cosmological horizons `(r_-, r_+)`.
    pub fn horizons(&self) -> Result<(f64, f64)> {
        self.require_valid()?;
        let rp = self.photon_radius();
        let mut lo = 0.5 * rp;
        while self.mu(lo) >= 0.0 {
            lo *= 0.5;
        }
        let r_big = 2.0 / self.lambda.sqrt();
        let r_minus = self.refine_root(lo, rp)?;
        let r_plus = self.refine_root(rp, r_big.max(2.0 * rp))?;
        Ok((r_minus, r_plus))
    }

    /// Bisection on a sign-changing bracket of `μ`, finished with guarded Newton steps.
    fn refine_root(&self, a: f64, b: f64) -> Result<f64> {
        let (mut lo, mut hi) = (a, b);
        let f_lo = self.mu(lo);
        if f_lo * self.mu(hi) > 0.0 {
            return Err(Error::Internal(format!("bracket [{a}, {b}] does not change sign")));
        }
        let lo_negative = f_lo < 0.0;
        for _ in 0..200 {
            if hi - lo <= 1e-9 * hi {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if (self.mu(mid) < 0.0) == lo_negative {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let mut r = 0.5 * (lo + hi);
        for _ in 0..50 {
            let d = self.mu_prime(r);
            if d == 0.0 {
                break;
            }
            let next = r - self.mu(r) / d;
            if !(next > lo && next < hi) {
                break;
            }
            let step = (next - r).abs();
            r = next;
            if step <= ROOT_TOL * r {
                break;
            }
        }
        Ok(r)
    }

    /// `β_± = ∓2/μ′` evaluated at the respective horizon.
    pub fn beta_pm(&self) -> Result<(f64, f64)> {
        let (rm, rp) = self.horizons()?;
        Ok((2.0 / self.mu_prime(rm), -2.0 / self.mu_prime(rp)))
    }

    fn require_static(&self, r: f64) -> Result<f64> {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("radius must be positive, got {r}")));
        }
        let mu = self.mu(r);
        if !(mu > 0.0) {
            return Err(Error::Domain(format!("mu({r}) = {mu} is not positive")));
        }
        Ok(mu.sqrt())
    }

    /// Christoffel symbols of the spatial metric `h = α⁻² dr² + r² dω²` in
    /// coordinates `(r, y)`, `y` the gnomonic chart centred at `omega`.
    pub fn christoffel_spatial(&self, r: f64, omega: &DVector<f64>) -> Result<ChristoffelTable> {
        let chart = GnomonicChart::centered(omega)?;
        self.christoffel_spatial_in_chart(r, omega, &chart)
    }

    pub fn christoffel_spatial_in_chart(
        &self,
        r: f64,
        omega: &DVector<f64>,
        chart: &GnomonicChart,
    ) -> Result<ChristoffelTable> {
        let alpha = self.require_static(r)?;
        let alpha_p = self.alpha_prime(r)?;
        let y = chart.coords(omega)?;
        let g_sphere = chart.metric(&y);
        let gamma_sphere = chart.christoffel(&y);
        let d = self.n - 1;
        let mut t = ChristoffelTable::zeros(d, IndexConvention::Spatial);
        // index 0 is r, 1..d are chart coordinates
        t.set_sym(0, 0, 0, -alpha_p / alpha);
        for a in 0..d - 1 {
            for b in 0..d - 1 {
                t.set_sym(0, a + 1, b + 1, -r * alpha * alpha * g_sphere[(a, b)]);
                for k in 0..d - 1 {
                    t.set_sym(k + 1, a + 1, b + 1, gamma_sphere[k][(a, b)]);
                }
            }
            t.set_sym(a + 1, a + 1, 0, 1.0 / r);
        }
        Ok(t)
    }

    /// Christoffel symbols of `g = α² dt² − h` in coordinates `(t, r, y)`.
    pub fn christoffel_spacetime(&self, r: f64, omega: &DVector<f64>) -> Result<ChristoffelTable> {
        let chart = GnomonicChart::centered(omega)?;
        self.christoffel_spacetime_in_chart(r, omega, &chart)
    }

    pub fn christoffel_spacetime_in_chart(
        &self,
        r: f64,
        omega: &DVector<f64>,
        chart: &GnomonicChart,
    ) -> Result<ChristoffelTable> {
        let alpha = self.require_static(r)?;
        let alpha_p = self.alpha_prime(r)?;
        let spatial = self.christoffel_spatial_in_chart(r, omega, chart)?;
        let d = self.n;
        let mut t = ChristoffelTable::zeros(d, IndexConvention::Spacetime);
        t.set_sym(0, 1, 0, alpha_p / alpha);
        // h^{rr} = α²
        t.set_sym(1, 0, 0, alpha * alpha * alpha * alpha_p);
        for k in 0..d - 1 {
            for i in 0..d - 1 {
                for j in 0..d - 1 {
                    t.set(k + 1, i + 1, j + 1, spatial.get(k, i, j));
                }
            }
        }
        Ok(t)
    }

    /// Spatial metric components `h_{ij}` at `(r, y)`.
    pub fn spatial_metric(&self, r: f64, y: &DVector<f64>, chart: &GnomonicChart) -> nalgebra::DMatrix<f64> {
        let d = self.n - 1;
        let gs = chart.metric(y);
        let mut h = nalgebra::DMatrix::zeros(d, d);
        h[(0, 0)] = 1.0 / self.mu(r);
        for a in 0..d - 1 {
            for b in 0..d - 1 {
                h[(a + 1, b + 1)] = r * r * gs[(a, b)];
            }
        }
        h
    }

    /// Spacetime metric components `g_{μν}` at `(r, y)` (time-independent).
    pub fn spacetime_metric(&self, r: f64, y: &DVector<f64>, chart: &GnomonicChart) -> nalgebra::DMatrix<f64> {
        let d = self.n;
        let h = self.spatial_metric(r, y, chart);
        let mut g = nalgebra::DMatrix::zeros(d, d);
        g[(0, 0)] = self.mu(r);
        for i in 0..d - 1 {
            for j in 0..d - 1 {
                g[(i + 1, j + 1)] = -h[(i, j)];
            }
        }
        g
    }
}

/// Free-function form of [`SdsParams::validate`].
pub fn validate_params(p: &SdsParams) -> Validity {
    p.validate()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum IndexConvention {
    /// `0 = t`, `1 = r`, `2.. =` sphere chart.
    Spacetime,
    /// `0 = r`, `1.. =` sphere chart.
    Spatial,
}

/// `Γ^k_{ij}` at one base point, stored densely as `[k][i][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChristoffelTable {
    dim: usize,
    convention: IndexConvention,
    data: Vec<f64>,
}

impl ChristoffelTable {
    fn zeros(dim: usize, convention: IndexConvention) -> Self {
        Self { dim, convention, data: vec![0.0; dim * dim * dim] }
    }

    fn idx(&self, k: usize, i: usize, j: usize) -> usize {
        (k * self.dim + i) * self.dim + j
    }

    fn set(&mut self, k: usize, i: usize, j: usize, v: f64) {
        let at = self.idx(k, i, j);
        self.data[at] = v;
    }

    fn set_sym(&mut self, k: usize, i: usize, j: usize, v: f64) {
        self.set(k, i, j, v);
        self.set(k, j, i, v);
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[self.idx(k, i, j)]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn convention(&self) -> IndexConvention {
        self.convention
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|k| {
            (0..self.dim).all(|i| (0..self.dim).all(|j| self.get(k, i, j) == self.get(k, j, i)))
        })
    }
}
