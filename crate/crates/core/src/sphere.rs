//! The round sphere `S^{n−2}` as the unit sphere of `R^{n−1}`.
//!
//! Points are unit vectors, tangent (co)vectors are ambient vectors orthogonal
//! to the base point. Coordinates, where needed, come from a gnomonic chart
//! `y ↦ (c + E y)/|c + E y|` with `E` an orthonormal frame of `c^⊥`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Projection of `v` onto the tangent space at the unit vector `omega`.
pub fn project_tangent(omega: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    v - omega * omega.dot(v)
}

/// Orthonormal basis of the orthogonal complement of `fixed` (orthonormal
/// vectors), obtained by Gram-Schmidt on the standard basis.
pub fn complete_orthonormal(fixed: &[DVector<f64>], dim: usize) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = fixed.to_vec();
    let mut out = Vec::new();
    for i in 0..dim {
        if basis.len() == dim {
            break;
        }
        let mut v = DVector::zeros(dim);
        v[i] = 1.0;
        // two passes keep the result orthogonal to working precision
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v -= b * d;
            }
        }
        let nv = v.norm();
        if nv > 1e-8 {
            v /= nv;
            basis.push(v.clone());
            out.push(v);
        }
    }
    out
}

/// Gnomonic chart of the unit sphere centred at `center`.
#[derive(Debug, Clone)]
pub struct GnomonicChart {
    center: DVector<f64>,
    frame: Vec<DVector<f64>>,
}

impl GnomonicChart {
    pub fn centered(center: &DVector<f64>) -> Result<Self> {
        let norm = center.norm();
        if !(norm > 0.0) || center.len() < 2 {
            return Err(Error::Input("chart centre must be a nonzero vector of length ≥ 2".into()));
        }
        let c = center / norm;
        let frame = complete_orthonormal(std::slice::from_ref(&c), c.len());
        Ok(Self { center: c, frame })
    }

    pub fn dim(&self) -> usize {
        self.frame.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn point(&self, y: &DVector<f64>) -> DVector<f64> {
        let v = self.raw(y);
        let n = v.norm();
        v / n
    }

    fn raw(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut v = self.center.clone();
        for (a, e) in self.frame.iter().enumerate() {
            v += e * y[a];
        }
        v
    }

    /// Chart coordinates of a point in the open hemisphere around the centre.
    pub fn coords(&self, omega: &DVector<f64>) -> Result<DVector<f64>> {
        let cw = self.center.dot(omega);
        if !(cw > 0.0) {
            return Err(Error::Domain("point is outside the chart hemisphere".into()));
        }
        Ok(DVector::from_iterator(self.dim(), self.frame.iter().map(|e| e.dot(omega) / cw)))
    }

    /// Columns `∂_a ω`.
    pub fn jacobian(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let v = self.raw(y);
        let rho = v.norm();
        let w = &v / rho;
        let mut j = DMatrix::zeros(w.len(), self.dim());
        for (a, e) in self.frame.iter().enumerate() {
            let col = (e - &w * w.dot(e)) / rho;
            j.set_column(a, &col);
        }
        j
    }

    /// Second derivatives `∂_a∂_b ω`, indexed `[a][b]`.
    pub fn hessian(&self, y: &DVector<f64>) -> Vec<Vec<DVector<f64>>> {
        let v = self.raw(y);
        let rho = v.norm();
        let w = &v / rho;
        let wc: Vec<f64> = self.frame.iter().map(|e| w.dot(e)).collect();
        let d = self.dim();
        let mut out = vec![vec![DVector::zeros(w.len()); d]; d];
        for a in 0..d {
            for b in 0..d {
                let delta = if a == b { 1.0 } else { 0.0 };
                let term = (&self.frame[a] - &w * wc[a]) * wc[b]
                    + (&self.frame[b] - &w * wc[b]) * wc[a]
                    + &w * (delta - wc[a] * wc[b]);
                out[a][b] = -term / (rho * rho);
            }
        }
        out
    }

    /// Round metric `(dω²)_{ab}` in chart coordinates.
    pub fn metric(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let j = self.jacobian(y);
        j.transpose() * j
    }

    /// Christoffel symbols of the round metric, `[k][(a, b)]`, from the
    /// induced connection `Γ_{k,ab} = ⟨∂_k ω, ∂_a∂_b ω⟩`.
    pub fn christoffel(&self, y: &DVector<f64>) -> Vec<DMatrix<f64>> {
        let j = self.jacobian(y);
        let hess = self.hessian(y);
        let g_inv = (j.transpose() * &j)
            .try_inverse()
            .expect("gnomonic metric is positive definite");
        let d = self.dim();
        let mut lowered = vec![DMatrix::zeros(d, d); d];
        for (l, low) in lowered.iter_mut().enumerate() {
            let dl = j.column(l);
            for a in 0..d {
                for b in 0..d {
                    low[(a, b)] = dl.dot(&hess[a][b]);
                }
            }
        }
        (0..d)
            .map(|k| {
                let mut m = DMatrix::zeros(d, d);
                for (l, low) in lowered.iter().enumerate() {
                    m += low * g_inv[(k, l)];
                }
                m
            })
            .collect()
    }
}

/// State of the `|η|²` Hamilton flow on `T*S^{n−2}`: `ω̇ = 2η`, `η̇ = −2|η|²ω`.
pub fn geodesic_rhs(omega: &DVector<f64>, eta: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    (eta * 2.0, omega * (-2.0 * eta.norm_squared()))
}

/// Restores `|ω| = 1` and `η ⊥ ω` after a numerical step.
pub fn renormalize(omega: &mut DVector<f64>, eta: &mut DVector<f64>) {
    let n = omega.norm();
    *omega /= n;
    let d = eta.dot(omega);
    *eta -= &*omega * d;
}

fn check_unit_tangent(omega: &DVector<f64>, eta: &DVector<f64>) -> Result<()> {
    if omega.len() != eta.len() {
        return Err(Error::Input("omega and eta have different lengths".into()));
    }
    if (omega.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Input("omega must be a unit vector".into()));
    }
    if eta.dot(omega).abs() > 1e-12 * eta.norm().max(1.0) {
        return Err(Error::Input("eta must be orthogonal to omega".into()));
    }
    Ok(())
}

/// Step size used by [`sphere_transport`].
pub const TRANSPORT_DT: f64 = 1e-3;

/// Parallel transport of the tangent vector `v0` along the `|η|²` flow line
/// starting at `(omega0, eta)` for time `t`: `v̇ = −(v·ω̇) ω`.
pub fn sphere_transport(
    omega0: &DVector<f64>,
    eta: &DVector<f64>,
    t: f64,
    v0: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_unit_tangent(omega0, eta)?;
    if v0.len() != omega0.len() || v0.dot(omega0).abs() > 1e-12 * v0.norm().max(1.0) {
        return Err(Error::Input("v0 must be tangent at omega0".into()));
    }
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Input("transport time must be finite and non-negative".into()));
    }
    let steps = (t / TRANSPORT_DT).ceil() as usize;
    let (mut w, mut e, mut v) = (omega0.clone(), eta.clone(), v0.clone());
    if steps == 0 {
        return Ok(v);
    }
    let h = t / steps as f64;
    let rhs = |w: &DVector<f64>, e: &DVector<f64>, v: &DVector<f64>| {
        let (dw, de) = geodesic_rhs(w, e);
        let dv = w * (-v.dot(&dw));
        (dw, de, dv)
    };
    for _ in 0..steps {
        let (a1, b1, c1) = rhs(&w, &e, &v);
        let (a2, b2, c2) = rhs(&(&w + &a1 * (0.5 * h)), &(&e + &b1 * (0.5 * h)), &(&v + &c1 * (0.5 * h)));
        let (a3, b3, c3) = rhs(&(&w + &a2 * (0.5 * h)), &(&e + &b2 * (0.5 * h)), &(&v + &c2 * (0.5 * h)));
        let (a4, b4, c4) = rhs(&(&w + &a3 * h), &(&e + &b3 * h), &(&v + &c3 * h));
        w += (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0);
        e += (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0);
        v += (c1 + c2 * 2.0 + c3 * 2.0 + c4) * (h / 6.0);
        renormalize(&mut w, &mut e);
        let d = v.dot(&w);
        v -= &w * d;
    }
    Ok(v)
}

/// Point and covector reached by the `|η|²` flow after time `t` (closed form:
/// rotation in the plane of `ω` and `η` at angular speed `2|η|`).
pub fn geodesic_closed_form(
    omega0: &DVector<f64>,
    eta0: &DVector<f64>,
    t: f64,
) -> (DVector<f64>, DVector<f64>) {
    let e = eta0.norm();
    if e == 0.0 {
        return (omega0.clone(), eta0.clone());
    }
    let (s, c) = (2.0 * e * t).sin_cos();
    let hat = eta0 / e;
    (omega0 * c + &hat * s, (&hat * c - omega0 * s) * e)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_vec(xs.to_vec())
    }

    #[test]
    fn chart_roundtrip_and_center() {
        let chart = GnomonicChart::centered(&v(&[1.0, 2.0, 2.0])).unwrap();
        let y = v(&[0.3, -0.2]);
        let w = chart.point(&y);
        assert!((w.norm() - 1.0).abs() < 1e-15);
        let back = chart.coords(&w).unwrap();
        assert!((back - y).norm() < 1e-14);
        let g0 = chart.metric(&DVector::zeros(2));
        assert!((g0 - DMatrix::identity(2, 2)).norm() < 1e-15);
    }

    #[test]
    fn jacobian_and_hessian_match_finite_differences() {
        let chart = GnomonicChart::centered(&v(&[0.2, -0.5, 0.7, 0.1])).unwrap();
        let y = v(&[0.15, -0.3, 0.2]);
        let h = 1e-5;
        let j = chart.jacobian(&y);
        let hess = chart.hessian(&y);
        for a in 0..3 {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[a] += h;
            ym[a] -= h;
            let fd = (chart.point(&yp) - chart.point(&ym)) / (2.0 * h);
            assert!((fd - j.column(a)).norm() < 1e-9);
            let jp = chart.jacobian(&yp);
            let jm = chart.jacobian(&ym);
            for b in 0..3 {
                let fd2 = (jp.column(b) - jm.column(b)) / (2.0 * h);
                assert!((fd2 - &hess[a][b]).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn closed_form_geodesic_stays_on_sphere() {
        let w0 = v(&[1.0, 0.0, 0.0]);
        let e0 = v(&[0.0, 0.7, 0.0]);
        let (w, e) = geodesic_closed_form(&w0, &e0, 3.1);
        assert!((w.norm() - 1.0).abs() < 1e-15);
        assert!(w.dot(&e).abs() < 1e-15);
        assert!((e.norm() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn transport_rejects_bad_input() {
        let w0 = v(&[1.0, 0.0, 0.0]);
        let e0 = v(&[0.0, 1.0, 0.0]);
        assert!(sphere_transport(&w0, &e0, 1.0, &v(&[1.0, 0.0, 0.0])).is_err());
        assert!(sphere_transport(&v(&[2.0, 0.0, 0.0]), &e0, 1.0, &e0).is_err());
        assert!(sphere_transport(&w0, &e0, -1.0, &e0).is_err());
    }

    #[test]
    fn complement_is_orthonormal() {
        let a = v(&[0.0, 0.6, 0.8, 0.0]);
        let rest = complete_orthonormal(std::slice::from_ref(&a), 4);
        assert_eq!(rest.len(), 3);
        for (i, x) in rest.iter().enumerate() {
            assert!(x.dot(&a).abs() < 1e-15);
            for y in &rest[i + 1..] {
                assert!(x.dot(y).abs() < 1e-15);
            }
        }
    }
}
