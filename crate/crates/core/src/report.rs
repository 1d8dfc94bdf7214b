//! Full verification run: every module pipeline, a JSON report with one
//! verdict per acceptance item, and trajectory CSVs.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::hamiltonian_flow::{
    default_trapped_point, escape_scan, integrate, linearization, lyapunov_normal_from, perturbed_point,
    tangential_rate, trapped_point, EscapeGrid, ExitSide, IntegrateOptions, Trajectory,
};
use crate::linalg::{c, CMatrix};
use crate::psi_inner::{
    factorization_residual, jordan_example, ode_factorize, ode_factorize_until, random_matrix, random_positive_form,
    richardson, tensor_power,
};
use crate::sds_metric::SdsParams;
use crate::subprincipal::{
    check_b0_symmetry, check_g_symmetry, conjugated_im_norm, conjugated_s, conjugated_target, conjugator_q,
    display_factor, generator_max_real_eigenvalue, nilpotency, normal_perturbation, random_gamma_points,
    transport_growth, GammaPointData,
};
use crate::trajectory_csv::dump_trajectory_csv;

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";
/// Target for the drift of `p` along integrated trajectories.
pub const CONSERVATION_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Smaller samples and shorter horizons for a fast smoke run.
    pub quick: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NuCandidates {
    pub linearization_eigenvalue: f64,
    pub nu_min_closed_form: f64,
    pub eigenvalue_over_nu_min: f64,
    pub r_p_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonSweep {
    pub parameter_sets: usize,
    pub max_abs_mu_at_roots: f64,
    pub max_rel_disagreement_with_bisection: f64,
    pub merge_gaps: Vec<f64>,
    pub merge_monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryBlock {
    pub n: usize,
    pub mass: f64,
    pub lambda_cosmo: f64,
    pub lambda: f64,
    pub nondegeneracy_margin: f64,
    pub critical_lambda: f64,
    pub r_minus: f64,
    pub r_plus: f64,
    pub r_p: f64,
    pub psi_p: f64,
    pub beta_minus: f64,
    pub beta_plus: f64,
    pub nu_candidates: NuCandidates,
    pub photon_sphere_sweep_max_rel_error: f64,
    pub horizon_sweep: HorizonSweep,
    pub linearization_rel_error: f64,
    /// `n = 4` only: disagreement with `6M (3/(1 − 27M²λ))^{1/2}`; zero otherwise.
    pub four_dim_specialization_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaTrajectorySummary {
    pub samples: usize,
    pub max_r_deviation: f64,
    pub max_abs_xi: f64,
    pub p_drift: f64,
    pub eta_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub delta: f64,
    pub samples: usize,
    pub exited: bool,
    pub exit_time: f64,
    pub exit_side: String,
    pub side_matches_sign: bool,
    pub p_drift: f64,
    pub eta_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeSummary {
    pub checked: usize,
    pub critical: usize,
    pub exempt: usize,
    pub violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsBlock {
    pub t_final: f64,
    pub dt: f64,
    pub lyapunov_rate: f64,
    pub lyapunov_rel_error: f64,
    pub lyapunov_window_samples: usize,
    pub lyapunov_direction_spread: f64,
    pub tangential_rate: f64,
    pub escape: EscapeSummary,
    pub gamma_trajectory: GammaTrajectorySummary,
    pub perturbed: Vec<SeedOutcome>,
    pub max_p_drift: f64,
    pub max_eta_drift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NilpotencySummary {
    pub points: usize,
    pub max_cube_rel: f64,
    pub min_square_max_entry: f64,
    pub max_eigenvalue_modulus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymmetrySummary {
    pub max_g_residual_rel: f64,
    pub min_b0_residual_rel: f64,
    pub off_gamma_g_residual_rel: f64,
    pub off_gamma_cube_rel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConjugationEntry {
    pub eps: f64,
    pub max_error: f64,
    pub max_inverse_defect: f64,
    pub im_norm_ratio: f64,
    pub ratio_over_eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapBound {
    pub nu: f64,
    pub half_nu: f64,
    /// Largest `10^{-j}`, `j ≥ 0`, with `κ ε < ν/2`.
    pub eps0: f64,
    /// `ν / (2κ)`.
    pub eps_critical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportSummary {
    pub t_final: f64,
    pub unperturbed_loglog_slope: f64,
    pub unperturbed_final_norm: f64,
    pub perturbation_strength: f64,
    pub perturbed_rate: f64,
    pub generator_max_real_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubprincipalBlock {
    pub nilpotency: NilpotencySummary,
    pub symmetry: SymmetrySummary,
    pub conjugation: Vec<ConjugationEntry>,
    pub kappa: f64,
    pub kappa_closed_form: f64,
    pub kappa_spread: f64,
    pub gap_eigenvalue_normalization: GapBound,
    pub gap_nu_min_normalization: GapBound,
    pub display_factor: f64,
    pub transport: TransportSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FactorizationSummary {
    pub instances: usize,
    pub steps: usize,
    pub max_residual: f64,
    pub midpoint_max_residual: f64,
    pub richardson_coarse_steps: usize,
    pub richardson_ratio_min: f64,
    pub richardson_ratio_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorRankSummary {
    pub k: usize,
    pub instances: usize,
    pub max_excess: f64,
    pub max_norm_over_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JordanSummary {
    pub max_n: usize,
    pub eps_values: Vec<f64>,
    pub max_norm_over_eps: f64,
    pub max_eigenvalue_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsiInnerBlock {
    pub factorization: FactorizationSummary,
    pub tensor: Vec<TensorRankSummary>,
    pub tensor_max_excess: f64,
    pub jordan: JordanSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub id: u32,
    pub key: String,
    pub status: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Anchor {
    pub id: u32,
    pub claim: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub quick: bool,
    pub config: RunConfig,
    pub geometry: GeometryBlock,
    pub dynamics: DynamicsBlock,
    pub subprincipal: SubprincipalBlock,
    pub psi_inner: PsiInnerBlock,
    pub verdicts: Vec<Verdict>,
    pub anchors: Vec<Anchor>,
    pub warnings: Vec<String>,
    pub all_passed: bool,
}

impl RunReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    /// Errors if any numeric field is non-finite (serialized as `null`).
    pub fn check_finite(&self) -> Result<()> {
        let v = serde_json::to_value(self).map_err(|e| Error::Internal(e.to_string()))?;
        match find_null(&v, "") {
            Some(path) => Err(Error::Internal(format!("non-finite value at {path}"))),
            None => Ok(()),
        }
    }

    pub fn failed(&self) -> Vec<&Verdict> {
        self.verdicts.iter().filter(|v| v.status != "pass").collect()
    }
}

fn find_null(v: &serde_json::Value, path: &str) -> Option<String> {
    match v {
        serde_json::Value::Null => Some(path.to_string()),
        serde_json::Value::Array(xs) => {
            xs.iter().enumerate().find_map(|(i, x)| find_null(x, &format!("{path}[{i}]")))
        }
        serde_json::Value::Object(m) => m.iter().find_map(|(k, x)| find_null(x, &format!("{path}.{k}"))),
        _ => None,
    }
}

/// Report plus the trajectories it summarizes.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub params: SdsParams,
    pub trajectories: Vec<(String, Trajectory)>,
}

struct Sizes {
    gamma_points: usize,
    factor_pairs: usize,
    tensor_instances: usize,
    escape: usize,
    seeds: usize,
    t_final: f64,
    jordan_max: usize,
}

fn sizes(cfg: &RunConfig, quick: bool) -> Sizes {
    if quick {
        Sizes {
            gamma_points: 20,
            factor_pairs: 10,
            tensor_instances: 50,
            escape: 40,
            seeds: cfg.seeds.min(4),
            t_final: cfg.t_final.min(10.0),
            jordan_max: 10,
        }
    } else {
        Sizes {
            gamma_points: 100,
            factor_pairs: 100,
            tensor_instances: 500,
            escape: 100,
            seeds: cfg.seeds,
            t_final: cfg.t_final,
            jordan_max: 20,
        }
    }
}

fn sub_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn bisect_root(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if (f(m) > 0.0) == (fa > 0.0) {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

fn geometry_block(p: &SdsParams) -> Result<GeometryBlock> {
    let (r_minus, r_plus) = p.horizons()?;
    let ps = p.photon_sphere()?;
    let (beta_minus, beta_plus) = p.beta_pm()?;
    let lin = linearization(p, 1.0)?;
    let lin_err = rel(lin.eigenvalues_numeric[1], lin.eigenvalue_closed)
        .max(rel(-lin.eigenvalues_numeric[0], lin.eigenvalue_closed));
    let four = if p.n() == 4 {
        let m = p.mass();
        let special = 6.0 * m * (3.0 / (1.0 - 27.0 * m * m * p.lambda())).sqrt();
        rel(lin.eigenvalue_closed, special)
    } else {
        0.0
    };

    let mut photon_err = 0.0_f64;
    for n in 4..=7 {
        for m in [0.5, 1.0, 2.0] {
            let lc = SdsParams::with_reduced_lambda(n, m, 1e-12)?.critical_lambda();
            let q = SdsParams::with_reduced_lambda(n, m, 0.5 * lc)?;
            let closed = ((n as f64 - 1.0) * m).powf(1.0 / (n as f64 - 3.0));
            photon_err = photon_err.max(rel(q.photon_sphere()?.r_p, closed));
        }
    }

    let mut max_mu = 0.0_f64;
    let mut max_dis = 0.0_f64;
    let mut sets = 0;
    for n in 4..=7 {
        for (i, frac) in [0.05, 0.25, 0.5, 0.75, 0.95].into_iter().enumerate() {
            let m = [0.5, 1.0, 2.0, 1.0, 0.5][i];
            let lc = SdsParams::with_reduced_lambda(n, m, 1e-12)?.critical_lambda();
            let q = SdsParams::with_reduced_lambda(n, m, frac * lc)?;
            let (a, b) = q.horizons()?;
            let rp = q.photon_radius();
            let f = |r: f64| q.mu(r);
            let lo = bisect_root(f, 1e-6 * rp, rp);
            let hi = bisect_root(f, rp, 1e3 * rp.max(1.0 / (frac * lc).sqrt()));
            max_mu = max_mu.max(q.mu(a).abs()).max(q.mu(b).abs());
            max_dis = max_dis.max(rel(a, lo)).max(rel(b, hi));
            sets += 1;
        }
    }
    let lc = p.critical_lambda();
    let mut gaps = Vec::new();
    for frac in [0.5, 0.9, 0.99, 0.999, 0.9999] {
        let q = SdsParams::with_reduced_lambda(p.n(), p.mass(), frac * lc)?;
        let (a, b) = q.horizons()?;
        gaps.push(b - a);
    }
    let monotone = gaps.windows(2).all(|w| w[1] < w[0]);

    Ok(GeometryBlock {
        n: p.n(),
        mass: p.mass(),
        lambda_cosmo: p.lambda_cosmo(),
        lambda: p.lambda(),
        nondegeneracy_margin: p.validate().margin,
        critical_lambda: lc,
        r_minus,
        r_plus,
        r_p: ps.r_p,
        psi_p: ps.psi_p,
        beta_minus,
        beta_plus,
        nu_candidates: NuCandidates {
            linearization_eigenvalue: lin.eigenvalue_closed,
            nu_min_closed_form: lin.nu_min_closed,
            eigenvalue_over_nu_min: lin.eigenvalue_closed / lin.nu_min_closed,
            r_p_squared: ps.r_p * ps.r_p,
        },
        photon_sphere_sweep_max_rel_error: photon_err,
        horizon_sweep: HorizonSweep {
            parameter_sets: sets,
            max_abs_mu_at_roots: max_mu,
            max_rel_disagreement_with_bisection: max_dis,
            merge_gaps: gaps,
            merge_monotone: monotone,
        },
        linearization_rel_error: lin_err,
        four_dim_specialization_rel_error: four,
    })
}

fn side_name(side: ExitSide) -> String {
    match side {
        ExitSide::BlackHole => "black_hole".into(),
        ExitSide::Cosmological => "cosmological".into(),
    }
}

fn dynamics_block(
    p: &SdsParams,
    cfg: &RunConfig,
    sz: &Sizes,
    warnings: &mut Vec<String>,
    trajectories: &mut Vec<(String, Trajectory)>,
) -> Result<DynamicsBlock> {
    let lin = linearization(p, 1.0)?;
    let seed = default_trapped_point(p, 1.0)?;
    let t = sz.t_final;
    let ly = lyapunov_normal_from(p, &seed, t, cfg.dt)?;
    if let Some(w) = &ly.warning {
        warnings.push(format!("lyapunov: {w}"));
    }
    // second run from a different direction on Γ
    let d = p.n() - 1;
    let other = trapped_point(
        p,
        &DVector::from_fn(d, |i, _| 1.0 + i as f64),
        &DVector::from_fn(d, |i, _| if i % 2 == 0 { -1.0 } else { 0.5 }),
        -1.0,
    )?;
    let ly2 = lyapunov_normal_from(p, &other, t, cfg.dt)?;
    let tang = tangential_rate(p, &seed, t, cfg.dt)?;
    let grid = EscapeGrid { n_r: sz.escape, n_xi: sz.escape, z: 1.0 };
    let esc = escape_scan(p, &grid)?;

    let gamma = integrate(p, &seed, IntegrateOptions { t_final: t, dt: cfg.dt, variational: false })?;
    let rp = p.photon_radius();
    let gsum = GammaTrajectorySummary {
        samples: gamma.samples.len(),
        max_r_deviation: gamma.samples.iter().fold(0.0_f64, |a, s| a.max((s.point.r - rp).abs())),
        max_abs_xi: gamma.samples.iter().fold(0.0_f64, |a, s| a.max(s.point.xi.abs())),
        p_drift: gamma.p_drift,
        eta_drift: gamma.eta_drift,
    };
    let (mut max_p, mut max_eta) = (gamma.p_drift, gamma.eta_drift);
    trajectories.push(("trajectory_gamma.csv".into(), gamma));

    let mut rng = sub_rng(cfg.seed, 1);
    let mut perturbed = Vec::with_capacity(sz.seeds);
    for i in 0..sz.seeds {
        let mag = 10f64.powf(rng.gen_range(-3.0..-1.0));
        let delta = if rng.gen_bool(0.5) { mag } else { -mag };
        let x = perturbed_point(p, delta, 1.0)?;
        let tr = integrate(p, &x, IntegrateOptions { t_final: t, dt: cfg.dt, variational: false })?;
        let (exited, exit_time, side, matches) = match tr.exit {
            Some(e) => {
                let expect = if delta > 0.0 { ExitSide::Cosmological } else { ExitSide::BlackHole };
                (true, e.t, side_name(e.side), e.side == expect)
            }
            None => (false, t, "none".to_string(), false),
        };
        max_p = max_p.max(tr.p_drift);
        max_eta = max_eta.max(tr.eta_drift);
        perturbed.push(SeedOutcome {
            delta,
            samples: tr.samples.len(),
            exited,
            exit_time,
            exit_side: side,
            side_matches_sign: matches,
            p_drift: tr.p_drift,
            eta_drift: tr.eta_drift,
        });
        trajectories.push((format!("trajectory_seed_{i:03}.csv"), tr));
    }

    if max_p > CONSERVATION_TOL {
        warnings.push(format!(
            "conservation: max |p| drift {max_p:e} exceeds {CONSERVATION_TOL:e}; largest on escaping seeds near a horizon"
        ));
    }
    Ok(DynamicsBlock {
        t_final: t,
        dt: cfg.dt,
        lyapunov_rate: ly.rate,
        lyapunov_rel_error: rel(ly.rate, lin.eigenvalue_closed),
        lyapunov_window_samples: ly.window_samples,
        lyapunov_direction_spread: rel(ly2.rate, ly.rate),
        tangential_rate: tang,
        escape: EscapeSummary {
            checked: esc.checked,
            critical: esc.critical,
            exempt: esc.exempt,
            violations: esc.violations.len(),
        },
        gamma_trajectory: gsum,
        perturbed,
        max_p_drift: max_p,
        max_eta_drift: max_eta,
    })
}

fn gap_bound(nu: f64, kappa: f64) -> GapBound {
    let half = 0.5 * nu;
    let mut eps0 = 0.0;
    for j in 0..=15 {
        let e = 10f64.powi(-j);
        if kappa * e < half {
            eps0 = e;
            break;
        }
    }
    GapBound { nu, half_nu: half, eps0, eps_critical: half / kappa }
}

fn subprincipal_block(p: &SdsParams, cfg: &RunConfig, sz: &Sizes) -> Result<SubprincipalBlock> {
    let pts = random_gamma_points(p, sz.gamma_points, cfg.seed ^ 0x5eed_0002)?;
    let mut nil = NilpotencySummary {
        points: pts.len(),
        max_cube_rel: 0.0,
        min_square_max_entry: f64::INFINITY,
        max_eigenvalue_modulus: 0.0,
    };
    let mut sym = SymmetrySummary {
        max_g_residual_rel: 0.0,
        min_b0_residual_rel: f64::INFINITY,
        off_gamma_g_residual_rel: 0.0,
        off_gamma_cube_rel: 0.0,
    };
    for g in &pts {
        let chk = nilpotency(g)?;
        nil.max_cube_rel = nil.max_cube_rel.max(chk.cube_max_entry / chk.s_norm.powi(3));
        nil.min_square_max_entry = nil.min_square_max_entry.min(chk.square_max_entry);
        nil.max_eigenvalue_modulus = nil.max_eigenvalue_modulus.max(chk.max_eigenvalue_modulus);
        sym.max_g_residual_rel = sym.max_g_residual_rel.max(check_g_symmetry(g).relative());
        sym.min_b0_residual_rel = sym.min_b0_residual_rel.min(check_b0_symmetry(g).relative());
        let off = g.with_sigma(g.sigma * (1.0 + 1e-3));
        sym.off_gamma_g_residual_rel = sym.off_gamma_g_residual_rel.max(check_g_symmetry(&off).relative());
        let oc = nilpotency(&off)?;
        sym.off_gamma_cube_rel = sym.off_gamma_cube_rel.max(oc.cube_max_entry / oc.s_norm.powi(3));
    }

    let base = GammaPointData::from_phase_point(p, &default_trapped_point(p, 1.0)?)?;
    let mut conj = Vec::new();
    for &eps in &cfg.eps_sweep {
        let mut entry = ConjugationEntry { eps, max_error: 0.0, max_inverse_defect: 0.0, im_norm_ratio: 0.0, ratio_over_eps: 0.0 };
        for g in &pts {
            let m = conjugated_s(g, eps)? - conjugated_target(g, eps);
            entry.max_error = entry.max_error.max(m.iter().fold(0.0_f64, |a, z| a.max(z.norm())));
            entry.max_inverse_defect = entry.max_inverse_defect.max(conjugator_q(g, eps)?.inverse_defect);
        }
        entry.im_norm_ratio = conjugated_im_norm(&base, eps)?;
        entry.ratio_over_eps = entry.im_norm_ratio / eps;
        conj.push(entry);
    }
    let ks: Vec<f64> = conj.iter().map(|e| e.ratio_over_eps).collect();
    let kmax = ks.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kmin = ks.iter().cloned().fold(f64::INFINITY, f64::min);
    let kappa = ks[0];
    let lin = linearization(p, 1.0)?;

    let t_tr = if sz.t_final < 50.0 { 20.0 } else { 100.0 };
    let unpert = transport_growth(&base, t_tr, None)?;
    let strength = 0.1;
    let l0: CMatrix = normal_perturbation(p.n(), strength);
    let pert = transport_growth(&base, t_tr, Some(&l0))?;
    let gen_eig = generator_max_real_eigenvalue(&base, Some(&l0))?;

    Ok(SubprincipalBlock {
        nilpotency: nil,
        symmetry: sym,
        conjugation: conj,
        kappa,
        kappa_closed_form: 2f64.sqrt() / (base.r * base.alpha),
        kappa_spread: kmax / kmin - 1.0,
        gap_eigenvalue_normalization: gap_bound(lin.eigenvalue_closed, kappa),
        gap_nu_min_normalization: gap_bound(lin.nu_min_closed, kappa),
        display_factor: display_factor(&base),
        transport: TransportSummary {
            t_final: t_tr,
            unperturbed_loglog_slope: unpert.loglog_slope,
            unperturbed_final_norm: unpert.log_norms.last().copied().unwrap_or(0.0).exp(),
            perturbation_strength: strength,
            perturbed_rate: pert.exp_rate,
            generator_max_real_eigenvalue: gen_eig,
        },
    })
}

/// Coarse step count of the Richardson check; at 128 → 256 steps the residual
/// is in the asymptotic regime and well above roundoff.
pub const RICHARDSON_COARSE_STEPS: usize = 128;

fn psi_inner_block(cfg: &RunConfig, sz: &Sizes) -> Result<PsiInnerBlock> {
    let mut rng = sub_rng(cfg.seed, 3);
    let steps = 1000;
    let mut f = FactorizationSummary {
        instances: sz.factor_pairs,
        steps,
        max_residual: 0.0,
        midpoint_max_residual: 0.0,
        richardson_coarse_steps: RICHARDSON_COARSE_STEPS,
        richardson_ratio_min: f64::INFINITY,
        richardson_ratio_max: 0.0,
    };
    for _ in 0..sz.factor_pairs {
        let b = random_positive_form(5, &mut rng);
        let b0 = random_positive_form(5, &mut rng);
        let q = ode_factorize(&b, &b0, steps)?;
        f.max_residual = f.max_residual.max(factorization_residual(&q, &b0, b.matrix()));
        let qh = ode_factorize_until(&b, &b0, steps / 2, 0.5)?;
        let bh = (b0.matrix() + b.matrix()) * c(0.5);
        f.midpoint_max_residual = f.midpoint_max_residual.max(factorization_residual(&qh, &b0, &bh));
        let r = richardson(&b, &b0, RICHARDSON_COARSE_STEPS)?;
        f.richardson_ratio_min = f.richardson_ratio_min.min(r.ratio);
        f.richardson_ratio_max = f.richardson_ratio_max.max(r.ratio);
    }

    let mut rng = sub_rng(cfg.seed, 4);
    let mut ranks: Vec<TensorRankSummary> = cfg
        .k_sweep
        .iter()
        .map(|&k| TensorRankSummary { k, instances: 0, max_excess: f64::NEG_INFINITY, max_norm_over_bound: 0.0 })
        .collect();
    for i in 0..sz.tensor_instances {
        let slot = i % ranks.len();
        let k = ranks[slot].k;
        let n = rng.gen_range(1..=4usize);
        let b = random_positive_form(n, &mut rng);
        let r = random_matrix(n, &mut rng);
        let d = tensor_power(&b, &r, k)?;
        let bound = k as f64 * d.base_norm_b;
        let s = &mut ranks[slot];
        s.instances += 1;
        s.max_excess = s.max_excess.max(d.norm_b - bound);
        s.max_norm_over_bound = s.max_norm_over_bound.max(d.norm_b / bound);
    }
    for s in &mut ranks {
        if s.instances == 0 {
            s.max_excess = 0.0;
        }
    }
    let tensor_max_excess = ranks.iter().map(|s| s.max_excess).fold(f64::NEG_INFINITY, f64::max);

    let eps_values = vec![1.0, 0.1, 0.01];
    let mut j = JordanSummary { max_n: sz.jordan_max, eps_values: eps_values.clone(), max_norm_over_eps: 0.0, max_eigenvalue_error: 0.0 };
    for n in 2..=sz.jordan_max {
        for &eps in &eps_values {
            let ex = jordan_example(n, eps)?;
            j.max_norm_over_eps = j.max_norm_over_eps.max(ex.norm / eps);
            let ev = crate::linalg::hermitian_eigenvalues(&ex.im);
            let mut expect: Vec<f64> = (1..=n)
                .map(|k| eps * (k as f64 * std::f64::consts::PI / (n as f64 + 1.0)).cos())
                .collect();
            expect.sort_by(|a, b| a.total_cmp(b));
            for (a, b) in ev.iter().zip(&expect) {
                j.max_eigenvalue_error = j.max_eigenvalue_error.max((a - b).abs());
            }
        }
    }
    Ok(PsiInnerBlock { factorization: f, tensor: ranks, tensor_max_excess, jordan: j })
}

fn verdict(id: u32, key: &str, ok: bool, detail: String) -> Verdict {
    Verdict { id, key: key.into(), status: if ok { "pass" } else { "fail" }.into(), detail }
}

fn verdicts(g: &GeometryBlock, d: &DynamicsBlock, s: &SubprincipalBlock, q: &PsiInnerBlock) -> Vec<Verdict> {
    let n = &s.nilpotency;
    let f = &q.factorization;
    let conj_err = s.conjugation.iter().map(|e| e.max_error).fold(0.0, f64::max);
    vec![
        verdict(
            1,
            "photon_sphere",
            g.photon_sphere_sweep_max_rel_error <= 1e-12,
            format!("max relative error {:e} (limit 1e-12)", g.photon_sphere_sweep_max_rel_error),
        ),
        verdict(
            2,
            "horizons",
            g.horizon_sweep.max_abs_mu_at_roots <= 1e-12
                && g.horizon_sweep.max_rel_disagreement_with_bisection <= 1e-12
                && g.horizon_sweep.merge_monotone,
            format!(
                "max |mu| {:e}, bisection disagreement {:e}, monotone merge {}",
                g.horizon_sweep.max_abs_mu_at_roots,
                g.horizon_sweep.max_rel_disagreement_with_bisection,
                g.horizon_sweep.merge_monotone
            ),
        ),
        verdict(
            3,
            "linearization_eigenvalues",
            g.linearization_rel_error <= 1e-10 && g.four_dim_specialization_rel_error <= 1e-10,
            format!(
                "relative error {:e}, n=4 specialization {:e} (limit 1e-10)",
                g.linearization_rel_error, g.four_dim_specialization_rel_error
            ),
        ),
        verdict(
            4,
            "normal_hyperbolicity",
            d.lyapunov_rel_error <= 1e-4 && d.tangential_rate.abs() <= 1e-6,
            format!(
                "lyapunov relative error {:e} (limit 1e-4), tangential rate {:e} (limit 1e-6)",
                d.lyapunov_rel_error, d.tangential_rate
            ),
        ),
        verdict(
            5,
            "escape_function",
            d.escape.violations == 0,
            format!("{} violations on {} points", d.escape.violations, d.escape.checked),
        ),
        verdict(
            6,
            "nilpotency",
            n.max_cube_rel <= 1e-12 && n.max_eigenvalue_modulus <= 1e-10,
            format!(
                "max |s^3|/|s|^3 {:e} (limit 1e-12), max |eigenvalue| {:e} (limit 1e-10)",
                n.max_cube_rel, n.max_eigenvalue_modulus
            ),
        ),
        verdict(7, "conjugation", conj_err <= 1e-12, format!("max entry error {conj_err:e} (limit 1e-12)")),
        verdict(
            8,
            "eps_symmetrizability",
            s.kappa_spread <= 0.01
                && s.gap_eigenvalue_normalization.eps0 > 0.0
                && s.gap_nu_min_normalization.eps0 > 0.0,
            format!(
                "kappa {:.6} spread {:e}; eps0 {:e} (eigenvalue), {:e} (nu_min)",
                s.kappa, s.kappa_spread, s.gap_eigenvalue_normalization.eps0, s.gap_nu_min_normalization.eps0
            ),
        ),
        verdict(
            9,
            "factorization_ode",
            f.max_residual <= 1e-8 && f.richardson_ratio_min >= 14.0 && f.richardson_ratio_max <= 18.0,
            format!(
                "max residual {:e} (limit 1e-8), ratio range [{:.3}, {:.3}]",
                f.max_residual, f.richardson_ratio_min, f.richardson_ratio_max
            ),
        ),
        verdict(
            10,
            "tensor_power",
            q.tensor_max_excess <= 1e-10,
            format!("max excess over k|R|_b {:e} (limit 1e-10)", q.tensor_max_excess),
        ),
        verdict(
            11,
            "jordan_block",
            q.jordan.max_norm_over_eps <= 1.0 && q.jordan.max_eigenvalue_error <= 1e-10,
            format!(
                "max norm/eps {:.12}, eigenvalue error {:e}",
                q.jordan.max_norm_over_eps, q.jordan.max_eigenvalue_error
            ),
        ),
        verdict(
            12,
            "transport_dichotomy",
            s.transport.unperturbed_loglog_slope <= 2.1 && s.transport.perturbed_rate >= 0.05,
            format!(
                "log-log slope {:.4} (limit 2.1), perturbed rate {:.4} (limit 0.05)",
                s.transport.unperturbed_loglog_slope, s.transport.perturbed_rate
            ),
        ),
    ]
}

fn anchors() -> Vec<Anchor> {
    [
        "mu/r^2 has exactly one critical point on the positive axis",
        "mu has exactly two positive roots when the nondegeneracy inequality holds",
        "the radial flow linearized at the trapped set has a hyperbolic eigenvalue pair",
        "the flow expands normally to the trapped set and not along it",
        "(r - r_p)^2 is an escape function on the characteristic set",
        "the trapped-set part s of the 1-form subprincipal operator is nilpotent",
        "conjugation by q makes s strictly upper triangular with entries of size eps",
        "after conjugation the imaginary part is O(eps), below any positive spectral gap for small eps",
        "the ODE for q produces a factorization q^* b0 q = b",
        "the derivation induced on tensor powers satisfies |R_k| <= k|R|",
        "a rescaled Jordan block has imaginary part of norm at most eps",
        "nilpotent transport grows polynomially; a non-nilpotent perturbation grows exponentially",
    ]
    .iter()
    .enumerate()
    .map(|(i, c)| Anchor { id: i as u32 + 1, claim: (*c).into() })
    .collect()
}

/// Runs every pipeline for `cfg`. Deterministic for a fixed `cfg.seed`.
pub fn run_full_report(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutput> {
    cfg.validate()?;
    let p = cfg.params()?;
    let sz = sizes(cfg, opts.quick);
    let mut warnings = Vec::new();
    let mut trajectories = Vec::new();
    let geometry = geometry_block(&p).map_err(Error::in_stage("geometry"))?;
    let dynamics =
        dynamics_block(&p, cfg, &sz, &mut warnings, &mut trajectories).map_err(Error::in_stage("dynamics"))?;
    let subprincipal = subprincipal_block(&p, cfg, &sz).map_err(Error::in_stage("subprincipal"))?;
    let psi_inner = psi_inner_block(cfg, &sz).map_err(Error::in_stage("psi_inner"))?;
    let verdicts = verdicts(&geometry, &dynamics, &subprincipal, &psi_inner);
    let all_passed = verdicts.iter().all(|v| v.status == "pass");
    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        quick: opts.quick,
        config: cfg.clone(),
        geometry,
        dynamics,
        subprincipal,
        psi_inner,
        verdicts,
        anchors: anchors(),
        warnings,
        all_passed,
    };
    report.check_finite()?;
    Ok(RunOutput { report, params: p, trajectories })
}

/// Writes `report.json` and the trajectory CSVs into `dir`; returns the
/// report path.
pub fn write_run(out: &RunOutput, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    for (name, tr) in &out.trajectories {
        dump_trajectory_csv(&out.params, tr, &dir.join(name))?;
    }
    let path = dir.join(REPORT_FILE);
    std::fs::write(&path, out.report.to_json()?)?;
    Ok(path)
}

/// Geometry block alone, for quick inspection.
pub fn geometry_only(p: &SdsParams) -> Result<GeometryBlock> {
    geometry_block(p)
}
