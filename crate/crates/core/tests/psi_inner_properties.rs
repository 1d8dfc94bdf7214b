use nalgebra::{Complex, DMatrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use trapcheck_core::hamiltonian_flow::default_trapped_point;
use trapcheck_core::psi_inner::{
    adjoint_wrt, b_norm, b_selfadjoint_eigenvalues, factorization_residual, im_symbol_along_flow, im_wrt,
    jordan_example, ode_factorize, ode_factorize_until, random_matrix, random_positive_form, tensor_power,
    HermitianForm,
};
use trapcheck_core::subprincipal::{conjugated_im_norm, conjugator_q, s_matrix, GammaPointData};
use trapcheck_core::{Error, SdsParams};

type C = Complex<f64>;
type CM = DMatrix<C>;

fn frob(m: &CM) -> f64 {
    m.norm()
}

fn pairing(b: &CM, u: &CM, v: &CM) -> C {
    (v.adjoint() * b * u)[(0, 0)]
}

fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn identity_form_gives_conjugate_transpose() {
    let mut rng = rng_from(1);
    let p = random_matrix(4, &mut rng);
    assert_eq!(adjoint_wrt(&p, &HermitianForm::identity(4)).unwrap(), p.adjoint());
}

#[test]
fn adjoint_pairs_correctly() {
    let mut rng = rng_from(2);
    let b = random_positive_form(4, &mut rng);
    let p = random_matrix(4, &mut rng);
    let pa = adjoint_wrt(&p, &b).unwrap();
    for _ in 0..100 {
        let u = random_matrix(4, &mut rng).columns(0, 1).into_owned();
        let v = random_matrix(4, &mut rng).columns(0, 1).into_owned();
        let lhs = pairing(b.matrix(), &(&p * &u), &v);
        let rhs = pairing(b.matrix(), &u, &(&pa * &v));
        assert!((lhs - rhs).norm() <= 1e-11 * (1.0 + lhs.norm()));
    }
}

#[test]
fn im_of_self_adjoint_vanishes() {
    let mut rng = rng_from(3);
    let b = random_positive_form(3, &mut rng);
    let p = random_matrix(3, &mut rng);
    let sym = (&p + adjoint_wrt(&p, &b).unwrap()) * C::new(0.5, 0.0);
    assert!(frob(&im_wrt(&sym, &b).unwrap()) <= 1e-12 * frob(&p));
}

#[test]
fn factorization_of_equal_forms_is_identity() {
    let mut rng = rng_from(4);
    let b = random_positive_form(5, &mut rng);
    let q = ode_factorize(&b, &b, 100).unwrap();
    assert!(frob(&(q - CM::identity(5, 5))) == 0.0);
}

#[test]
fn factorization_holds_at_intermediate_time() {
    let mut rng = rng_from(5);
    for _ in 0..10 {
        let b = random_positive_form(5, &mut rng);
        let b0 = random_positive_form(5, &mut rng);
        let q = ode_factorize_until(&b, &b0, 500, 0.5).unwrap();
        let half = (b0.matrix() + b.matrix()) * C::new(0.5, 0.0);
        assert!(factorization_residual(&q, &b0, &half) <= 1e-8);
    }
}

#[test]
fn jordan_norm_bounded_by_eps_and_monotone() {
    for eps in [1.0, 0.1, 0.01] {
        let mut last = 0.0;
        for n in 2..=20 {
            let ex = jordan_example(n, eps).unwrap();
            assert!(ex.norm <= eps);
            assert!(ex.norm > last);
            assert!((ex.norm - eps * (std::f64::consts::PI / (n as f64 + 1.0)).cos()).abs() <= 1e-12 * eps);
            last = ex.norm;
        }
    }
    // N = 2: Im = (ε/2)·[[0, −i], [i, 0]], eigenvalues ±ε/2
    let ex = jordan_example(2, 0.4).unwrap();
    assert!((ex.im[(0, 1)] - C::new(0.0, -0.2)).norm() <= 1e-15);
    assert!((ex.im[(1, 0)] - C::new(0.0, 0.2)).norm() <= 1e-15);
    assert!((ex.norm - 0.2).abs() <= 1e-15);
}

#[test]
fn jordan_rejects_bad_input() {
    assert!(jordan_example(1, 0.1).is_err());
    assert!(jordan_example(3, 0.0).is_err());
}

#[test]
fn tensor_power_of_identity_is_k() {
    let mut rng = rng_from(6);
    for k in 1..=4 {
        let b = random_positive_form(3, &mut rng);
        let d = tensor_power(&b, &CM::identity(3, 3), k).unwrap();
        assert!((d.norm_b - k as f64).abs() <= 1e-12 * k as f64);
    }
}

#[test]
fn tensor_size_guard() {
    let b = HermitianForm::identity(5);
    let r = CM::identity(5, 5);
    assert!(matches!(tensor_power(&b, &r, 6), Err(Error::SizeGuard { .. })));
    assert!(tensor_power(&b, &r, 0).is_err());
}

#[test]
fn b_skew_derivations_stay_skew() {
    let mut rng = rng_from(7);
    for k in 1..=3 {
        let b = random_positive_form(3, &mut rng);
        let p = random_matrix(3, &mut rng);
        let skew = (&p - adjoint_wrt(&p, &b).unwrap()) * C::new(0.5, 0.0);
        let d = tensor_power(&b, &skew, k).unwrap();
        let mut bk = CM::identity(1, 1);
        for _ in 0..k {
            bk = bk.kronecker(b.matrix());
        }
        let bk = HermitianForm::positive(bk).unwrap();
        let adj = adjoint_wrt(&d.r, &bk).unwrap();
        assert!(frob(&(adj + &d.r)) <= 1e-10 * frob(&d.r));
    }
}

#[test]
fn flow_correction_vanishes_for_constant_form() {
    let mut rng = rng_from(8);
    let b = random_positive_form(3, &mut rng);
    let s: Vec<CM> = (0..5).map(|_| random_matrix(3, &mut rng)).collect();
    let path = vec![b.clone(); 5];
    let out = im_symbol_along_flow(&path, &s, 0.1).unwrap();
    for (o, si) in out.iter().zip(&s) {
        assert!(frob(&(o - im_wrt(si, &b).unwrap())) <= 1e-12 * frob(si));
    }
    assert!(im_symbol_along_flow(&path[..2], &s[..2], 0.1).is_err());
}

#[test]
fn flow_correction_for_exponential_form() {
    let mut rng = rng_from(9);
    let b0 = random_positive_form(3, &mut rng);
    let c = 0.7;
    let dt = 1e-3;
    let path: Vec<HermitianForm> = (0..7)
        .map(|i| HermitianForm::positive(b0.matrix() * C::new((c * i as f64 * dt).exp(), 0.0)).unwrap())
        .collect();
    let zeros = vec![CM::zeros(3, 3); 7];
    let out = im_symbol_along_flow(&path, &zeros, dt).unwrap();
    for o in &out {
        let err = frob(&(o - CM::identity(3, 3) * C::new(0.5 * c, 0.0)));
        assert!(err <= 1e-5, "{err:e}");
    }
}

#[test]
fn flow_correction_matches_conjugated_gamma_model() {
    let p = SdsParams::new(4, 1.0, 0.03).unwrap();
    let g = GammaPointData::from_phase_point(&p, &default_trapped_point(&p, 1.0).unwrap()).unwrap();
    for eps in [1e-1, 1e-2] {
        let q = conjugator_q(&g, eps).unwrap().q.matrix;
        // the form in which q is an isometry onto the Euclidean frame
        let b = HermitianForm::positive(q.adjoint() * &q).unwrap();
        let z = s_matrix(&g).matrix * C::new(0.0, 2.0 / (g.r * g.r));
        let path = vec![b.clone(); 3];
        let out = im_symbol_along_flow(&path, &vec![z.clone(); 3], 0.1).unwrap();
        let expect = conjugated_im_norm(&g, eps).unwrap() * g.sigma.abs();
        for o in &out {
            let got = b_norm(o, &b).unwrap();
            // q†q has condition number ~ε⁻⁴, which sets the agreement
            assert!((got - expect).abs() <= 1e-6 * expect, "{got} vs {expect}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_is_an_involution_reversing_products(seed in any::<u64>(), n in 1usize..=5) {
        let mut rng = rng_from(seed);
        let b = random_positive_form(n, &mut rng);
        let p = random_matrix(n, &mut rng);
        let q = random_matrix(n, &mut rng);
        let pp = adjoint_wrt(&adjoint_wrt(&p, &b).unwrap(), &b).unwrap();
        prop_assert!(frob(&(pp - &p)) <= 1e-12 * frob(&p).max(1.0) * 1e2);
        let lhs = adjoint_wrt(&(&p * &q), &b).unwrap();
        let rhs = adjoint_wrt(&q, &b).unwrap() * adjoint_wrt(&p, &b).unwrap();
        prop_assert!(frob(&(lhs - rhs)) <= 1e-10 * (frob(&p) * frob(&q)).max(1.0));
    }

    #[test]
    fn im_is_b_self_adjoint_with_real_covariant_spectrum(seed in any::<u64>(), n in 1usize..=5) {
        let mut rng = rng_from(seed);
        let b = random_positive_form(n, &mut rng);
        let p = random_matrix(n, &mut rng);
        let im = im_wrt(&p, &b).unwrap();
        let adj = adjoint_wrt(&im, &b).unwrap();
        prop_assert!(frob(&(&adj - &im)) <= 1e-12 * frob(&im).max(1.0) * 1e2);
        let ev = b_selfadjoint_eigenvalues(&im, &b).unwrap();
        // change of frame: (qPq⁻¹, q^{−†} b q⁻¹)
        let q = random_matrix(n, &mut rng) + CM::identity(n, n) * C::new(2.0, 0.0);
        let qi = q.clone().try_inverse().unwrap();
        let b2 = qi.adjoint() * b.matrix() * &qi;
        let b2 = HermitianForm::positive((&b2 + b2.adjoint()) * C::new(0.5, 0.0)).unwrap();
        let ev2 = b_selfadjoint_eigenvalues(&im_wrt(&(&q * &p * &qi), &b2).unwrap(), &b2).unwrap();
        let scale = ev.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
        for (a, c) in ev.iter().zip(&ev2) {
            prop_assert!((a - c).abs() <= 1e-8 * scale);
        }
    }

    #[test]
    fn derivation_bound_holds(seed in any::<u64>(), n in 1usize..=4, k in 1usize..=4) {
        let mut rng = rng_from(seed);
        let b = random_positive_form(n, &mut rng);
        let r = random_matrix(n, &mut rng);
        let d = tensor_power(&b, &r, k).unwrap();
        prop_assert!(d.norm_b <= k as f64 * d.base_norm_b + 1e-10);
    }

    #[test]
    fn factorization_converges_at_fourth_order(seed in any::<u64>()) {
        let mut rng = rng_from(seed);
        let b = random_positive_form(5, &mut rng);
        let b0 = random_positive_form(5, &mut rng);
        let coarse = factorization_residual(&ode_factorize(&b, &b0, 128).unwrap(), &b0, b.matrix());
        let fine = factorization_residual(&ode_factorize(&b, &b0, 256).unwrap(), &b0, b.matrix());
        let ratio = coarse / fine;
        prop_assert!((14.0..=18.0).contains(&ratio), "ratio {}", ratio);
    }
}
