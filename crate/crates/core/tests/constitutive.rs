use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vefs_core::constitutive::{
    full_lagrangian_stress_residual, g_a, giesekus_bound_condition, lift_sigma1, p1_stress_residual,
    picard_sigma_step, ptt_bound_condition, zero_grad_trajectory, zero_stress_trajectory, ConstitutiveLaw,
};
use vefs_core::scaling::DimensionlessParams;
use vefs_core::tensor::{mat_add, mat_mul, mat_scale, sym_to_mat, transpose, Mat2, Sym};

fn params(we: f64, eps: f64) -> DimensionlessParams<f64> {
    DimensionlessParams { re: 1.0, we, eps, alpha: 0.0, g0: 0.0, a: 0.0 }
}

/// Unpacked matrix form of the interpolated derivative.
fn g_a_dense(g: &Mat2<f64>, s: &Sym<f64>, a: f64) -> Mat2<f64> {
    let s = sym_to_mat(s);
    let gt = transpose(g);
    let lower = mat_add(&mat_mul(&gt, &s), &mat_mul(&s, g));
    let upper = mat_add(&mat_mul(&s, &gt), &mat_mul(g, &s));
    mat_add(&mat_scale(&lower, 0.5 * (a - 1.0)), &mat_scale(&upper, 0.5 * (a + 1.0)))
}

fn random_pair(rng: &mut ChaCha8Rng) -> (Mat2<f64>, Sym<f64>) {
    let mut u = || rng.gen_range(-2.0..2.0);
    ([[u(), u()], [u(), u()]], [u(), u(), u()])
}

fn rel(a: &Sym<f64>, b: &Sym<f64>) -> f64 {
    let scale = a.iter().chain(b).fold(1e-300f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

#[test]
fn packed_form_matches_dense_matrices() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let (g, s) = random_pair(&mut rng);
        let a = rng.gen_range(-1.0..=1.0);
        let d = g_a_dense(&g, &s, a);
        let got = g_a(&g, &s, a);
        assert!(rel(&got, &[d[0][0], d[0][1], d[1][1]]) <= 1e-13);
        assert!((d[0][1] - d[1][0]).abs() <= 1e-13 * (1.0 + d[0][1].abs()));
    }
}

#[test]
fn bilinear_and_affine_in_slip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let (g, s) = random_pair(&mut rng);
        let (h, t) = random_pair(&mut rng);
        let (al, a1, a2) = (rng.gen_range(-3.0..3.0), rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
        let a = 0.5 * (a1 + a2);
        let base = g_a(&g, &s, a);

        let scaled_g = g_a(&mat_scale(&g, al), &s, a);
        assert!(rel(&scaled_g, &base.map(|v| al * v)) <= 1e-13);
        let scaled_s = g_a(&g, &s.map(|v| al * v), a);
        assert!(rel(&scaled_s, &base.map(|v| al * v)) <= 1e-13);

        let sum_g = g_a(&mat_add(&g, &h), &s, a);
        let parts_g = g_a(&h, &s, a);
        assert!(rel(&sum_g, &[0, 1, 2].map(|c| base[c] + parts_g[c])) <= 1e-13);
        let sum_s = g_a(&g, &[0, 1, 2].map(|c| s[c] + t[c]), a);
        let parts_s = g_a(&g, &t, a);
        assert!(rel(&sum_s, &[0, 1, 2].map(|c| base[c] + parts_s[c])) <= 1e-13);

        let (x, y) = (g_a(&g, &s, a1), g_a(&g, &s, a2));
        assert!(rel(&base, &[0, 1, 2].map(|c| 0.5 * (x[c] + y[c]))) <= 1e-13);
    }
}

#[test]
fn zero_gradient_gives_zero() {
    assert_eq!(g_a(&[[0.0; 2]; 2], &[1.0, -2.0, 3.0], 0.3), [0.0; 3]);
}

#[test]
fn single_precision_matches_double() {
    let g32: Mat2<f32> = [[0.25, -0.5], [1.0, 0.125]];
    let s32: Sym<f32> = [1.0, 0.5, -0.25];
    let got = g_a(&g32, &s32, 0.5f32);
    let want = g_a(&g32.map(|r| r.map(f64::from)), &s32.map(f64::from), 0.5);
    for c in 0..3 {
        assert!((f64::from(got[c]) - want[c]).abs() < 1e-6);
    }
}

#[test]
fn lift_starts_at_initial_stress() {
    let s0 = vec![[0.3, -0.1, 0.7], [1.0, 0.0, 0.0]];
    let m1 = vec![vec![[5.0, 5.0, 5.0]; 2]; 4];
    let s = lift_sigma1(&s0, &m1, 0.8, 0.1).unwrap();
    assert_eq!(s[0], s0);
}

#[test]
fn lift_with_zero_weissenberg_is_the_source() {
    let m1: Vec<Vec<Sym<f64>>> = (0..4).map(|k| vec![[k as f64, 0.0, 1.0]]).collect();
    let s = lift_sigma1(&[[9.0, 9.0, 9.0]], &m1, 0.0, 0.1).unwrap();
    assert_eq!(s[0][0], [9.0, 9.0, 9.0]);
    for k in 1..4 {
        assert_eq!(s[k], m1[k]);
    }
}

#[test]
fn relaxation_converges_at_first_order() {
    // σ(0) = 0 with constant source m relaxes as m(1 − e^{−t/We})
    let we = 0.5;
    let err = |n: usize| {
        let dt = 1.0 / n as f64;
        let z = zero_stress_trajectory::<f64>(n + 1, 1);
        let g = zero_grad_trajectory::<f64>(n + 1, 1);
        let m = vec![vec![[1.0, -0.5, 2.0]]; n + 1];
        let s = picard_sigma_step(&z, &g, &g, &z, &m, dt, &params(we, 0.0), &ConstitutiveLaw::oldroyd_b())
            .unwrap();
        (0..=n)
            .map(|k| {
                let e = 1.0 - (-(k as f64) * dt / we).exp();
                (s[k][0][2] - 2.0 * e).abs()
            })
            .fold(0.0, f64::max)
    };
    let (e1, e2, e3) = (err(20), err(40), err(80));
    for order in [(e1 / e2).log2(), (e2 / e3).log2()] {
        assert!((0.9..=1.1).contains(&order), "order {order}");
    }
}

#[test]
fn residual_at_unit_xi_bar_reduces_to_the_linear_form() {
    let levels = 4;
    let grad: Vec<Vec<Mat2<f64>>> = (0..levels).map(|k| vec![[[0.1 * k as f64, 0.2], [-0.3, 0.05]]]).collect();
    let sigma: Vec<Vec<Sym<f64>>> = (0..levels).map(|k| vec![[1.0, 0.1 * k as f64, -0.5]]).collect();
    let xi = zero_grad_trajectory::<f64>(levels, 1);
    let law = ConstitutiveLaw::JohnsonSegalman { a: 0.4 };
    let p = params(0.7, 0.3);
    let full = full_lagrangian_stress_residual(&grad, &sigma, &xi, 0.1, &p, &law).unwrap();
    let lin = p1_stress_residual(&grad, &sigma, 0.1, &p, &law).unwrap();
    assert_eq!(full, lin);
}

#[test]
fn relaxing_stress_has_first_order_residual() {
    let we = 0.5;
    let res = |n: usize| {
        let dt = 1.0 / n as f64;
        let sigma: Vec<Vec<Sym<f64>>> =
            (0..=n).map(|k| vec![[1.0, 0.5, -1.0].map(|c| c * (-(k as f64) * dt / we).exp())]).collect();
        let g = zero_grad_trajectory::<f64>(n + 1, 1);
        let r = full_lagrangian_stress_residual(&g, &sigma, &g, dt, &params(we, 0.2), &ConstitutiveLaw::oldroyd_b())
            .unwrap();
        r.iter().flatten().flat_map(|s| s.iter()).fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let order = (res(50) / res(100)).log2();
    assert!((order - 1.0).abs() < 0.1, "order {order}");
}

#[test]
fn zero_state_has_zero_residual() {
    let z = zero_stress_trajectory::<f64>(3, 5);
    let g = zero_grad_trajectory::<f64>(3, 5);
    let r = full_lagrangian_stress_residual(&g, &z, &g, 0.1, &params(1.0, 0.5), &ConstitutiveLaw::oldroyd_b()).unwrap();
    assert!(r.iter().flatten().all(|s| *s == [0.0; 3]));
}

#[test]
fn bound_conditions_flag_large_windows() {
    assert!(giesekus_bound_condition(0.1, 1.0, 0.2, 1.0).1);
    let (v, ok) = giesekus_bound_condition(0.1f64, 1.0, 20.0, 1.0);
    assert!(!ok && (v - 4.0).abs() < 1e-14);
    assert!(ptt_bound_condition(0.1, 1.0, 0.2).1);
    assert!(!ptt_bound_condition(0.1, 1.0, 100.0).1);
}

#[test]
fn law_parameters_are_validated() {
    assert!(ConstitutiveLaw::JohnsonSegalman { a: 1.5 }.validate().is_err());
    assert!(ConstitutiveLaw::Giesekus { a: 0.0, c: 0.0 }.validate().is_err());
    assert!(ConstitutiveLaw::PttLinear { a: 0.0, eps_ptt: -1.0, we_in_exponent: false }.validate().is_err());
    assert!(ConstitutiveLaw::PttExponential { a: 0.0, eps_ptt: 0.1, we_in_exponent: true }.validate().is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn g_a_is_symmetric_for_any_slip(
        g in prop::array::uniform2(prop::array::uniform2(-5.0f64..5.0)),
        s in prop::array::uniform3(-5.0f64..5.0),
        a in -1.0f64..=1.0,
    ) {
        let d = g_a_dense(&g, &s, a);
        let packed = g_a(&g, &s, a);
        prop_assert!((d[0][1] - d[1][0]).abs() <= 1e-12);
        prop_assert!((packed[1] - d[0][1]).abs() <= 1e-12);
    }

    #[test]
    fn ptt_exponential_term_is_stable_for_small_traces(x in -1e-9f64..1e-9) {
        let law = ConstitutiveLaw::PttExponential { a: 0.0, eps_ptt: 1.0, we_in_exponent: false };
        let t = law.law_term(&[x, 0.0, 0.0], &[1.0, 0.0, 0.0], 1.0);
        prop_assert!((t[0] - x).abs() <= 1e-17 + 1e-9 * x.abs());
    }
}
