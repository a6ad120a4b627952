use std::f64::consts::PI;

use proptest::prelude::*;
use vefs_core::geometry::{
    advance_eta, build_mesh, curvature_term, phi_from_eta, phi_rate, surface_normal, xi_from_eta, DomainProfile,
    GeometryState,
};
use vefs_core::spectral::SurfaceDerivative;
use vefs_core::tensor::{identity, mat_add, mat_mul, Mat2, Vec2};
use vefs_core::SolverError;

fn max_abs<'a>(it: impl IntoIterator<Item = &'a f64>) -> f64 {
    it.into_iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn identity_defect(d: &Mat2<f64>, xi: &Mat2<f64>) -> f64 {
    let id = identity::<f64>();
    let p = mat_mul(&mat_add(&id, d), &mat_add(&id, xi));
    max_abs([p[0][0] - 1.0, p[0][1], p[1][0], p[1][1] - 1.0].iter())
}

#[test]
fn sinusoidal_mesh_follows_the_surface() {
    let p = DomainProfile::<f64>::sinusoid(16, 1.0, 0.1, 1, 1.0);
    let m = build_mesh(&p, 16, 5).unwrap();
    for i in 0..16 {
        let x = i as f64 / 16.0;
        let top = 0.1 * (2.0 * PI * x).sin();
        assert!((m.node_x2(i, m.nz - 1) - top).abs() < 1e-14);
        assert!((m.node_x2(i, 0) + 1.0).abs() < 1e-14);
        for j in 1..m.nz {
            assert!(m.node_x2(i, j) > m.node_x2(i, j - 1));
        }
    }
}

#[test]
fn off_diagonal_xi_inverts_the_deformation() {
    let d = [[0.0, 0.2], [0.1, 0.0]];
    let xi = xi_from_eta(&[d]).unwrap();
    assert!(identity_defect(&d, &xi[0]) <= 1e-14);
    // (Id + dη)⁻¹ = [[1, −0.2], [−0.1, 1]] / 0.98
    let want = [[1.0 / 0.98 - 1.0, -0.2 / 0.98], [-0.1 / 0.98, 1.0 / 0.98 - 1.0]];
    for r in 0..2 {
        for c in 0..2 {
            assert!((xi[0][r][c] - want[r][c]).abs() < 1e-15);
        }
    }
}

#[test]
fn zero_displacement_gives_zero_xi() {
    assert_eq!(xi_from_eta(&[[[0.0; 2]; 2]]).unwrap(), vec![[[0.0; 2]; 2]]);
}

#[test]
fn normal_of_a_sinusoid_matches_the_analytic_slope() {
    let n = 32;
    let p = DomainProfile::<f64>::sinusoid(n, 1.0, 0.1, 1, 1.0);
    let normals = surface_normal(&p);
    for (i, nv) in normals.iter().enumerate() {
        let zp = 0.2 * PI * (2.0 * PI * i as f64 / n as f64).cos();
        let r = (1.0 + zp * zp).sqrt();
        assert!((nv[0] + zp / r).abs() < 1e-13 && (nv[1] - 1.0 / r).abs() < 1e-13);
        assert!((nv[0].hypot(nv[1]) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn central_difference_normal_is_second_order() {
    let err = |n: usize| {
        let p = DomainProfile::<f64>::sinusoid(n, 1.0, 0.1, 1, 1.0).with_derivative(SurfaceDerivative::CentralDifference);
        surface_normal(&p)
            .iter()
            .enumerate()
            .map(|(i, nv)| {
                let zp = 0.2 * PI * (2.0 * PI * i as f64 / n as f64).cos();
                (nv[0] + zp / (1.0 + zp * zp).sqrt()).abs()
            })
            .fold(0.0, f64::max)
    };
    let order = (err(32) / err(64)).log2();
    assert!(order > 1.8, "order {order}");
}

#[test]
fn flat_surface_phi_is_the_vertical_slope() {
    let p = DomainProfile::<f64>::flat(16, 1.0, 1.0);
    let eta_s: Vec<Vec2<f64>> = (0..16).map(|i| [0.0, 0.01 * (2.0 * PI * i as f64 / 16.0).sin()]).collect();
    let phi = phi_from_eta(&eta_s, &p).unwrap();
    for (i, v) in phi.iter().enumerate() {
        let want = 0.02 * PI * (2.0 * PI * i as f64 / 16.0).cos();
        assert!((v - want).abs() < 1e-14);
    }
}

#[test]
fn folding_surface_is_rejected() {
    let p = DomainProfile::<f64>::flat(8, 1.0, 1.0);
    // η₁ = −sin(2πX₁)/(2π) gives 1 + η₁' = 1 − cos(2πX₁), zero at X₁ = 0
    let eta_s: Vec<Vec2<f64>> = (0..8).map(|i| [-(2.0 * PI * i as f64 / 8.0).sin() / (2.0 * PI), 0.0]).collect();
    assert!(matches!(phi_from_eta(&eta_s, &p), Err(SolverError::Folding { .. })));
    assert!(matches!(
        curvature_term(&[0.0; 8], &p, &eta_s),
        Err(SolverError::Folding { .. })
    ));
}

#[test]
fn curvature_matches_the_graph_formula() {
    let amp = 0.05;
    let err = |n: usize, mode: SurfaceDerivative| {
        let p = DomainProfile::<f64>::sinusoid(n, 1.0, amp, 1, 1.0).with_derivative(mode);
        let hn = curvature_term(&vec![0.0; n], &p, &vec![[0.0; 2]; n]).unwrap();
        hn.iter()
            .enumerate()
            .map(|(i, v)| {
                let x = 2.0 * PI * i as f64 / n as f64;
                let zp = amp * 2.0 * PI * x.cos();
                let zpp = -amp * 4.0 * PI * PI * x.sin();
                let r = (1.0 + zp * zp).sqrt();
                let kappa = zpp / r.powi(3);
                (v[0] + kappa * zp / r).abs().max((v[1] - kappa / r).abs())
            })
            .fold(0.0, f64::max)
    };
    assert!(err(32, SurfaceDerivative::Spectral) < 1e-10);
    let e: Vec<f64> = [32, 64, 128, 256].iter().map(|&n| err(n, SurfaceDerivative::CentralDifference)).collect();
    for w in e.windows(2) {
        let order = (w[0] / w[1]).log2();
        assert!(order >= 1.8, "order {order}");
    }
}

#[test]
fn flat_state_has_trivial_geometry() {
    let p = DomainProfile::<f64>::flat(8, 1.0, 1.0);
    let m = build_mesh(&p, 8, 4).unwrap();
    let g = GeometryState::initial(&m);
    assert!(g.normal.iter().chain(&g.cal_n).all(|n| *n == [0.0, 1.0]));
    assert!(g.phi.iter().all(|v| *v == 0.0));
    let hn = curvature_term(&g.phi, &p, &g.surface_eta(&m)).unwrap();
    assert!(hn.iter().all(|v| v[0].abs() < 1e-15 && v[1].abs() < 1e-15));
    let hc = curvature_term(&[0.3; 8], &p, &g.surface_eta(&m)).unwrap();
    assert!(hc.iter().all(|v| v[0].abs() < 1e-15 && v[1].abs() < 1e-15));
}

#[test]
fn flat_rate_is_the_vertical_slope() {
    let p = DomainProfile::<f64>::flat(16, 1.0, 1.0);
    let u: Vec<Vec2<f64>> = (0..16).map(|i| [0.3, (2.0 * PI * i as f64 / 16.0).sin()]).collect();
    let rate = phi_rate(&u, &vec![[0.0, 1.0]; 16], &p).unwrap();
    for (i, r) in rate.iter().enumerate() {
        assert!((r - 2.0 * PI * (2.0 * PI * i as f64 / 16.0).cos()).abs() < 1e-12);
    }
    assert!(phi_rate(&u, &vec![[1.0, 0.0]; 16], &p).is_err());
}

#[test]
fn phi_rate_is_the_time_derivative_of_phi() {
    let p = DomainProfile::<f64>::sinusoid(16, 1.0, 0.05, 1, 1.0);
    let m = build_mesh(&p, 16, 5).unwrap();
    let u: Vec<Vec2<f64>> = m.sample(|x, y| [0.2 * (2.0 * PI * x).cos() * (y + 1.0), 0.3 * (2.0 * PI * x).sin()]);
    let eta0: Vec<Vec2<f64>> = m.sample(|x, _| [0.01 * (2.0 * PI * x).sin(), 0.02 * (4.0 * PI * x).cos()]);
    let g0 = GeometryState::from_eta(&m, eta0).unwrap();
    let rate = phi_rate(&m.surface_trace(&u), &g0.cal_n, &p).unwrap();
    let err = |dt: f64| {
        let g1 = advance_eta(&g0, &u, dt, &m).unwrap();
        max_abs(g1.phi.iter().zip(&g0.phi).zip(&rate).map(|((a, b), r)| (a - b) / dt - r).collect::<Vec<_>>().iter())
    };
    let (e1, e2) = (err(1e-3), err(5e-4));
    assert!(e1 < 1e-2);
    assert!(((e1 / e2).log2() - 1.0).abs() < 0.1);
}

#[test]
fn shear_step_matches_the_hand_inverse() {
    let p = DomainProfile::<f64>::flat(8, 1.0, 1.0);
    let m = build_mesh(&p, 8, 4).unwrap();
    let u = m.sample(|_, y| [y, 0.0]);
    let g = advance_eta(&GeometryState::initial(&m), &u, 0.1, &m).unwrap();
    for (d, xi) in g.d_eta.iter().zip(&g.xi) {
        assert!(max_abs([d[0][0], d[0][1] - 0.1, d[1][0], d[1][1]].iter()) < 1e-14);
        assert!(max_abs([xi[0][0], xi[0][1] + 0.1, xi[1][0], xi[1][1]].iter()) < 1e-14);
    }
}

#[test]
fn zero_velocity_leaves_eta_unchanged() {
    let p = DomainProfile::<f64>::sinusoid(8, 1.0, 0.05, 1, 1.0);
    let m = build_mesh(&p, 8, 4).unwrap();
    let g0 = GeometryState::from_eta(&m, m.sample(|x, y| [0.01 * x * (1.0 + y), 0.0])).unwrap();
    let g1 = advance_eta(&g0, &vec![[0.0; 2]; m.n_nodes()], 0.1, &m).unwrap();
    assert_eq!(g0, g1);
}

#[test]
fn rigid_translation_keeps_the_geometry() {
    let p = DomainProfile::<f64>::sinusoid(16, 1.0, 0.05, 1, 1.0);
    let m = build_mesh(&p, 16, 5).unwrap();
    let mut g = GeometryState::initial(&m);
    let u = vec![[1.0, 0.0]; m.n_nodes()];
    for _ in 0..10 {
        g = advance_eta(&g, &u, 0.1, &m).unwrap();
    }
    for e in &g.eta {
        assert!((e[0] - 1.0).abs() < 1e-14 && e[1] == 0.0);
    }
    let g0 = GeometryState::initial(&m);
    for (a, b) in g.d_eta.iter().zip(&g0.d_eta).chain(g.xi.iter().zip(&g0.xi)) {
        assert!(max_abs([a[0][0] - b[0][0], a[0][1] - b[0][1], a[1][0] - b[1][0], a[1][1] - b[1][1]].iter()) < 1e-12);
    }
    assert!(max_abs(g.phi.iter()) < 1e-12);
    for (a, b) in g.cal_n.iter().zip(&g0.cal_n) {
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }
}

#[test]
fn single_precision_mesh() {
    let p = DomainProfile::<f32>::sinusoid(8, 1.0, 0.1, 1, 1.0);
    let m = build_mesh(&p, 8, 4).unwrap();
    assert!((m.area() - 1.0).abs() < 1e-5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn xi_inverts_every_small_deformation(d in prop::array::uniform2(prop::array::uniform2(-0.4f64..0.4))) {
        let xi = xi_from_eta(&[d]).unwrap();
        prop_assert!(identity_defect(&d, &xi[0]) <= 1e-12);
    }

    #[test]
    fn identity_holds_after_random_steps(a in -0.5f64..0.5, b in -0.5f64..0.5, dt in 0.01f64..0.1) {
        let p = DomainProfile::<f64>::flat(8, 1.0, 1.0);
        let m = build_mesh(&p, 8, 4).unwrap();
        let u = m.sample(|x, y| [a * (2.0 * PI * x).sin() * (y + 1.0), b * (2.0 * PI * x).cos() * (y + 1.0)]);
        let mut g = GeometryState::initial(&m);
        for _ in 0..3 {
            g = advance_eta(&g, &u, dt, &m).unwrap();
            for (d, xi) in g.d_eta.iter().zip(&g.xi) {
                prop_assert!(identity_defect(d, xi) <= 1e-12);
            }
        }
    }
}
