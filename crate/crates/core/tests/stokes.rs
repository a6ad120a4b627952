use proptest::prelude::*;
use vefs_core::geometry::{build_mesh, DomainProfile, Mesh};
use vefs_core::harness::manufactured;
use vefs_core::scaling::DimensionlessParams;
use vefs_core::stokes_solver::{StokesOptions, StokesRHS, StokesSolution, StokesSystem};

fn params() -> DimensionlessParams<f64> {
    DimensionlessParams { re: 1.0, we: 1.0, eps: 0.4, alpha: 0.3, g0: 2.0, a: 1.0 }
}

fn mms_error(n: usize) -> (f64, f64) {
    let l = manufactured::level(n, &params()).unwrap();
    (l.error, l.relative_traction)
}

#[test]
fn manufactured_solution_converges() {
    let levels: Vec<(f64, f64)> = [8, 16, 32].iter().map(|&n| mms_error(n)).collect();
    for pair in levels.windows(2) {
        let order = (pair[0].0 / pair[1].0).log2();
        assert!(order >= 1.0, "order {order} from {:?}", levels);
    }
    assert!(levels[2].1 <= 1e-8, "traction residual {}", levels[2].1);
}

#[test]
fn zero_solution_residual_is_source_norm() {
    let p = params();
    let n = 8;
    let mesh = build_mesh(&DomainProfile::flat(n, 1.0, 1.0), n, 5).unwrap();
    let zero = StokesSolution::zeros(&mesh);
    let mut rhs = StokesRHS::zeros(&mesh);
    rhs.f = vec![[1.0, 2.0]; mesh.n_nodes()];
    let sigma = vec![[0.0; 3]; mesh.n_nodes()];
    let sys = StokesSystem::new(&mesh, 0.5, &p, StokesOptions::default()).unwrap();
    let r = sys.residual_report(&zero, &zero, &rhs, &sigma).unwrap();
    let ncz = (mesh.nz - 1) as f64;
    let want = (1.0 + 4.0 * (ncz - 1.0) / ncz).sqrt();
    assert!((r.momentum - want).abs() < 1e-12, "{} vs {want}", r.momentum);
    assert_eq!(r.divergence, 0.0);
}

#[test]
fn residual_grows_linearly_with_perturbation() {
    let p = params();
    let mesh = build_mesh(&DomainProfile::sinusoid(16, 1.0, 0.05, 1, 1.0), 16, 6).unwrap();
    let rhs = manufactured::data(&mesh, &p);
    let sigma = mesh.sample(manufactured::stress);
    let prev = StokesSolution::zeros(&mesh);
    let sys = StokesSystem::new(&mesh, 0.2, &p, StokesOptions::default()).unwrap();
    let (sol, base) = sys.solve_step(&prev, &rhs, &sigma).unwrap();
    assert!(base.max_relative() <= 1e-10);
    assert!(base.relative_divergence() <= 1e-10);
    let mut bump = StokesSolution::zeros(&mesh);
    bump.u1[3 * mesh.nx + 2] = 1.0;
    let r = |d: f64| sys.residual_report(&sol.combine(1.0, &bump, d), &prev, &rhs, &sigma).unwrap().momentum;
    let (r1, r2) = (r(1e-3), r(2e-3));
    assert!((r2 / r1 - 2.0).abs() < 1e-4, "{r1} {r2}");
}

#[test]
fn bottom_velocity_is_exactly_zero() {
    let p = params();
    let mesh = build_mesh(&DomainProfile::sinusoid(16, 1.0, 0.05, 2, 1.0), 16, 6).unwrap();
    let rhs = manufactured::data(&mesh, &p);
    let sigma = mesh.sample(manufactured::stress);
    let sys = StokesSystem::new(&mesh, 0.2, &p, StokesOptions::default()).unwrap();
    let (sol, _) = sys.solve_step(&StokesSolution::zeros(&mesh), &rhs, &sigma).unwrap();
    let u = sol.nodal_u();
    assert!((0..mesh.nx).all(|i| u[mesh.idx(i, 0)] == [0.0, 0.0]));
}

#[test]
fn newtonian_step_matches_plain_stokes() {
    let p = DimensionlessParams { eps: 0.0, ..params() };
    let mesh = build_mesh(&DomainProfile::flat(16, 1.0, 1.0), 16, 6).unwrap();
    let rhs = manufactured::data(&mesh, &p);
    let zero_sigma = vec![[0.0; 3]; mesh.n_nodes()];
    let sys = StokesSystem::new(&mesh, 0.3, &p, StokesOptions::default()).unwrap();
    let prev = StokesSolution::zeros(&mesh);
    let (a, _) = sys.solve_step(&prev, &rhs, &zero_sigma).unwrap();
    // constant isotropic stress only shifts the pressure
    let iso = vec![[0.25, 0.0, 0.25]; mesh.n_nodes()];
    let (b, _) = sys.solve_step(&prev, &rhs, &iso).unwrap();
    let du = a.u1.iter().zip(&b.u1).chain(a.u2.iter().zip(&b.u2)).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(du < 1e-10, "{du}");
    assert!(a.q.iter().zip(&b.q).all(|(x, y)| (y - x - 0.25).abs() < 1e-10));
}

fn random_rhs(mesh: &Mesh<f64>, seed: &[f64]) -> StokesRHS<f64> {
    let wave = |p: usize, c: f64| seed.iter().enumerate().map(|(k, &a)| a * ((k + 1) as f64 * 0.7 * p as f64 + c).sin()).sum::<f64>();
    let mut r = StokesRHS::zeros(mesh);
    for p in 0..mesh.n_nodes() {
        r.f[p] = [wave(p, 0.1), wave(p, 1.3)];
        r.a_div[p] = wave(p, 2.1);
    }
    for i in 0..mesh.nx {
        r.g[i] = [wave(i, 0.4), wave(i, 0.9)];
        r.k[i] = wave(i, 3.3);
    }
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn step_is_linear_in_data(
        s1 in proptest::collection::vec(-1.0f64..1.0, 3),
        s2 in proptest::collection::vec(-1.0f64..1.0, 3),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
    ) {
        let mesh = build_mesh(&DomainProfile::sinusoid(8, 1.0, 0.05, 1, 1.0), 8, 5).unwrap();
        let sys = StokesSystem::new(&mesh, 0.1, &params(), StokesOptions::default()).unwrap();
        let zero = StokesSolution::zeros(&mesh);
        let sigma = vec![[0.0; 3]; mesh.n_nodes()];
        let (r1, r2) = (random_rhs(&mesh, &s1), random_rhs(&mesh, &s2));
        let solve = |r: &StokesRHS<f64>| sys.solve_step(&zero, r, &sigma).map(|s| s.0);
        let (x1, x2) = (solve(&r1).unwrap(), solve(&r2).unwrap());
        let combined = solve(&r1.combine(alpha, &r2, beta)).unwrap();
        let expect = x1.combine(alpha, &x2, beta);
        let scale = expect.max_abs().max(1.0);
        prop_assert!(combined.combine(1.0, &expect, -1.0).max_abs() <= 1e-9 * scale);
    }
}
