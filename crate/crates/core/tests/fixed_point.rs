use std::f64::consts::PI;

use vefs_core::constitutive::ConstitutiveLaw;
use vefs_core::fixed_point::{
    compatibility_check, error_terms, invert_p1, solve_full, zeroth_order_source, FixedPointOptions, FlowState,
    IterationReport, RHSData,
};
use vefs_core::geometry::{build_mesh, curvature_term, surface_normal, DomainProfile, GeometryState, Mesh};
use vefs_core::harness::initial_stress;
use vefs_core::scaling::DimensionlessParams;
use vefs_core::stokes_solver::StokesSolution;

fn params() -> DimensionlessParams<f64> {
    DimensionlessParams { re: 1.0, we: 0.5, eps: 0.3, alpha: 0.2, g0: 1.0, a: 1.0 }
}

fn flat(nx: usize, nz: usize) -> Mesh<f64> {
    build_mesh(&DomainProfile::flat(nx, 1.0, 1.0), nx, nz).unwrap()
}

fn wavy(amp: f64) -> Mesh<f64> {
    build_mesh(&DomainProfile::sinusoid(16, 1.0, amp, 1, 1.0), 16, 7).unwrap()
}

/// A smooth state with every slot populated on `levels` levels.
fn busy_state(mesh: &Mesh<f64>, levels: usize, scale: f64) -> FlowState<f64> {
    let k = 2.0 * PI;
    let mut s = FlowState::zeros(mesh, levels);
    for l in 1..levels {
        let t = l as f64;
        s.levels[l] = StokesSolution::sample(
            mesh,
            |x, y| [scale * t * (k * x).sin() * (y + 1.0), scale * t * (k * x).cos() * (y + 1.0).powi(2)],
            |x, y| scale * (k * x).cos() * y,
            |_| 0.0,
        );
        s.sigma[l] = mesh.sample(|x, y| [scale * (1.0 + x), scale * x * y, scale * (k * x).cos()]);
    }
    s
}

fn max_abs(rhs: &RHSData<f64>) -> f64 {
    let f = rhs.f.iter().flatten().chain(rhs.g.iter().flatten()).flat_map(|v| v.iter());
    let s = rhs.a_div.iter().flatten().chain(rhs.k.iter().flatten());
    let m = rhs.m.iter().flatten().flat_map(|v| v.iter());
    f.chain(s).chain(m).fold(0.0, |a: f64, v| a.max(v.abs()))
}

#[test]
fn flat_rest_is_compatible() {
    let m = flat(8, 5);
    let n = m.n_nodes();
    let c = compatibility_check(&vec![[0.0; 2]; n], &vec![[0.0; 3]; n], &m, &params(), 1e-8);
    assert_eq!((c.divergence, c.bottom, c.traction), (0.0, 0.0, 0.0));
    assert!(c.passes());
}

#[test]
fn shear_stress_at_the_surface_is_the_traction_defect() {
    let m = flat(8, 5);
    let n = m.n_nodes();
    let c = compatibility_check(&vec![[0.0; 2]; n], &vec![[0.0, 0.3, 0.0]; n], &m, &params(), 1e-8);
    assert!((c.traction - 0.3).abs() < 1e-14);
    assert!(!c.passes());
}

#[test]
fn stress_cancelling_the_viscous_traction_is_compatible() {
    let m = flat(16, 9);
    let p = params();
    let k = 2.0 * PI;
    // stream function sin(kx) z² with z = X₂ + 1: divergence free, zero on the bottom
    let u0 = m.sample(|x, y| [2.0 * (k * x).sin() * (y + 1.0), -k * (k * x).cos() * (y + 1.0).powi(2)]);
    let grad = m.grad_vector(&u0);
    let sigma0: Vec<[f64; 3]> = grad.iter().map(|g| [0.0, -(1.0 - p.eps) * (g[0][1] + g[1][0]), 0.0]).collect();
    let c = compatibility_check(&u0, &sigma0, &m, &p, 1e-8);
    assert!(c.traction <= 1e-8, "{}", c.traction);
    assert_eq!(c.bottom, 0.0);
}

#[test]
fn flat_zeroth_order_source_is_zero() {
    let m = flat(8, 5);
    assert_eq!(max_abs(&zeroth_order_source(&m, &params(), 3)), 0.0);
}

#[test]
fn gravity_only_source_is_the_weighted_normal() {
    let m = wavy(0.05);
    let p = DimensionlessParams { alpha: 0.0, g0: 2.0, ..params() };
    let src = zeroth_order_source(&m, &p, 2);
    let nrm = surface_normal(&m.profile);
    for (i, g) in src.g[1].iter().enumerate() {
        let z = 0.05 * (2.0 * PI * i as f64 / 16.0).sin();
        assert!((g[0] - 2.0 * z * nrm[i][0]).abs() < 1e-15);
        assert!((g[1] - 2.0 * z * nrm[i][1]).abs() < 1e-15);
    }
}

#[test]
fn tension_only_source_matches_the_curvature_term() {
    let m = wavy(0.05);
    let p = DimensionlessParams { alpha: 0.7, g0: 0.0, ..params() };
    let src = zeroth_order_source(&m, &p, 2);
    let hn = curvature_term(&[0.0; 16], &m.profile, &[[0.0; 2]; 16]).unwrap();
    for (g, h) in src.g[1].iter().zip(&hn) {
        assert!((g[0] + 0.7 * h[0]).abs() < 1e-13 && (g[1] + 0.7 * h[1]).abs() < 1e-13);
    }
}

#[test]
fn error_terms_vanish_without_displacement() {
    for amp in [0.0, 0.05] {
        let m = wavy(amp);
        let state = busy_state(&m, 3, 1.0);
        let geoms = vec![GeometryState::initial(&m); 3];
        let e = error_terms(&state, &geoms, &m, &params(), &ConstitutiveLaw::JohnsonSegalman { a: 0.3 }).unwrap();
        assert_eq!(max_abs(&e), 0.0);
    }
}

#[test]
fn error_term_degrees_in_the_state() {
    let m = wavy(0.02);
    let p = DimensionlessParams { eps: 0.0, ..params() };
    let eta = m.sample(|x, y| [0.01 * (2.0 * PI * x).sin() * (y + 1.0), 0.005 * (2.0 * PI * x).cos() * (y + 1.0)]);
    let g = GeometryState::from_eta(&m, eta).unwrap();
    let geoms = vec![g; 2];
    let law = ConstitutiveLaw::oldroyd_b();
    let at = |lambda: f64| error_terms(&busy_state(&m, 2, lambda), &geoms, &m, &p, &law).unwrap();
    let (e1, e2) = (at(1.0), at(2.0));
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let div_ratio = norm(&e2.a_div[1]) / norm(&e1.a_div[1]);
    assert!((div_ratio - 2.0).abs() < 1e-12, "{div_ratio}");
    let flat_m = |r: &RHSData<f64>| r.m[1].iter().flat_map(|s| s.iter().copied()).collect::<Vec<_>>();
    let stress_ratio = norm(&flat_m(&e2)) / norm(&flat_m(&e1));
    assert!((stress_ratio - 4.0).abs() < 1e-12, "{stress_ratio}");
}

#[test]
fn stress_relaxes_at_the_weissenberg_rate() {
    let m = flat(8, 5);
    let p = params();
    let dt = 0.05;
    let levels = 11;
    let mut rhs = RHSData::zeros(&m, levels);
    rhs.sigma0 = initial_stress(&m, 0.5);
    let (state, rep) = invert_p1(&rhs, &m, &p, &ConstitutiveLaw::oldroyd_b(), dt, &FixedPointOptions::default()).unwrap();
    assert!(rep.converged);
    let scale = rhs.sigma0.iter().flat_map(|s| s.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
    for (k, lvl) in state.sigma.iter().enumerate() {
        let decay = (-(k as f64) * dt / p.we).exp();
        for (s, s0) in lvl.iter().zip(&rhs.sigma0) {
            for c in 0..3 {
                assert!((s[c] - s0[c] * decay).abs() <= 0.05 * scale);
            }
        }
    }
}

#[test]
fn incompatible_initial_stress_is_rejected_unless_forced() {
    let m = flat(8, 5);
    let mut rhs = RHSData::zeros(&m, 3);
    rhs.sigma0 = vec![[0.0, 1.0, 0.0]; m.n_nodes()];
    let law = ConstitutiveLaw::oldroyd_b();
    assert!(invert_p1(&rhs, &m, &params(), &law, 0.1, &FixedPointOptions::default()).is_err());
    let forced = FixedPointOptions { force: true, ..Default::default() };
    assert!(invert_p1(&rhs, &m, &params(), &law, 0.1, &forced).is_ok());
}

fn without_timing(mut r: IterationReport) -> IterationReport {
    r.window_times.clear();
    r
}

#[test]
fn runs_are_bit_identical() {
    let m = wavy(0.01);
    let n = m.n_nodes();
    let run = || {
        solve_full(&vec![[0.0; 2]; n], &vec![[0.0; 3]; n], &m, &params(), &ConstitutiveLaw::oldroyd_b(), 0.1, 0.2, 0.02, &FixedPointOptions::default())
            .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(without_timing(a.report), without_timing(b.report));
    assert_eq!(a.state, b.state);
}

#[test]
fn outer_contraction_shrinks_with_the_window() {
    let m = wavy(0.01);
    let n = m.n_nodes();
    let kappa = |t: f64| {
        let s = solve_full(&vec![[0.0; 2]; n], &vec![[0.0; 3]; n], &m, &params(), &ConstitutiveLaw::oldroyd_b(), t, t, 0.02, &FixedPointOptions::default())
            .unwrap();
        s.report.contraction().unwrap()
    };
    let (k1, k2) = (kappa(0.4), kappa(0.2));
    assert!(k2 < k1, "{k1} {k2}");
}

#[test]
fn newtonian_run_keeps_zero_stress() {
    let m = wavy(0.01);
    let n = m.n_nodes();
    let p = DimensionlessParams { eps: 0.0, ..params() };
    let s = solve_full(&vec![[0.0; 2]; n], &vec![[0.0; 3]; n], &m, &p, &ConstitutiveLaw::JohnsonSegalman { a: 0.0 }, 0.1, 0.2, 0.02, &FixedPointOptions::default())
        .unwrap();
    assert!(s.state.sigma.iter().flatten().all(|v| *v == [0.0; 3]));
    assert!(s.report.sigma_sup.iter().all(|v| *v == 0.0));
}

#[test]
fn non_convergence_is_reported() {
    let m = wavy(0.01);
    let n = m.n_nodes();
    let opts = FixedPointOptions { max_outer: 1, tol: 1e-30, ..Default::default() };
    let r = solve_full(&vec![[0.0; 2]; n], &vec![[0.0; 3]; n], &m, &params(), &ConstitutiveLaw::oldroyd_b(), 0.1, 0.1, 0.02, &opts);
    assert!(matches!(r, Err(vefs_core::SolverError::NoConvergence { .. })));
}
