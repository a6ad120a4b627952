//! Scenario runner behind the `vefs` command line tool.
//!
//! A run reads a [`RunConfig`], executes one scenario and writes into the
//! output directory:
//!
//! - `config.resolved.ini`: the config with every default filled in
//! - `timeseries.csv`: per-step diagnostics (time-stepping scenarios)
//! - `convergence.csv`, `lemma.csv`, `sweep.csv`, `norms.csv`: scenario tables
//! - `snapshots/step_NNNNNN.bin`: nodal fields behind a text header
//! - `report.json`: acceptance checks and metrics
//! - `plot.py`: regenerates figures from the CSV files
//!
//! Outputs depend only on the config, so reruns are byte-identical.

pub mod config;
pub mod manufactured;
pub mod output;

use std::f64::consts::PI;
use std::path::Path;

use thiserror::Error;

use crate::constitutive::{self, ConstitutiveLaw};
use crate::error::SolverError;
use crate::fixed_point::{self, FixedPointOptions, FullSolution, RHSData};
use crate::geometry::{build_mesh, Mesh};
use crate::norms::{self, Corpus, LemmaSettings, SampledTrajectory, ScalingCheck, CORPUS_MODES, CORPUS_SIZE};
use crate::stokes_solver::StokesOptions;
use crate::tensor::{self, Sym};

pub use config::{ConfigError, LawKind, ParamsBlock, ProfileKind, RunConfig, Scenario};
pub use output::{CheckLine, RunReport, TimeseriesRow, TIMESERIES_COLUMNS};

use output::{Sink, PLOT_SCRIPT};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config")]
    Config(#[from] ConfigError),
    #[error("{context}")]
    Io { context: String, source: std::io::Error },
    #[error("{context}")]
    Solver { context: String, source: SolverError },
}

trait Context<V> {
    fn context(self, what: &str) -> Result<V, HarnessError>;
}

impl<V> Context<V> for Result<V, SolverError> {
    fn context(self, what: &str) -> Result<V, HarnessError> {
        self.map_err(|source| HarnessError::Solver { context: what.into(), source })
    }
}

impl<V> Context<V> for std::io::Result<V> {
    fn context(self, what: &str) -> Result<V, HarnessError> {
        self.map_err(|source| HarnessError::Io { context: what.into(), source })
    }
}

/// Runs the configured scenario and writes every artifact into `out`.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<RunReport, HarnessError> {
    let mut sink = Sink::create(out).context("creating output directory")?;
    sink.text("config.resolved.ini", &cfg.to_text()).context("writing resolved config")?;
    sink.text("plot.py", PLOT_SCRIPT).context("writing plot script")?;
    let mut report = RunReport::new(cfg.scenario.name());
    match cfg.scenario {
        Scenario::Equilibrium | Scenario::RelaxingBump => time_stepping(cfg, &mut sink, &mut report)?,
        Scenario::Manufactured => manufactured_convergence(cfg, &mut sink, &mut report)?,
        Scenario::LemmaSuite => lemma_suite(cfg, &mut sink, &mut report)?,
        Scenario::ConstitutiveSweep => constitutive_sweep(cfg, &mut sink, &mut report)?,
    }
    sink.finish(&mut report).context("writing report")?;
    Ok(report)
}

pub fn fixed_point_options(cfg: &RunConfig) -> FixedPointOptions<f64> {
    FixedPointOptions {
        tol: cfg.tol,
        inner_tol: cfg.inner_tol,
        max_iter: cfg.max_iter,
        max_outer: cfg.max_outer,
        auto_halve: cfg.auto_halve,
        force: cfg.force,
        compat_tol: cfg.compat_tol,
        stokes: StokesOptions { lin_tol: cfg.lin_tol, ..StokesOptions::default() },
        ..FixedPointOptions::default()
    }
}

/// Smooth stress pattern scaled by `amp`; its shear part vanishes on a flat
/// free surface, so it is compatible with fluid at rest there.
pub fn initial_stress(mesh: &Mesh<f64>, amp: f64) -> Vec<Sym<f64>> {
    let k = 2.0 * PI / mesh.period;
    mesh.sample(|x, y| {
        [
            amp * (1.0 + 0.5 * (k * x).cos()),
            amp * 0.2 * (k * x).sin() * y,
            amp * (1.0 - 0.3 * (k * x).cos()),
        ]
    })
}

fn l2(mesh: &Mesh<f64>, w: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    (0..mesh.n_nodes()).map(|p| w[p] * f(p).powi(2)).sum::<f64>().sqrt()
}

fn timeseries_rows(sol: &FullSolution<f64>, mesh: &Mesh<f64>, dt: f64) -> Vec<TimeseriesRow> {
    let w = mesh.weights();
    // window index of every level, level 0 belongs to the first window
    let mut window_of = vec![0usize];
    for (wi, len) in sol.report.window_lengths.iter().enumerate() {
        let steps = (len / dt).round() as usize;
        window_of.extend(std::iter::repeat_n(wi, steps));
    }
    let mut residual_of = Vec::new();
    for r in &sol.residuals {
        residual_of.push(r.max());
    }
    (0..sol.state.n_levels())
        .map(|k| {
            let lvl = &sol.state.levels[k];
            let u = lvl.nodal_u();
            let q = lvl.nodal_q();
            let sig = &sol.state.sigma[k];
            let geom = &sol.geometry[k];
            let heights: Vec<f64> = (0..mesh.nx)
                .map(|i| mesh.profile.zeta[i] + geom.eta[mesh.idx(i, mesh.surface_index)][1])
                .collect();
            let hi = heights.iter().cloned().fold(f64::MIN, f64::max);
            let lo = heights.iter().cloned().fold(f64::MAX, f64::min);
            let win = window_of.get(k).copied().unwrap_or(0);
            let wr = sol.window_reports.get(win);
            TimeseriesRow {
                step: k,
                time: sol.times[k],
                surface_amplitude: 0.5 * (hi - lo),
                u_l2: l2(mesh, &w, |p| tensor::dot(&u[p], &u[p]).sqrt()),
                q_l2: l2(mesh, &w, |p| q[p]),
                sigma_l2: l2(mesh, &w, |p| tensor::sym_norm(&sig[p])),
                sigma_sup: sig.iter().map(tensor::sym_norm).fold(0.0, f64::max),
                phi_l2: (lvl.phi.iter().map(|v| v * v).sum::<f64>() * mesh.dx).sqrt(),
                window: win,
                outer_iterations: wr.map_or(0, |r| r.iterations),
                inner_iterations: wr.map_or(0, |r| r.inner_iterations.iter().sum()),
                kappa: wr.and_then(|r| r.contraction()).unwrap_or(f64::NAN),
                residual_max: residual_of.get(win).copied().unwrap_or(f64::NAN),
            }
        })
        .collect()
}

fn write_snapshot(sink: &mut Sink, sol: &FullSolution<f64>, mesh: &Mesh<f64>, dt: f64, k: usize) -> std::io::Result<()> {
    let lvl = &sol.state.levels[k];
    let u = lvl.nodal_u();
    let comp = |c: usize| u.iter().map(|v| v[c]).collect::<Vec<f64>>();
    let sig = |c: usize| sol.state.sigma[k].iter().map(|s| s[c]).collect::<Vec<f64>>();
    let eta = |c: usize| sol.geometry[k].eta.iter().map(|e| e[c]).collect::<Vec<f64>>();
    let (u1, u2, q) = (comp(0), comp(1), lvl.nodal_q());
    let (s11, s12, s22) = (sig(0), sig(1), sig(2));
    let (e1, e2) = (eta(0), eta(1));
    sink.snapshot(
        &format!("snapshots/step_{k:06}.bin"),
        (mesh.nz, mesh.nx),
        dt,
        sol.times[k],
        &[
            ("u1", &u1),
            ("u2", &u2),
            ("q", &q),
            ("sigma11", &s11),
            ("sigma12", &s12),
            ("sigma22", &s22),
            ("eta1", &e1),
            ("eta2", &e2),
            ("phi", &lvl.phi),
        ],
    )
}

fn time_stepping(cfg: &RunConfig, sink: &mut Sink, report: &mut RunReport) -> Result<(), HarnessError> {
    let params = cfg.dimensionless().context("parameters")?;
    let law = cfg.law();
    let mesh = build_mesh(&cfg.profile(), cfg.nx, cfg.nz).context("building mesh")?;
    let u0 = vec![[0.0; 2]; mesh.n_nodes()];
    let sigma0 = initial_stress(&mesh, cfg.sigma_amp);
    let opts = fixed_point_options(cfg);
    let sol = fixed_point::solve_full(&u0, &sigma0, &mesh, &params, &law, cfg.window, cfg.t_final, cfg.dt, &opts)
        .context("solving the free-surface problem")?;
    let rows = timeseries_rows(&sol, &mesh, cfg.dt);
    sink.csv("timeseries.csv", &rows, &TIMESERIES_COLUMNS).context("writing timeseries")?;
    let last = sol.state.n_levels() - 1;
    for k in 0..=last {
        let every = cfg.snapshot_every > 0 && k % cfg.snapshot_every == 0;
        if k == 0 || k == last || every {
            write_snapshot(sink, &sol, &mesh, cfg.dt, k).context("writing snapshot")?;
        }
    }

    let field_max = rows
        .iter()
        .map(|r| r.u_l2.max(r.q_l2).max(r.sigma_l2).max(r.phi_l2))
        .fold(0.0, f64::max);
    let residual_max = sol.residuals.iter().map(|r| r.max()).fold(0.0, f64::max);
    report.metric("steps", last as f64);
    report.metric("windows", sol.window_reports.len() as f64);
    report.metric("field_norm_max", field_max);
    report.metric("residual_max", residual_max);
    report.metric("max_divergence", sol.report.max_divergence);
    report.metric("outer_iterations", sol.report.iterations as f64);
    report.metric("halvings", sol.report.halvings as f64);
    report.metric("surface_amplitude_initial", rows[0].surface_amplitude);
    report.metric("surface_amplitude_final", rows[last].surface_amplitude);

    report.check(CheckLine::at_most("divergence", sol.report.max_divergence, 1e-10));
    report.check(CheckLine::at_most("full_residual", residual_max, 10.0 * cfg.tol));
    if cfg.scenario == Scenario::Equilibrium {
        report.check(CheckLine::at_most("equilibrium_field_norms", field_max, 1e-12));
    } else {
        let (a0, a1) = (rows[0].surface_amplitude, rows[last].surface_amplitude);
        report.check(CheckLine {
            name: "amplitude_decays".into(),
            passed: a1 < a0 || a0 == 0.0,
            value: a1,
            threshold: a0,
            detail: format!("final {a1:.6e} < initial {a0:.6e}"),
        });
    }
    if cfg.run_lemma_checks {
        trajectory_norms(cfg, &sol, &mesh, sink, report)?;
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct NormRow {
    field: &'static str,
    kind: &'static str,
    s: f64,
    value: f64,
}

/// Space-time norms of the computed trajectory.
fn trajectory_norms(
    cfg: &RunConfig,
    sol: &FullSolution<f64>,
    mesh: &Mesh<f64>,
    sink: &mut Sink,
    report: &mut RunReport,
) -> Result<(), HarnessError> {
    let u = sol.state.nodal_u();
    let comp = |c: usize| -> Vec<Vec<f64>> { u.iter().map(|l| l.iter().map(|v| v[c]).collect()).collect() };
    let s = 1.0 + cfg.r;
    let mut rows = Vec::new();
    for (name, c) in [("u1", 0), ("u2", 1)] {
        let traj = SampledTrajectory::new(comp(c), cfg.dt, mesh).context("velocity trajectory")?;
        rows.push(NormRow { field: name, kind: "K", s, value: norms::k_norm(&traj, s) });
    }
    let sig: Vec<Vec<f64>> = sol.state.sigma.iter().map(|l| l.iter().map(tensor::sym_norm).collect()).collect();
    let traj = SampledTrajectory::new(sig, cfg.dt, mesh).context("stress trajectory")?;
    rows.push(NormRow { field: "sigma_norm", kind: "K", s: cfg.r, value: norms::k_norm(&traj, cfg.r) });
    let phi = sol.state.phi();
    let sk = norms::surface_k_norm(&phi, cfg.dt, mesh.period, cfg.r + 0.5);
    rows.push(NormRow { field: "phi", kind: "SurfaceK", s: cfg.r + 0.5, value: sk });
    for r in &rows {
        report.metric(&format!("{}_{}_norm", r.field, r.kind), r.value);
    }
    sink.csv("norms.csv", &rows, &["field", "kind", "s", "value"]).context("writing norms")?;
    Ok(())
}

#[derive(serde::Serialize)]
struct ConvergenceRow {
    n: usize,
    error: f64,
    relative_traction: f64,
    relative_divergence: f64,
    order: f64,
}

fn manufactured_convergence(cfg: &RunConfig, sink: &mut Sink, report: &mut RunReport) -> Result<(), HarnessError> {
    let params = cfg.dimensionless().context("parameters")?;
    let levels: Vec<manufactured::MmsLevel> = cfg
        .mms_levels
        .iter()
        .map(|&n| manufactured::level(n, &params))
        .collect::<Result<_, _>>()
        .context("manufactured solve")?;
    let orders = manufactured::orders(&levels);
    let rows: Vec<ConvergenceRow> = levels
        .iter()
        .enumerate()
        .map(|(i, l)| ConvergenceRow {
            n: l.n,
            error: l.error,
            relative_traction: l.relative_traction,
            relative_divergence: l.relative_divergence,
            order: if i == 0 { f64::NAN } else { orders[i - 1] },
        })
        .collect();
    sink.csv("convergence.csv", &rows, &["n", "error", "relative_traction", "relative_divergence", "order"])
        .context("writing convergence table")?;
    let min_order = orders.iter().cloned().fold(f64::INFINITY, f64::min);
    let finest = levels.last().expect("at least two levels");
    let div = levels.iter().map(|l| l.relative_divergence).fold(0.0, f64::max);
    report.metric("min_order", min_order);
    report.metric("finest_error", finest.error);
    report.check(CheckLine::at_least("convergence_order", min_order, 1.0));
    report.check(CheckLine::at_most("finest_traction_residual", finest.relative_traction, 1e-8));
    report.check(CheckLine::at_most("divergence", div, 1e-10));
    Ok(())
}

#[derive(serde::Serialize)]
struct LemmaRow {
    entry: usize,
    check: String,
    horizon: f64,
    value: f64,
}

fn lemma_suite(cfg: &RunConfig, sink: &mut Sink, report: &mut RunReport) -> Result<(), HarnessError> {
    let mesh = build_mesh(&cfg.profile(), cfg.nx, cfg.nz).context("building mesh")?;
    let corpus = match cfg.seed {
        Some(seed) => Corpus::generate(seed, CORPUS_SIZE, CORPUS_MODES),
        None => Corpus::shipped(),
    };
    let settings = LemmaSettings { r: cfg.r, steps: cfg.lemma_steps, ..LemmaSettings::default() };
    let mut all: Vec<(usize, ScalingCheck)> = Vec::new();
    for (e, entry) in corpus.entries.iter().enumerate() {
        let u = |t: f64| entry.field(&mesh, t);
        let small = norms::check_smallness_lemmas(&u, &mesh, &cfg.ladder, &settings).context("smallness checks")?;
        for c in small.all() {
            all.push((e, c.clone()));
        }
        let v = |t: f64| entry.field(&mesh, t).iter().map(|x| x[0]).collect::<Vec<_>>();
        let integral = norms::check_integral_lemma(&v, &mesh, cfg.s_integral, cfg.eps_prime, &cfg.ladder, &settings)
            .context("integral check")?;
        all.push((e, integral));
    }
    let control = norms::negative_control(&mesh, &cfg.control_ladder, &settings, 4.0);

    let mut rows = Vec::new();
    for (e, c) in all.iter().chain(std::iter::once(&(corpus.entries.len(), control.clone()))) {
        for (h, v) in c.horizons.iter().zip(&c.values) {
            rows.push(LemmaRow { entry: *e, check: c.name.clone(), horizon: *h, value: *v });
        }
    }
    sink.csv("lemma.csv", &rows, &["entry", "check", "horizon", "value"]).context("writing lemma table")?;

    for name in ["xi_small", "time_scaling", "sup_bound", "product", "integral_lemma"] {
        let group: Vec<&ScalingCheck> = all.iter().filter(|(_, c)| c.name == name).map(|(_, c)| c).collect();
        let passed = group.iter().all(|c| c.passed);
        let uses_spread = matches!(name, "sup_bound" | "product");
        let worst = if uses_spread {
            group.iter().map(|c| c.spread).fold(0.0, f64::max)
        } else {
            group.iter().map(|c| c.slope).fold(f64::INFINITY, f64::min)
        };
        let threshold = group.first().map_or(0.0, |c| c.threshold);
        let criterion = group.first().map_or(String::new(), |c| c.criterion.clone());
        let what = if uses_spread { "worst spread" } else { "worst slope" };
        report.metric(&format!("{name}_{}", if uses_spread { "spread" } else { "slope" }), worst);
        report.check(CheckLine {
            name: name.into(),
            passed,
            value: worst,
            threshold,
            detail: format!("{what} {worst:.4} over {} trajectories; {criterion}", group.len()),
        });
    }
    let growth = control.values.last().copied().unwrap_or(0.0) / control.values.first().copied().unwrap_or(1.0);
    report.metric("negative_control_growth", growth);
    report.check(CheckLine {
        name: "negative_control".into(),
        passed: control.passed,
        value: growth,
        threshold: control.threshold,
        detail: format!("ratio grows by {growth:.3} from T={} to T={}", cfg.control_ladder[0], cfg.control_ladder.last().copied().unwrap_or(0.0)),
    });
    report.metric("corpus_seed", corpus.seed as f64);
    report.scaling = all.into_iter().map(|(_, c)| c).chain(std::iter::once(control)).collect();
    Ok(())
}

#[derive(serde::Serialize)]
struct SweepRow {
    law: &'static str,
    iteration: usize,
    diff: f64,
    kappa: f64,
    sigma_sup: f64,
}

/// `P(0)` right-hand side of the first window with the given initial stress.
pub fn first_window_rhs(mesh: &Mesh<f64>, params: &crate::scaling::DimensionlessParams<f64>, levels: usize, sigma0: Vec<Sym<f64>>) -> RHSData<f64> {
    let mut rhs = fixed_point::zeroth_order_source(mesh, params, levels);
    for l in rhs.g.iter_mut() {
        for v in l.iter_mut() {
            *v = [-v[0], -v[1]];
        }
    }
    rhs.sigma0 = sigma0;
    rhs
}

/// Picard history of `invert_p1` for a fixed number of iterations.
pub fn picard_history(
    cfg: &RunConfig,
    mesh: &Mesh<f64>,
    law: &ConstitutiveLaw<f64>,
) -> Result<fixed_point::IterationReport, HarnessError> {
    let params = cfg.dimensionless().context("parameters")?;
    let levels = (cfg.window / cfg.dt).round() as usize + 1;
    let rhs = first_window_rhs(mesh, &params, levels, initial_stress(mesh, cfg.sigma_amp));
    let opts = FixedPointOptions {
        inner_tol: 0.0,
        max_iter: cfg.sweep_iterations,
        require_convergence: false,
        ..fixed_point_options(cfg)
    };
    let (_, rep) = fixed_point::invert_p1(&rhs, mesh, &params, law, cfg.dt, &opts).context(law.name())?;
    Ok(rep)
}

fn constitutive_sweep(cfg: &RunConfig, sink: &mut Sink, report: &mut RunReport) -> Result<(), HarnessError> {
    let params = cfg.dimensionless().context("parameters")?;
    let mesh = build_mesh(&cfg.profile(), cfg.nx, cfg.nz).context("building mesh")?;
    let mut rows = Vec::new();
    for kind in [LawKind::JohnsonSegalman, LawKind::Giesekus, LawKind::PttExponential, LawKind::PttLinear] {
        let law = cfg.law_of(kind);
        let rep = picard_history(cfg, &mesh, &law)?;
        let name = law.name();
        for (i, s) in rep.sigma_sup.iter().enumerate() {
            rows.push(SweepRow {
                law: name,
                iteration: i + 1,
                diff: rep.diffs[i],
                kappa: if i == 0 { f64::NAN } else { rep.kappa[i - 1] },
                sigma_sup: *s,
            });
        }
        let bound = rep.sigma_sup.iter().cloned().fold(0.0, f64::max);
        let at10 = rep.sigma_sup[rep.sigma_sup.len().min(10) - 1];
        report.metric(&format!("{name}_sigma_sup"), bound);
        report.metric(&format!("{name}_iterations"), rep.iterations as f64);
        report.check(CheckLine {
            name: format!("{name}_sigma_bound"),
            passed: bound <= 2.0 * at10,
            value: bound,
            threshold: 2.0 * at10,
            detail: format!("sup over {} iterations {bound:.6e} <= 2 x {at10:.6e}", rep.iterations),
        });
        match law {
            ConstitutiveLaw::Giesekus { c, .. } => {
                let (v, ok) = constitutive::giesekus_bound_condition(c, bound, cfg.window, params.we);
                report.metric("giesekus_smallness", v);
                report.check(CheckLine { name: "giesekus_smallness".into(), passed: ok, value: v, threshold: 1.0, detail: format!("2cST0/We = {v:.4} < 1") });
            }
            ConstitutiveLaw::PttExponential { eps_ptt, .. } => {
                let (v, ok) = constitutive::ptt_bound_condition(eps_ptt, bound, cfg.window);
                report.metric("ptt_smallness", v);
                report.check(CheckLine { name: "ptt_smallness".into(), passed: ok, value: v, threshold: 1.0, detail: format!("(exp(eps S) - 1) T0 = {v:.4} < 1") });
            }
            _ => {}
        }
    }
    sink.csv("sweep.csv", &rows, &["law", "iteration", "diff", "kappa", "sigma_sup"]).context("writing sweep table")?;
    Ok(())
}
