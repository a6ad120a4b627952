use std::fs;
use std::path::Path;

use vefs_core::harness::output::read_snapshot;
use vefs_core::harness::{self, RunConfig, Scenario, TIMESERIES_COLUMNS};

const EQUILIBRIUM: &str = include_str!("../../../configs/equilibrium.ini");
const RELAXING: &str = include_str!("../../../configs/relaxing_bump.ini");
const MANUFACTURED: &str = include_str!("../../../configs/manufactured.ini");
const LEMMA: &str = include_str!("../../../configs/lemma_suite.ini");
const SWEEP: &str = include_str!("../../../configs/constitutive_sweep.ini");

const MINIMAL: &str = "[run]\nscenario = equilibrium\n[dimensionless]\nre = 1\nwe = 0.5\neps = 0.3\nalpha = 0.2\ng0 = 1\n";

fn parse_err(text: &str) -> (Option<usize>, String) {
    let e = RunConfig::parse(text, &[]).unwrap_err();
    (e.line, e.message)
}

fn run(text: &str, overrides: &[&str], dir: &Path) -> harness::RunReport {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let cfg = RunConfig::parse(text, &o).unwrap();
    harness::run(&cfg, dir).unwrap()
}

#[test]
fn shipped_configs_parse() {
    for (text, s) in [
        (EQUILIBRIUM, Scenario::Equilibrium),
        (RELAXING, Scenario::RelaxingBump),
        (MANUFACTURED, Scenario::Manufactured),
        (LEMMA, Scenario::LemmaSuite),
        (SWEEP, Scenario::ConstitutiveSweep),
    ] {
        assert_eq!(RunConfig::parse(text, &[]).unwrap().scenario, s);
    }
}

#[test]
fn errors_carry_line_numbers() {
    assert_eq!(parse_err("[run]\nscenario = equilibrium\n[bogus]\n").0, Some(3));
    let (line, msg) = parse_err("[grid]\nnx = 8\nfoo = 1\n");
    assert_eq!(line, Some(3));
    assert!(msg.contains("unknown key 'foo'"), "{msg}");
    let (line, msg) = parse_err("[grid]\nnx = 8\nnx = 9\n");
    assert_eq!(line, Some(3));
    assert!(msg.contains("duplicate"), "{msg}");
    assert_eq!(parse_err("nx = 8\n").0, Some(1));
    assert_eq!(parse_err("[grid]\n\nnx 8\n").0, Some(3));
    let (line, msg) = parse_err("[grid]\nnx = eight\n");
    assert_eq!(line, Some(2));
    assert!(msg.contains("eight"), "{msg}");
}

#[test]
fn error_display_includes_the_line() {
    let e = RunConfig::parse("[grid]\nnx = x\n", &[]).unwrap_err();
    assert!(e.to_string().starts_with("line 2: "), "{e}");
}

#[test]
fn exactly_one_parameter_block() {
    assert!(parse_err("[run]\nscenario = equilibrium\n").1.contains("missing parameter block"));
    let both = format!("{MINIMAL}[physical]\nrho = 1\n");
    assert!(parse_err(&both).1.contains("exactly one"));
}

#[test]
fn physical_block_is_nondimensionalized() {
    let text = "[run]\nscenario = equilibrium\n[physical]\nrho = 1000\nmu_sol = 0.5\nmu_pol = 0.5\nlambda = 2\ng = 9.81\nsurface_tension = 0.07\nlength = 1\nvelocity = 1\n";
    let d = RunConfig::parse(text, &[]).unwrap().dimensionless().unwrap();
    assert!((d.re - 1000.0).abs() < 1e-12 && (d.we - 2.0).abs() < 1e-15 && (d.eps - 0.5).abs() < 1e-15);
    let missing = text.replace("lambda = 2\n", "");
    assert!(parse_err(&missing).1.contains("lambda"));
}

#[test]
fn overrides_apply_after_the_file() {
    let cfg = RunConfig::parse(MINIMAL, &["grid.nx=12".into(), "run.scenario=manufactured".into()]).unwrap();
    assert_eq!(cfg.nx, 12);
    assert_eq!(cfg.scenario, Scenario::Manufactured);
    let e = RunConfig::parse(MINIMAL, &["grid.nope=1".into()]).unwrap_err();
    assert!(e.message.starts_with("override 'grid.nope=1'"), "{}", e.message);
    assert!(RunConfig::parse(MINIMAL, &["nx=12".into()]).is_err());
}

#[test]
fn invalid_values_are_rejected() {
    for o in ["time.dt=0", "grid.nx=2", "diagnostics.mms_levels=8", "tolerances.tol=-1"] {
        assert!(RunConfig::parse(MINIMAL, &[o.into()]).is_err(), "{o}");
    }
}

#[test]
fn resolved_config_round_trips() {
    for text in [EQUILIBRIUM, RELAXING, MANUFACTURED, LEMMA, SWEEP] {
        let cfg = RunConfig::parse(text, &[]).unwrap();
        let again = RunConfig::parse(&cfg.to_text(), &[]).unwrap();
        assert_eq!(again.to_text(), cfg.to_text());
    }
}

#[test]
fn equilibrium_stays_at_rest() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(EQUILIBRIUM, &["time.t_final=0.2"], dir.path());
    assert!(report.passed, "{:?}", report.checks);
    let csv = fs::read_to_string(dir.path().join("timeseries.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), TIMESERIES_COLUMNS.join(","));
    let mut rows = 0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        for c in [3, 4, 5, 6, 7] {
            assert_eq!(v[c], 0.0);
        }
        rows += 1;
    }
    assert_eq!(rows, 21);
    assert!(dir.path().join("config.resolved.ini").exists());
    assert!(dir.path().join("plot.py").exists());
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let o = ["time.t_final=0.1", "time.window=0.05", "time.dt=0.025"];
    run(RELAXING, &o, a.path());
    run(RELAXING, &o, b.path());
    for f in ["timeseries.csv", "norms.csv", "report.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn snapshots_read_back() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(RELAXING, &["time.t_final=0.1", "time.window=0.05", "time.dt=0.025", "diagnostics.snapshot_every=2"], dir.path());
    let snaps: Vec<&String> = report.artifacts.iter().filter(|a| a.starts_with("snapshots/")).collect();
    assert_eq!(snaps.len(), 3, "{snaps:?}");
    let (header, fields) = read_snapshot(&dir.path().join(snaps[0])).unwrap();
    assert_eq!(header[0], "vefs-snapshot 1");
    assert!(header.iter().any(|l| l == "byte_order little-endian"));
    let names: Vec<&str> = fields.iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"u1") && names.contains(&"sigma11") && names.contains(&"phi"), "{names:?}");
    assert!(fields.iter().all(|(_, d)| d.iter().all(|v| v.is_finite())));
}

#[test]
fn manufactured_scenario_reports_an_order() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(MANUFACTURED, &[], dir.path());
    assert!(report.passed, "{:?}", report.checks);
    let order = report.checks.iter().find(|c| c.name.contains("order")).unwrap();
    assert!(order.value >= 1.0);
}

#[test]
fn lemma_scenario_lists_every_check() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(LEMMA, &[], dir.path());
    assert!(report.passed, "{:?}", report.checks);
    let names: Vec<&str> = report.checks.iter().map(|c| c.name.as_str()).collect();
    for n in ["xi_small", "time_scaling", "sup_bound", "product", "integral", "negative_control"] {
        assert!(names.iter().any(|c| c.contains(n)), "{n} missing from {names:?}");
    }
}

#[test]
fn sweep_covers_every_law() {
    let dir = tempfile::tempdir().unwrap();
    let report = run(SWEEP, &["diagnostics.sweep_iterations=20"], dir.path());
    assert!(report.passed, "{:?}", report.checks);
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    for law in ["johnson_segalman", "giesekus", "ptt_exponential", "ptt_linear"] {
        assert!(csv.contains(law), "{law}");
    }
}
