//! Sectioned `key = value` run configuration.
//!
//! ```text
//! # comment
//! [run]
//! scenario = relaxing_bump
//!
//! [dimensionless]
//! re = 1.0
//! ```
//!
//! Exactly one of `[physical]` and `[dimensionless]` must be present. Every
//! other key has a default; [`RunConfig::to_text`] writes them all out.

use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::constitutive::ConstitutiveLaw;
use crate::geometry::DomainProfile;
use crate::scaling::{nondimensionalize, DimensionlessParams, PhysicalParams};
use crate::spectral::SurfaceDerivative;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// 1-based line in the config file; `None` for overrides and whole-file checks.
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Equilibrium,
    RelaxingBump,
    Manufactured,
    LemmaSuite,
    ConstitutiveSweep,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Equilibrium,
        Scenario::RelaxingBump,
        Scenario::Manufactured,
        Scenario::LemmaSuite,
        Scenario::ConstitutiveSweep,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Equilibrium => "equilibrium",
            Scenario::RelaxingBump => "relaxing_bump",
            Scenario::Manufactured => "manufactured",
            Scenario::LemmaSuite => "lemma_suite",
            Scenario::ConstitutiveSweep => "constitutive_sweep",
        }
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Scenario::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown scenario '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Flat,
    Sinusoid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LawKind {
    OldroydB,
    JohnsonSegalman,
    Giesekus,
    PttExponential,
    PttLinear,
}

impl LawKind {
    fn name(self) -> &'static str {
        match self {
            LawKind::OldroydB => "oldroyd_b",
            LawKind::JohnsonSegalman => "johnson_segalman",
            LawKind::Giesekus => "giesekus",
            LawKind::PttExponential => "ptt_exponential",
            LawKind::PttLinear => "ptt_linear",
        }
    }
}

impl FromStr for LawKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [
            LawKind::OldroydB,
            LawKind::JohnsonSegalman,
            LawKind::Giesekus,
            LawKind::PttExponential,
            LawKind::PttLinear,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown law '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamsBlock {
    Dimensionless { re: f64, we: f64, eps: f64, alpha: f64, g0: f64 },
    Physical(PhysicalParams<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,

    pub profile_kind: ProfileKind,
    pub amplitude: f64,
    pub waves: usize,
    pub period: f64,
    pub depth: f64,

    pub params: ParamsBlock,

    pub law: LawKind,
    pub slip: f64,
    pub giesekus_c: f64,
    pub eps_ptt: f64,
    pub we_in_exponent: bool,

    pub nx: usize,
    pub nz: usize,

    pub window: f64,
    pub dt: f64,
    pub t_final: f64,

    pub tol: f64,
    pub inner_tol: f64,
    pub lin_tol: f64,
    pub compat_tol: f64,
    pub max_iter: usize,
    pub max_outer: usize,

    /// Amplitude of the initial stress pattern; zero for a fluid at rest.
    pub sigma_amp: f64,

    pub ladder: Vec<f64>,
    pub control_ladder: Vec<f64>,
    pub mms_levels: Vec<usize>,
    pub lemma_steps: usize,
    pub r: f64,
    pub s_integral: f64,
    pub eps_prime: f64,
    pub sweep_iterations: usize,
    pub snapshot_every: usize,

    pub auto_halve: bool,
    pub spectral_derivatives: bool,
    pub run_lemma_checks: bool,
    pub force: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::RelaxingBump,
            out: None,
            seed: None,
            profile_kind: ProfileKind::Sinusoid,
            amplitude: 0.01,
            waves: 1,
            period: 1.0,
            depth: 1.0,
            params: ParamsBlock::Dimensionless { re: 1.0, we: 0.5, eps: 0.3, alpha: 0.2, g0: 1.0 },
            law: LawKind::OldroydB,
            slip: 1.0,
            giesekus_c: 0.1,
            eps_ptt: 0.1,
            we_in_exponent: false,
            nx: 16,
            nz: 7,
            window: 0.2,
            dt: 0.02,
            t_final: 0.4,
            tol: 1e-9,
            inner_tol: 1e-11,
            lin_tol: 1e-10,
            compat_tol: 1e-8,
            max_iter: 100,
            max_outer: 60,
            sigma_amp: 0.0,
            ladder: vec![1.0, 0.5, 0.25, 0.125],
            control_ladder: vec![1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625],
            mms_levels: vec![8, 16, 32],
            lemma_steps: 32,
            r: 0.3,
            s_integral: 0.25,
            eps_prime: 0.1,
            sweep_iterations: 50,
            snapshot_every: 0,
            auto_halve: false,
            spectral_derivatives: true,
            run_lemma_checks: true,
            force: false,
        }
    }
}

fn parse_value<V: FromStr>(raw: &str) -> Result<V, String>
where
    V::Err: fmt::Display,
{
    raw.parse::<V>().map_err(|e| format!("invalid value '{raw}': {e}"))
}

fn parse_list<V: FromStr>(raw: &str) -> Result<Vec<V>, String>
where
    V::Err: fmt::Display,
{
    let items: Result<Vec<V>, String> = raw.split(',').map(|s| parse_value(s.trim())).collect();
    let items = items?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

fn fmt_list<V: fmt::Display>(v: &[V]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

/// Partially filled physical block, completed once all entries are read.
#[derive(Default)]
struct PhysicalDraft {
    rho: Option<f64>,
    mu_sol: Option<f64>,
    mu_pol: Option<f64>,
    lambda: Option<f64>,
    g_tilde: Option<f64>,
    alpha_tilde: Option<f64>,
    p_atm: Option<f64>,
    length: Option<f64>,
    u0: Option<f64>,
}

struct Builder {
    cfg: RunConfig,
    dimless: Option<usize>,
    physical: Option<usize>,
    dim: [f64; 5],
    phys: PhysicalDraft,
    seen: BTreeSet<(String, String)>,
}

impl Builder {
    fn new() -> Self {
        let ParamsBlock::Dimensionless { re, we, eps, alpha, g0 } = RunConfig::default().params else {
            unreachable!("default is dimensionless")
        };
        Self {
            cfg: RunConfig::default(),
            dimless: None,
            physical: None,
            dim: [re, we, eps, alpha, g0],
            phys: PhysicalDraft::default(),
            seen: BTreeSet::new(),
        }
    }

    fn mark_block(&mut self, section: &str, line: usize) {
        match section {
            "dimensionless" => {
                self.dimless.get_or_insert(line);
            }
            "physical" => {
                self.physical.get_or_insert(line);
            }
            _ => {}
        }
    }

    fn set(&mut self, section: &str, key: &str, raw: &str) -> Result<(), String> {
        let c = &mut self.cfg;
        match (section, key) {
            ("run", "scenario") => c.scenario = raw.parse()?,
            ("run", "out") => c.out = Some(PathBuf::from(raw)),
            ("run", "seed") => c.seed = Some(parse_value(raw)?),

            ("profile", "kind") => {
                c.profile_kind = match raw {
                    "flat" => ProfileKind::Flat,
                    "sinusoid" => ProfileKind::Sinusoid,
                    _ => return Err(format!("unknown profile kind '{raw}'")),
                }
            }
            ("profile", "amplitude") => c.amplitude = parse_value(raw)?,
            ("profile", "waves") => c.waves = parse_value(raw)?,
            ("profile", "period") => c.period = parse_value(raw)?,
            ("profile", "depth") => c.depth = parse_value(raw)?,

            ("dimensionless", k) => {
                let slot = ["re", "we", "eps", "alpha", "g0"]
                    .iter()
                    .position(|n| *n == k)
                    .ok_or_else(|| format!("unknown key '{k}' in [dimensionless]"))?;
                self.dim[slot] = parse_value(raw)?;
            }
            ("physical", k) => {
                let v: f64 = parse_value(raw)?;
                let p = &mut self.phys;
                let slot = match k {
                    "rho" => &mut p.rho,
                    "mu_sol" => &mut p.mu_sol,
                    "mu_pol" => &mut p.mu_pol,
                    "lambda" => &mut p.lambda,
                    "g" => &mut p.g_tilde,
                    "surface_tension" => &mut p.alpha_tilde,
                    "p_atm" => &mut p.p_atm,
                    "length" => &mut p.length,
                    "velocity" => &mut p.u0,
                    _ => return Err(format!("unknown key '{k}' in [physical]")),
                };
                *slot = Some(v);
            }

            ("law", "kind") => c.law = raw.parse()?,
            ("law", "a") => c.slip = parse_value(raw)?,
            ("law", "c") => c.giesekus_c = parse_value(raw)?,
            ("law", "eps_ptt") => c.eps_ptt = parse_value(raw)?,
            ("law", "we_in_exponent") => c.we_in_exponent = parse_value(raw)?,

            ("grid", "nx") => c.nx = parse_value(raw)?,
            ("grid", "nz") => c.nz = parse_value(raw)?,

            ("time", "window") => c.window = parse_value(raw)?,
            ("time", "dt") => c.dt = parse_value(raw)?,
            ("time", "t_final") => c.t_final = parse_value(raw)?,

            ("tolerances", "tol") => c.tol = parse_value(raw)?,
            ("tolerances", "inner_tol") => c.inner_tol = parse_value(raw)?,
            ("tolerances", "lin_tol") => c.lin_tol = parse_value(raw)?,
            ("tolerances", "compat_tol") => c.compat_tol = parse_value(raw)?,
            ("tolerances", "max_iter") => c.max_iter = parse_value(raw)?,
            ("tolerances", "max_outer") => c.max_outer = parse_value(raw)?,

            ("initial", "sigma_amp") => c.sigma_amp = parse_value(raw)?,

            ("diagnostics", "ladder") => c.ladder = parse_list(raw)?,
            ("diagnostics", "control_ladder") => c.control_ladder = parse_list(raw)?,
            ("diagnostics", "mms_levels") => c.mms_levels = parse_list(raw)?,
            ("diagnostics", "lemma_steps") => c.lemma_steps = parse_value(raw)?,
            ("diagnostics", "r") => c.r = parse_value(raw)?,
            ("diagnostics", "s_integral") => c.s_integral = parse_value(raw)?,
            ("diagnostics", "eps_prime") => c.eps_prime = parse_value(raw)?,
            ("diagnostics", "sweep_iterations") => c.sweep_iterations = parse_value(raw)?,
            ("diagnostics", "snapshot_every") => c.snapshot_every = parse_value(raw)?,

            ("flags", "auto_halve") => c.auto_halve = parse_value(raw)?,
            ("flags", "spectral_derivatives") => c.spectral_derivatives = parse_value(raw)?,
            ("flags", "run_lemma_checks") => c.run_lemma_checks = parse_value(raw)?,
            ("flags", "force") => c.force = parse_value(raw)?,

            (s, k) if SECTIONS.contains(&s) => return Err(format!("unknown key '{k}' in [{s}]")),
            (s, _) => return Err(format!("unknown section [{s}]")),
        }
        Ok(())
    }

    fn entry(&mut self, section: &str, key: &str, raw: &str, line: Option<usize>) -> Result<(), ConfigError> {
        let err = |message: String| ConfigError { line, message };
        if line.is_some() && !self.seen.insert((section.to_string(), key.to_string())) {
            return Err(err(format!("duplicate key '{key}' in [{section}]")));
        }
        self.mark_block(section, line.unwrap_or(0));
        self.set(section, key, raw).map_err(err)
    }

    fn finish(mut self) -> Result<RunConfig, ConfigError> {
        let whole = |message: String| ConfigError { line: None, message };
        if let (Some(d), Some(p)) = (self.dimless, self.physical) {
            return Err(ConfigError {
                line: (d > 0 && p > 0).then(|| d.max(p)),
                message: "both [dimensionless] and [physical] given; use exactly one".into(),
            });
        }
        self.cfg.params = match (self.dimless, self.physical) {
            (None, None) => return Err(whole("missing parameter block: give [dimensionless] or [physical]".into())),
            (Some(_), None) => {
                let [re, we, eps, alpha, g0] = self.dim;
                ParamsBlock::Dimensionless { re, we, eps, alpha, g0 }
            }
            _ => {
                let p = &self.phys;
                let need = |v: Option<f64>, name: &str| v.ok_or_else(|| whole(format!("[physical] is missing '{name}'")));
                ParamsBlock::Physical(PhysicalParams {
                    rho: need(p.rho, "rho")?,
                    mu_sol: need(p.mu_sol, "mu_sol")?,
                    mu_pol: need(p.mu_pol, "mu_pol")?,
                    lambda: need(p.lambda, "lambda")?,
                    g_tilde: need(p.g_tilde, "g")?,
                    alpha_tilde: need(p.alpha_tilde, "surface_tension")?,
                    p_atm: p.p_atm.unwrap_or(101_325.0),
                    length: need(p.length, "length")?,
                    u0: need(p.u0, "velocity")?,
                })
            }
        };
        self.cfg.validate().map_err(whole)?;
        Ok(self.cfg)
    }
}

const SECTIONS: [&str; 11] = [
    "run",
    "profile",
    "dimensionless",
    "physical",
    "law",
    "grid",
    "time",
    "tolerances",
    "initial",
    "diagnostics",
    "flags",
];

fn split_override(o: &str) -> Result<(String, String, String), ConfigError> {
    let bad = || ConfigError { line: None, message: format!("override '{o}' is not of the form section.key=value") };
    let (lhs, value) = o.split_once('=').ok_or_else(bad)?;
    let (section, key) = lhs.trim().split_once('.').ok_or_else(bad)?;
    Ok((section.trim().to_string(), key.trim().to_string(), value.trim().to_string()))
}

impl RunConfig {
    /// Parses a config file and applies `section.key=value` overrides.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut b = Builder::new();
        let mut section: Option<String> = None;
        for (n, raw_line) in text.lines().enumerate() {
            let line = n + 1;
            let content = raw_line.split(['#', ';']).next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError { line: Some(line), message: "unterminated section header".into() })?
                    .trim();
                if !SECTIONS.contains(&name) {
                    return Err(ConfigError { line: Some(line), message: format!("unknown section [{name}]") });
                }
                b.mark_block(name, line);
                section = Some(name.to_string());
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| ConfigError { line: Some(line), message: format!("expected 'key = value', got '{content}'") })?;
            let sec = section
                .as_deref()
                .ok_or_else(|| ConfigError { line: Some(line), message: "key outside of any [section]".into() })?;
            b.entry(sec, key.trim(), value.trim(), Some(line))?;
        }
        for o in overrides {
            let (s, k, v) = split_override(o)?;
            b.entry(&s, &k, &v, None).map_err(|e| ConfigError {
                line: None,
                message: format!("override '{o}': {}", e.message),
            })?;
        }
        b.finish()
    }

    fn validate(&self) -> Result<(), String> {
        let positive = [
            ("tol", self.tol),
            ("inner_tol", self.inner_tol),
            ("lin_tol", self.lin_tol),
            ("compat_tol", self.compat_tol),
            ("dt", self.dt),
            ("window", self.window),
            ("t_final", self.t_final),
            ("period", self.period),
            ("depth", self.depth),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be finite and > 0"));
            }
        }
        if self.nx < 4 || self.nz < 4 {
            return Err("grid needs nx >= 4 and nz >= 4".into());
        }
        if self.ladder.iter().chain(&self.control_ladder).any(|t| !(*t > 0.0)) {
            return Err("ladder horizons must be > 0".into());
        }
        if self.mms_levels.len() < 2 || self.mms_levels.iter().any(|&n| n < 4) {
            return Err("mms_levels needs at least two grids with n >= 4".into());
        }
        if self.lemma_steps < 2 || self.sweep_iterations == 0 {
            return Err("lemma_steps must be >= 2 and sweep_iterations >= 1".into());
        }
        Ok(())
    }

    pub fn dimensionless(&self) -> crate::Result<DimensionlessParams<f64>> {
        match self.params {
            ParamsBlock::Dimensionless { re, we, eps, alpha, g0 } => {
                let p = DimensionlessParams { re, we, eps, alpha, g0, a: self.slip };
                p.validate()?;
                Ok(p)
            }
            ParamsBlock::Physical(p) => nondimensionalize(&p, self.slip),
        }
    }

    pub fn law(&self) -> ConstitutiveLaw<f64> {
        self.law_of(self.law)
    }

    pub fn law_of(&self, kind: LawKind) -> ConstitutiveLaw<f64> {
        let a = self.slip;
        match kind {
            LawKind::OldroydB => ConstitutiveLaw::oldroyd_b(),
            LawKind::JohnsonSegalman => ConstitutiveLaw::JohnsonSegalman { a },
            LawKind::Giesekus => ConstitutiveLaw::Giesekus { a, c: self.giesekus_c },
            LawKind::PttExponential => {
                ConstitutiveLaw::PttExponential { a, eps_ptt: self.eps_ptt, we_in_exponent: self.we_in_exponent }
            }
            LawKind::PttLinear => {
                ConstitutiveLaw::PttLinear { a, eps_ptt: self.eps_ptt, we_in_exponent: self.we_in_exponent }
            }
        }
    }

    pub fn profile(&self) -> DomainProfile<f64> {
        let p = match self.profile_kind {
            ProfileKind::Flat => DomainProfile::flat(self.nx, self.period, self.depth),
            ProfileKind::Sinusoid => DomainProfile::sinusoid(self.nx, self.period, self.amplitude, self.waves, self.depth),
        };
        let mode = if self.spectral_derivatives {
            SurfaceDerivative::Spectral
        } else {
            SurfaceDerivative::CentralDifference
        };
        p.with_derivative(mode)
    }

    /// The resolved configuration with every default written out.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut sec = |name: &str, entries: Vec<(&str, String)>| {
            s.push_str(&format!("[{name}]\n"));
            for (k, v) in entries {
                s.push_str(&format!("{k} = {v}\n"));
            }
            s.push('\n');
        };
        let mut run = vec![("scenario", self.scenario.name().to_string())];
        if let Some(o) = &self.out {
            run.push(("out", o.display().to_string()));
        }
        if let Some(seed) = self.seed {
            run.push(("seed", seed.to_string()));
        }
        sec("run", run);
        sec(
            "profile",
            vec![
                ("kind", if self.profile_kind == ProfileKind::Flat { "flat" } else { "sinusoid" }.to_string()),
                ("amplitude", self.amplitude.to_string()),
                ("waves", self.waves.to_string()),
                ("period", self.period.to_string()),
                ("depth", self.depth.to_string()),
            ],
        );
        match self.params {
            ParamsBlock::Dimensionless { re, we, eps, alpha, g0 } => sec(
                "dimensionless",
                vec![
                    ("re", re.to_string()),
                    ("we", we.to_string()),
                    ("eps", eps.to_string()),
                    ("alpha", alpha.to_string()),
                    ("g0", g0.to_string()),
                ],
            ),
            ParamsBlock::Physical(p) => sec(
                "physical",
                vec![
                    ("rho", p.rho.to_string()),
                    ("mu_sol", p.mu_sol.to_string()),
                    ("mu_pol", p.mu_pol.to_string()),
                    ("lambda", p.lambda.to_string()),
                    ("g", p.g_tilde.to_string()),
                    ("surface_tension", p.alpha_tilde.to_string()),
                    ("p_atm", p.p_atm.to_string()),
                    ("length", p.length.to_string()),
                    ("velocity", p.u0.to_string()),
                ],
            ),
        }
        sec(
            "law",
            vec![
                ("kind", self.law.name().to_string()),
                ("a", self.slip.to_string()),
                ("c", self.giesekus_c.to_string()),
                ("eps_ptt", self.eps_ptt.to_string()),
                ("we_in_exponent", self.we_in_exponent.to_string()),
            ],
        );
        sec("grid", vec![("nx", self.nx.to_string()), ("nz", self.nz.to_string())]);
        sec(
            "time",
            vec![
                ("window", self.window.to_string()),
                ("dt", self.dt.to_string()),
                ("t_final", self.t_final.to_string()),
            ],
        );
        sec(
            "tolerances",
            vec![
                ("tol", self.tol.to_string()),
                ("inner_tol", self.inner_tol.to_string()),
                ("lin_tol", self.lin_tol.to_string()),
                ("compat_tol", self.compat_tol.to_string()),
                ("max_iter", self.max_iter.to_string()),
                ("max_outer", self.max_outer.to_string()),
            ],
        );
        sec("initial", vec![("sigma_amp", self.sigma_amp.to_string())]);
        sec(
            "diagnostics",
            vec![
                ("ladder", fmt_list(&self.ladder)),
                ("control_ladder", fmt_list(&self.control_ladder)),
                ("mms_levels", fmt_list(&self.mms_levels)),
                ("lemma_steps", self.lemma_steps.to_string()),
                ("r", self.r.to_string()),
                ("s_integral", self.s_integral.to_string()),
                ("eps_prime", self.eps_prime.to_string()),
                ("sweep_iterations", self.sweep_iterations.to_string()),
                ("snapshot_every", self.snapshot_every.to_string()),
            ],
        );
        sec(
            "flags",
            vec![
                ("auto_halve", self.auto_halve.to_string()),
                ("spectral_derivatives", self.spectral_derivatives.to_string()),
                ("run_lemma_checks", self.run_lemma_checks.to_string()),
                ("force", self.force.to_string()),
            ],
        );
        s
    }
}
