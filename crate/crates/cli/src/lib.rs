//! Configuration, scenario orchestration and CSV output for the `trapdiff`
//! binary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;
use trapdiff::potential::{
    peclet_number, rational_fit, saturated_capacity_i, saturated_m, solve_phi_for_m, sutherland_constant,
    tail_ratio, taylor_coefficient_mk, trap_capacity_i, trap_coefficient_m, CapacityTable, PotentialSpec,
};
use trapdiff::quadrature::QuadratureConfig;
use trapdiff::solver_full::{
    series_csv, DriftScheme, FullConfig1D, FullConfig2D, FullGeometry2D, FullSolver1D, FullSolver2D, GaussianIC,
    InitialProfile, Mobility, SeriesPoint,
};
use trapdiff::solver_multiscale::{
    mass_series_csv, MassPoint, MultiscaleConfig1D, MultiscaleConfig2D, MultiscaleGeometry2D, MultiscaleSolver1D,
    MultiscaleSolver2D, TrapModel,
};
use trapdiff::validation::{
    compare_models_1d, dof_estimate, dof_table_csv, dx_independence_study, epsilon_sweep, epsilon_sweep_csv,
    fraction_csv, multiscale_fraction_series, ComparisonSetup,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("{scenario}: {source}")]
    Solver {
        scenario: Scenario,
        #[source]
        source: trapdiff::Error,
    },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Full1d,
    Multiscale1d,
    Full2dSlab,
    Full2dBubble,
    Multiscale2dBubble,
    Compare1d,
    Compare2d,
    Coeffs,
    Dof,
    ReproducePaper,
}

impl Scenario {
    pub const ALL: [Scenario; 10] = [
        Scenario::Full1d,
        Scenario::Multiscale1d,
        Scenario::Full2dSlab,
        Scenario::Full2dBubble,
        Scenario::Multiscale2dBubble,
        Scenario::Compare1d,
        Scenario::Compare2d,
        Scenario::Coeffs,
        Scenario::Dof,
        Scenario::ReproducePaper,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Full1d => "full-1d",
            Scenario::Multiscale1d => "multiscale-1d",
            Scenario::Full2dSlab => "full-2d-slab",
            Scenario::Full2dBubble => "full-2d-bubble",
            Scenario::Multiscale2dBubble => "multiscale-2d-bubble",
            Scenario::Compare1d => "compare-1d",
            Scenario::Compare2d => "compare-2d",
            Scenario::Coeffs => "coeffs",
            Scenario::Dof => "dof",
            Scenario::ReproducePaper => "reproduce-paper",
        }
    }

    fn is_2d(self) -> bool {
        matches!(
            self,
            Scenario::Full2dSlab | Scenario::Full2dBubble | Scenario::Multiscale2dBubble | Scenario::Compare2d
        )
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| usage(format!("unknown scenario '{s}'")))
    }
}

/// Every recognized key, in echo order.
pub const KEYS: &[&str] = &[
    "scenario",
    "d",
    "phi",
    "m",
    "epsilon",
    "cutoff",
    "dx",
    "dt",
    "dy",
    "t_final",
    "v0",
    "sigma",
    "x_m",
    "y_m",
    "saturated",
    "scheme",
    "initial",
    "stride",
    "half_width",
    "radius",
    "epsilons",
    "dxs",
    "c_points",
    "taylor_order",
    "n",
    "big_n",
    "eps_tilde",
];

/// Raw `key = value` pairs, later entries overriding earlier ones.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
}

impl RawConfig {
    /// Parse line-oriented `key = value` text. `#` starts a comment.
    pub fn parse(text: &str) -> CliResult<Self> {
        let mut raw = RawConfig::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| usage(format!("line {}: expected 'key = value', got '{line}'", no + 1)))?;
            raw.set(key.trim(), value.trim())?;
        }
        Ok(raw)
    }

    pub fn set(&mut self, key: &str, value: &str) -> CliResult<()> {
        let key = key.trim().to_ascii_lowercase().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(usage(format!("unknown key '{key}'")));
        }
        if value.is_empty() {
            return Err(usage(format!("key '{key}' has no value")));
        }
        self.entries.insert(key, value.to_string());
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        self.entries
            .get(key)
            .map(|v| v.parse::<T>().map_err(|_| usage(format!("key '{key}': cannot parse '{v}'"))))
            .transpose()
    }

    fn list(&self, key: &str) -> CliResult<Option<Vec<f64>>> {
        self.entries
            .get(key)
            .map(|v| {
                v.split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| usage(format!("key '{key}': cannot parse '{s}'"))))
                    .collect()
            })
            .transpose()
    }
}

/// Fully validated scenario configuration with defaults filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub d: f64,
    pub phi: Option<f64>,
    pub m: Option<f64>,
    pub epsilon: Option<f64>,
    pub cutoff: f64,
    pub dx: Option<f64>,
    pub dt: Option<f64>,
    pub dy: Option<f64>,
    pub t_final: Option<f64>,
    pub ic: Option<GaussianIC>,
    pub saturated: bool,
    pub scheme: Option<DriftScheme>,
    pub initial: Option<InitialProfile>,
    pub stride: usize,
    pub half_width: f64,
    pub radius: f64,
    pub epsilons: Option<Vec<f64>>,
    pub dxs: Option<Vec<f64>>,
    pub c_points: usize,
    pub taylor_order: u32,
    pub n: f64,
    pub big_n: f64,
    pub eps_tilde: f64,
}

fn parse_scheme(s: &str) -> CliResult<DriftScheme> {
    match s {
        "fitted" => Ok(DriftScheme::BoltzmannFitted),
        "central" => Ok(DriftScheme::Central),
        "sg" => Ok(DriftScheme::ScharfetterGummel),
        _ => Err(usage(format!("key 'scheme': expected fitted, central or sg, got '{s}'"))),
    }
}

fn parse_initial(s: &str) -> CliResult<InitialProfile> {
    match s {
        "pointwise" => Ok(InitialProfile::Pointwise),
        "boltzmann" => Ok(InitialProfile::Boltzmann),
        _ => Err(usage(format!("key 'initial': expected pointwise or boltzmann, got '{s}'"))),
    }
}

fn initial_name(p: InitialProfile) -> &'static str {
    match p {
        InitialProfile::Pointwise => "pointwise",
        InitialProfile::Boltzmann => "boltzmann",
    }
}

fn require<T>(value: Option<T>, key: &str, scenario: Scenario) -> CliResult<T> {
    value.ok_or_else(|| usage(format!("scenario {scenario} requires key '{key}'")))
}

fn positive(value: f64, key: &str) -> CliResult<f64> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(usage(format!("key '{key}' must be a positive number, got {value}")))
    }
}

fn quad() -> QuadratureConfig {
    QuadratureConfig::default()
}

impl ScenarioConfig {
    /// Validate `raw` for `scenario`. A `scenario` key in `raw` must agree
    /// with the one given.
    pub fn from_raw(scenario: Option<Scenario>, raw: &RawConfig) -> CliResult<Self> {
        let from_file: Option<String> = raw.get("scenario")?;
        let scenario = match (scenario, from_file) {
            (Some(s), Some(f)) if s.name() != f => {
                return Err(usage(format!("scenario '{s}' conflicts with 'scenario = {f}' in the config")))
            }
            (Some(s), _) => s,
            (None, Some(f)) => f.parse()?,
            (None, None) => return Err(usage("no scenario given")),
        };
        let defaults_2d = scenario.is_2d();
        let ic = match (raw.get::<f64>("v0")?, raw.get::<f64>("sigma")?, raw.get::<f64>("x_m")?) {
            (Some(v0), Some(sigma), Some(x_m)) => {
                let y_m = match raw.get::<f64>("y_m")? {
                    Some(y) => y,
                    None if defaults_2d => return Err(usage(format!("scenario {scenario} requires key 'y_m'"))),
                    None => 0.0,
                };
                let ic = GaussianIC { v0, sigma, x_m, y_m };
                ic.validate().map_err(|e| usage(e.to_string()))?;
                Some(ic)
            }
            (None, None, None) => None,
            _ => return Err(usage("initial condition needs all of 'v0', 'sigma' and 'x_m'")),
        };
        let cfg = ScenarioConfig {
            scenario,
            d: raw.get("d")?.unwrap_or(1.0),
            phi: raw.get("phi")?,
            m: raw.get("m")?,
            epsilon: raw.get("epsilon")?,
            cutoff: raw.get("cutoff")?.unwrap_or(2.0),
            dx: raw.get("dx")?,
            dt: raw.get("dt")?,
            dy: raw.get("dy")?,
            t_final: raw.get("t_final")?,
            ic,
            saturated: raw.get("saturated")?.unwrap_or(false),
            scheme: raw.get::<String>("scheme")?.map(|s| parse_scheme(&s)).transpose()?,
            initial: raw.get::<String>("initial")?.map(|s| parse_initial(&s)).transpose()?,
            stride: raw.get("stride")?.unwrap_or(1),
            half_width: raw.get("half_width")?.unwrap_or(1.5),
            radius: raw.get("radius")?.unwrap_or(0.5),
            epsilons: raw.list("epsilons")?,
            dxs: raw.list("dxs")?,
            c_points: raw.get("c_points")?.unwrap_or(100),
            taylor_order: raw.get("taylor_order")?.unwrap_or(4),
            n: raw.get("n")?.unwrap_or(10.0),
            big_n: raw.get("big_n")?.unwrap_or(100.0),
            eps_tilde: raw.get("eps_tilde")?.unwrap_or(1e-6),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> CliResult<()> {
        positive(self.d, "d")?;
        positive(self.cutoff, "cutoff")?;
        if self.stride == 0 {
            return Err(usage("key 'stride' must be at least 1"));
        }
        for (key, v) in [("dx", self.dx), ("dt", self.dt), ("dy", self.dy), ("t_final", self.t_final), ("epsilon", self.epsilon)] {
            if let Some(v) = v {
                positive(v, key)?;
            }
        }
        if let Some(phi) = self.phi {
            if !(phi >= 0.0 && phi.is_finite()) {
                return Err(usage(format!("key 'phi' must be >= 0, got {phi}")));
            }
        }
        if let Some(m) = self.m {
            if !(m >= 0.0 && m.is_finite()) {
                return Err(usage(format!("key 'm' must be >= 0, got {m}")));
            }
        }
        let sc = self.scenario;
        match sc {
            Scenario::Coeffs => {
                positive(self.n, "n")?;
                if self.c_points < 2 {
                    return Err(usage("key 'c_points' must be at least 2"));
                }
                self.spec()?;
            }
            Scenario::Dof => {
                dof_estimate(1, self.n, self.big_n, self.eps_tilde).map_err(|e| usage(e.to_string()))?;
            }
            Scenario::ReproducePaper => {}
            Scenario::Full1d | Scenario::Full2dSlab | Scenario::Full2dBubble => {
                self.grid_keys()?;
                self.check_peclet(&self.spec()?, self.dx.unwrap())?;
            }
            Scenario::Multiscale1d | Scenario::Multiscale2dBubble => {
                self.grid_keys()?;
                self.trap()?;
            }
            Scenario::Compare1d => {
                self.grid_keys()?;
                require(self.m, "m", sc)?;
                for setup in self.comparison_setups()? {
                    self.check_peclet(&setup.spec().map_err(|e| usage(e.to_string()))?, setup.dx)?;
                }
            }
            Scenario::Compare2d => {
                self.grid_keys()?;
                require(self.m, "m", sc)?;
                self.check_peclet(&self.spec()?, self.dx.unwrap())?;
            }
        }
        Ok(())
    }

    fn grid_keys(&self) -> CliResult<()> {
        let sc = self.scenario;
        require(self.dx, "dx", sc)?;
        require(self.t_final, "t_final", sc)?;
        require(self.ic, "v0", sc)?;
        Ok(())
    }

    /// The central scheme needs mesh Peclet < 2. The fitted schemes are
    /// monotone at any Peclet number but still need a grid finer than the
    /// layer, so an unresolved layer with Peclet >= 2 is rejected as well.
    fn check_peclet(&self, spec: &PotentialSpec, dx: f64) -> CliResult<()> {
        let pe = peclet_number(spec, dx).map_err(|e| usage(e.to_string()))?;
        let scheme = self.full_scheme();
        if pe >= 2.0 && (scheme == DriftScheme::Central || dx > spec.epsilon) {
            return Err(usage(format!(
                "mesh Peclet number {pe:.4} violates the stability limit 2 (scheme {}, dx = {dx}, epsilon = {})",
                scheme.name(),
                spec.epsilon
            )));
        }
        Ok(())
    }

    fn mobility(&self) -> Mobility {
        if self.saturated {
            Mobility::Saturating
        } else {
            Mobility::Linear
        }
    }

    fn full_scheme(&self) -> DriftScheme {
        self.scheme.unwrap_or_else(|| DriftScheme::default_for(self.mobility()))
    }

    /// Potential from `phi`, or from `m` by root solve.
    pub fn spec(&self) -> CliResult<PotentialSpec> {
        let sc = self.scenario;
        let eps = match (sc, self.epsilon) {
            (Scenario::Coeffs, None) => 1e-4,
            (_, e) => require(e, "epsilon", sc)?,
        };
        let phi = match (self.phi, self.m) {
            (Some(_), Some(_)) => return Err(usage("give either 'phi' or 'm', not both")),
            (Some(phi), None) => phi,
            (None, Some(m)) => solve_phi_for_m(m, eps, self.cutoff, 1e-12, &quad()).map_err(|e| usage(e.to_string()))?,
            (None, None) if sc == Scenario::Coeffs => 10.0,
            (None, None) => return Err(usage(format!("scenario {sc} requires key 'phi' or 'm'"))),
        };
        PotentialSpec::new(phi, eps, self.cutoff).map_err(|e| usage(e.to_string()))
    }

    /// Reduced-model trap: linear with `m` (or `M` of `phi`), or saturated
    /// with the potential.
    pub fn trap(&self) -> CliResult<TrapModel> {
        if self.saturated {
            return Ok(TrapModel::Saturated { spec: self.spec()? });
        }
        match (self.m, self.phi) {
            (Some(m), None) => Ok(TrapModel::Linear { m }),
            _ => {
                let spec = self.spec()?;
                let m = trap_coefficient_m(&spec, &quad()).map_err(|e| usage(e.to_string()))?;
                Ok(TrapModel::Linear { m })
            }
        }
    }

    fn dt(&self) -> f64 {
        self.dt.or(self.dx).unwrap_or(0.0)
    }

    fn comparison_setups(&self) -> CliResult<Vec<ComparisonSetup>> {
        let sc = self.scenario;
        let m = require(self.m, "m", sc)?;
        let dx = require(self.dx, "dx", sc)?;
        let base = |epsilon: f64, dx: f64| ComparisonSetup {
            d: self.d,
            cutoff: self.cutoff,
            dt: self.dt.unwrap_or(dx),
            saturated: self.saturated,
            initial: self.initial.unwrap_or(InitialProfile::Boltzmann),
            ..ComparisonSetup::new(m, epsilon, dx, self.t_final.unwrap_or(0.0), self.ic.unwrap())
        };
        let epsilons = match (&self.epsilons, self.epsilon) {
            (Some(list), _) => list.clone(),
            (None, Some(e)) => vec![e],
            (None, None) => return Err(usage(format!("scenario {sc} requires key 'epsilon' or 'epsilons'"))),
        };
        let dxs = self.dxs.clone().unwrap_or_else(|| vec![dx]);
        let mut out = Vec::new();
        for &e in &epsilons {
            positive(e, "epsilons")?;
            for &h in &dxs {
                positive(h, "dxs")?;
                out.push(base(e, h));
            }
        }
        Ok(out)
    }

    /// `key = value` lines that parse back to this configuration.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        let num = |v: f64| format!("{v:e}");
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(", ");
        line("scenario", self.scenario.name().into());
        line("d", num(self.d));
        if let Some(v) = self.phi {
            line("phi", num(v));
        }
        if let Some(v) = self.m {
            line("m", num(v));
        }
        if let Some(v) = self.epsilon {
            line("epsilon", num(v));
        }
        line("cutoff", num(self.cutoff));
        for (k, v) in [("dx", self.dx), ("dt", self.dt), ("dy", self.dy), ("t_final", self.t_final)] {
            if let Some(v) = v {
                line(k, num(v));
            }
        }
        if let Some(ic) = self.ic {
            line("v0", num(ic.v0));
            line("sigma", num(ic.sigma));
            line("x_m", num(ic.x_m));
            line("y_m", num(ic.y_m));
        }
        line("saturated", self.saturated.to_string());
        if let Some(s) = self.scheme {
            line("scheme", s.name().into());
        }
        if let Some(p) = self.initial {
            line("initial", initial_name(p).into());
        }
        line("stride", self.stride.to_string());
        line("half_width", num(self.half_width));
        line("radius", num(self.radius));
        if let Some(v) = &self.epsilons {
            line("epsilons", list(v));
        }
        if let Some(v) = &self.dxs {
            line("dxs", list(v));
        }
        line("c_points", self.c_points.to_string());
        line("taylor_order", self.taylor_order.to_string());
        line("n", num(self.n));
        line("big_n", num(self.big_n));
        line("eps_tilde", num(self.eps_tilde));
        out
    }
}

/// Parse a config file (may be absent) plus command-line overrides.
pub fn parse_config(scenario: Option<Scenario>, file: Option<&Path>, overrides: &[(String, String)]) -> CliResult<ScenarioConfig> {
    let mut raw = match file {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|source| CliError::Io { path: p.to_path_buf(), source })?;
            RawConfig::parse(&text)?
        }
        None => RawConfig::default(),
    };
    for (k, v) in overrides {
        raw.set(k, v)?;
    }
    ScenarioConfig::from_raw(scenario, &raw)
}

/// Files produced by a run, relative to the output directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Artifacts {
    pub files: Vec<(String, String)>,
}

impl Artifacts {
    fn add(&mut self, name: impl Into<String>, body: String) {
        self.files.push((name.into(), body));
    }

    fn nest(&mut self, dir: &str, other: Artifacts) {
        for (name, body) in other.files {
            self.files.push((format!("{dir}/{name}"), body));
        }
    }
}

fn e17(v: f64) -> String {
    format!("{v:.16e}")
}

fn full_series_1d(s: &mut FullSolver1D, stride: usize) -> trapdiff::Result<Vec<SeriesPoint>> {
    let mut out = Vec::new();
    s.run(|s| {
        if s.steps % stride == 0 {
            out.push(s.series_point());
        }
    })?;
    if s.steps % stride != 0 {
        out.push(s.series_point());
    }
    Ok(out)
}

fn full_series_2d(s: &mut FullSolver2D, stride: usize) -> trapdiff::Result<Vec<SeriesPoint>> {
    let mut out = Vec::new();
    s.run(|s| {
        if s.steps % stride == 0 {
            out.push(s.series_point());
        }
    })?;
    if s.steps % stride != 0 {
        out.push(s.series_point());
    }
    Ok(out)
}

fn ms_series_1d(s: &mut MultiscaleSolver1D, stride: usize) -> trapdiff::Result<Vec<MassPoint>> {
    let mut out = Vec::new();
    s.run(|s| {
        if s.steps() % stride == 0 {
            out.push(s.mass_point());
        }
    })?;
    if s.steps() % stride != 0 {
        out.push(s.mass_point());
    }
    Ok(out)
}

fn ms_series_2d(s: &mut MultiscaleSolver2D, stride: usize) -> trapdiff::Result<Vec<MassPoint>> {
    let mut out = Vec::new();
    s.run(|s| {
        if s.steps() % stride == 0 {
            out.push(s.mass_point());
        }
    })?;
    if s.steps() % stride != 0 {
        out.push(s.mass_point());
    }
    Ok(out)
}

impl ScenarioConfig {
    fn full_1d(&self) -> CliResult<FullConfig1D> {
        let mut cfg = FullConfig1D::new(self.spec()?, self.dx.unwrap(), self.t_final.unwrap(), self.ic.unwrap());
        cfg.d = self.d;
        cfg.dt = self.dt();
        cfg.mobility = self.mobility();
        cfg.scheme = self.full_scheme();
        cfg.initial = self.initial.unwrap_or_default();
        Ok(cfg)
    }

    fn full_2d(&self, geometry: FullGeometry2D) -> CliResult<FullConfig2D> {
        let mut cfg = FullConfig2D::new(self.spec()?, geometry, self.dx.unwrap(), self.t_final.unwrap(), self.ic.unwrap());
        cfg.d = self.d;
        cfg.dt = self.dt();
        cfg.mobility = self.mobility();
        cfg.scheme = self.full_scheme();
        cfg.initial = self.initial.unwrap_or_default();
        Ok(cfg)
    }

    fn ms_1d(&self) -> CliResult<MultiscaleConfig1D> {
        let mut cfg = MultiscaleConfig1D::new(self.trap()?, self.dx.unwrap(), self.t_final.unwrap(), self.ic.unwrap());
        cfg.d = self.d;
        cfg.dt = self.dt();
        Ok(cfg)
    }

    fn ms_2d(&self) -> CliResult<MultiscaleConfig2D> {
        let geometry = MultiscaleGeometry2D::Bubble { half_width: self.half_width, radius: self.radius };
        let mut cfg = MultiscaleConfig2D::new(self.trap()?, geometry, self.dx.unwrap(), self.t_final.unwrap(), self.ic.unwrap());
        cfg.d = self.d;
        cfg.dt = self.dt();
        Ok(cfg)
    }
}

/// Validate and run. Solvers are built before anything is returned, so a
/// configuration they reject produces no artifacts.
pub fn run_scenario(cfg: &ScenarioConfig) -> CliResult<Artifacts> {
    let sc = cfg.scenario;
    let ctx = |source: trapdiff::Error| CliError::Solver { scenario: sc, source };
    let mut art = Artifacts::default();
    match sc {
        Scenario::Full1d => {
            let mut s = FullSolver1D::new(cfg.full_1d()?).map_err(ctx)?;
            let series = full_series_1d(&mut s, cfg.stride).map_err(ctx)?;
            art.add("series.csv", series_csv(&series));
            art.add("profile.csv", s.snapshot_csv());
        }
        Scenario::Full2dSlab | Scenario::Full2dBubble => {
            let geometry = if sc == Scenario::Full2dSlab {
                FullGeometry2D::Slab { dy: cfg.dy.unwrap_or(cfg.dx.unwrap()) }
            } else {
                FullGeometry2D::Radial { half_width: cfg.half_width, radius: cfg.radius }
            };
            let mut s = FullSolver2D::new(cfg.full_2d(geometry)?).map_err(ctx)?;
            let series = full_series_2d(&mut s, cfg.stride).map_err(ctx)?;
            art.add("series.csv", series_csv(&series));
            art.add("snapshot.csv", s.snapshot_csv());
        }
        Scenario::Multiscale1d => {
            let mut s = MultiscaleSolver1D::new(cfg.ms_1d()?).map_err(ctx)?;
            let series = ms_series_1d(&mut s, cfg.stride).map_err(ctx)?;
            art.add("mass.csv", mass_series_csv(&series));
            art.add("profile.csv", s.snapshot_csv());
        }
        Scenario::Multiscale2dBubble => {
            let mut s = MultiscaleSolver2D::new(cfg.ms_2d()?).map_err(ctx)?;
            let series = ms_series_2d(&mut s, cfg.stride).map_err(ctx)?;
            art.add("mass.csv", mass_series_csv(&series));
            art.add("boundary_profile.csv", s.profile_csv());
            art.add("snapshot.csv", s.snapshot_csv());
        }
        Scenario::Compare1d => compare_1d(cfg, &mut art).map_err(ctx)?,
        Scenario::Compare2d => compare_2d(cfg, &mut art)?,
        Scenario::Coeffs => coeffs(cfg, &mut art).map_err(ctx)?,
        Scenario::Dof => {
            let rows = (1..=3)
                .map(|d| dof_estimate(d, cfg.n, cfg.big_n, cfg.eps_tilde))
                .collect::<trapdiff::Result<Vec<_>>>()
                .map_err(ctx)?;
            art.add("dof.csv", dof_table_csv(&rows));
        }
        Scenario::ReproducePaper => reproduce_paper(&mut art)?,
    }
    Ok(art)
}

fn compare_1d(cfg: &ScenarioConfig, art: &mut Artifacts) -> trapdiff::Result<()> {
    let setups = cfg.comparison_setups().map_err(|e| trapdiff::Error::Config(e.to_string()))?;
    let base = setups[0];
    let epsilons: Vec<f64> = cfg.epsilons.clone().unwrap_or_else(|| vec![base.epsilon]);
    if let Some(dxs) = &cfg.dxs {
        let study = dx_independence_study(&base, dxs, &epsilons)?;
        art.add("dx_study.csv", study.csv());
        return Ok(());
    }
    let reports = if epsilons.len() > 1 { epsilon_sweep(&base, &epsilons)? } else { vec![compare_models_1d(&base)?] };
    for (k, r) in reports.iter().enumerate() {
        art.add(format!("errors_eps{k}.csv"), r.csv());
    }
    art.add("error_vs_epsilon.csv", epsilon_sweep_csv(&reports));
    if let Ok(ms) = base.multiscale_config() {
        art.add("fraction.csv", fraction_csv(&multiscale_fraction_series(ms)?));
    }
    Ok(())
}

/// Full radial model against the reduced bubble model on the same grid.
fn compare_2d(cfg: &ScenarioConfig, art: &mut Artifacts) -> CliResult<()> {
    let sc = cfg.scenario;
    let ctx = |source: trapdiff::Error| CliError::Solver { scenario: sc, source };
    let spec = cfg.spec()?;
    let geometry = FullGeometry2D::Radial { half_width: cfg.half_width, radius: cfg.radius };
    let mut full_cfg = cfg.full_2d(geometry)?;
    full_cfg.initial = cfg.initial.unwrap_or(InitialProfile::Boltzmann);
    let mut full = FullSolver2D::new(full_cfg).map_err(ctx)?;
    let mut reduced = MultiscaleSolver2D::new(cfg.ms_2d()?).map_err(ctx)?;
    let (steps, dt) = trapdiff::solver_full::step_plan(full_cfg.t_final, full_cfg.dt);
    let mut out = String::from("t,full_trapped,multiscale_trapped,relative_difference\n");
    let mut row = |t: f64, a: f64, b: f64| {
        let _ = writeln!(out, "{},{},{},{}", e17(t), e17(a), e17(b), e17((a - b).abs() / b.abs().max(f64::MIN_POSITIVE)));
    };
    row(0.0, full.entrapped_mass(), reduced.trapped_total());
    for k in 1..=steps {
        full.step(dt).map_err(ctx)?;
        reduced.step(dt).map_err(ctx)?;
        if k % cfg.stride == 0 || k == steps {
            row(full.t, full.entrapped_mass(), reduced.trapped_total());
        }
    }
    art.add("trapped_mass.csv", out);
    // section along the positive x axis, outside the trap layer
    let c_full = full.concentration();
    let mut ms_at = vec![f64::NAN; reduced.nx * reduced.ny];
    for (u, &k) in reduced.cells.iter().enumerate() {
        ms_at[k] = reduced.bulk_values()[u];
    }
    let j = reduced.ny / 2;
    let mut section = String::from("x,c_full,c_multiscale\n");
    for i in 0..full.nx {
        let (x, _) = full.center(i, j);
        if x < cfg.radius + cfg.cutoff * spec.epsilon {
            continue;
        }
        let k = j * full.nx + i;
        let _ = writeln!(section, "{},{},{}", e17(x), e17(c_full[k]), e17(ms_at[k]));
    }
    art.add("section.csv", section);
    art.add("boundary_profile.csv", reduced.profile_csv());
    Ok(())
}

fn coeffs(cfg: &ScenarioConfig, art: &mut Artifacts) -> trapdiff::Result<()> {
    let spec = cfg.spec().map_err(|e| trapdiff::Error::Config(e.to_string()))?;
    let q = quad();
    let i_l = trap_capacity_i(spec.phi, spec.cutoff, &q)?;
    let m = trap_coefficient_m(&spec, &q)?;
    let tail = tail_ratio(spec.phi, spec.cutoff, &q, 1e-3)?;
    let mut summary = String::from("quantity,value\n");
    for (k, v) in [
        ("phi", spec.phi),
        ("epsilon", spec.epsilon),
        ("cutoff", spec.cutoff),
        ("capacity_integral", i_l),
        ("trap_coefficient", m),
        ("tail_ratio", tail.ratio),
        ("sutherland_constant", sutherland_constant(&spec, &q)?),
    ] {
        let _ = writeln!(summary, "{k},{}", e17(v));
    }
    art.add("coefficients.csv", summary);
    let mut taylor = String::from("k,m_k\n");
    for k in 0..=cfg.taylor_order {
        let _ = writeln!(taylor, "{k},{}", e17(taylor_coefficient_mk(&spec, k, &q)?));
    }
    art.add("taylor.csv", taylor);
    let mut cap = String::from("c_b,capacity_integral,saturated_m,in_well_max\n");
    for k in 0..cfg.c_points {
        let c = k as f64 / (cfg.c_points - 1) as f64;
        let i = saturated_capacity_i(spec.phi, spec.cutoff, c, &q)?;
        let _ = writeln!(cap, "{},{},{},{}", e17(c), e17(i), e17(saturated_m(&spec, c, &q)?), e17(c * i));
    }
    art.add("capacity.csv", cap);
    let table = CapacityTable::build(&spec, cfg.c_points, 1e-6, &q)?;
    if let Ok(fit) = rational_fit(&table, 2, 2) {
        let mut s = String::from("term,numerator,denominator\n");
        for k in 0..fit.numerator.len().max(fit.denominator.len()) {
            let get = |v: &[f64]| v.get(k).map(|&x| e17(x)).unwrap_or_default();
            let _ = writeln!(s, "{k},{},{}", get(&fit.numerator), get(&fit.denominator));
        }
        let _ = writeln!(s, "scale,{},", e17(fit.scale));
        let _ = writeln!(s, "max_rel_error,{},", e17(fit.max_rel_error));
        art.add("rational_fit.csv", s);
    }
    Ok(())
}

/// Desk-scale versions of the figure and table scenarios, one
/// subdirectory each.
fn reproduce_paper(art: &mut Artifacts) -> CliResult<()> {
    let runs: [(&str, &str); 8] = [
        ("coeffs_table", "scenario = coeffs\nphi = 10\nepsilon = 1e-4\ncutoff = 4\n"),
        ("dof", "scenario = dof\n"),
        (
            "compare_1d_epsilon",
            "scenario = compare-1d\nm = 3\nepsilons = 4e-3, 2e-3, 1e-3\ndx = 1.82e-4\nt_final = 0.05\nv0 = 1e-6\nsigma = 0.2\nx_m = 0.5\nstride = 25\n",
        ),
        (
            "compare_1d_dx",
            "scenario = compare-1d\nm = 3\nepsilon = 4e-3\ndx = 1e-4\ndxs = 2e-4, 1e-4, 5e-5\nt_final = 0.05\nv0 = 1e-6\nsigma = 0.2\nx_m = 0.5\n",
        ),
        (
            "full_1d",
            "scenario = full-1d\nm = 3\nepsilon = 4e-3\ndx = 1e-4\nt_final = 0.05\nv0 = 1e-6\nsigma = 0.1\nx_m = 0.5\nstride = 50\n",
        ),
        (
            "multiscale_1d_saturated",
            "scenario = multiscale-1d\nm = 3\nepsilon = 1e-3\nsaturated = true\ndx = 1e-3\nt_final = 0.05\nv0 = 1e-6\nsigma = 0.2\nx_m = 0.5\nstride = 5\n",
        ),
        (
            "multiscale_2d_bubble",
            "scenario = multiscale-2d-bubble\nm = 3\ndx = 0.01\nt_final = 0.05\nv0 = 1e-6\nsigma = 0.1\nx_m = 1\ny_m = 0\n",
        ),
        (
            "multiscale_2d_bubble_saturated",
            "scenario = multiscale-2d-bubble\nm = 3\nepsilon = 1e-3\nsaturated = true\ndx = 0.01\nt_final = 0.15\nv0 = 1e-7\nsigma = 0.1\nx_m = 1\ny_m = 0\n",
        ),
    ];
    let mut configs = Vec::new();
    for (dir, text) in runs {
        configs.push((dir, ScenarioConfig::from_raw(None, &RawConfig::parse(text)?)?));
    }
    for (dir, cfg) in configs {
        let mut sub = run_scenario(&cfg)?;
        sub.add("effective_config.txt", cfg.echo());
        art.nest(dir, sub);
    }
    Ok(())
}

/// Write every artifact plus `effective_config.txt` under `out`.
pub fn write_artifacts(out: &Path, cfg: &ScenarioConfig, art: &Artifacts) -> CliResult<()> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(out).map_err(io(out))?;
    let echo = out.join("effective_config.txt");
    fs::write(&echo, cfg.echo()).map_err(io(&echo))?;
    for (name, body) in &art.files {
        let path = out.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        fs::write(&path, body).map_err(io(&path))?;
    }
    Ok(())
}

/// Record a failure in `out/error.log`; the only file written for a
/// rejected configuration.
pub fn write_error_log(out: &Path, err: &CliError) -> std::io::Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("error.log"), format!("{err}\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_rejects_unknown_and_malformed() {
        assert!(matches!(RawConfig::parse("bogus = 1"), Err(CliError::Usage(_))));
        assert!(matches!(RawConfig::parse("dx 1e-3"), Err(CliError::Usage(_))));
        let raw = RawConfig::parse("# comment\n dx = 1e-3 # trailing\n").unwrap();
        assert_eq!(raw.entries["dx"], "1e-3");
    }

    #[test]
    fn scenario_names_round_trip() {
        for sc in Scenario::ALL {
            assert_eq!(sc.name().parse::<Scenario>().unwrap(), sc);
        }
    }

    #[test]
    fn conflicting_scenarios_are_rejected() {
        let raw = RawConfig::parse("scenario = dof").unwrap();
        assert!(ScenarioConfig::from_raw(Some(Scenario::Coeffs), &raw).is_err());
        assert_eq!(ScenarioConfig::from_raw(None, &raw).unwrap().scenario, Scenario::Dof);
    }

    #[test]
    fn phi_and_m_are_exclusive() {
        let raw = RawConfig::parse("phi = 6\nm = 3\nepsilon = 1e-3\n").unwrap();
        assert!(ScenarioConfig::from_raw(Some(Scenario::Coeffs), &raw).is_err());
    }
}
