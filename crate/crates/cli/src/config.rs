//! Run configuration: one JSON file with a section per subcommand.
//!
//! Unknown keys are rejected everywhere and every error names the offending
//! key path. Command-line flags override file values; the resolved section
//! is echoed into each output JSON.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use fbspde::bspde::{BSPDEData, Diffusion, PathFunctional, RandomFieldSpec, Source, Terminal, WTime};
use fbspde::fraclap::{FracOrder, SingularIntegralConfig};
use fbspde::grid::{Grid1D, GridFunction};
use fbspde::kernel::{BoundCheck, CoefficientA};
use fbspde::verify::Tier;
use fbspde::zakai::{ControlProblem, DualForm};
use fbspde::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::expr::{Expr, Field, Term, Var};

/// Maps any library error raised while resolving `path` to a config error.
pub fn at<T>(path: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } => e,
        other => Error::config(path, other.to_string()),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: String,
    /// Optional guard: when set it must name the subcommand being run.
    pub command: Option<String>,
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    pub threads: Option<usize>,
    pub output_dir: PathBuf,
    pub kernel: KernelSection,
    pub fraclap: FraclapSection,
    pub levy: LevySection,
    #[serde(rename = "solve-pde")]
    pub solve_pde: PdeSection,
    #[serde(rename = "solve-bspde")]
    pub solve_bspde: BspdeSection,
    pub zakai: ZakaiSection,
    pub control: ControlSection,
    #[serde(rename = "verify-all")]
    pub verify_all: VerifySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            experiment: "default".into(),
            command: None,
            seed: 0,
            threads: None,
            output_dir: PathBuf::from("out"),
            kernel: Default::default(),
            fraclap: Default::default(),
            levy: Default::default(),
            solve_pde: Default::default(),
            solve_bspde: Default::default(),
            zakai: Default::default(),
            control: Default::default(),
            verify_all: Default::default(),
        }
    }
}

/// Directory that relative paths inside a config resolve against.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub base: PathBuf,
}

impl Default for Loaded {
    fn default() -> Self {
        Loaded {
            config: RunConfig::default(),
            base: PathBuf::from("."),
        }
    }
}

pub fn parse(text: &str) -> Result<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<root>".to_string() } else { path }, e.into_inner().to_string())
    })
}

pub fn load(file: &Path) -> Result<Loaded> {
    let text = std::fs::read_to_string(file).map_err(|e| Error::config("--config", format!("{}: {e}", file.display())))?;
    let config = parse(&text)?;
    let base = file.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
    Ok(Loaded { config, base })
}

impl RunConfig {
    pub fn check_command(&self, command: &str) -> Result<()> {
        match &self.command {
            Some(c) if c != command => Err(Error::config(
                "command",
                format!("config is for `{c}` but `{command}` was run"),
            )),
            _ => Ok(()),
        }
    }

    /// Global keys plus the section of `command`.
    pub fn resolved(&self, command: &str) -> Result<serde_json::Value> {
        let section = match command {
            "kernel" => serde_json::to_value(&self.kernel)?,
            "fraclap" => serde_json::to_value(&self.fraclap)?,
            "levy" => serde_json::to_value(&self.levy)?,
            "solve-pde" => serde_json::to_value(&self.solve_pde)?,
            "solve-bspde" => serde_json::to_value(&self.solve_bspde)?,
            "zakai" => serde_json::to_value(&self.zakai)?,
            "control" => serde_json::to_value(&self.control)?,
            "verify-all" => serde_json::to_value(&self.verify_all)?,
            other => return Err(Error::config("command", format!("unknown command `{other}`"))),
        };
        let mut out = serde_json::Map::new();
        out.insert("experiment".into(), self.experiment.clone().into());
        out.insert("command".into(), command.into());
        out.insert("seed".into(), self.seed.into());
        out.insert("threads".into(), serde_json::to_value(self.threads)?);
        out.insert("output_dir".into(), self.output_dir.display().to_string().into());
        out.insert(command.into(), section);
        Ok(serde_json::Value::Object(out))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl GridSection {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Self {
        GridSection { x_min, x_max, n }
    }

    pub fn build(&self, path: &str) -> Result<Grid1D> {
        at(path, Grid1D::new(self.x_min, self.x_max, self.n))
    }
}

fn check_alpha(path: &str, alpha: f64) -> Result<()> {
    at(path, FracOrder::new(alpha).map(|_| ()))
}

fn positive(path: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(path, format!("{v} must be positive")))
    }
}

fn nonzero(path: &str, v: usize) -> Result<()> {
    if v > 0 {
        Ok(())
    } else {
        Err(Error::config(path, "must be at least 1"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelMode {
    /// Kernel of the semigroup on the periodic box (unit mass on the grid).
    Periodic,
    /// Real-line kernel sampled pointwise.
    Line,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub alpha: f64,
    /// Accumulated diffusivity `A`.
    #[serde(rename = "A")]
    pub a_ts: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub samples: usize,
    pub mode: KernelMode,
    /// Bound checks on the standard kernel.
    pub bounds: Vec<BoundCheck>,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection {
            alpha: 1.5,
            a_ts: 1.0,
            x_min: -32.0,
            x_max: 32.0,
            samples: 2048,
            mode: KernelMode::Periodic,
            bounds: (0..3).map(|k| BoundCheck::Pointwise { k }).collect(),
        }
    }
}

impl KernelSection {
    pub fn validate(&self) -> Result<Grid1D> {
        check_alpha("kernel.alpha", self.alpha)?;
        positive("kernel.A", self.a_ts)?;
        GridSection::new(self.x_min, self.x_max, self.samples).build("kernel.xrange")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FraclapSection {
    pub alpha: f64,
    pub method: String,
    /// `x,value` CSV; when absent `field` is sampled on `grid`.
    pub input: Option<PathBuf>,
    pub field: Expr,
    pub grid: GridSection,
    pub output: PathBuf,
    pub integral: SingularIntegralConfig,
}

impl Default for FraclapSection {
    fn default() -> Self {
        FraclapSection {
            alpha: 1.5,
            method: "spectral".into(),
            input: None,
            field: "gauss".into(),
            grid: GridSection::new(-32.0, 32.0, 2048),
            output: PathBuf::from("fraclap.csv"),
            integral: SingularIntegralConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevyEmit {
    Summary,
    Paths,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevySection {
    pub alpha: f64,
    pub paths: usize,
    pub steps: usize,
    pub horizon: f64,
    pub sampler: String,
    pub emit: LevyEmit,
    /// Frequencies at which the empirical characteristic function is checked.
    pub frequencies: Vec<f64>,
}

impl Default for LevySection {
    fn default() -> Self {
        LevySection {
            alpha: 1.5,
            paths: 10_000,
            steps: 100,
            horizon: 1.0,
            sampler: "cms".into(),
            emit: LevyEmit::Summary,
            frequencies: vec![0.5, 1.0, 2.0],
        }
    }
}

impl LevySection {
    pub fn validate(&self) -> Result<()> {
        check_alpha("levy.alpha", self.alpha)?;
        nonzero("levy.paths", self.paths)?;
        nonzero("levy.steps", self.steps)?;
        positive("levy.horizon", self.horizon)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PdeSection {
    pub alpha: f64,
    pub horizon: f64,
    pub grid: GridSection,
    /// Time-only or space-time diffusivity; a bare expression is read in `t`.
    pub a: Field,
    pub b: Field,
    pub c: Field,
    pub f: Field,
    pub g: Expr,
    pub beta: Option<f64>,
    pub solver: String,
    pub steps: usize,
    pub stability_limit: f64,
    /// `(t, x)` points reported in the JSON.
    pub probes: Vec<[f64; 2]>,
    /// A second solver whose solution is compared at every node.
    pub compare: Option<String>,
}

impl Default for PdeSection {
    fn default() -> Self {
        PdeSection {
            alpha: 1.5,
            horizon: 1.0,
            grid: GridSection::new(-16.0, 16.0, 256),
            a: 1.0.into(),
            b: 0.0.into(),
            c: 0.0.into(),
            f: 0.0.into(),
            g: "gauss".into(),
            beta: None,
            solver: "imex".into(),
            steps: 40,
            stability_limit: 0.9,
            probes: vec![[0.0, 0.0]],
            compare: None,
        }
    }
}

/// Samples `f` on `[0, T]` and a grid to bound it.
fn bounds_of(f: &dyn Fn(f64, f64) -> f64, horizon: f64, xs: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..=256 {
        let t = horizon * i as f64 / 256.0;
        for &x in xs {
            let v = f(t, x);
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

/// Diffusivity from a field: constant, time-only, or space-time.
fn diffusion(field: &Field, path: &str, horizon: f64, grid: &Grid1D, base: &Path) -> Result<Diffusion> {
    if let Some(c) = field.constant(Var::T) {
        positive(path, c)?;
        return Ok(Diffusion::Time(CoefficientA::constant(c)));
    }
    if !field.depends_on(Var::X, Var::T) {
        let f = field.time_fn(path, base)?;
        let g = f.clone();
        let (lo, hi) = bounds_of(&move |t, _| g(t), horizon, &[0.0]);
        positive(path, lo)?;
        return Ok(Diffusion::Time(CoefficientA::function(move |t| f(t), lo, hi)));
    }
    let f = field.compile(path, Var::T, &[Var::T, Var::X], base)?;
    let field_fn: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> = Arc::new(move |t, x| f(t, x, 0.0));
    let (lower, upper) = bounds_of(field_fn.as_ref(), horizon, &grid.xs());
    positive(path, lower)?;
    Ok(Diffusion::SpaceTime {
        field: field_fn,
        lower,
        upper,
    })
}

impl PdeSection {
    pub fn data(&self, base: &Path) -> Result<BSPDEData> {
        let p = "solve-pde";
        check_alpha(&format!("{p}.alpha"), self.alpha)?;
        positive(&format!("{p}.horizon"), self.horizon)?;
        nonzero(&format!("{p}.steps"), self.steps)?;
        let grid = self.grid.build(&format!("{p}.grid"))?;
        let g = self.g.compile(&format!("{p}.g"), base)?;
        let mut data = BSPDEData::new(self.alpha, self.horizon, grid, Terminal::Field(g));
        data.a = diffusion(&self.a, &format!("{p}.a"), self.horizon, &grid, base)?;
        data.b = self.b.space_time_fn(&format!("{p}.b"), base)?;
        data.c = self.c.space_time_fn(&format!("{p}.c"), base)?;
        data.f = Source::Field(self.f.space_time_fn(&format!("{p}.f"), base)?);
        if let Some(beta) = self.beta {
            data.beta = beta;
        }
        at(p, data.validate())?;
        Ok(data)
    }
}

/// One term `φ(x) P(W)` of a random field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomTerm {
    pub profile: Expr,
    /// `"1"`, `"W(T)"`, `"W(t)"`, `"W(<time>)"` or a product of two such
    /// factors joined by `*`.
    #[serde(default = "constant_functional")]
    pub functional: String,
}

fn constant_functional() -> String {
    "1".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RandomField {
    Deterministic(Expr),
    Terms(Vec<RandomTerm>),
}

fn w_time(s: &str, path: &str) -> Result<WTime> {
    let inner = s
        .trim()
        .strip_prefix("W(")
        .and_then(|r| r.strip_suffix(')'))
        .ok_or_else(|| Error::config(path, format!("`{s}` is not of the form W(..)")))?
        .trim();
    match inner {
        "T" => Ok(WTime::Terminal),
        "t" => Ok(WTime::Current),
        num => num
            .parse::<f64>()
            .map(WTime::Fixed)
            .map_err(|_| Error::config(path, format!("`{num}` is not T, t or a time"))),
    }
}

pub fn parse_functional(s: &str, path: &str) -> Result<PathFunctional> {
    if s.trim() == "1" {
        return Ok(PathFunctional::Constant);
    }
    let parts: Vec<&str> = s.split('*').collect();
    match parts.as_slice() {
        [a] => Ok(PathFunctional::Linear(w_time(a, path)?)),
        [a, b] => Ok(PathFunctional::Quadratic(w_time(a, path)?, w_time(b, path)?)),
        _ => Err(Error::config(path, "at most two factors are supported")),
    }
}

impl RandomField {
    fn spec(&self, path: &str, grid: &Grid1D, base: &Path) -> Result<RandomFieldSpec> {
        let terms = match self {
            RandomField::Deterministic(e) => vec![(sample(e, path, grid, base)?, PathFunctional::Constant)],
            RandomField::Terms(ts) => ts
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let at = format!("{path}[{i}]");
                    Ok((
                        sample(&t.profile, &format!("{at}.profile"), grid, base)?,
                        parse_functional(&t.functional, &format!("{at}.functional"))?,
                    ))
                })
                .collect::<Result<_>>()?,
        };
        Ok(RandomFieldSpec::new(terms))
    }
}

fn sample(e: &Expr, path: &str, grid: &Grid1D, base: &Path) -> Result<GridFunction> {
    let f = e.compile(path, base)?;
    Ok(GridFunction::from_fn(*grid, |x| f(x)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BspdeSection {
    pub alpha: f64,
    pub horizon: f64,
    pub grid: GridSection,
    /// Time-only diffusivity.
    pub a: Field,
    pub sigma: Field,
    pub f: RandomField,
    pub g: RandomField,
    pub beta: Option<f64>,
    pub solver: String,
    pub steps: usize,
    pub paths: usize,
    pub basis_degree: usize,
    pub coarse_times: usize,
    pub store_paths: usize,
    pub cond_limit: f64,
    pub probes: Vec<[f64; 2]>,
}

impl Default for BspdeSection {
    fn default() -> Self {
        BspdeSection {
            alpha: 1.5,
            horizon: 1.0,
            grid: GridSection::new(-16.0, 16.0, 256),
            a: 1.0.into(),
            sigma: 0.0.into(),
            f: RandomField::Deterministic(0.0.into()),
            g: RandomField::Terms(vec![RandomTerm {
                profile: "cos".into(),
                functional: "W(T)".into(),
            }]),
            beta: None,
            solver: "regression".into(),
            steps: 20,
            paths: 2000,
            basis_degree: 2,
            coarse_times: 4,
            store_paths: 1,
            cond_limit: 1e10,
            probes: vec![[0.0, 0.0]],
        }
    }
}

impl BspdeSection {
    pub fn data(&self, base: &Path) -> Result<BSPDEData> {
        let p = "solve-bspde";
        check_alpha(&format!("{p}.alpha"), self.alpha)?;
        positive(&format!("{p}.horizon"), self.horizon)?;
        nonzero(&format!("{p}.steps"), self.steps)?;
        nonzero(&format!("{p}.paths"), self.paths)?;
        let grid = self.grid.build(&format!("{p}.grid"))?;
        let g = self.g.spec(&format!("{p}.g"), &grid, base)?;
        let mut data = BSPDEData::new(self.alpha, self.horizon, grid, Terminal::Random(g));
        data.a = diffusion(&self.a, &format!("{p}.a"), self.horizon, &grid, base)?;
        if data.a.time_only().is_none() {
            return Err(Error::config(format!("{p}.a"), "must depend on t only"));
        }
        data.sigma = self.sigma.time_fn(&format!("{p}.sigma"), base)?;
        data.f = Source::Random(self.f.spec(&format!("{p}.f"), &grid, base)?);
        if let Some(beta) = self.beta {
            data.beta = beta;
        }
        at(p, data.validate())?;
        Ok(data)
    }
}

/// A partially observed control problem. The defaults are the toy problem
/// used by the acceptance suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemSection {
    pub alpha: f64,
    pub horizon: f64,
    pub grid: GridSection,
    /// Drift `k(t, x, v)`.
    pub k: Field,
    /// Jump scale `μ(t)`.
    pub mu: Field,
    /// Observation function `h(t, x)`.
    pub h: Field,
    /// Running cost `f(t, x, v)`.
    pub f: Field,
    pub g: Expr,
    pub controls: Vec<f64>,
    pub p0: Expr,
    /// Rescale `p0` to unit mass on the grid.
    pub normalize_p0: bool,
    pub steps: usize,
    pub dual: DualForm,
    pub blowup_guard: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        let w = || Expr::scaled("gauss", -1.0, 1.0, 0.5f64.sqrt(), 2.0);
        ProblemSection {
            alpha: 1.5,
            horizon: 1.0,
            grid: GridSection::new(-16.0, 16.0, 128),
            k: Field::Term(Term {
                v: Some("id".into()),
                ..Default::default()
            }),
            mu: 1.0.into(),
            h: Expr::scaled("gauss", 0.5, 0.0, 1.0, 1.0).into(),
            f: Field::Sum(vec![
                Term {
                    v: Some(Expr::scaled("square", 0.1, 0.0, 1.0, 0.0)),
                    ..Default::default()
                },
                Term {
                    x: Some(w()),
                    ..Default::default()
                },
            ]),
            g: w(),
            controls: vec![-1.0, 0.0, 1.0],
            p0: Expr::scaled("gauss", 1.0 / (2.0 * PI).sqrt(), 0.0, 0.5f64.sqrt(), 0.0),
            normalize_p0: false,
            steps: 24,
            dual: DualForm::Adjoint,
            blowup_guard: 1e8,
        }
    }
}

impl ProblemSection {
    pub fn build(&self, path: &str, base: &Path) -> Result<ControlProblem> {
        check_alpha(&format!("{path}.alpha"), self.alpha)?;
        positive(&format!("{path}.horizon"), self.horizon)?;
        nonzero(&format!("{path}.steps"), self.steps)?;
        let grid = self.grid.build(&format!("{path}.grid"))?;
        let mut p0 = sample(&self.p0, &format!("{path}.p0"), &grid, base)?;
        if self.normalize_p0 {
            let m = p0.integral();
            positive(&format!("{path}.p0"), m)?;
            p0 = p0.scaled(1.0 / m);
        }
        let mut p = ControlProblem::new(self.alpha, self.horizon, p0, self.controls.clone());
        p.steps = self.steps;
        p.dual = self.dual;
        p.blowup_guard = self.blowup_guard;
        p.k = self.k.control_fn(&format!("{path}.k"), base)?;
        p.f = self.f.control_fn(&format!("{path}.f"), base)?;
        p.mu = self.mu.time_fn(&format!("{path}.mu"), base)?;
        p.h = self.h.space_time_fn(&format!("{path}.h"), base)?;
        p.g = self.g.compile(&format!("{path}.g"), base)?;
        at(path, p.validate())?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZakaiSection {
    pub problem: ProblemSection,
    /// Piecewise-constant control values on equal intervals.
    pub policy: Vec<f64>,
    /// Child stream of the observation path.
    pub path: u64,
    /// Every `stride`-th solver node goes into the density CSV.
    pub stride: usize,
}

impl Default for ZakaiSection {
    fn default() -> Self {
        ZakaiSection {
            problem: ProblemSection::default(),
            policy: vec![0.0],
            path: 0,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSection {
    pub problem: ProblemSection,
    pub intervals: usize,
    pub paths: usize,
    /// Upper bound on the number of enumerated policies.
    pub budget: u64,
    /// Re-solve at half the steps to estimate the time discretization.
    pub coarse_level: bool,
    pub sigmas: f64,
}

impl Default for ControlSection {
    fn default() -> Self {
        ControlSection {
            problem: ProblemSection::default(),
            intervals: 3,
            paths: 1000,
            budget: 256,
            coarse_level: true,
            sigmas: 3.0,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub tier: Tier,
    pub only: Option<Vec<String>>,
}
