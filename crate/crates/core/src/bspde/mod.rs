//! Solvers for the linear fractional BSPDE
//! `-du = [-a (-Δ)^{α/2} u + b u_x + c u + f + σ v] dt - v dW`, `u(T) = g`.

mod crosscheck;
mod deterministic;
mod gaussian;
mod holder;
mod imex;
mod regression;

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fraclap::FracOrder;
use crate::grid::{Grid1D, GridFunction};
use crate::kernel::{eval_a, CoefficientA};
use crate::levy::sde::{constant_field, SpaceTimeFn};
use crate::levy::{simulate_brownian_path, BrownianPath, PathGrid, RngStream};
use crate::registry::Registry;

pub use crosscheck::{fbsde_crosscheck, CrossCheckReport, ProbeResult};
pub use deterministic::{solve_fourier_deterministic, solve_kernel_deterministic, FourierSolver, KernelSolver};
pub use gaussian::{
    linear_gaussian_form, solve_bspde_linear_gaussian, LinearGaussianForm, LinearGaussianSolver, MartingaleData,
};
pub use holder::{verify_holder_estimate, HolderInstance, HolderSetup, RatioReport};
pub use imex::{solve_pde_variable_coeff, ImexSolver};
pub(crate) use imex::{stability_bound, BackwardStep, Coeffs};
pub use regression::{solve_bspde_regression, RegressionSolver};

pub type SpatialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type TimeFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

pub fn spatial(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> SpatialFn {
    Arc::new(f)
}

/// Diffusivity: time-only (space-invariant solvers) or a bounded space-time
/// field (method-of-lines solver).
#[derive(Clone)]
pub enum Diffusion {
    Time(CoefficientA),
    SpaceTime { field: SpaceTimeFn, lower: f64, upper: f64 },
}

impl Diffusion {
    pub fn at(&self, t: f64, x: f64) -> f64 {
        match self {
            Diffusion::Time(a) => a.value(t),
            Diffusion::SpaceTime { field, .. } => field(t, x),
        }
    }

    pub fn time_only(&self) -> Option<&CoefficientA> {
        match self {
            Diffusion::Time(a) => Some(a),
            Diffusion::SpaceTime { .. } => None,
        }
    }

    pub fn field(&self) -> SpaceTimeFn {
        match self {
            Diffusion::Time(a) => {
                let a = a.clone();
                Arc::new(move |t, _| a.value(t))
            }
            Diffusion::SpaceTime { field, .. } => field.clone(),
        }
    }
}

/// Where a Brownian value is read.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum WTime {
    /// `W_T`.
    Terminal,
    /// `W_s` at a fixed time.
    Fixed(f64),
    /// `W_t` at the evaluation time (adapted).
    Current,
}

/// Polynomial of degree at most 2 in Brownian values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PathFunctional {
    Constant,
    Linear(WTime),
    Quadratic(WTime, WTime),
}

impl PathFunctional {
    fn read(w: &BrownianPath, at: WTime, t: f64) -> f64 {
        match at {
            WTime::Terminal => w.value_at(w.grid.t_end),
            WTime::Fixed(s) => w.value_at(s),
            WTime::Current => w.value_at(t),
        }
    }

    /// Value on the path `w`, evaluated at time `t`.
    pub fn eval(&self, w: &BrownianPath, t: f64) -> f64 {
        match *self {
            PathFunctional::Constant => 1.0,
            PathFunctional::Linear(a) => Self::read(w, a, t),
            PathFunctional::Quadratic(a, b) => Self::read(w, a, t) * Self::read(w, b, t),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, PathFunctional::Constant)
    }

    /// Reads only `W` up to the evaluation time.
    pub fn is_adapted(&self) -> bool {
        let ok = |w: WTime| matches!(w, WTime::Current);
        match *self {
            PathFunctional::Constant => true,
            PathFunctional::Linear(a) => ok(a),
            PathFunctional::Quadratic(a, b) => ok(a) && ok(b),
        }
    }
}

/// `Σ_i φ_i(x) P_i(W)`.
#[derive(Debug, Clone)]
pub struct RandomFieldSpec {
    pub terms: Vec<(GridFunction, PathFunctional)>,
}

impl RandomFieldSpec {
    pub fn new(terms: Vec<(GridFunction, PathFunctional)>) -> Self {
        RandomFieldSpec { terms }
    }

    pub fn is_deterministic(&self) -> bool {
        self.terms.iter().all(|(_, p)| p.is_constant())
    }

    pub fn check_grid(&self, grid: &Grid1D) -> Result<()> {
        self.terms.iter().try_for_each(|(phi, _)| phi.grid.check_same(grid))
    }

    pub fn eval(&self, grid: &Grid1D, w: &BrownianPath, t: f64) -> GridFunction {
        let mut out = GridFunction::zeros(*grid);
        for (phi, p) in &self.terms {
            let c = p.eval(w, t);
            out.values.iter_mut().zip(&phi.values).for_each(|(o, v)| *o += c * v);
        }
        out
    }
}

#[derive(Clone)]
pub enum Terminal {
    Field(SpatialFn),
    Random(RandomFieldSpec),
}

#[derive(Clone)]
pub enum Source {
    Field(SpaceTimeFn),
    Random(RandomFieldSpec),
}

impl Source {
    pub fn zero() -> Self {
        Source::Field(constant_field(0.0))
    }
}

#[derive(Clone)]
pub struct BSPDEData {
    pub alpha: f64,
    pub horizon: f64,
    pub grid: Grid1D,
    pub a: Diffusion,
    pub sigma: TimeFn,
    pub b: SpaceTimeFn,
    pub c: SpaceTimeFn,
    pub f: Source,
    pub g: Terminal,
    /// Hölder exponent used by the norm checks, in `(2 - α, 1)`.
    pub beta: f64,
}

impl BSPDEData {
    /// `a ≡ 1`, `σ = b = c = f = 0`.
    pub fn new(alpha: f64, horizon: f64, grid: Grid1D, g: Terminal) -> Self {
        BSPDEData {
            alpha,
            horizon,
            grid,
            a: Diffusion::Time(CoefficientA::constant(1.0)),
            sigma: Arc::new(|_| 0.0),
            b: constant_field(0.0),
            c: constant_field(0.0),
            f: Source::zero(),
            g,
            beta: 0.5 * (3.0 - alpha),
        }
    }

    pub fn validate(&self) -> Result<()> {
        FracOrder::new(self.alpha)?;
        if !(self.horizon > 0.0) {
            return Err(Error::OrderViolation {
                s: 0.0,
                t: self.horizon,
            });
        }
        if !(self.beta > 2.0 - self.alpha && self.beta < 1.0) {
            return Err(Error::InvalidExponent {
                name: "beta",
                value: self.beta,
                expected: "2 - alpha < beta < 1",
            });
        }
        match &self.a {
            Diffusion::Time(a) if !(a.lower > 0.0) => {
                return Err(Error::PositivityViolation(format!("lower bound of a is {}", a.lower)))
            }
            Diffusion::SpaceTime { lower, .. } if !(*lower > 0.0) => {
                return Err(Error::PositivityViolation(format!("lower bound of a is {lower}")))
            }
            _ => {}
        }
        if let Terminal::Random(s) = &self.g {
            s.check_grid(&self.grid)?;
        }
        if let Source::Random(s) = &self.f {
            s.check_grid(&self.grid)?;
            if let Some((_, p)) = s.terms.iter().find(|(_, p)| !p.is_adapted()) {
                return Err(Error::UnsupportedSpec(format!("source functional {p:?} is not adapted")));
            }
        }
        Ok(())
    }

    pub fn is_deterministic(&self) -> bool {
        let g = match &self.g {
            Terminal::Field(_) => true,
            Terminal::Random(s) => s.is_deterministic(),
        };
        let f = match &self.f {
            Source::Field(_) => true,
            Source::Random(s) => s.is_deterministic(),
        };
        g && f
    }

    /// Deterministic terminal value on the grid.
    pub fn terminal_field(&self) -> Result<GridFunction> {
        match &self.g {
            Terminal::Field(g) => Ok(GridFunction::from_fn(self.grid, |x| g(x))),
            Terminal::Random(s) if s.is_deterministic() => Ok(sum_profiles(&self.grid, s)),
            Terminal::Random(_) => Err(Error::UnsupportedSpec("terminal value is random".into())),
        }
    }

    /// Deterministic source at time `t` on the grid.
    pub fn source_field(&self, t: f64) -> Result<GridFunction> {
        match &self.f {
            Source::Field(f) => Ok(GridFunction::from_fn(self.grid, |x| f(t, x))),
            Source::Random(s) if s.is_deterministic() => Ok(sum_profiles(&self.grid, s)),
            Source::Random(_) => Err(Error::UnsupportedSpec("source is random".into())),
        }
    }

    /// Fails unless `b` and `c` vanish on the grid at the given times.
    fn require_no_transport(&self, times: &[f64]) -> Result<()> {
        for &t in times {
            for j in 0..self.grid.n {
                let x = self.grid.x(j);
                if (self.b)(t, x) != 0.0 || (self.c)(t, x) != 0.0 {
                    return Err(Error::UnsupportedSpec(
                        "space-invariant solver requires b = c = 0; use the imex solver".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn time_only_a(&self) -> Result<&CoefficientA> {
        self.a
            .time_only()
            .ok_or_else(|| Error::UnsupportedSpec("space-invariant solver requires a time-only a".into()))
    }
}

fn sum_profiles(grid: &Grid1D, s: &RandomFieldSpec) -> GridFunction {
    let mut out = GridFunction::zeros(*grid);
    for (phi, _) in &s.terms {
        out.values.iter_mut().zip(&phi.values).for_each(|(o, v)| *o += v);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveOptions {
    /// Time steps over `[0, T]`.
    pub steps: usize,
    pub paths: usize,
    pub basis_degree: usize,
    /// Coarse times whose Brownian values enter the regression basis.
    pub coarse_times: usize,
    pub seed: u64,
    pub stream_id: u64,
    /// Paths whose full `(u, v)` history is kept in the output.
    pub store_paths: usize,
    pub cond_limit: f64,
    pub stability_limit: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            steps: 40,
            paths: 1000,
            basis_degree: 2,
            coarse_times: 4,
            seed: 0,
            stream_id: 0,
            store_paths: 4,
            cond_limit: 1e10,
            stability_limit: 0.9,
        }
    }
}

impl SolveOptions {
    pub fn stream(&self) -> RngStream {
        RngStream::new(self.seed, self.stream_id)
    }

    pub fn times(&self, horizon: f64) -> Vec<f64> {
        time_nodes(horizon, self.steps)
    }
}

pub(crate) fn time_nodes(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|i| if i == steps { horizon } else { horizon * i as f64 / steps as f64 })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionMeta {
    pub solver: String,
    pub grid: Grid1D,
    pub steps: usize,
    pub paths: usize,
    pub seed: Option<u64>,
    pub stream_id: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegressionDiagnostics {
    /// Basis size per step.
    pub basis_size: Vec<usize>,
    /// Condition number of the normal matrix per step.
    pub condition: Vec<f64>,
    /// Relative RMS residual of the `u` regression per step.
    pub residual: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolutionField {
    pub times: Vec<f64>,
    /// `u[path][time]`; deterministic solvers store one path.
    pub u: Vec<Vec<GridFunction>>,
    pub v: Vec<Vec<GridFunction>>,
    /// Monte Carlo standard errors of `u(0)` and `v(0)` for sampling solvers.
    pub initial_stderr: Option<(GridFunction, GridFunction)>,
    pub diagnostics: Option<RegressionDiagnostics>,
    pub meta: SolutionMeta,
}

impl SolutionField {
    pub(crate) fn deterministic(solver: &str, grid: Grid1D, times: Vec<f64>, u: Vec<GridFunction>) -> Self {
        let v = u.iter().map(|f| GridFunction::zeros(f.grid)).collect();
        SolutionField {
            meta: SolutionMeta {
                solver: solver.to_string(),
                grid,
                steps: times.len() - 1,
                paths: 1,
                seed: None,
                stream_id: None,
            },
            times,
            u: vec![u],
            v: vec![v],
            initial_stderr: None,
            diagnostics: None,
        }
    }

    pub fn initial(&self) -> &GridFunction {
        &self.u[0][0]
    }

    pub fn terminal(&self, path: usize) -> &GridFunction {
        self.u[path].last().unwrap()
    }

    /// Index of the node at time `t`.
    pub fn time_index(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() <= 1e-12 * (1.0 + t.abs()))
            .ok_or(Error::OutOfRange {
                name: "t",
                value: t,
                expected: "a solver time node",
            })
    }

    /// Rows `t, x, u, v` for one path.
    pub fn write_csv(&self, path: usize, out: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(out)?;
        w.write_record(["t", "x", "u", "v"])?;
        for (i, &t) in self.times.iter().enumerate() {
            let (u, v) = (&self.u[path][i], &self.v[path][i]);
            for j in 0..u.grid.n {
                w.write_record(&[
                    format!("{t:.17e}"),
                    format!("{:.17e}", u.grid.x(j)),
                    format!("{:.17e}", u.values[j]),
                    format!("{:.17e}", v.values[j]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub trait BspdeSolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, data: &BSPDEData, opts: &SolveOptions) -> Result<SolutionField>;
}

pub fn registry() -> Registry<dyn BspdeSolver> {
    let mut r: Registry<dyn BspdeSolver> = Registry::new("bspde solver");
    r.register("fourier", Box::new(FourierSolver));
    r.register("kernel", Box::new(KernelSolver));
    r.register("imex", Box::new(ImexSolver));
    r.register("linear-gaussian", Box::new(LinearGaussianSolver));
    r.register("regression", Box::new(RegressionSolver));
    r
}

/// `∫_0^{t_i} a` at each node.
pub(crate) fn cumulative_a(a: &CoefficientA, times: &[f64]) -> Result<Vec<f64>> {
    let mut acc = Vec::with_capacity(times.len());
    let mut total = 0.0;
    acc.push(0.0);
    for w in times.windows(2) {
        total += eval_a(a, w[0], w[1])?;
        acc.push(total);
    }
    Ok(acc)
}

/// Composite Simpson weights for `n` equal intervals of width `h`; an odd
/// count ends with a 3/8 panel, a single interval uses the trapezoid rule.
pub(crate) fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    match n {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ => {
            let simpson_end = if n % 2 == 0 { n } else { n - 3 };
            for i in (0..simpson_end).step_by(2) {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
            }
            if n % 2 == 1 {
                let s = simpson_end;
                for (k, c) in [1.0, 3.0, 3.0, 1.0].iter().enumerate() {
                    w[s + k] += 3.0 * h / 8.0 * c;
                }
            }
        }
    }
    w
}

/// Brownian paths for an ensemble on a uniform grid; path `p` uses
/// `stream.child(p)`.
pub(crate) fn brownian_ensemble(stream: RngStream, paths: usize, horizon: f64, steps: usize) -> Result<Vec<BrownianPath>> {
    let grid = PathGrid::new(0.0, horizon, steps)?;
    use rayon::prelude::*;
    Ok((0..paths)
        .into_par_iter()
        .map(|p| simulate_brownian_path(&grid, stream.child(p as u64)))
        .collect())
}

/// Real part of a symbol at the Nyquist slot, unchanged elsewhere.
pub(crate) fn nyquist_safe(grid: &Grid1D, j: usize, s: Complex64) -> Complex64 {
    if j == grid.nyquist_slot() {
        Complex64::new(s.re, 0.0)
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_weights_integrate_cubics() {
        for n in 1..9 {
            let h = 0.3;
            let w = simpson_weights(n, h);
            let total: f64 = w.iter().sum();
            assert!((total - n as f64 * h).abs() < 1e-13);
            if n >= 2 {
                let cubic: f64 = w.iter().enumerate().map(|(i, wi)| wi * (i as f64 * h).powi(3)).sum();
                assert!((cubic - (n as f64 * h).powi(4) / 4.0).abs() < 1e-12, "n = {n}");
            }
        }
    }

    #[test]
    fn functionals() {
        let g = PathGrid::new(0.0, 1.0, 4).unwrap();
        let w = BrownianPath {
            grid: g,
            increments: vec![0.1, 0.2, -0.1, 0.3],
        };
        assert_eq!(PathFunctional::Constant.eval(&w, 0.3), 1.0);
        assert!((PathFunctional::Linear(WTime::Terminal).eval(&w, 0.0) - 0.5).abs() < 1e-15);
        assert!((PathFunctional::Linear(WTime::Current).eval(&w, 0.5) - 0.3).abs() < 1e-15);
        assert!((PathFunctional::Quadratic(WTime::Fixed(0.25), WTime::Terminal).eval(&w, 0.0) - 0.05).abs() < 1e-15);
        assert!(PathFunctional::Linear(WTime::Current).is_adapted());
        assert!(!PathFunctional::Linear(WTime::Terminal).is_adapted());
    }

    #[test]
    fn validation() {
        let grid = Grid1D::centered(8.0, 64).unwrap();
        let mut d = BSPDEData::new(1.5, 1.0, grid, Terminal::Field(spatial(f64::sin)));
        assert!(d.validate().is_ok());
        d.beta = 0.4;
        assert!(matches!(d.validate(), Err(Error::InvalidExponent { .. })));
        d.beta = 0.75;
        let other = Grid1D::centered(8.0, 32).unwrap();
        d.g = Terminal::Random(RandomFieldSpec::new(vec![(GridFunction::zeros(other), PathFunctional::Constant)]));
        assert!(matches!(d.validate(), Err(Error::GridMismatch(_))));
        d.g = Terminal::Field(spatial(f64::sin));
        d.f = Source::Random(RandomFieldSpec::new(vec![(
            GridFunction::zeros(grid),
            PathFunctional::Linear(WTime::Terminal),
        )]));
        assert!(matches!(d.validate(), Err(Error::UnsupportedSpec(_))));
    }

    #[test]
    fn registry_names() {
        assert_eq!(registry().names(), vec!["fourier", "imex", "kernel", "linear-gaussian", "regression"]);
    }
}
