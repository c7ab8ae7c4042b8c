//! Closed-form pathwise solution for terminal data linear in `W_T`.
//!
//! With `σ = 0`, `g = φ_0 + φ_1 W_T` and deterministic `f`:
//! `p(t) = φ_0 + φ_1 W_t`, `q = φ_1`, `Y(t; s) = f(s)`, `Z = 0`, hence
//! `u(t) = R_t^T(φ_0 + φ_1 W_t) + ∫_t^T R_t^s f(s) ds` and `v(t) = R_t^T φ_1`.

use super::{
    brownian_ensemble, solve_kernel_deterministic, BSPDEData, BspdeSolver, SolutionField, SolutionMeta,
    SolveOptions, Source, Terminal, WTime,
};
use crate::bspde::PathFunctional;
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::kernel::semigroup_apply_a;

/// `u(t_i) = base[i] + W_{t_i} sensitivity[i]`, `v(t_i) = sensitivity[i]`.
#[derive(Debug, Clone)]
pub struct LinearGaussianForm {
    pub times: Vec<f64>,
    pub base: Vec<GridFunction>,
    pub sensitivity: Vec<GridFunction>,
    pub phi0: GridFunction,
    pub phi1: GridFunction,
}

impl LinearGaussianForm {
    pub fn u(&self, i: usize, w_t: f64) -> GridFunction {
        self.base[i].combine(1.0, &self.sensitivity[i], w_t)
    }

    pub fn v(&self, i: usize) -> &GridFunction {
        &self.sensitivity[i]
    }
}

/// Splits `g` into `(φ_0, φ_1)`; anything else is outside the class.
fn split_terminal(data: &BSPDEData) -> Result<(GridFunction, GridFunction)> {
    let grid = data.grid;
    match &data.g {
        Terminal::Field(g) => Ok((GridFunction::from_fn(grid, |x| g(x)), GridFunction::zeros(grid))),
        Terminal::Random(spec) => {
            let mut phi0 = GridFunction::zeros(grid);
            let mut phi1 = GridFunction::zeros(grid);
            for (phi, p) in &spec.terms {
                let target = match p {
                    PathFunctional::Constant => &mut phi0,
                    PathFunctional::Linear(WTime::Terminal) => &mut phi1,
                    other => {
                        return Err(Error::UnsupportedSpec(format!(
                            "terminal functional {other:?} is outside the linear-Gaussian class"
                        )))
                    }
                };
                target.values.iter_mut().zip(&phi.values).for_each(|(o, v)| *o += v);
            }
            Ok((phi0, phi1))
        }
    }
}

pub fn linear_gaussian_form(data: &BSPDEData, opts: &SolveOptions) -> Result<LinearGaussianForm> {
    data.validate()?;
    let times = opts.times(data.horizon);
    if times.iter().any(|&t| (data.sigma)(t) != 0.0) {
        return Err(Error::UnsupportedSpec("the linear-Gaussian solver requires sigma = 0".into()));
    }
    if let Source::Random(s) = &data.f {
        if !s.is_deterministic() {
            return Err(Error::UnsupportedSpec("the linear-Gaussian solver requires a deterministic source".into()));
        }
    }
    let (phi0, phi1) = split_terminal(data)?;
    let mut det = data.clone();
    det.g = Terminal::Random(super::RandomFieldSpec::new(vec![(phi0.clone(), PathFunctional::Constant)]));
    let base = solve_kernel_deterministic(&det, opts)?.u.remove(0);
    let a = data.time_only_a()?;
    let acum = super::cumulative_a(a, &times)?;
    let a_total = acum[acum.len() - 1];
    let sensitivity = acum
        .iter()
        .map(|ai| semigroup_apply_a(&phi1, data.alpha, a_total - ai))
        .collect::<Result<_>>()?;
    Ok(LinearGaussianForm {
        times,
        base,
        sensitivity,
        phi0,
        phi1,
    })
}

/// `p(t;x)`, `q(t;x)`, `Y(t;s,x)`, `Z(t;s,x)` of the explicit construction.
#[derive(Debug, Clone)]
pub struct MartingaleData {
    pub times: Vec<f64>,
    /// `p[path][t]`.
    pub p: Vec<Vec<GridFunction>>,
    /// `q[t]`, the same on every path.
    pub q: Vec<GridFunction>,
    /// `f(s)`; `Y(t; s) = f(s)` for every `t <= s`.
    source: Vec<GridFunction>,
}

impl MartingaleData {
    pub fn y(&self, t: usize, s: usize) -> Result<&GridFunction> {
        if s < t {
            return Err(Error::OrderViolation {
                s: self.times[t],
                t: self.times[s],
            });
        }
        Ok(&self.source[s])
    }

    pub fn z(&self, t: usize, s: usize) -> Result<GridFunction> {
        self.y(t, s).map(|f| GridFunction::zeros(f.grid))
    }
}

/// Solution on `opts.store_paths` paths (at most `opts.paths`) plus the
/// martingale representation data on the same paths. Brownian paths use
/// `2 * steps` increments from `opts.stream().child(p)`.
pub fn solve_bspde_linear_gaussian(data: &BSPDEData, opts: &SolveOptions) -> Result<(SolutionField, MartingaleData)> {
    let form = linear_gaussian_form(data, opts)?;
    let stored = opts.store_paths.min(opts.paths).max(1);
    let paths = brownian_ensemble(opts.stream(), stored, data.horizon, 2 * opts.steps)?;
    let mut u = Vec::with_capacity(stored);
    let mut v = Vec::with_capacity(stored);
    let mut p = Vec::with_capacity(stored);
    for w in &paths {
        let wv = w.values();
        u.push((0..form.times.len()).map(|i| form.u(i, wv[2 * i])).collect());
        v.push(form.sensitivity.clone());
        p.push((0..form.times.len()).map(|i| form.phi0.combine(1.0, &form.phi1, wv[2 * i])).collect());
    }
    let source = form.times.iter().map(|&t| data.source_field(t)).collect::<Result<_>>()?;
    let sol = SolutionField {
        times: form.times.clone(),
        u,
        v,
        initial_stderr: None,
        diagnostics: None,
        meta: SolutionMeta {
            solver: "linear-gaussian".into(),
            grid: data.grid,
            steps: opts.steps,
            paths: stored,
            seed: Some(opts.seed),
            stream_id: Some(opts.stream_id),
        },
    };
    let q = vec![form.phi1.clone(); form.times.len()];
    Ok((
        sol,
        MartingaleData {
            times: form.times,
            p,
            q,
            source,
        },
    ))
}

pub struct LinearGaussianSolver;

impl BspdeSolver for LinearGaussianSolver {
    fn name(&self) -> &'static str {
        "linear-gaussian"
    }

    fn solve(&self, data: &BSPDEData, opts: &SolveOptions) -> Result<SolutionField> {
        solve_bspde_linear_gaussian(data, opts).map(|(s, _)| s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspde::{spatial, RandomFieldSpec};
    use crate::grid::Grid1D;
    use crate::levy::sde::space_time;

    fn data(c0: f64, c1: f64) -> BSPDEData {
        let grid = Grid1D::centered(16.0, 256).unwrap();
        let phi = GridFunction::from_fn(grid, |x| (-x * x).exp());
        let spec = RandomFieldSpec::new(vec![
            (phi.scaled(c0), PathFunctional::Constant),
            (phi.scaled(c1), PathFunctional::Linear(WTime::Terminal)),
        ]);
        let mut d = BSPDEData::new(1.5, 1.0, grid, Terminal::Random(spec));
        d.f = Source::Field(space_time(|t, x| t * (0.3 * x).cos()));
        d
    }

    #[test]
    fn no_noise_reduces_to_kernel_solver() {
        let d = data(1.5, 0.0);
        let opts = SolveOptions { steps: 10, ..Default::default() };
        let (sol, _) = solve_bspde_linear_gaussian(&d, &opts).unwrap();
        let mut det = d.clone();
        det.g = Terminal::Field(spatial(|x| 1.5 * (-x * x).exp()));
        let k = solve_kernel_deterministic(&det, &opts).unwrap();
        for i in 0..sol.times.len() {
            assert!(sol.u[1][i].max_abs_diff(&k.u[0][i]) < 1e-13);
            assert_eq!(sol.v[1][i].sup_norm(), 0.0);
        }
    }

    #[test]
    fn terminal_condition_and_martingale_data() {
        let d = data(1.0, 0.5);
        let opts = SolveOptions { steps: 10, store_paths: 3, ..Default::default() };
        let (sol, m) = solve_bspde_linear_gaussian(&d, &opts).unwrap();
        let ws = brownian_ensemble(opts.stream(), 3, 1.0, 20).unwrap();
        for (path, w) in ws.iter().enumerate() {
            let wt = *w.values().last().unwrap();
            let phi = GridFunction::from_fn(d.grid, |x| (-x * x).exp());
            let g = phi.scaled(1.0 + 0.5 * wt);
            assert!(sol.terminal(path).max_abs_diff(&g) < 1e-14);
            assert!(m.p[path].last().unwrap().max_abs_diff(&g) < 1e-14);
        }
        assert!(m.y(3, 3).unwrap().max_abs_diff(&d.source_field(sol.times[3]).unwrap()) < 1e-15);
        assert!(m.y(4, 3).is_err());
        assert_eq!(m.z(2, 5).unwrap().sup_norm(), 0.0);
        assert!(m.q[0].max_abs_diff(&sol.v[0][10]) < 1e-15);
    }

    #[test]
    fn outside_class_is_rejected() {
        let mut d = data(1.0, 1.0);
        if let Terminal::Random(s) = &mut d.g {
            s.terms.push((GridFunction::zeros(d.grid), PathFunctional::Quadratic(WTime::Terminal, WTime::Terminal)));
        }
        assert!(matches!(
            solve_bspde_linear_gaussian(&d, &SolveOptions::default()),
            Err(Error::UnsupportedSpec(_))
        ));
        let mut d = data(1.0, 1.0);
        d.sigma = std::sync::Arc::new(|_| 0.2);
        assert!(matches!(
            solve_bspde_linear_gaussian(&d, &SolveOptions::default()),
            Err(Error::UnsupportedSpec(_))
        ));
    }
}
