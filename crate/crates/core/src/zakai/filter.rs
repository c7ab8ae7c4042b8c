//! Lie splitting for the Zakai equation: exact fractional diffusion over
//! the step, RK4 transport of `-D(k p)` with 2/3-rule dealiasing, then the
//! exact multiplicative observation update.

use num_complex::Complex64;
use rayon::prelude::*;

use super::{ControlPolicy, ControlProblem};
use crate::error::{Error, Result};
use crate::grid::{from_modes, to_modes, GridFunction};
use crate::levy::sde::Estimate;
use crate::levy::{simulate_brownian_path, BrownianPath, PathGrid, RngStream};
use crate::sum;

/// Filter density along one observation path.
#[derive(Debug, Clone)]
pub struct ZakaiState {
    pub times: Vec<f64>,
    pub p: Vec<GridFunction>,
}

impl ZakaiState {
    pub fn masses(&self) -> Vec<f64> {
        self.p.iter().map(|p| p.integral()).collect()
    }

    pub fn terminal(&self) -> &GridFunction {
        &self.p[self.p.len() - 1]
    }

    /// Largest `-min p / sup p` over time (0 when `p >= 0`).
    pub fn negativity(&self) -> f64 {
        self.p.iter().fold(0.0, |acc, p| {
            let lo = p.values.iter().copied().fold(0.0, f64::min);
            let sup = p.sup_norm();
            if sup > 0.0 {
                acc.max(-lo / sup)
            } else {
                acc
            }
        })
    }
}

/// Everything that depends on the problem and the policy but not on `Y`.
pub(crate) struct Plan {
    pub times: Vec<f64>,
    pub dt: f64,
    pub controls: Vec<f64>,
    diffusion: Vec<Vec<f64>>,
    /// Drift at the RK4 stage times `t_i + j dt/(2m)`, `j = 0..=2m`.
    drift: Vec<Vec<Vec<f64>>>,
    substeps: Vec<usize>,
    /// Observation function at the left end of each step.
    pub h: Vec<Vec<f64>>,
    mask: Vec<Complex64>,
}

impl Plan {
    pub(crate) fn new(problem: &ControlProblem, policy: &ControlPolicy) -> Result<Self> {
        problem.validate()?;
        policy.validate(problem)?;
        let grid = problem.grid;
        let times = problem.times();
        let dt = problem.dt();
        let n_steps = problem.steps;
        let lam: Vec<f64> = grid.xis().iter().map(|xi| xi.abs().powf(problem.alpha)).collect();
        let cut = 2.0 * std::f64::consts::PI * (grid.n / 3) as f64 / grid.length();
        let nyq = grid.nyquist_slot();
        let mask: Vec<Complex64> = (0..grid.n)
            .map(|j| {
                let xi = grid.xi(j);
                if j == nyq || xi.abs() > cut + 1e-9 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(0.0, xi)
                }
            })
            .collect();
        let mut diffusion = Vec::with_capacity(n_steps);
        let mut drift = Vec::with_capacity(n_steps);
        let mut substeps = Vec::with_capacity(n_steps);
        let mut h = Vec::with_capacity(n_steps);
        let mut controls = Vec::with_capacity(n_steps);
        for i in 0..n_steps {
            let (t0, t1) = (times[i], times[i + 1]);
            let v = policy.step_value(problem, i);
            controls.push(v);
            let ia = (t1 - t0) / 6.0 * (problem.a(t0) + 4.0 * problem.a(0.5 * (t0 + t1)) + problem.a(t1));
            diffusion.push(lam.iter().map(|l| (-ia * l).exp()).collect());
            let kmax = [t0, 0.5 * (t0 + t1), t1]
                .iter()
                .map(|&t| problem.drift(t, v).sup_norm())
                .fold(0.0, f64::max);
            // RK4 is stable for |λ dt| < 2.8 on the imaginary axis
            let m = ((t1 - t0) * kmax * cut / 2.0).ceil().max(1.0) as usize;
            substeps.push(m);
            drift.push(
                (0..=2 * m)
                    .map(|j| problem.drift(t0 + (t1 - t0) * j as f64 / (2 * m) as f64, v).values)
                    .collect(),
            );
            h.push(problem.observation(t0).values);
        }
        Ok(Plan {
            times,
            dt,
            controls,
            diffusion,
            drift,
            substeps,
            h,
            mask,
        })
    }

    fn flux_divergence(&self, k: &[f64], p: &[f64]) -> Vec<f64> {
        let flux: Vec<f64> = k.iter().zip(p).map(|(a, b)| a * b).collect();
        let modes = to_modes(&flux);
        from_modes(modes.iter().zip(&self.mask).map(|(z, m)| -z * m).collect())
    }

    fn transport(&self, i: usize, p: Vec<f64>) -> Vec<f64> {
        let m = self.substeps[i];
        let h = self.dt / m as f64;
        let ks = &self.drift[i];
        let axpy = |y: &[f64], a: f64, x: &[f64]| -> Vec<f64> { y.iter().zip(x).map(|(u, v)| u + a * v).collect() };
        let mut p = p;
        for s in 0..m {
            let (k0, km, k1) = (&ks[2 * s], &ks[2 * s + 1], &ks[2 * s + 2]);
            let r1 = self.flux_divergence(k0, &p);
            let r2 = self.flux_divergence(km, &axpy(&p, 0.5 * h, &r1));
            let r3 = self.flux_divergence(km, &axpy(&p, 0.5 * h, &r2));
            let r4 = self.flux_divergence(k1, &axpy(&p, h, &r3));
            p = (0..p.len())
                .map(|j| p[j] + h / 6.0 * (r1[j] + 2.0 * r2[j] + 2.0 * r3[j] + r4[j]))
                .collect();
        }
        p
    }

    /// Advances `p` from `t_i` to `t_{i+1}` given `ΔY_i`.
    pub(crate) fn step(&self, i: usize, p: &[f64], dy: f64) -> Vec<f64> {
        let p = from_modes(to_modes(p).iter().zip(&self.diffusion[i]).map(|(z, m)| z * m).collect());
        let p = self.transport(i, p);
        let dt = self.dt;
        p.iter()
            .zip(&self.h[i])
            .map(|(p, h)| p * (h * dy - 0.5 * h * h * dt).exp())
            .collect()
    }

    /// Runs the filter, calling `visit(i, p_i)` at every node.
    pub(crate) fn run(
        &self,
        problem: &ControlProblem,
        dy: &[f64],
        mut visit: impl FnMut(usize, &[f64]),
    ) -> Result<()> {
        let guard = problem.blowup_guard;
        let mut p = problem.p0.values.clone();
        visit(0, &p);
        for i in 0..self.controls.len() {
            p = self.step(i, &p, dy[i]);
            let sup = p.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if !(sup <= guard) {
                return Err(Error::BlowUp { sup, guard });
            }
            visit(i + 1, &p);
        }
        Ok(())
    }
}

/// Observation increments on the solver steps; `Y` may be sampled on any
/// refinement of the solver grid.
pub(crate) fn solver_increments(problem: &ControlProblem, y: &BrownianPath) -> Result<Vec<f64>> {
    let steps = problem.steps;
    let fine = y.grid.steps;
    if fine % steps != 0 || (y.grid.t_end - y.grid.t0 - problem.horizon).abs() > 1e-12 * problem.horizon.max(1.0) {
        return Err(Error::GridMismatch(format!(
            "observation path with {fine} steps on [{}, {}] does not refine {steps} steps on [0, {}]",
            y.grid.t0, y.grid.t_end, problem.horizon
        )));
    }
    let r = fine / steps;
    Ok(y.increments.chunks(r).map(|c| c.iter().sum()).collect())
}

pub fn solve_zakai(problem: &ControlProblem, policy: &ControlPolicy, y: &BrownianPath) -> Result<ZakaiState> {
    let plan = Plan::new(problem, policy)?;
    let dy = solver_increments(problem, y)?;
    let mut p = Vec::with_capacity(problem.steps + 1);
    plan.run(problem, &dy, |_, v| {
        p.push(GridFunction {
            grid: problem.grid,
            values: v.to_vec(),
        })
    })?;
    Ok(ZakaiState { times: plan.times, p })
}

/// `paths` observation paths on the solver grid, path `k` on `stream.child(k)`.
pub fn observation_ensemble(problem: &ControlProblem, paths: usize, stream: RngStream) -> Result<Vec<BrownianPath>> {
    let grid = PathGrid::new(0.0, problem.horizon, problem.steps)?;
    Ok((0..paths)
        .into_par_iter()
        .map(|k| simulate_brownian_path(&grid, stream.child(k as u64)))
        .collect())
}

/// Pathwise cost `∫⟨f(t,·,u_t), p_t⟩dt + ⟨g, p_T⟩`, trapezoid in time
/// with the step's own control at both ends.
pub(crate) fn path_cost(problem: &ControlProblem, plan: &Plan, dy: &[f64]) -> Result<f64> {
    let steps = plan.controls.len();
    let g = problem.terminal_cost();
    let mut left = Vec::with_capacity(steps);
    let mut right = Vec::with_capacity(steps);
    let mut terminal = 0.0;
    plan.run(problem, dy, |i, p| {
        let pf = GridFunction {
            grid: problem.grid,
            values: p.to_vec(),
        };
        if i < steps {
            left.push(problem.running_cost(plan.times[i], plan.controls[i]).inner(&pf));
        }
        if i > 0 {
            right.push(problem.running_cost(plan.times[i], plan.controls[i - 1]).inner(&pf));
        }
        if i == steps {
            terminal = g.inner(&pf);
        }
    })?;
    let running: Vec<f64> = left.iter().zip(&right).map(|(a, b)| 0.5 * plan.dt * (a + b)).collect();
    Ok(sum::pairwise(&running) + terminal)
}

/// Monte Carlo value of the cost under `policy`. Sharing `ys` across
/// policies gives common random numbers.
pub fn cost_functional(problem: &ControlProblem, policy: &ControlPolicy, ys: &[BrownianPath]) -> Result<Estimate> {
    if ys.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let plan = Plan::new(problem, policy)?;
    let values = ys
        .par_iter()
        .map(|y| path_cost(problem, &plan, &solver_increments(problem, y)?))
        .collect::<Result<Vec<f64>>>()?;
    let (mean, stderr) = sum::mean_stderr(&values);
    Ok(Estimate {
        mean,
        stderr,
        n: values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{semigroup_apply, CoefficientA};
    use crate::grid::Grid1D;
    use crate::zakai::control_field;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn gaussian_problem(alpha: f64, horizon: f64, steps: usize) -> ControlProblem {
        let grid = Grid1D::new(-16.0, 16.0, 256).unwrap();
        let p0 = GridFunction::from_fn(grid, |x| (-x * x / 2.0).exp() / (2.0 * PI).sqrt());
        let mut p = ControlProblem::new(alpha, horizon, p0, vec![-1.0, 0.0, 1.0]);
        p.steps = steps;
        p
    }

    fn one_path(p: &ControlProblem, seed: u64) -> BrownianPath {
        observation_ensemble(p, 1, RngStream::new(seed, 0)).unwrap().remove(0)
    }

    #[test]
    fn pure_diffusion_is_the_semigroup() {
        let mut p = gaussian_problem(1.5, 1.0, 10);
        p.mu = Arc::new(|t| 1.0 + 0.5 * t);
        let pol = ControlPolicy::constant(1.0, 0.0);
        let st = solve_zakai(&p, &pol, &one_path(&p, 1)).unwrap();
        let a = CoefficientA::function(|t| (1.0 + 0.5 * t).powf(1.5), 1.0, 1.5f64.powf(1.5));
        for (i, t) in st.times.iter().enumerate() {
            let exact = semigroup_apply(&p.p0, 1.5, &a, 0.0, *t).unwrap();
            assert!(st.p[i].max_abs_diff(&exact) < 1e-6, "t={t}");
        }
    }

    #[test]
    fn constant_observation_closed_form() {
        let mut p = gaussian_problem(1.2, 1.0, 16);
        let h0 = 0.7;
        p.h = Arc::new(move |_, _| h0);
        let y = one_path(&p, 2);
        let w = y.values();
        let st = solve_zakai(&p, &ControlPolicy::constant(1.0, 0.0), &y).unwrap();
        for (i, t) in st.times.iter().enumerate() {
            let base = semigroup_apply(&p.p0, 1.2, &CoefficientA::constant(1.0), 0.0, *t).unwrap();
            let exact = base.scaled((h0 * w[i] - 0.5 * h0 * h0 * t).exp());
            assert!(st.p[i].max_abs_diff(&exact) < 1e-6);
        }
    }

    #[test]
    fn mass_is_conserved_without_observation() {
        let mut p = gaussian_problem(1.5, 2.0, 20);
        p.k = control_field(|t, x, v| (x).sin() + v * (1.0 + t));
        let st = solve_zakai(&p, &ControlPolicy::uniform(2.0, vec![1.0, -1.0]), &one_path(&p, 3)).unwrap();
        let m = st.masses();
        let drift = m.iter().fold(0.0_f64, |d, x| d.max((x - m[0]).abs()));
        assert!(drift / 2.0 < 1e-8, "{drift}");
        assert!(st.negativity() < 1e-6);
    }

    #[test]
    fn trivial_costs() {
        let mut p = gaussian_problem(1.5, 0.8, 8);
        p.k = control_field(|_, x, v| 0.3 * x.cos() + v);
        p.g = Arc::new(|_| 1.0);
        let ys = observation_ensemble(&p, 8, RngStream::new(4, 0)).unwrap();
        let pol = ControlPolicy::uniform(0.8, vec![1.0, 0.0]);
        let j = cost_functional(&p, &pol, &ys).unwrap();
        assert!((j.mean - 1.0).abs() < 1e-8);
        p.g = Arc::new(|_| 0.0);
        p.f = control_field(|_, _, _| 1.0);
        let j = cost_functional(&p, &pol, &ys).unwrap();
        assert!((j.mean - 0.8).abs() < 1e-8);
        assert!(cost_functional(&p, &pol, &[]).is_err());
    }

    #[test]
    fn gaussian_second_moment() {
        let t = 0.5;
        let mut p = gaussian_problem(2.0, t, 10);
        p.g = Arc::new(|x| x * x);
        let ys = observation_ensemble(&p, 2, RngStream::new(5, 0)).unwrap();
        let j = cost_functional(&p, &ControlPolicy::constant(t, 0.0), &ys).unwrap();
        assert!((j.mean - (1.0 + 2.0 * t)).abs() < 1e-6, "{}", j.mean);
    }

    #[test]
    fn likelihood_has_unit_mean() {
        let mut p = gaussian_problem(1.5, 1.0, 10);
        p.h = Arc::new(|_, x| (-(x - 1.0).powi(2)).exp() + 0.5);
        p.g = Arc::new(|_| 1.0);
        let ys = observation_ensemble(&p, 4000, RngStream::new(6, 0)).unwrap();
        let j = cost_functional(&p, &ControlPolicy::constant(1.0, 0.0), &ys).unwrap();
        assert!((j.mean - 1.0).abs() < 3.0 * j.stderr, "{j:?}");
    }

    #[test]
    fn coarse_observation_grid_is_rejected() {
        let p = gaussian_problem(1.5, 1.0, 10);
        let y = simulate_brownian_path(&PathGrid::new(0.0, 1.0, 5).unwrap(), RngStream::new(0, 0));
        assert!(matches!(
            solve_zakai(&p, &ControlPolicy::constant(1.0, 0.0), &y),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn blowup_guard() {
        let mut p = gaussian_problem(1.5, 1.0, 4);
        p.h = Arc::new(|_, _| 4.0);
        p.blowup_guard = 10.0;
        let y = BrownianPath {
            grid: PathGrid::new(0.0, 1.0, 4).unwrap(),
            increments: vec![2.0; 4],
        };
        assert!(matches!(
            solve_zakai(&p, &ControlPolicy::constant(1.0, 0.0), &y),
            Err(Error::BlowUp { .. })
        ));
    }
}
