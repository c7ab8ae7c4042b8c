//! Exhaustive open-loop control search and the Hamiltonian comparison
//! along the resulting policy.

use rayon::prelude::*;
use serde::Serialize;

use super::adjoint::{solve_adjoint, AdjointOptions};
use super::filter::{solver_increments, Plan};
use super::{cost_functional, ControlPolicy, ControlProblem};
use crate::error::{Error, Result};
use crate::grid::{spectral_derivative, GridFunction};
use crate::levy::sde::Estimate;
use crate::levy::BrownianPath;
use crate::sum;

#[derive(Debug, Clone, Serialize)]
pub struct PolicyCost {
    pub values: Vec<f64>,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BruteForceResult {
    pub policy: ControlPolicy,
    pub cost: Estimate,
    /// Every policy in enumeration order.
    pub evaluated: Vec<PolicyCost>,
}

/// Evaluates all `|U|^intervals` open-loop policies on the shared
/// ensemble. Index tuples are enumerated lexicographically in the order of
/// `problem.controls`; the first minimum wins.
pub fn brute_force_optimal_control(
    problem: &ControlProblem,
    intervals: usize,
    ys: &[BrownianPath],
    limit: u64,
) -> Result<BruteForceResult> {
    problem.validate()?;
    if ys.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let u = problem.controls.len() as u64;
    let count = u.checked_pow(intervals as u32).unwrap_or(u64::MAX);
    if intervals == 0 || count > limit {
        return Err(Error::BudgetExceeded { count, limit });
    }
    let mut evaluated = Vec::with_capacity(count as usize);
    let mut best: Option<(usize, Estimate)> = None;
    for idx in 0..count {
        let mut rest = idx;
        let mut values = vec![0.0; intervals];
        for slot in values.iter_mut().rev() {
            *slot = problem.controls[(rest % u) as usize];
            rest /= u;
        }
        let policy = ControlPolicy::uniform(problem.horizon, values.clone());
        let est = cost_functional(problem, &policy, ys)?;
        if best.as_ref().is_none_or(|(_, b)| est.mean < b.mean) {
            best = Some((evaluated.len(), est));
        }
        evaluated.push(PolicyCost {
            values,
            mean: est.mean,
            stderr: est.stderr,
        });
    }
    let (k, cost) = best.expect("at least one policy");
    Ok(BruteForceResult {
        policy: ControlPolicy::uniform(problem.horizon, evaluated[k].values.clone()),
        cost,
        evaluated,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HamiltonianMargin {
    pub t: f64,
    pub v: f64,
    pub u_bar: f64,
    /// Path average of `H(t,v,p̄,q̄) - H(t,ū_t,p̄,q̄)`.
    pub gap: f64,
    pub stderr: f64,
    /// `|gap_Δt - gap_2Δt|`, zero when the coarse level is skipped.
    pub discretization: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MaximumPrincipleReport {
    pub paths: usize,
    pub margins: Vec<HamiltonianMargin>,
    pub worst_margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct MaximumPrincipleOptions {
    pub adjoint: AdjointOptions,
    /// Checked times; `None` uses the start and midpoint of every policy
    /// interval.
    pub times: Option<Vec<f64>>,
    /// Re-solve with half the steps to estimate the time discretization.
    pub coarse_level: bool,
    pub sigmas: f64,
}

impl Default for MaximumPrincipleOptions {
    fn default() -> Self {
        MaximumPrincipleOptions {
            adjoint: AdjointOptions::default(),
            times: None,
            coarse_level: true,
            sigmas: 3.0,
        }
    }
}

fn node_of(problem: &ControlProblem, t: f64) -> Result<usize> {
    let s = t / problem.dt();
    let node = s.round();
    if (s - node).abs() > 1e-9 || node < 0.0 || node as usize > problem.steps {
        return Err(Error::OutOfRange {
            name: "check time",
            value: t,
            expected: "a solver node",
        });
    }
    Ok(node as usize)
}

/// Per-path gaps `[check][v]` and their means and standard errors.
fn gaps(
    problem: &ControlProblem,
    policy: &ControlPolicy,
    ys: &[BrownianPath],
    times: &[f64],
    adjoint: &AdjointOptions,
) -> Result<Vec<Vec<(f64, f64)>>> {
    let nodes: Vec<usize> = times.iter().map(|&t| node_of(problem, t)).collect::<Result<_>>()?;
    let opts = AdjointOptions {
        checkpoints: nodes.clone(),
        store_paths: 0,
        ..adjoint.clone()
    };
    let adj = solve_adjoint(problem, policy, ys, &opts)?;
    let plan = Plan::new(problem, policy)?;
    let u_bar: Vec<f64> = nodes.iter().map(|&i| plan.controls[i.min(problem.steps - 1)]).collect();
    // f and k fields for every (check, v)
    let fields: Vec<Vec<(GridFunction, GridFunction)>> = nodes
        .iter()
        .map(|&i| {
            let t = plan.times[i];
            problem
                .controls
                .iter()
                .map(|&v| (problem.running_cost(t, v), problem.drift(t, v)))
                .collect()
        })
        .collect();
    let per_path: Vec<Vec<Vec<f64>>> = (0..ys.len())
        .into_par_iter()
        .map(|path| {
            let dy = solver_increments(problem, &ys[path])?;
            let mut out = vec![Vec::new(); nodes.len()];
            plan.run(problem, &dy, |i, p| {
                let p = GridFunction {
                    grid: problem.grid,
                    values: p.to_vec(),
                };
                for (c, &node) in nodes.iter().enumerate() {
                    if node != i {
                        continue;
                    }
                    let q = &adj.q_checkpoints[c][path];
                    let h: Vec<f64> = fields[c]
                        .iter()
                        .map(|(f, k)| {
                            let kp = GridFunction {
                                grid: p.grid,
                                values: k.values.iter().zip(&p.values).map(|(a, b)| a * b).collect(),
                            };
                            f.inner(&p) - spectral_derivative(&kp, 1).inner(q)
                        })
                        .collect();
                    let ju = problem.controls.iter().position(|&v| v == u_bar[c]).unwrap();
                    out[c] = h.iter().map(|x| x - h[ju]).collect();
                }
            })?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok((0..nodes.len())
        .map(|c| {
            (0..problem.controls.len())
                .map(|j| {
                    let xs: Vec<f64> = per_path.iter().map(|p| p[c][j]).collect();
                    sum::mean_stderr(&xs)
                })
                .collect()
        })
        .collect())
}

/// Checks `E[H(t,v,p̄,q̄)] >= E[H(t,ū_t,p̄,q̄)] - tol` at the check times for
/// every `v`, with `tol = sigmas (stderr + |gap_Δt - gap_2Δt|)`.
pub fn verify_maximum_principle(
    problem: &ControlProblem,
    policy: &ControlPolicy,
    ys: &[BrownianPath],
    opts: &MaximumPrincipleOptions,
) -> Result<MaximumPrincipleReport> {
    if ys.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    policy.validate(problem)?;
    let times = opts.times.clone().unwrap_or_else(|| {
        policy
            .breakpoints
            .windows(2)
            .flat_map(|w| [w[0], 0.5 * (w[0] + w[1])])
            .collect()
    });
    let fine = gaps(problem, policy, ys, &times, &opts.adjoint)?;
    let coarse = if opts.coarse_level && problem.steps % 2 == 0 {
        let mut half = problem.clone();
        half.steps /= 2;
        Some(gaps(&half, policy, ys, &times, &opts.adjoint)?)
    } else {
        None
    };
    let mut margins = Vec::new();
    for (c, &t) in times.iter().enumerate() {
        let u_bar = policy.value_at(t.min(problem.horizon - 0.5 * problem.dt()));
        for (j, &v) in problem.controls.iter().enumerate() {
            if v == u_bar {
                continue;
            }
            let (gap, stderr) = fine[c][j];
            let discretization = coarse.as_ref().map_or(0.0, |g| (gap - g[c][j].0).abs());
            let tolerance = opts.sigmas * (stderr + discretization);
            margins.push(HamiltonianMargin {
                t,
                v,
                u_bar,
                gap,
                stderr,
                discretization,
                tolerance,
                passed: gap >= -tolerance,
            });
        }
    }
    let worst_margin = if margins.is_empty() {
        0.0
    } else {
        margins.iter().map(|m| m.gap).fold(f64::INFINITY, f64::min)
    };
    Ok(MaximumPrincipleReport {
        paths: ys.len(),
        passed: margins.iter().all(|m| m.passed),
        worst_margin,
        margins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::levy::RngStream;
    use crate::zakai::{control_field, observation_ensemble};
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn problem(controls: Vec<f64>) -> ControlProblem {
        let grid = Grid1D::new(-12.0, 12.0, 64).unwrap();
        let p0 = GridFunction::from_fn(grid, |x| (-x * x / 2.0).exp() / (2.0 * PI).sqrt());
        let mut p = ControlProblem::new(1.5, 1.0, p0, controls);
        p.steps = 8;
        p.h = Arc::new(|_, x| 0.5 * (-x * x).exp());
        p
    }

    #[test]
    fn separable_cost_prefers_zero() {
        let mut p = problem(vec![-1.0, 0.0, 1.0]);
        p.k = control_field(|_, x, _| 0.3 * x.sin());
        p.f = control_field(|_, _, v| v * v);
        let ys = observation_ensemble(&p, 50, RngStream::new(1, 0)).unwrap();
        let r = brute_force_optimal_control(&p, 2, &ys, 256).unwrap();
        assert_eq!(r.policy.values, vec![0.0, 0.0]);
        assert_eq!(r.evaluated.len(), 9);
        let rep = verify_maximum_principle(&p, &r.policy, &ys, &Default::default()).unwrap();
        assert!(rep.passed);
        // c(v) - c(0) times the mass, no noise in the comparison
        for m in &rep.margins {
            assert!(m.gap > 0.0 && m.stderr < 1e-12 + 0.1 * m.gap);
        }
    }

    #[test]
    fn single_control() {
        let mut p = problem(vec![0.5]);
        p.steps = 12;
        let ys = observation_ensemble(&p, 10, RngStream::new(2, 0)).unwrap();
        let r = brute_force_optimal_control(&p, 3, &ys, 256).unwrap();
        assert_eq!(r.policy.values, vec![0.5; 3]);
        let rep = verify_maximum_principle(&p, &r.policy, &ys, &Default::default()).unwrap();
        assert!(rep.passed && rep.margins.is_empty() && rep.worst_margin == 0.0);
    }

    #[test]
    fn ties_keep_the_first_policy() {
        let p = problem(vec![1.0, -1.0]);
        let ys = observation_ensemble(&p, 4, RngStream::new(3, 0)).unwrap();
        let r = brute_force_optimal_control(&p, 2, &ys, 256).unwrap();
        assert_eq!(r.policy.values, vec![1.0, 1.0]);
    }

    #[test]
    fn budget() {
        let p = problem(vec![-1.0, 0.0, 1.0, 2.0]);
        let ys = observation_ensemble(&p, 1, RngStream::new(4, 0)).unwrap();
        assert!(matches!(
            brute_force_optimal_control(&p, 5, &ys, 256),
            Err(Error::BudgetExceeded { count: 1024, limit: 256 })
        ));
    }
}
