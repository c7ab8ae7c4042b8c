//! Backward regression scheme for the adjoint pair `(q, l)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::filter::solver_increments;
use super::{ControlPolicy, ControlProblem, DualForm};
use crate::bspde::{stability_bound, BackwardStep, Coeffs};
use crate::error::{Error, Result};
use crate::grid::{spectral_derivative, to_modes, GridFunction};
use crate::levy::BrownianPath;
use crate::lsq::{self, build_basis};

#[derive(Debug, Clone, Serialize)]
pub struct AdjointOptions {
    pub basis_degree: usize,
    /// Coarse times whose observation values enter the regression basis.
    pub coarse_times: usize,
    pub cond_limit: f64,
    pub stability_limit: f64,
    /// Solver nodes at which `q` is kept for every path.
    pub checkpoints: Vec<usize>,
    /// Paths whose full `(q, l)` history is kept.
    pub store_paths: usize,
}

impl Default for AdjointOptions {
    fn default() -> Self {
        AdjointOptions {
            basis_degree: 2,
            coarse_times: 3,
            cond_limit: 1e10,
            stability_limit: 0.9,
            checkpoints: Vec::new(),
            store_paths: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdjointState {
    pub times: Vec<f64>,
    pub checkpoints: Vec<usize>,
    /// `q_checkpoints[c][path]` at node `checkpoints[c]`.
    pub q_checkpoints: Vec<Vec<GridFunction>>,
    /// `q[path][time]` for the stored paths.
    pub q: Vec<Vec<GridFunction>>,
    pub l: Vec<Vec<GridFunction>>,
    pub q_mean: Vec<GridFunction>,
    /// Root mean square of `l` over paths.
    pub l_rms: Vec<GridFunction>,
    /// Pointwise standard error of the fitted `l`.
    pub l_stderr: Vec<GridFunction>,
    pub condition: f64,
}

impl AdjointState {
    /// Largest `l_rms / l_stderr` over nodes and grid points where the
    /// error is positive.
    pub fn l_ratio(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (r, s) in self.l_rms.iter().zip(&self.l_stderr) {
            for (a, b) in r.values.iter().zip(&s.values) {
                if *b > 0.0 {
                    worst = worst.max(a / b);
                } else if *a > 0.0 {
                    return f64::INFINITY;
                }
            }
        }
        worst
    }
}

fn column_means(m: &DMatrix<f64>, cols: std::ops::Range<usize>) -> Vec<f64> {
    let rows = m.nrows() as f64;
    cols.map(|c| m.column(c).iter().sum::<f64>() / rows).collect()
}

pub fn solve_adjoint(
    problem: &ControlProblem,
    policy: &ControlPolicy,
    ys: &[BrownianPath],
    opts: &AdjointOptions,
) -> Result<AdjointState> {
    problem.validate()?;
    policy.validate(problem)?;
    let paths = ys.len();
    if paths == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let steps = problem.steps;
    if let Some(&c) = opts.checkpoints.iter().find(|&&c| c > steps) {
        return Err(Error::OutOfRange {
            name: "checkpoint",
            value: c as f64,
            expected: "a solver node index",
        });
    }
    let grid = problem.grid;
    let n = grid.n;
    let times = problem.times();
    let dt = problem.dt();

    let coeffs = |t: f64, v: f64| -> Result<Coeffs> {
        let k = problem.drift(t, v);
        let a = vec![problem.a(t); n];
        match problem.dual {
            DualForm::Adjoint => Coeffs::new(t, a, k.values, vec![0.0; n]),
            DualForm::Printed => Coeffs::new(t, a, vec![0.0; n], spectral_derivative(&k, 1).values),
        }
    };
    let controls: Vec<f64> = (0..steps).map(|i| policy.step_value(problem, i)).collect();
    let samples: Vec<[Coeffs; 3]> = (0..steps)
        .map(|i| {
            let (t0, t1, v) = (times[i], times[i + 1], controls[i]);
            Ok([coeffs(t0, v)?, coeffs(0.5 * (t0 + t1), v)?, coeffs(t1, v)?])
        })
        .collect::<Result<_>>()?;
    let bound = stability_bound(&grid, dt, samples.iter().flatten());
    if bound > opts.stability_limit {
        return Err(Error::StabilityError {
            bound,
            limit: opts.stability_limit,
        });
    }

    let dys: Vec<Vec<f64>> = ys.iter().map(|y| solver_increments(problem, y)).collect::<Result<_>>()?;
    let w_vals: Vec<Vec<f64>> = dys
        .iter()
        .map(|d| {
            std::iter::once(0.0)
                .chain(d.iter().scan(0.0, |s, x| {
                    *s += x;
                    Some(*s)
                }))
                .collect()
        })
        .collect();
    let coarse = lsq::coarse_nodes(steps, opts.coarse_times.max(1));

    let g = problem.terminal_cost();
    let stored = opts.store_paths.min(paths);
    let mut q: Vec<Vec<f64>> = vec![g.values.clone(); paths];
    let gf = |v: Vec<f64>| GridFunction { grid, values: v };
    let mut q_hist: Vec<Vec<GridFunction>> = vec![vec![g.clone()]; stored];
    let mut l_hist: Vec<Vec<GridFunction>> = vec![Vec::new(); stored];
    let mut q_mean = vec![g.clone()];
    let mut l_rms = Vec::new();
    let mut l_stderr = Vec::new();
    let mut q_checkpoints: Vec<Vec<GridFunction>> = vec![Vec::new(); opts.checkpoints.len()];
    let keep_checkpoint = |i: usize, q: &[Vec<f64>], out: &mut Vec<Vec<GridFunction>>| {
        for (c, &node) in opts.checkpoints.iter().enumerate() {
            if node == i {
                out[c] = q.iter().map(|v| gf(v.clone())).collect();
            }
        }
    };
    keep_checkpoint(steps, &q, &mut q_checkpoints);
    let mut condition: f64 = 1.0;

    for i in (0..steps).rev() {
        let (t0, t1, v) = (times[i], times[i + 1], controls[i]);
        let vars = lsq::brownian_variables(&w_vals, &times, i, &coarse, opts.coarse_times, 1);
        let basis = build_basis(&vars, paths, opts.basis_degree, opts.cond_limit)?;
        condition = condition.max(basis.cond);
        let d = basis.matrix.ncols() as f64;
        let targets = DMatrix::from_fn(paths, 2 * n, |p, j| {
            if j < n {
                q[p][j]
            } else {
                q[p][j - n] * dys[p][i] / dt
            }
        });
        let fitted = basis.project(&targets);
        let resid = &targets - &fitted;
        let res_var: Vec<f64> = (n..2 * n)
            .map(|j| resid.column(j).iter().map(|r| r * r).sum::<f64>() / (paths as f64 - d).max(1.0))
            .collect();
        l_stderr.push(gf(res_var.iter().map(|s| (d * s / paths as f64).sqrt()).collect()));
        let sq = fitted.columns(n, n).map(|x| x * x);
        l_rms.push(gf(column_means(&sq, 0..n).into_iter().map(f64::sqrt).collect()));

        let f = [t0, 0.5 * (t0 + t1), t1].map(|t| to_modes(&problem.running_cost(t, v).values));
        let h = problem.observation(t0).values;
        let [k0, mid, k1] = &samples[i];
        let step = BackwardStep {
            grid: &grid,
            alpha: problem.alpha,
            dt,
            k0,
            mid,
            k1,
        };
        let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..paths)
            .into_par_iter()
            .map(|p| {
                let eq: Vec<f64> = (0..n).map(|j| fitted[(p, j)]).collect();
                let l: Vec<f64> = (0..n).map(|j| fitted[(p, n + j)]).collect();
                let extra: Vec<f64> = h.iter().zip(&l).map(|(a, b)| a * b).collect();
                (step.apply(&eq, [&f[0], &f[1], &f[2]], Some(&extra)), l)
            })
            .collect();
        let mut l_now = Vec::with_capacity(stored);
        q = rows
            .into_iter()
            .enumerate()
            .map(|(p, (qn, l))| {
                if p < stored {
                    l_now.push(l);
                }
                qn
            })
            .collect();
        if q.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::BlowUp {
                sup: f64::INFINITY,
                guard: f64::MAX,
            });
        }
        for (s, l) in l_now.into_iter().enumerate() {
            q_hist[s].push(gf(q[s].clone()));
            l_hist[s].push(gf(l));
        }
        let qm = DMatrix::from_fn(paths, n, |p, j| q[p][j]);
        q_mean.push(gf(column_means(&qm, 0..n)));
        keep_checkpoint(i, &q, &mut q_checkpoints);
    }

    // nodes were pushed backward in time; l at T repeats the last interval
    q_mean.reverse();
    l_rms.reverse();
    l_stderr.reverse();
    l_rms.push(l_rms[steps - 1].clone());
    l_stderr.push(l_stderr[steps - 1].clone());
    for (qh, lh) in q_hist.iter_mut().zip(l_hist.iter_mut()) {
        qh.reverse();
        lh.reverse();
        lh.push(lh[steps - 1].clone());
    }
    Ok(AdjointState {
        times,
        checkpoints: opts.checkpoints.clone(),
        q_checkpoints,
        q: q_hist,
        l: l_hist,
        q_mean,
        l_rms,
        l_stderr,
        condition,
    })
}
