//! Least-squares Monte Carlo for the per-mode linear BSDE
//! `-dû = [-a|ξ|^α û + f̂ + σ v̂] dt - v̂ dW`.
//!
//! Backward step on `[t_i, t_{i+1}]` with `D = e^{-|ξ|^α ∫a}`:
//! `v̂_i = E[D û_{i+1} ΔW_i | F_i] / Δt`,
//! `û_i = E[D û_{i+1} + ∫ e^{-|ξ|^α ∫a} (f̂ + σ v̂_i) ds | F_i]`,
//! conditional expectations by least squares on polynomials of Brownian
//! values at the current node and at coarse earlier nodes.

use nalgebra::DMatrix;

use crate::lsq::{self, build_basis};
use num_complex::Complex64;
use rayon::prelude::*;

use super::{
    brownian_ensemble, cumulative_a, BSPDEData, BspdeSolver, RegressionDiagnostics, SolutionField, SolutionMeta,
    SolveOptions, Source, Terminal,
};
use crate::error::{Error, Result};
use crate::grid::{from_modes, to_modes, Grid1D, GridFunction};
use crate::levy::BrownianPath;

/// A field `Σ_i φ̂_i P_i(W)` restricted to the retained modes.
struct ModalField {
    /// `(modes, functional)`; `None` functional means constant.
    terms: Vec<(Vec<Complex64>, Option<super::PathFunctional>)>,
}

impl ModalField {
    fn eval(&self, w: &BrownianPath, t: f64, m: usize) -> Complex64 {
        self.terms
            .iter()
            .map(|(c, p)| c[m] * p.map_or(1.0, |p| p.eval(w, t)))
            .sum()
    }

    fn is_deterministic(&self) -> bool {
        self.terms.iter().all(|(_, p)| p.is_none())
    }
}

struct Modes {
    slots: Vec<usize>,
    lam: Vec<f64>,
}

impl Modes {
    fn pick(&self, full: &[Complex64]) -> Vec<Complex64> {
        self.slots.iter().map(|&j| full[j]).collect()
    }

    /// Real field from retained non-negative-frequency modes.
    fn to_values(&self, grid: &Grid1D, modes: &[Complex64]) -> Vec<f64> {
        let n = grid.n;
        let mut full = vec![Complex64::new(0.0, 0.0); n];
        for (&j, &z) in self.slots.iter().zip(modes) {
            full[j] = z;
            if j != 0 && j != grid.nyquist_slot() {
                full[n - j] = z.conj();
            }
        }
        from_modes(full)
    }
}

fn terminal_field(data: &BSPDEData) -> Vec<(GridFunction, Option<super::PathFunctional>)> {
    match &data.g {
        Terminal::Field(g) => vec![(GridFunction::from_fn(data.grid, |x| g(x)), None)],
        Terminal::Random(s) => s
            .terms
            .iter()
            .map(|(phi, p)| (phi.clone(), (!p.is_constant()).then_some(*p)))
            .collect(),
    }
}

enum SourceModes {
    /// Per fine node.
    Deterministic(Vec<Vec<Complex64>>),
    Random(ModalField),
}

fn to_matrix(values: &[Vec<Complex64>], paths: usize) -> DMatrix<f64> {
    // values[m][p] -> columns (re_m, im_m)
    DMatrix::from_fn(paths, 2 * values.len(), |p, c| {
        let z = values[c / 2][p];
        if c % 2 == 0 {
            z.re
        } else {
            z.im
        }
    })
}

fn from_matrix(m: &DMatrix<f64>, modes: usize) -> Vec<Vec<Complex64>> {
    (0..modes)
        .map(|k| (0..m.nrows()).map(|p| Complex64::new(m[(p, 2 * k)], m[(p, 2 * k + 1)])).collect())
        .collect()
}

/// Mean and standard error per grid point of per-path fields given by
/// their retained modes `values[m][p]`.
fn pointwise_stats(modes: &Modes, grid: &Grid1D, values: &[Vec<Complex64>], paths: usize) -> (GridFunction, GridFunction) {
    let rows: Vec<Vec<f64>> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let v: Vec<Complex64> = values.iter().map(|col| col[p]).collect();
            modes.to_values(grid, &v)
        })
        .collect();
    let n = grid.n;
    let mut mean = vec![0.0; n];
    let mut se = vec![0.0; n];
    let mut column = vec![0.0; paths];
    for j in 0..n {
        for (p, r) in rows.iter().enumerate() {
            column[p] = r[j];
        }
        let (m, s) = crate::sum::mean_stderr(&column);
        mean[j] = m;
        se[j] = s;
    }
    (
        GridFunction { grid: *grid, values: mean },
        GridFunction { grid: *grid, values: se },
    )
}

pub fn solve_bspde_regression(data: &BSPDEData, opts: &SolveOptions) -> Result<SolutionField> {
    data.validate()?;
    let a = data.time_only_a()?;
    let grid = data.grid;
    let n_steps = opts.steps;
    let paths = opts.paths;
    if paths == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if opts.coarse_times > 8 || opts.basis_degree > 2 {
        return Err(Error::OutOfRange {
            name: "basis",
            value: opts.coarse_times.max(opts.basis_degree) as f64,
            expected: "at most 8 coarse times and degree 2",
        });
    }
    let times = opts.times(data.horizon);
    let fine_times = super::time_nodes(data.horizon, 2 * n_steps);
    data.require_no_transport(&fine_times)?;
    let dt = data.horizon / n_steps as f64;
    let acum = cumulative_a(a, &fine_times)?;

    // retained modes: non-negative frequencies carrying data
    let g_terms = terminal_field(data);
    let g_full: Vec<Vec<Complex64>> = g_terms.iter().map(|(phi, _)| to_modes(&phi.values)).collect();
    let f_full: Vec<Vec<Complex64>> = match &data.f {
        Source::Field(_) => fine_times
            .iter()
            .map(|&t| data.source_field(t).map(|f| to_modes(&f.values)))
            .collect::<Result<_>>()?,
        Source::Random(s) => s.terms.iter().map(|(phi, _)| to_modes(&phi.values)).collect(),
    };
    let half = grid.nyquist_slot();
    let scale = g_full
        .iter()
        .chain(&f_full)
        .flat_map(|v| v[..=half].iter().map(|z| z.norm()))
        .fold(0.0_f64, f64::max);
    let slots: Vec<usize> = (0..=half)
        .filter(|&j| g_full.iter().chain(&f_full).any(|v| v[j].norm() > 1e-14 * scale))
        .collect();
    let modes = Modes {
        lam: slots.iter().map(|&j| grid.xi(j).abs().powf(data.alpha)).collect(),
        slots,
    };
    let n_modes = modes.slots.len();

    let g_modal = ModalField {
        terms: g_terms.iter().zip(&g_full).map(|((_, p), c)| (modes.pick(c), *p)).collect(),
    };
    let f_modes = match &data.f {
        Source::Field(_) => SourceModes::Deterministic(f_full.iter().map(|c| modes.pick(c)).collect()),
        Source::Random(s) => SourceModes::Random(ModalField {
            terms: s
                .terms
                .iter()
                .zip(&f_full)
                .map(|((_, p), c)| (modes.pick(c), (!p.is_constant()).then_some(*p)))
                .collect(),
        }),
    };

    let ws = brownian_ensemble(opts.stream(), paths, data.horizon, 2 * n_steps)?;
    let w_vals: Vec<Vec<f64>> = ws.par_iter().map(|w| w.values()).collect();

    // y[m][p]
    let mut y: Vec<Vec<Complex64>> = if g_modal.is_deterministic() {
        (0..n_modes)
            .map(|m| vec![g_modal.eval(&ws[0], data.horizon, m); paths])
            .collect()
    } else {
        (0..n_modes)
            .map(|m| ws.par_iter().map(|w| g_modal.eval(w, data.horizon, m)).collect())
            .collect()
    };
    let f_at = |m: usize, p: usize, fine: usize| -> Complex64 {
        match &f_modes {
            SourceModes::Deterministic(v) => v[fine][m],
            SourceModes::Random(field) => field.eval(&ws[p], fine_times[fine], m),
        }
    };

    let stored = opts.store_paths.min(paths);
    let mut stored_u: Vec<Vec<Vec<Complex64>>> = vec![Vec::with_capacity(n_steps + 1); stored];
    let mut stored_v: Vec<Vec<Vec<Complex64>>> = vec![Vec::with_capacity(n_steps + 1); stored];
    for p in 0..stored {
        stored_u[p].push((0..n_modes).map(|m| y[m][p]).collect());
        stored_v[p].push(vec![Complex64::new(0.0, 0.0); n_modes]);
    }
    let coarse = lsq::coarse_nodes(n_steps, opts.coarse_times);
    let mut diag = RegressionDiagnostics {
        basis_size: vec![],
        condition: vec![],
        residual: vec![],
    };
    let mut initial_stderr = None;
    // Realized pathwise values: the same recursion without projection. The
    // projection keeps path means, so mean(z) is the u estimate, while the
    // spread of z includes the terminal noise that the fits smooth away.
    let mut z = y.clone();

    for i in (0..n_steps).rev() {
        let (f0, fm, f1) = (2 * i, 2 * i + 1, 2 * i + 2);
        let vars = lsq::brownian_variables(&w_vals, &times, i, &coarse, opts.coarse_times, 2);
        let basis = build_basis(&vars, paths, opts.basis_degree, opts.cond_limit)?;

        let d_full: Vec<f64> = modes.lam.iter().map(|l| (-l * (acum[f1] - acum[f0])).exp()).collect();
        let d_half: Vec<f64> = modes.lam.iter().map(|l| (-l * (acum[fm] - acum[f0])).exp()).collect();
        let dw: Vec<f64> = w_vals.iter().map(|w| w[f1] - w[f0]).collect();

        let target_v: Vec<Vec<Complex64>> = (0..n_modes)
            .into_par_iter()
            .map(|m| (0..paths).map(|p| y[m][p] * (d_full[m] * dw[p] / dt)).collect())
            .collect();
        let v_fit = if i == 0 {
            target_v.iter().map(|col| vec![crate::sum::mean_complex(col); paths]).collect()
        } else {
            from_matrix(&basis.project(&to_matrix(&target_v, paths)), n_modes)
        };

        let (s0, sm, s1) = ((data.sigma)(times[i]), (data.sigma)(fine_times[fm]), (data.sigma)(times[i + 1]));
        let target_u: Vec<Vec<Complex64>> = (0..n_modes)
            .into_par_iter()
            .map(|m| {
                let sig = dt / 6.0 * (s0 + 4.0 * d_half[m] * sm + d_full[m] * s1);
                (0..paths)
                    .map(|p| {
                        let src = (f_at(m, p, f0) + f_at(m, p, fm) * (4.0 * d_half[m]) + f_at(m, p, f1) * d_full[m])
                            * (dt / 6.0);
                        y[m][p] * d_full[m] + src + v_fit[m][p] * sig
                    })
                    .collect()
            })
            .collect();
        z = (0..n_modes)
            .into_par_iter()
            .map(|m| {
                let sig = dt / 6.0 * (s0 + 4.0 * d_half[m] * sm + d_full[m] * s1);
                (0..paths)
                    .map(|p| {
                        let src = (f_at(m, p, f0) + f_at(m, p, fm) * (4.0 * d_half[m]) + f_at(m, p, f1) * d_full[m])
                            * (dt / 6.0);
                        z[m][p] * d_full[m] + src + v_fit[m][p] * sig
                    })
                    .collect()
            })
            .collect();
        let u_fit = if i == 0 {
            target_u.iter().map(|col| vec![crate::sum::mean_complex(col); paths]).collect()
        } else {
            from_matrix(&basis.project(&to_matrix(&target_u, paths)), n_modes)
        };

        let mut num = 0.0;
        let mut den = 0.0;
        for m in 0..n_modes {
            for p in 0..paths {
                num += (target_u[m][p] - u_fit[m][p]).norm_sqr();
                den += target_u[m][p].norm_sqr();
            }
        }
        diag.basis_size.push(basis.matrix.ncols());
        diag.condition.push(basis.cond);
        diag.residual.push(if den > 0.0 { (num / den).sqrt() } else { 0.0 });

        if i == 0 {
            let (_, se_u) = pointwise_stats(&modes, &grid, &z, paths);
            let (_, se_v) = pointwise_stats(&modes, &grid, &target_v, paths);
            initial_stderr = Some((se_u, se_v));
        }
        for p in 0..stored {
            stored_u[p].push((0..n_modes).map(|m| u_fit[m][p]).collect());
            stored_v[p].push((0..n_modes).map(|m| v_fit[m][p]).collect());
        }
        y = u_fit;
    }
    diag.basis_size.reverse();
    diag.condition.reverse();
    diag.residual.reverse();

    let field = |hist: &Vec<Vec<Complex64>>| -> Vec<GridFunction> {
        hist.iter()
            .rev()
            .map(|m| GridFunction {
                grid,
                values: modes.to_values(&grid, m),
            })
            .collect()
    };
    let mut u: Vec<Vec<GridFunction>> = stored_u.iter().map(field).collect();
    let mut v: Vec<Vec<GridFunction>> = stored_v.iter().map(field).collect();
    // v at T is not defined by the scheme; carry the last computed value
    for vp in &mut v {
        let n = vp.len();
        vp[n - 1] = vp[n - 2].clone();
    }
    if stored == 0 {
        let u0 = modes.to_values(&grid, &y.iter().map(|c| c[0]).collect::<Vec<_>>());
        u.push(vec![GridFunction { grid, values: u0 }]);
    }
    Ok(SolutionField {
        times,
        u,
        v,
        initial_stderr,
        diagnostics: Some(diag),
        meta: SolutionMeta {
            solver: "regression".into(),
            grid,
            steps: n_steps,
            paths,
            seed: Some(opts.seed),
            stream_id: Some(opts.stream_id),
        },
    })
}

pub struct RegressionSolver;

impl BspdeSolver for RegressionSolver {
    fn name(&self) -> &'static str {
        "regression"
    }

    fn solve(&self, data: &BSPDEData, opts: &SolveOptions) -> Result<SolutionField> {
        solve_bspde_regression(data, opts)
    }
}
