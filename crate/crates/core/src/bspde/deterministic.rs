//! Closed-form solvers for deterministic data with time-only `a` and
//! `b = c = 0`.

use num_complex::Complex64;
use rayon::prelude::*;

use super::{cumulative_a, simpson_weights, BSPDEData, BspdeSolver, SolutionField, SolveOptions};
use crate::error::Result;
use crate::grid::{from_modes, to_modes, GridFunction};
use crate::kernel::{eval_a, semigroup_apply_a};

struct Prepared {
    times: Vec<f64>,
    acum: Vec<f64>,
    g: GridFunction,
    /// `None` when `f` vanishes on every node.
    f: Option<Vec<GridFunction>>,
    /// `f` and `∫_0 a` at the midpoint of the last interval, which is
    /// integrated by Simpson's rule on its own.
    f_mid: GridFunction,
    a_mid: f64,
    dt: f64,
}

impl Prepared {
    /// Quadrature nodes for `∫_{t_i}^T`: `(weight, accumulated a, node)` where
    /// `node` is `Some(j)` for a solver node and `None` for the last midpoint.
    fn nodes(&self, i: usize) -> Vec<(f64, f64, Option<usize>)> {
        let last = self.times.len() - 1;
        if i + 1 == last {
            let h = self.dt / 6.0;
            return vec![
                (h, self.acum[i], Some(i)),
                (4.0 * h, self.a_mid, None),
                (h, self.acum[last], Some(last)),
            ];
        }
        simpson_weights(last - i, self.dt)
            .into_iter()
            .enumerate()
            .map(|(m, w)| (w, self.acum[i + m], Some(i + m)))
            .collect()
    }
}

fn prepare(data: &BSPDEData, opts: &SolveOptions) -> Result<Prepared> {
    data.validate()?;
    let a = data.time_only_a()?;
    let times = opts.times(data.horizon);
    data.require_no_transport(&times)?;
    let acum = cumulative_a(a, &times)?;
    let g = data.terminal_field()?;
    let f: Vec<GridFunction> = times.iter().map(|&t| data.source_field(t)).collect::<Result<_>>()?;
    let f = if f.iter().all(|v| v.values.iter().all(|&x| x == 0.0)) {
        None
    } else {
        Some(f)
    };
    let n = times.len();
    let t_mid = 0.5 * (times[n - 2] + times[n - 1]);
    let a_mid = acum[n - 2] + eval_a(a, times[n - 2], t_mid)?;
    Ok(Prepared {
        f_mid: data.source_field(t_mid)?,
        a_mid,
        dt: data.horizon / opts.steps as f64,
        times,
        acum,
        g,
        f,
    })
}

/// Per-mode closed form
/// `û(t) = e^{-A_{T,t}|ξ|^α} ĝ + ∫_t^T e^{-A_{s,t}|ξ|^α} f̂(s) ds`, time
/// integral by composite Simpson over the solver nodes.
pub fn solve_fourier_deterministic(data: &BSPDEData, opts: &SolveOptions) -> Result<SolutionField> {
    let p = prepare(data, opts)?;
    let grid = data.grid;
    let lam: Vec<f64> = grid.xis().iter().map(|xi| xi.abs().powf(data.alpha)).collect();
    let g_hat = to_modes(&p.g.values);
    let f_hat: Option<Vec<Vec<Complex64>>> = p.f.as_ref().map(|f| f.iter().map(|v| to_modes(&v.values)).collect());
    let f_mid_hat = to_modes(&p.f_mid.values);
    let n_t = p.times.len();
    let u: Vec<GridFunction> = (0..n_t)
        .into_par_iter()
        .map(|i| {
            let a_end = p.acum[n_t - 1] - p.acum[i];
            let mut modes: Vec<Complex64> = g_hat
                .iter()
                .zip(&lam)
                .map(|(c, l)| c * (-l * a_end).exp())
                .collect();
            if let Some(f_hat) = &f_hat {
                for (w, a_s, node) in p.nodes(i) {
                    let fs = node.map_or(&f_mid_hat, |j| &f_hat[j]);
                    let a_js = a_s - p.acum[i];
                    for (k, z) in modes.iter_mut().enumerate() {
                        *z += fs[k] * (w * (-lam[k] * a_js).exp());
                    }
                }
            }
            GridFunction {
                grid,
                values: from_modes(modes),
            }
        })
        .collect();
    Ok(SolutionField::deterministic("fourier", grid, p.times, u))
}

/// Semigroup form `u(t) = R_t^T g + ∫_t^T R_t^τ f(τ) dτ`, each term applied
/// to the physical field and summed in physical space.
pub fn solve_kernel_deterministic(data: &BSPDEData, opts: &SolveOptions) -> Result<SolutionField> {
    let p = prepare(data, opts)?;
    let n_t = p.times.len();
    let u: Vec<GridFunction> = (0..n_t)
        .into_par_iter()
        .map(|i| -> Result<GridFunction> {
            let mut u = semigroup_apply_a(&p.g, data.alpha, p.acum[n_t - 1] - p.acum[i])?;
            if let Some(f) = &p.f {
                for (w, a_s, node) in p.nodes(i) {
                    let fs = node.map_or(&p.f_mid, |j| &f[j]);
                    let r = semigroup_apply_a(fs, data.alpha, a_s - p.acum[i])?;
                    u = u.combine(1.0, &r, w);
                }
            }
            Ok(u)
        })
        .collect::<Result<_>>()?;
    Ok(SolutionField::deterministic("kernel", data.grid, p.times, u))
}

pub struct FourierSolver;

impl BspdeSolver for FourierSolver {
    fn name(&self) -> &'static str {
        "fourier"
    }

    fn solve(&self, data: &BSPDEData, opts: &SolveOptions) -> Result<SolutionField> {
        solve_fourier_deterministic(data, opts)
    }
}

pub struct KernelSolver;

impl BspdeSolver for KernelSolver {
    fn name(&self) -> &'static str {
        "kernel"
    }

    fn solve(&self, data: &BSPDEData, opts: &SolveOptions) -> Result<SolutionField> {
        solve_kernel_deterministic(data, opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspde::{spatial, Source, Terminal};
    use crate::error::Error;
    use crate::grid::Grid1D;
    use crate::kernel::CoefficientA;
    use crate::levy::sde::space_time;
    use crate::bspde::Diffusion;
    use std::f64::consts::PI;

    fn trig_grid() -> Grid1D {
        Grid1D::new(-4.0 * PI, 4.0 * PI, 128).unwrap()
    }

    #[test]
    fn single_mode_decay() {
        let mut d = BSPDEData::new(1.5, 1.0, trig_grid(), Terminal::Field(spatial(|x| (2.0 * x).sin())));
        d.a = Diffusion::Time(CoefficientA::function(|r| 1.0 + 0.5 * r, 1.0, 1.5));
        let sol = solve_fourier_deterministic(&d, &SolveOptions::default()).unwrap();
        for (i, &t) in sol.times.iter().enumerate() {
            let a_tt = (1.0 - t) + 0.25 * (1.0 - t * t);
            let decay = (-a_tt * 2f64.powf(1.5)).exp();
            let exact = GridFunction::from_fn(d.grid, |x| decay * (2.0 * x).sin());
            assert!(sol.u[0][i].max_abs_diff(&exact) < 1e-12, "t = {t}");
        }
        assert!(sol.terminal(0).max_abs_diff(&d.terminal_field().unwrap()) < 1e-14);
        assert!(sol.v[0].iter().all(|v| v.sup_norm() == 0.0));
    }

    #[test]
    fn constant_source() {
        let mut d = BSPDEData::new(1.3, 2.0, trig_grid(), Terminal::Field(spatial(|_| 0.0)));
        d.f = Source::Field(space_time(|_, _| 0.7));
        let opts = SolveOptions {
            steps: 7,
            ..Default::default()
        };
        for sol in [
            solve_fourier_deterministic(&d, &opts).unwrap(),
            solve_kernel_deterministic(&d, &opts).unwrap(),
        ] {
            for (i, &t) in sol.times.iter().enumerate() {
                let exact = 0.7 * (2.0 - t);
                assert!(sol.u[0][i].values.iter().all(|u| (u - exact).abs() < 1e-13));
            }
        }
    }

    #[test]
    fn kernel_and_fourier_agree() {
        let mut d = BSPDEData::new(1.7, 1.0, Grid1D::centered(16.0, 256).unwrap(), Terminal::Field(spatial(|x| (-x * x).exp())));
        d.f = Source::Field(space_time(|t, x| (1.0 + t) * (x - 1.0).cos() * (-0.1 * x * x).exp()));
        d.a = Diffusion::Time(CoefficientA::function(|r| 1.0 + 0.3 * (3.0 * r).sin(), 0.7, 1.3));
        let opts = SolveOptions::default();
        let a = solve_fourier_deterministic(&d, &opts).unwrap();
        let b = solve_kernel_deterministic(&d, &opts).unwrap();
        for i in 0..a.times.len() {
            assert!(a.u[0][i].max_abs_diff(&b.u[0][i]) < 1e-12);
        }
    }

    #[test]
    fn bump_spreads_with_kernel_width() {
        let grid = Grid1D::centered(32.0, 1024).unwrap();
        let d = BSPDEData::new(1.5, 1.0, grid, Terminal::Field(spatial(|x| (-x * x / 0.01).exp())));
        let sol = solve_kernel_deterministic(&d, &SolveOptions { steps: 4, ..Default::default() }).unwrap();
        // half-height width of G_A scales like A^{1/α}
        let width = |u: &GridFunction| {
            let peak = u.sup_norm();
            u.values.iter().filter(|&&v| v > 0.5 * peak).count() as f64 * grid.dx()
        };
        let w1 = width(&sol.u[0][0]);
        let w4 = width(&sol.u[0][3]);
        let ratio = w1 / w4;
        assert!((ratio - 4f64.powf(1.0 / 1.5)).abs() < 0.15, "{ratio}");
    }

    #[test]
    fn rejects_transport_and_random_data() {
        let mut d = BSPDEData::new(1.5, 1.0, trig_grid(), Terminal::Field(spatial(f64::sin)));
        d.b = space_time(|_, _| 1.0);
        assert!(matches!(
            solve_fourier_deterministic(&d, &SolveOptions::default()),
            Err(Error::UnsupportedSpec(_))
        ));
    }
}
