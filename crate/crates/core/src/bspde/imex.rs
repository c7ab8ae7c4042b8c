//! Method of lines for the deterministic variable-coefficient equation.
//!
//! Spatial means `ā, b̄, c̄` are frozen per step and integrated exactly in
//! Fourier space; the residual `-(a-ā)(-Δ)^{α/2}u + (b-b̄)u_x + (c-c̄)u` is
//! explicit (exponential Euler). The source is integrated per step with
//! the exact propagator and Simpson's rule.

use num_complex::Complex64;

use super::{nyquist_safe, BSPDEData, BspdeSolver, SolutionField, SolveOptions};
use crate::error::{Error, Result};
use crate::grid::{from_modes, to_modes, Grid1D, GridFunction};
use crate::sum;

/// Coefficients sampled on the grid at one time, with their spatial means.
pub(crate) struct Coeffs {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    a_mean: f64,
    b_mean: f64,
    c_mean: f64,
}

impl Coeffs {
    pub(crate) fn new(t: f64, a: Vec<f64>, b: Vec<f64>, c: Vec<f64>) -> Result<Self> {
        if let Some(m) = a.iter().copied().find(|v| !(*v > 0.0)) {
            return Err(Error::PositivityViolation(format!("a({t}, .) reaches {m}")));
        }
        Ok(Coeffs {
            a_mean: sum::mean(&a),
            b_mean: sum::mean(&b),
            c_mean: sum::mean(&c),
            a,
            b,
            c,
        })
    }
}

fn sample(data: &BSPDEData, t: f64) -> Result<Coeffs> {
    let xs = data.grid.xs();
    Coeffs::new(
        t,
        xs.iter().map(|&x| data.a.at(t, x)).collect(),
        xs.iter().map(|&x| (data.b)(t, x)).collect(),
        xs.iter().map(|&x| (data.c)(t, x)).collect(),
    )
}

fn max_dev(v: &[f64], m: f64) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max((x - m).abs()))
}

/// `(e^z - 1)/z`.
fn phi1(z: Complex64) -> Complex64 {
    if z.norm() < 1e-5 {
        1.0 + z * (0.5 + z / 6.0)
    } else {
        (z.exp() - 1.0) / z
    }
}

/// `max(max|a-ā|/ā, Δt (|b-b̄|_∞ π/dx + |c-c̄|_∞))` over the samples.
pub(crate) fn stability_bound<'a>(grid: &Grid1D, dt: f64, samples: impl IntoIterator<Item = &'a Coeffs>) -> f64 {
    let xi_max = std::f64::consts::PI / grid.dx();
    samples.into_iter().fold(0.0, |bound: f64, k| {
        let diffusion = max_dev(&k.a, k.a_mean) / k.a_mean;
        let explicit = dt * (max_dev(&k.b, k.b_mean) * xi_max + max_dev(&k.c, k.c_mean));
        bound.max(diffusion).max(explicit)
    })
}

/// One backward step of `du/dτ = -a(-Δ)^{α/2}u + b u_x + c u + f + extra`
/// from `t1` to `t0 = t1 - dt`. Coefficients are sampled at `t0`, the
/// midpoint and `t1`; `f` is given as modes at the same three times and
/// `extra` (explicit, frozen over the step) as values.
pub(crate) struct BackwardStep<'a> {
    pub grid: &'a Grid1D,
    pub alpha: f64,
    pub dt: f64,
    pub k0: &'a Coeffs,
    pub mid: &'a Coeffs,
    pub k1: &'a Coeffs,
}

impl BackwardStep<'_> {
    pub(crate) fn apply(&self, u: &[f64], f: [&[Complex64]; 3], extra: Option<&[f64]>) -> Vec<f64> {
        let (grid, dt) = (self.grid, self.dt);
        let (k0, mid, k1) = (self.k0, self.mid, self.k1);
        let xis = grid.xis();
        let lam: Vec<f64> = xis.iter().map(|xi| xi.abs().powf(self.alpha)).collect();
        // Simpson integrals of the frozen means over the step and its first half
        let full = |f: fn(&Coeffs) -> f64| dt / 6.0 * (f(k0) + 4.0 * f(mid) + f(k1));
        let half = |f: fn(&Coeffs) -> f64| dt / 24.0 * (5.0 * f(k0) + 8.0 * f(mid) - f(k1));
        let (ia, ib, ic) = (full(|k| k.a_mean), full(|k| k.b_mean), full(|k| k.c_mean));
        let (ha, hb, hc) = (half(|k| k.a_mean), half(|k| k.b_mean), half(|k| k.c_mean));
        let expo = |j: usize, ia: f64, ib: f64, ic: f64| Complex64::new(-lam[j] * ia + ic, xis[j] * ib);

        // explicit residual at the known level t1
        let u_hat = to_modes(u);
        let frac = from_modes(u_hat.iter().zip(&lam).map(|(z, l)| z * l).collect());
        let ux = from_modes(
            u_hat
                .iter()
                .enumerate()
                .map(|(j, z)| z * nyquist_safe(grid, j, Complex64::new(0.0, xis[j])))
                .collect(),
        );
        let resid: Vec<f64> = (0..grid.n)
            .map(|j| {
                let r = -(k1.a[j] - k1.a_mean) * frac[j] + (k1.b[j] - k1.b_mean) * ux[j] + (k1.c[j] - k1.c_mean) * u[j];
                r + extra.map_or(0.0, |e| e[j])
            })
            .collect();
        let r_hat = to_modes(&resid);
        let [f0, fm, f1] = f;
        let next: Vec<Complex64> = (0..grid.n)
            .map(|j| {
                let e_full = expo(j, ia, ib, ic);
                let prop = nyquist_safe(grid, j, e_full.exp());
                let p1 = nyquist_safe(grid, j, phi1(e_full));
                let ph = nyquist_safe(grid, j, expo(j, ha, hb, hc).exp());
                let source = dt / 6.0 * (f0[j] + 4.0 * ph * fm[j] + prop * f1[j]);
                prop * u_hat[j] + p1 * dt * r_hat[j] + source
            })
            .collect();
        from_modes(next)
    }
}

pub fn solve_pde_variable_coeff(data: &BSPDEData, opts: &SolveOptions) -> Result<SolutionField> {
    data.validate()?;
    if !data.is_deterministic() {
        return Err(Error::UnsupportedSpec("the method-of-lines solver needs deterministic data".into()));
    }
    let grid = data.grid;
    let times = opts.times(data.horizon);
    let dt = data.horizon / opts.steps as f64;

    let nodes: Vec<Coeffs> = times.iter().map(|&t| sample(data, t)).collect::<Result<_>>()?;
    let bound = stability_bound(&grid, dt, &nodes);
    if bound > opts.stability_limit {
        return Err(Error::StabilityError {
            bound,
            limit: opts.stability_limit,
        });
    }

    let mut u = data.terminal_field()?;
    let mut out = vec![u.clone()];
    for i in (0..opts.steps).rev() {
        let (t0, t1) = (times[i], times[i + 1]);
        let tm = 0.5 * (t0 + t1);
        let mid = sample(data, tm)?;
        let step = BackwardStep {
            grid: &grid,
            alpha: data.alpha,
            dt,
            k0: &nodes[i],
            mid: &mid,
            k1: &nodes[i + 1],
        };
        let f0 = to_modes(&data.source_field(t0)?.values);
        let fm = to_modes(&data.source_field(tm)?.values);
        let f1 = to_modes(&data.source_field(t1)?.values);
        u = GridFunction {
            grid,
            values: step.apply(&u.values, [&f0, &fm, &f1], None),
        };
        if !u.values.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp {
                sup: f64::INFINITY,
                guard: f64::MAX,
            });
        }
        out.push(u.clone());
    }
    out.reverse();
    Ok(SolutionField::deterministic("imex", grid, times, out))
}

pub struct ImexSolver;

impl BspdeSolver for ImexSolver {
    fn name(&self) -> &'static str {
        "imex"
    }

    fn solve(&self, data: &BSPDEData, opts: &SolveOptions) -> Result<SolutionField> {
        solve_pde_variable_coeff(data, opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspde::{solve_kernel_deterministic, spatial, Diffusion, Source, Terminal};
    use crate::grid::Grid1D;
    use crate::kernel::CoefficientA;
    use crate::levy::sde::space_time;

    fn base() -> BSPDEData {
        let grid = Grid1D::centered(16.0, 256).unwrap();
        let mut d = BSPDEData::new(1.5, 1.0, grid, Terminal::Field(spatial(|x| (-x * x).exp() + 0.3 * (-(x - 2.0).powi(2)).exp())));
        d.a = Diffusion::Time(CoefficientA::function(|r| 1.0 + 0.5 * r * r, 1.0, 1.5));
        d
    }

    #[test]
    fn matches_kernel_solver_for_time_only_a() {
        let mut d = base();
        let opts = SolveOptions { steps: 20, ..Default::default() };
        let a = solve_pde_variable_coeff(&d, &opts).unwrap();
        let b = solve_kernel_deterministic(&d, &opts).unwrap();
        for i in 0..a.times.len() {
            assert!(a.u[0][i].max_abs_diff(&b.u[0][i]) < 1e-6);
        }
        d.f = Source::Field(space_time(|t, x| t * (-0.5 * x * x).exp()));
        let opts = SolveOptions { steps: 40, ..Default::default() };
        let a = solve_pde_variable_coeff(&d, &opts).unwrap();
        let b = solve_kernel_deterministic(&d, &opts).unwrap();
        assert!(a.initial().max_abs_diff(b.initial()) < 1e-6, "{}", a.initial().max_abs_diff(b.initial()));
    }

    #[test]
    fn constant_reaction_scales_exponentially() {
        let mut d = base();
        let opts = SolveOptions { steps: 20, ..Default::default() };
        let plain = solve_pde_variable_coeff(&d, &opts).unwrap();
        d.c = space_time(|_, _| 0.8);
        let scaled = solve_pde_variable_coeff(&d, &opts).unwrap();
        for (i, &t) in plain.times.iter().enumerate() {
            let exact = plain.u[0][i].scaled((0.8 * (1.0 - t)).exp());
            assert!(scaled.u[0][i].max_abs_diff(&exact) < 1e-6);
        }
    }

    #[test]
    fn constant_drift_translates() {
        let mut d = base();
        d.b = space_time(|_, _| 1.0);
        let opts = SolveOptions { steps: 20, ..Default::default() };
        let sol = solve_pde_variable_coeff(&d, &opts).unwrap();
        let mut d0 = base();
        d0.b = space_time(|_, _| 0.0);
        let plain = solve_pde_variable_coeff(&d0, &opts).unwrap();
        // u(t, x) = u_{b=0}(t, x + (T - t))
        let shift = (1.0 / d.grid.dx()).round() as i64;
        assert!(sol.initial().max_abs_diff(&plain.initial().shifted(-shift)) < 1e-8);
    }

    #[test]
    fn first_order_in_time() {
        let mut d = base();
        d.a = Diffusion::SpaceTime {
            field: space_time(|t, x| 1.0 + 0.3 * x.sin() * (1.0 + t)),
            lower: 0.4,
            upper: 1.6,
        };
        d.b = space_time(|_, x| 0.5 * (0.5 * x).cos());
        d.c = space_time(|t, x| -0.2 * t * (-x * x).exp());
        let run = |n| solve_pde_variable_coeff(&d, &SolveOptions { steps: n, ..Default::default() }).unwrap();
        let (u1, u2, u4) = (run(50), run(100), run(200));
        let e1 = u1.initial().max_abs_diff(u2.initial());
        let e2 = u2.initial().max_abs_diff(u4.initial());
        let order = (e1 / e2).log2();
        assert!((order - 1.0).abs() < 0.2, "order {order}");
    }

    #[test]
    fn stability_guard() {
        let mut d = base();
        d.a = Diffusion::SpaceTime {
            field: space_time(|_, x| 1.0 + 0.95 * x.sin()),
            lower: 0.05,
            upper: 1.95,
        };
        assert!(matches!(
            solve_pde_variable_coeff(&d, &SolveOptions::default()),
            Err(Error::StabilityError { .. })
        ));
        d.a = Diffusion::Time(CoefficientA::constant(1.0));
        d.b = space_time(|_, x| 2.0 * x.sin());
        assert!(matches!(
            solve_pde_variable_coeff(&d, &SolveOptions { steps: 4, ..Default::default() }),
            Err(Error::StabilityError { .. })
        ));
    }
}
