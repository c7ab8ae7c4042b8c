//! Fractional Zakai filtering with partially observed control: the
//! unnormalized filter, its adjoint BSPDE, the Hamiltonian and a
//! brute-force check of the maximum principle.

mod adjoint;
mod control;
mod filter;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::bspde::{SpatialFn, TimeFn};
use crate::error::{Error, Result};
use crate::fraclap::FracOrder;
use crate::grid::{apply_real_multiplier, spectral_derivative, Grid1D, GridFunction};
use crate::levy::sde::SpaceTimeFn;

pub use adjoint::{solve_adjoint, AdjointOptions, AdjointState};
pub use control::{
    brute_force_optimal_control, verify_maximum_principle, BruteForceResult, HamiltonianMargin,
    MaximumPrincipleOptions, MaximumPrincipleReport, PolicyCost,
};
pub use filter::{cost_functional, observation_ensemble, solve_zakai, ZakaiState};

/// `(t, x, v) -> value`.
pub type ControlFn = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

pub fn control_field(f: impl Fn(f64, f64, f64) -> f64 + Send + Sync + 'static) -> ControlFn {
    Arc::new(f)
}

/// Which dual operator [`apply_l_star`] implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DualForm {
    /// `-a(-Δ)^{α/2}φ + k Dφ`, the L² adjoint of the divergence form.
    #[default]
    Adjoint,
    /// `-a(-Δ)^{α/2}φ + (Dk) φ`, kept for comparison.
    Printed,
}

#[derive(Clone)]
pub struct ControlProblem {
    pub alpha: f64,
    pub horizon: f64,
    pub grid: Grid1D,
    /// Drift `k(t, x, v)`.
    pub k: ControlFn,
    /// Jump scale; `a(t) = |μ(t)|^α`.
    pub mu: TimeFn,
    /// Observation function `h(t, x)`.
    pub h: SpaceTimeFn,
    /// Running cost `f(t, x, v)`.
    pub f: ControlFn,
    /// Terminal cost.
    pub g: SpatialFn,
    /// Finite control set.
    pub controls: Vec<f64>,
    pub p0: GridFunction,
    pub steps: usize,
    pub dual: DualForm,
    /// `BlowUp` is raised when `sup |p|` exceeds this.
    pub blowup_guard: f64,
}

impl ControlProblem {
    /// `k = h = f = g = 0`, `μ = 1`.
    pub fn new(alpha: f64, horizon: f64, p0: GridFunction, controls: Vec<f64>) -> Self {
        ControlProblem {
            alpha,
            horizon,
            grid: p0.grid,
            k: control_field(|_, _, _| 0.0),
            mu: Arc::new(|_| 1.0),
            h: Arc::new(|_, _| 0.0),
            f: control_field(|_, _, _| 0.0),
            g: Arc::new(|_| 0.0),
            controls,
            p0,
            steps: 40,
            dual: DualForm::Adjoint,
            blowup_guard: 1e8,
        }
    }

    pub fn a(&self, t: f64) -> f64 {
        (self.mu)(t).abs().powf(self.alpha)
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        crate::bspde::time_nodes(self.horizon, self.steps)
    }

    pub fn validate(&self) -> Result<()> {
        FracOrder::new(self.alpha)?;
        if self.controls.is_empty() {
            return Err(Error::OutOfRange {
                name: "controls",
                value: 0.0,
                expected: "a nonempty control set",
            });
        }
        if self.steps == 0 || !(self.horizon > 0.0) {
            return Err(Error::OutOfRange {
                name: "steps",
                value: self.steps as f64,
                expected: ">= 1 with a positive horizon",
            });
        }
        if let Some(t) = self.times().into_iter().find(|&t| !(self.a(t) > 0.0)) {
            return Err(Error::PositivityViolation(format!("a({t}) = |mu|^alpha vanishes")));
        }
        if let Some(v) = self.p0.values.iter().copied().find(|v| *v < 0.0) {
            return Err(Error::PositivityViolation(format!("initial density reaches {v}")));
        }
        let mass = self.p0.integral();
        if (mass - 1.0).abs() > 1e-6 {
            return Err(Error::OutOfRange {
                name: "initial mass",
                value: mass,
                expected: "1 within 1e-6",
            });
        }
        Ok(())
    }

    fn sample(&self, f: &ControlFn, t: f64, v: f64) -> GridFunction {
        GridFunction::from_fn(self.grid, |x| f(t, x, v))
    }

    pub fn drift(&self, t: f64, v: f64) -> GridFunction {
        self.sample(&self.k, t, v)
    }

    pub fn running_cost(&self, t: f64, v: f64) -> GridFunction {
        self.sample(&self.f, t, v)
    }

    pub fn observation(&self, t: f64) -> GridFunction {
        GridFunction::from_fn(self.grid, |x| (self.h)(t, x))
    }

    pub fn terminal_cost(&self) -> GridFunction {
        GridFunction::from_fn(self.grid, |x| (self.g)(x))
    }

    fn check_control(&self, v: f64) -> Result<()> {
        if self.controls.contains(&v) {
            Ok(())
        } else {
            Err(Error::OutOfRange {
                name: "control",
                value: v,
                expected: "a member of the control set",
            })
        }
    }
}

/// Open-loop piecewise-constant policy: `values[j]` on
/// `[breakpoints[j], breakpoints[j+1])`, the last interval closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlPolicy {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl ControlPolicy {
    pub fn constant(horizon: f64, v: f64) -> Self {
        ControlPolicy {
            breakpoints: vec![0.0, horizon],
            values: vec![v],
        }
    }

    /// `values.len()` equal intervals over `[0, horizon]`.
    pub fn uniform(horizon: f64, values: Vec<f64>) -> Self {
        let m = values.len();
        let breakpoints = (0..=m)
            .map(|j| if j == m { horizon } else { horizon * j as f64 / m as f64 })
            .collect();
        ControlPolicy { breakpoints, values }
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let j = self.breakpoints[1..self.breakpoints.len() - 1]
            .iter()
            .take_while(|&&b| b <= t)
            .count();
        self.values[j]
    }

    pub fn validate(&self, problem: &ControlProblem) -> Result<()> {
        if self.breakpoints.len() != self.values.len() + 1 || self.values.is_empty() {
            return Err(Error::GridMismatch(format!(
                "{} breakpoints for {} values",
                self.breakpoints.len(),
                self.values.len()
            )));
        }
        if self.breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::OrderViolation {
                s: self.breakpoints[0],
                t: self.breakpoints[1],
            });
        }
        self.values.iter().try_for_each(|&v| problem.check_control(v))
    }

    /// Control used on solver step `i`, i.e. on `[t_i, t_{i+1})`.
    pub fn step_value(&self, problem: &ControlProblem, i: usize) -> f64 {
        self.value_at(problem.horizon * i as f64 / problem.steps as f64)
    }
}

fn frac_part(phi: &GridFunction, alpha: f64, a: f64) -> Vec<f64> {
    let m: Vec<f64> = phi.grid.xis().iter().map(|xi| -a * xi.abs().powf(alpha)).collect();
    apply_real_multiplier(&phi.values, &m)
}

/// `L φ = -a(t)(-Δ)^{α/2}φ - D(k(t,·,v) φ)`.
pub fn apply_l(problem: &ControlProblem, phi: &GridFunction, t: f64, v: f64) -> Result<GridFunction> {
    phi.grid.check_same(&problem.grid)?;
    problem.check_control(v)?;
    let k = problem.drift(t, v);
    let flux = GridFunction {
        grid: phi.grid,
        values: k.values.iter().zip(&phi.values).map(|(a, b)| a * b).collect(),
    };
    let d = spectral_derivative(&flux, 1);
    let frac = frac_part(phi, problem.alpha, problem.a(t));
    Ok(GridFunction {
        grid: phi.grid,
        values: frac.iter().zip(&d.values).map(|(f, d)| f - d).collect(),
    })
}

/// Dual operator, see [`DualForm`].
pub fn apply_l_star(problem: &ControlProblem, phi: &GridFunction, t: f64, v: f64) -> Result<GridFunction> {
    phi.grid.check_same(&problem.grid)?;
    problem.check_control(v)?;
    let k = problem.drift(t, v);
    let frac = frac_part(phi, problem.alpha, problem.a(t));
    let transport: Vec<f64> = match problem.dual {
        DualForm::Adjoint => {
            let d = spectral_derivative(phi, 1);
            k.values.iter().zip(&d.values).map(|(a, b)| a * b).collect()
        }
        DualForm::Printed => {
            let dk = spectral_derivative(&k, 1);
            dk.values.iter().zip(&phi.values).map(|(a, b)| a * b).collect()
        }
    };
    Ok(GridFunction {
        grid: phi.grid,
        values: frac.iter().zip(&transport).map(|(f, d)| f + d).collect(),
    })
}

/// `H(t, v, p, q) = <f(t,·,v), p> - <D(k(t,·,v) p), q>`.
pub fn hamiltonian(problem: &ControlProblem, t: f64, v: f64, p: &GridFunction, q: &GridFunction) -> Result<f64> {
    p.grid.check_same(&problem.grid)?;
    q.grid.check_same(&problem.grid)?;
    problem.check_control(v)?;
    let f = problem.running_cost(t, v);
    let k = problem.drift(t, v);
    let flux = GridFunction {
        grid: p.grid,
        values: k.values.iter().zip(&p.values).map(|(a, b)| a * b).collect(),
    };
    Ok(f.inner(p) - spectral_derivative(&flux, 1).inner(q))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn problem() -> ControlProblem {
        let grid = Grid1D::new(-4.0 * std::f64::consts::PI, 4.0 * std::f64::consts::PI, 128).unwrap();
        let p0 = GridFunction::from_fn(grid, |x| (-x * x / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt());
        ControlProblem::new(1.5, 1.0, p0, vec![-1.0, 0.0, 1.0])
    }

    fn smooth(grid: Grid1D, s: f64) -> GridFunction {
        GridFunction::from_fn(grid, |x| (-(x - s).powi(2)).exp() + 0.3 * (x + s).cos())
    }

    #[test]
    fn self_adjoint_without_drift() {
        let p = problem();
        let (phi, psi) = (smooth(p.grid, 0.3), smooth(p.grid, -1.1));
        let lhs = apply_l(&p, &phi, 0.2, 0.0).unwrap().inner(&psi);
        let rhs = phi.inner(&apply_l_star(&p, &psi, 0.2, 0.0).unwrap());
        assert!((lhs - rhs).abs() < 1e-10 * phi.l2_norm() * psi.l2_norm());
    }

    #[test]
    fn constant_flux_has_no_divergence() {
        let mut p = problem();
        p.k = control_field(|_, _, v| 2.0 + v);
        let c = GridFunction::constant(p.grid, 3.0);
        assert!(apply_l(&p, &c, 0.0, 1.0).unwrap().sup_norm() < 1e-12);
    }

    #[test]
    fn duality_with_sine_drift() {
        let mut p = problem();
        p.k = control_field(|_, x, v| x.sin() + 0.5 * v);
        let (phi, psi) = (smooth(p.grid, 0.7), smooth(p.grid, 2.0));
        for &v in &[-1.0, 1.0] {
            let lhs = apply_l(&p, &phi, 0.5, v).unwrap().inner(&psi);
            let rhs = phi.inner(&apply_l_star(&p, &psi, 0.5, v).unwrap());
            assert!((lhs - rhs).abs() < 1e-8 * phi.l2_norm() * psi.l2_norm());
        }
        // the printed form is not the adjoint
        p.dual = DualForm::Printed;
        let lhs = apply_l(&p, &phi, 0.5, 1.0).unwrap().inner(&psi);
        let rhs = phi.inner(&apply_l_star(&p, &psi, 0.5, 1.0).unwrap());
        assert!((lhs - rhs).abs() > 1e-3);
    }

    #[test]
    fn hamiltonian_identities() {
        let mut p = problem();
        p.k = control_field(|_, x, _| x.sin());
        p.f = control_field(|_, x, v| v * v * (-x * x).exp());
        let (pp, q) = (smooth(p.grid, 0.1), smooth(p.grid, 1.0));
        let h1 = hamiltonian(&p, 0.0, 1.0, &pp, &q).unwrap();
        let h0 = hamiltonian(&p, 0.0, 0.0, &pp, &q).unwrap();
        let df = p.running_cost(0.0, 1.0).inner(&pp) - p.running_cost(0.0, 0.0).inner(&pp);
        assert!((h1 - h0 - df).abs() < 1e-13);
        // <D(kp), q> = -<kp, Dq>
        let k = p.drift(0.0, 0.0);
        let kp = GridFunction { grid: p.grid, values: k.values.iter().zip(&pp.values).map(|(a, b)| a * b).collect() };
        let lhs = spectral_derivative(&kp, 1).inner(&q);
        let rhs = -kp.inner(&spectral_derivative(&q, 1));
        assert!((lhs - rhs).abs() < 1e-8);
        let zero = GridFunction::zeros(p.grid);
        assert_eq!(hamiltonian(&p, 0.0, 1.0, &zero, &q).unwrap(), 0.0);
    }

    #[test]
    fn policy_lookup_and_validation() {
        let p = problem();
        let pol = ControlPolicy::uniform(1.0, vec![-1.0, 0.0, 1.0]);
        assert_eq!(pol.value_at(0.0), -1.0);
        assert_eq!(pol.value_at(0.34), 0.0);
        assert_eq!(pol.value_at(1.0), 1.0);
        assert!(pol.validate(&p).is_ok());
        assert!(ControlPolicy::uniform(1.0, vec![0.5]).validate(&p).is_err());
        assert!(p.validate().is_ok());
    }
}
