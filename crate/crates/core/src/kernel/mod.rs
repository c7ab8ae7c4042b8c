//! Fractional heat kernel `G_{t,s}`, its derivatives, and the semigroup
//! `R_s^t φ = G_{t,s} * φ`.
//!
//! `G(x) = (1/π) ∫_0^∞ cos(ξx) e^{-ξ^α} dξ` and
//! `G_{t,s}(x) = A^{-1/α} G(A^{-1/α} x)` with `A = ∫_s^t a(r) dr`.

pub mod bounds;
pub mod quadrature;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraclap::FracOrder;
use crate::grid::{apply_real_multiplier, Grid1D, GridFunction};
use quadrature::KernelTable;

pub use bounds::{verify_kernel_bounds, BoundCheck, BoundConfig, BoundReport};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Profile {
    Constant(f64),
    /// Piecewise-linear interpolation of `(time, value)` samples.
    Tabulated { times: Vec<f64>, values: Vec<f64> },
    Function(ScalarFn),
}

/// Time-dependent diffusivity `a(t)` with bounds `lower <= a <= upper`.
#[derive(Clone)]
pub struct CoefficientA {
    profile: Profile,
    pub lower: f64,
    pub upper: f64,
}

impl fmt::Debug for CoefficientA {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.profile {
            Profile::Constant(c) => format!("Constant({c})"),
            Profile::Tabulated { times, .. } => format!("Tabulated({} samples)", times.len()),
            Profile::Function(_) => "Function".to_string(),
        };
        f.debug_struct("CoefficientA")
            .field("profile", &kind)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish()
    }
}

impl CoefficientA {
    pub fn constant(c: f64) -> Self {
        CoefficientA {
            profile: Profile::Constant(c),
            lower: c,
            upper: c,
        }
    }

    pub fn tabulated(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::config("a", "need at least two (time, value) samples"));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::config("a", "sample times must increase"));
        }
        let lower = values.iter().copied().fold(f64::INFINITY, f64::min);
        let upper = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(CoefficientA {
            profile: Profile::Tabulated { times, values },
            lower,
            upper,
        })
    }

    pub fn function(f: impl Fn(f64) -> f64 + Send + Sync + 'static, lower: f64, upper: f64) -> Self {
        CoefficientA {
            profile: Profile::Function(Arc::new(f)),
            lower,
            upper,
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.profile, Profile::Constant(_))
    }

    pub fn value(&self, t: f64) -> f64 {
        match &self.profile {
            Profile::Constant(c) => *c,
            Profile::Tabulated { times, values } => {
                let n = times.len();
                if t <= times[0] {
                    return values[0];
                }
                if t >= times[n - 1] {
                    return values[n - 1];
                }
                let i = times.partition_point(|&s| s <= t) - 1;
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i] + w * (values[i + 1] - values[i])
            }
            Profile::Function(f) => f(t),
        }
    }

    /// `A_{t,s} = ∫_s^t a(r) dr`.
    pub fn eval_a(&self, s: f64, t: f64) -> Result<f64> {
        eval_a(self, s, t)
    }
}

fn positivity(t: f64, v: f64) -> Error {
    Error::PositivityViolation(format!("a({t}) = {v} is not positive"))
}

/// `A_{t,s} = ∫_s^t a(r) dr`.
///
/// Constant: exact. Tabulated: exact integral of the linear interpolant.
/// Function: composite Simpson, doubled until successive values agree to
/// `1e-14` relative. The result is checked against `lower (t-s) <= A <=
/// upper (t-s)`.
pub fn eval_a(a: &CoefficientA, s: f64, t: f64) -> Result<f64> {
    if !(s < t) {
        return Err(Error::OrderViolation { s, t });
    }
    let val = match &a.profile {
        Profile::Constant(c) => {
            if *c <= 0.0 {
                return Err(positivity(s, *c));
            }
            c * (t - s)
        }
        Profile::Tabulated { times, values } => {
            if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| **v <= 0.0) {
                return Err(positivity(times[i], *v));
            }
            let mut pts = vec![s];
            pts.extend(times.iter().copied().filter(|&r| r > s && r < t));
            pts.push(t);
            let pieces: Vec<f64> = pts
                .windows(2)
                .map(|w| 0.5 * (w[1] - w[0]) * (a.value(w[0]) + a.value(w[1])))
                .collect();
            crate::sum::neumaier(pieces)
        }
        Profile::Function(f) => {
            let simpson = |n: usize| -> Result<f64> {
                let h = (t - s) / n as f64;
                let mut terms = Vec::with_capacity(n + 1);
                for i in 0..=n {
                    let r = s + i as f64 * h;
                    let v = f(r);
                    if !(v > 0.0) {
                        return Err(positivity(r, v));
                    }
                    let w = if i == 0 || i == n {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    terms.push(w * v);
                }
                Ok(crate::sum::neumaier(terms) * h / 3.0)
            };
            let mut n = 16;
            let mut prev = simpson(n)?;
            loop {
                n *= 2;
                let cur = simpson(n)?;
                if (cur - prev).abs() <= 1e-14 * cur.abs() || n >= 1 << 20 {
                    break cur;
                }
                prev = cur;
            }
        }
    };
    let slack = 1e-10 * (t - s) * a.upper.abs().max(1.0);
    if val < a.lower * (t - s) - slack || val > a.upper * (t - s) + slack {
        return Err(Error::OutOfRange {
            name: "A_ts",
            value: val,
            expected: "within [lower (t-s), upper (t-s)]",
        });
    }
    Ok(val)
}

/// Fractional order and accumulated diffusivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub alpha: f64,
    pub a_ts: f64,
}

impl KernelParams {
    pub fn new(alpha: f64, a_ts: f64) -> Result<Self> {
        FracOrder::new(alpha)?;
        if !(a_ts > 0.0) || !a_ts.is_finite() {
            return Err(Error::PositivityViolation(format!("A_ts = {a_ts} must be > 0")));
        }
        Ok(KernelParams { alpha, a_ts })
    }

    /// Kernel width `A^{1/α}`.
    pub fn width(&self) -> f64 {
        self.a_ts.powf(1.0 / self.alpha)
    }
}

fn check_order(k: u32) -> Result<()> {
    if k > 3 {
        Err(Error::UnsupportedOrder(k))
    } else {
        Ok(())
    }
}

fn table(alpha: f64, a_ts: f64, p: f64, phase: f64) -> Arc<KernelTable> {
    KernelTable::cached(alpha, a_ts, p, phase)
}

/// `G(x)` at `A = 1`.
pub fn eval_g(x: f64, alpha: f64) -> Result<f64> {
    deriv_g(x, alpha, 0)
}

/// `D^k G(x) = (1/π) ∫_0^∞ ξ^k cos(ξx + kπ/2) e^{-ξ^α} dξ`.
pub fn deriv_g(x: f64, alpha: f64, k: u32) -> Result<f64> {
    FracOrder::new(alpha)?;
    check_order(k)?;
    Ok(table(alpha, 1.0, k as f64, 0.5 * PI * k as f64).eval(x))
}

/// `G_{t,s}(x)` through the scaling law.
pub fn eval_g_ts(x: f64, params: &KernelParams) -> Result<f64> {
    deriv_g_ts(x, params, 0)
}

/// `D^k G_{t,s}(x) = A^{-(1+k)/α} D^k G(A^{-1/α} x)`.
pub fn deriv_g_ts(x: f64, params: &KernelParams, k: u32) -> Result<f64> {
    let p = KernelParams::new(params.alpha, params.a_ts)?;
    let w = p.width();
    Ok(deriv_g(x / w, p.alpha, k)? / w.powi(1 + k as i32))
}

/// `D^k G_{t,s}(x)` by quadrature of `e^{-A ξ^α}` directly (no rescaling).
pub fn direct_deriv_g_ts(x: f64, params: &KernelParams, k: u32) -> Result<f64> {
    let p = KernelParams::new(params.alpha, params.a_ts)?;
    check_order(k)?;
    Ok(KernelTable::new(p.alpha, p.a_ts, k as f64, 0.5 * PI * k as f64).eval(x))
}

/// `(-Δ)^{γ/2} G(x) = (1/π) ∫_0^∞ ξ^γ cos(ξx) e^{-ξ^α} dξ`.
pub fn frac_lap_g(x: f64, alpha: f64, gamma: f64) -> Result<f64> {
    FracOrder::new(alpha)?;
    if !(gamma > 0.0) {
        return Err(Error::InvalidExponent {
            name: "gamma",
            value: gamma,
            expected: "gamma > 0",
        });
    }
    Ok(table(alpha, 1.0, gamma, 0.0).eval(x))
}

/// `(-Δ)^{γ/2} G_{t,s}(x) = A^{-(1+γ)/α} ((-Δ)^{γ/2} G)(A^{-1/α} x)`.
pub fn frac_lap_g_ts(x: f64, params: &KernelParams, gamma: f64) -> Result<f64> {
    let p = KernelParams::new(params.alpha, params.a_ts)?;
    let w = p.width();
    Ok(frac_lap_g(x / w, p.alpha, gamma)? / w.powf(1.0 + gamma))
}

/// `P(X <= x)` for the law with density `G_{t,s}`.
pub fn kernel_cdf(x: f64, params: &KernelParams) -> Result<f64> {
    let p = KernelParams::new(params.alpha, params.a_ts)?;
    let z = x / p.width();
    if z.abs() > quadrature::SERIES_SWITCH {
        let upper = tail_series(z.abs(), p.alpha);
        Ok(if z > 0.0 { 1.0 - upper } else { upper })
    } else {
        // (1/π) ∫ sin(ξz)/ξ e^{-ξ^α} dξ
        Ok(0.5 + table(p.alpha, 1.0, -1.0, -0.5 * PI).quadrature(z))
    }
}

/// `∫_z^∞ G` for `z` past the series switch, `A = 1`.
fn tail_series(z: f64, alpha: f64) -> f64 {
    // F(z) = 1 + (1/π) Σ_{j>=1} (-1)^j Γ(jα)/j! sin(πjα/2) z^{-jα}
    -quadrature::asymptotic(alpha, 1.0, -1.0, -0.5 * PI, z)
}

/// `∫_z^∞ G_{t,s}(x) dx`.
pub fn kernel_tail_mass(z: f64, params: &KernelParams) -> Result<f64> {
    Ok(1.0 - kernel_cdf(z, params)?)
}

/// Kernel sampled on a grid.
pub fn tabulate_g_ts(grid: &Grid1D, params: &KernelParams, k: u32) -> Result<GridFunction> {
    let p = KernelParams::new(params.alpha, params.a_ts)?;
    check_order(k)?;
    let values: Result<Vec<f64>> = (0..grid.n)
        .into_par_iter()
        .map(|j| deriv_g_ts(grid.x(j), &p, k))
        .collect();
    GridFunction::new(*grid, values?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassReport {
    /// `dx Σ G(x_j)`.
    pub grid_sum: f64,
    /// Mass outside `[x_min, x_max]`.
    pub tail_mass: f64,
    /// `grid_sum` plus the trapezoid end correction and the tail mass.
    pub total: f64,
}

pub fn grid_mass(grid: &Grid1D, params: &KernelParams) -> Result<MassReport> {
    let g = tabulate_g_ts(grid, params, 0)?;
    let grid_sum = g.integral();
    let end = 0.5 * grid.dx() * (eval_g_ts(grid.x_max, params)? - eval_g_ts(grid.x_min, params)?);
    let tail_mass = kernel_cdf(grid.x_min, params)? + kernel_tail_mass(grid.x_max, params)?;
    Ok(MassReport {
        grid_sum,
        tail_mass,
        total: grid_sum + end + tail_mass,
    })
}

/// Multiplier `e^{-A|ξ_k|^α}` per storage slot.
pub fn semigroup_multiplier(grid: &Grid1D, alpha: f64, a_ts: f64) -> Vec<f64> {
    grid.xis()
        .iter()
        .map(|xi| (-a_ts * xi.abs().powf(alpha)).exp())
        .collect()
}

/// `R φ` for an accumulated diffusivity `a_ts >= 0`.
pub fn semigroup_apply_a(phi: &GridFunction, alpha: f64, a_ts: f64) -> Result<GridFunction> {
    FracOrder::new(alpha)?;
    if a_ts < 0.0 {
        return Err(Error::PositivityViolation(format!("A_ts = {a_ts} must be >= 0")));
    }
    if a_ts == 0.0 {
        return Ok(phi.clone());
    }
    let m = semigroup_multiplier(&phi.grid, alpha, a_ts);
    Ok(GridFunction {
        grid: phi.grid,
        values: apply_real_multiplier(&phi.values, &m),
    })
}

/// `R_s^t φ`; `s == t` is the identity.
pub fn semigroup_apply(
    phi: &GridFunction,
    alpha: f64,
    a: &CoefficientA,
    s: f64,
    t: f64,
) -> Result<GridFunction> {
    if s > t {
        return Err(Error::OrderViolation { s, t });
    }
    if s == t {
        FracOrder::new(alpha)?;
        return Ok(phi.clone());
    }
    semigroup_apply_a(phi, alpha, eval_a(a, s, t)?)
}
