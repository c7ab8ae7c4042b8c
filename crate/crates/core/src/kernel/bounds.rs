//! Empirical constants for the kernel decay and weighted-integral bounds.
//!
//! Every bound has the shape `quantity <= C * rate`; the reported constant is
//! the maximum of `quantity / rate` over the sampled parameters. A check
//! passes when the constant is finite and moves by less than `tolerance`
//! (relative) when every sampling resolution is doubled.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::quadrature::KernelTable;
use super::{deriv_g, deriv_g_ts, frac_lap_g, frac_lap_g_ts, CoefficientA, KernelParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundCheck {
    /// `sup_x |D^k G(x)| (1 + |x|^{1+α+k})`.
    Pointwise { k: u32 },
    /// `sup_x |(-Δ)^{γ/2} G(x)| (1 + |x|^{1+γ})`.
    FracPointwise { gamma: f64 },
    /// `sup_{s<t} (t-s)^{(k-γ)/α} ∫ |D^k G_{t,s}| |x|^γ dx`.
    WeightedIntegral { gamma: f64, k: u32 },
    /// `∫ sup_{s<t} G_{t,s}(x) |x|^γ dx`, `γ < α`.
    SupWeighted { gamma: f64 },
    /// `sup_{s<t} (t-s)^{1-γ/α} ∫ |(-Δ)^{α/2} G_{t,s}| |x|^γ dx`.
    LaplacianWeighted { gamma: f64 },
    /// `sup_η η^{-(α+γ-k)} ∫_{|x|<=η} sup_t ∫_t^T |D^k G_{s,t}| ds |x|^γ dx`.
    NearField { gamma: f64, k: u32 },
    /// `sup_ε ε^{-γ/α} ∫ sup_r ∫_{r-ε}^r |(-Δ)^{α/2} G_{r,u}| du |x|^γ dx`.
    ShortWindow { gamma: f64 },
    /// `sup_η η^{-((γ-k)l+α)} ∫_0^T (∫_{|x|>η} |D^k G_{T,t}| |x|^γ dx)^l dt`,
    /// `k > γ + α/l`.
    FarField { gamma: f64, k: u32, l: u32 },
}

impl BoundCheck {
    pub fn label(&self) -> String {
        match self {
            BoundCheck::Pointwise { k } => format!("pointwise k={k}"),
            BoundCheck::FracPointwise { gamma } => format!("fractional pointwise gamma={gamma}"),
            BoundCheck::WeightedIntegral { gamma, k } => {
                format!("weighted integral gamma={gamma} k={k}")
            }
            BoundCheck::SupWeighted { gamma } => format!("sup-in-time weighted gamma={gamma}"),
            BoundCheck::LaplacianWeighted { gamma } => {
                format!("laplacian weighted gamma={gamma}")
            }
            BoundCheck::NearField { gamma, k } => format!("near field gamma={gamma} k={k}"),
            BoundCheck::ShortWindow { gamma } => format!("short window gamma={gamma}"),
            BoundCheck::FarField { gamma, k, l } => {
                format!("far field gamma={gamma} k={k} l={l}")
            }
        }
    }

    pub fn formula(&self) -> &'static str {
        match self {
            BoundCheck::Pointwise { .. } => "|D^k G(x)| <= C / (1 + |x|^{1+alpha+k})",
            BoundCheck::FracPointwise { .. } => "|(-Delta)^{gamma/2} G(x)| <= C / (1 + |x|^{1+gamma})",
            BoundCheck::WeightedIntegral { .. } => {
                "int |D^k G_{t,s}(x)| |x|^gamma dx <= C (t-s)^{(gamma-k)/alpha}"
            }
            BoundCheck::SupWeighted { .. } => "int sup_{s<t} G_{t,s}(x) |x|^gamma dx <= C",
            BoundCheck::LaplacianWeighted { .. } => {
                "int |(-Delta)^{alpha/2} G_{t,s}(x)| |x|^gamma dx <= C (t-s)^{gamma/alpha - 1}"
            }
            BoundCheck::NearField { .. } => {
                "int_{|x|<=eta} sup_t int_t^T |D^k G_{s,t}(x)| |x|^gamma ds dx <= C eta^{alpha+gamma-k}"
            }
            BoundCheck::ShortWindow { .. } => {
                "int sup_r int_{(r-eps) v t}^r |(-Delta)^{alpha/2} G_{r,u}(x)| |x|^gamma du dx <= C eps^{gamma/alpha}"
            }
            BoundCheck::FarField { .. } => {
                "int_0^T (int_{|x|>eta} |D^k G_{T,t}(x)| |x|^gamma dx)^l dt <= C eta^{(gamma-k) l + alpha}"
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundConfig {
    pub alpha: f64,
    pub a: CoefficientA,
    pub horizon: f64,
    /// Pointwise checks scan `[0, x_max]` with step `x_step`.
    pub x_max: f64,
    pub x_step: f64,
    /// Log-spacing of the `x` quadrature for integral checks.
    pub du: f64,
    /// Smallest sampled time difference.
    pub tau_min: f64,
    /// Number of log-spaced time differences.
    pub n_tau: usize,
    /// Number of start times `s` (equally spaced in `[0, T/2]`).
    pub n_start: usize,
    pub tolerance: f64,
}

impl BoundConfig {
    pub fn new(alpha: f64, a: CoefficientA) -> Self {
        BoundConfig {
            alpha,
            a,
            horizon: 1.0,
            x_max: 50.0,
            x_step: 0.05,
            du: 0.1,
            tau_min: 1e-3,
            n_tau: 13,
            n_start: 3,
            tolerance: 0.05,
        }
    }

    fn refined(&self) -> Self {
        BoundConfig {
            x_step: 0.5 * self.x_step,
            du: 0.5 * self.du,
            n_tau: 2 * self.n_tau - 1,
            ..self.clone()
        }
    }

    fn taus(&self) -> Vec<f64> {
        logspace(self.tau_min, self.horizon, self.n_tau)
    }

    /// `(s, t, A_{t,s})` over start times and log-spaced differences.
    fn pairs(&self) -> Result<Vec<(f64, f64, f64)>> {
        let mut out = Vec::new();
        for i in 0..self.n_start {
            let s = if self.n_start == 1 {
                0.0
            } else {
                0.5 * self.horizon * i as f64 / (self.n_start - 1) as f64
            };
            for tau in self.taus() {
                let t = s + tau;
                if t <= self.horizon * (1.0 + 1e-12) {
                    out.push((s, t, self.a.eval_a(s, t)?));
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub check: BoundCheck,
    pub label: String,
    pub formula: String,
    pub constant: f64,
    pub refined_constant: f64,
    pub relative_change: f64,
    pub finite: bool,
    pub stable: bool,
}

impl BoundReport {
    pub fn passed(&self) -> bool {
        self.finite && self.stable
    }
}

pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![hi];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// `2 ∫_0^∞ f(x) x^γ dx` for an even, nonnegative `f` with `f ~ x^r` at 0 and
/// `f ~ x^{-q}` at ∞, by the trapezoid rule in `u = ln(x / w)` over
/// `[lo, hi]` plus power-law end pieces.
fn even_weighted_integral(
    f: impl Fn(f64) -> f64,
    gamma: f64,
    w: f64,
    lo: f64,
    hi: f64,
    du: f64,
    r: f64,
    q: f64,
) -> f64 {
    let n = ((hi - lo) / du).round().max(1.0) as usize;
    let h = (hi - lo) / n as f64;
    let mut terms = Vec::with_capacity(n + 3);
    let mut first = 0.0;
    let mut last = 0.0;
    for i in 0..=n {
        let x = w * (lo + i as f64 * h).exp();
        let g = f(x) * x.powf(gamma + 1.0);
        let wt = if i == 0 || i == n { 0.5 } else { 1.0 };
        terms.push(wt * h * g);
        if i == 0 {
            first = g;
        }
        if i == n {
            last = g;
        }
    }
    terms.push(first / (gamma + 1.0 + r));
    if q > gamma + 1.0 {
        terms.push(last / (q - gamma - 1.0));
    }
    2.0 * crate::sum::neumaier(terms)
}

const U_LO: f64 = -9.2;
const U_HI: f64 = 9.2;

fn deriv_decay(alpha: f64, k: u32) -> (f64, f64) {
    let r = if k % 2 == 0 { 0.0 } else { 1.0 };
    (r, 1.0 + alpha + k as f64)
}

fn constant(check: &BoundCheck, cfg: &BoundConfig) -> Result<f64> {
    let alpha = cfg.alpha;
    match *check {
        BoundCheck::Pointwise { k } => {
            let n = (cfg.x_max / cfg.x_step).round() as usize;
            let mut m = 0.0_f64;
            for i in 0..=n {
                let x = i as f64 * cfg.x_step;
                m = m.max(deriv_g(x, alpha, k)?.abs() * (1.0 + x.powf(1.0 + alpha + k as f64)));
            }
            Ok(m)
        }
        BoundCheck::FracPointwise { gamma } => {
            let n = (cfg.x_max / cfg.x_step).round() as usize;
            let mut m = 0.0_f64;
            for i in 0..=n {
                let x = i as f64 * cfg.x_step;
                m = m.max(frac_lap_g(x, alpha, gamma)?.abs() * (1.0 + x.powf(1.0 + gamma)));
            }
            Ok(m)
        }
        BoundCheck::WeightedIntegral { gamma, k } => {
            let (r, q) = deriv_decay(alpha, k);
            let mut m = 0.0_f64;
            for (s, t, a_ts) in cfg.pairs()? {
                // direct quadrature of e^{-A ξ^α} at this A
                let table = KernelTable::new(alpha, a_ts, k as f64, 0.5 * PI * k as f64);
                let w = a_ts.powf(1.0 / alpha);
                let v = even_weighted_integral(|x| table.eval(x).abs(), gamma, w, U_LO, U_HI, cfg.du, r, q);
                m = m.max(v * (t - s).powf((k as f64 - gamma) / alpha));
            }
            Ok(m)
        }
        BoundCheck::LaplacianWeighted { gamma } => {
            let mut m = 0.0_f64;
            for (s, t, a_ts) in cfg.pairs()? {
                let table = KernelTable::new(alpha, a_ts, alpha, 0.0);
                let w = a_ts.powf(1.0 / alpha);
                let v = even_weighted_integral(
                    |x| table.eval(x).abs(),
                    gamma,
                    w,
                    U_LO,
                    U_HI,
                    cfg.du,
                    0.0,
                    1.0 + alpha,
                );
                m = m.max(v * (t - s).powf(1.0 - gamma / alpha));
            }
            Ok(m)
        }
        BoundCheck::SupWeighted { gamma } => {
            if !(gamma < alpha) {
                return Err(Error::InvalidExponent {
                    name: "gamma",
                    value: gamma,
                    expected: "gamma < alpha",
                });
            }
            let params: Vec<KernelParams> = cfg
                .pairs()?
                .into_iter()
                .map(|(_, _, a)| KernelParams::new(alpha, a))
                .collect::<Result<_>>()?;
            let f = |x: f64| {
                params
                    .iter()
                    .map(|p| deriv_g_ts(x, p, 0).unwrap_or(0.0))
                    .fold(0.0, f64::max)
            };
            let w_min = params.iter().map(|p| p.width()).fold(f64::INFINITY, f64::min);
            let w_max = params.iter().map(|p| p.width()).fold(0.0, f64::max);
            let lo = U_LO;
            let hi = (w_max / w_min).ln() + U_HI;
            Ok(even_weighted_integral(f, gamma, w_min, lo, hi, cfg.du, 0.0, 1.0 + alpha))
        }
        BoundCheck::NearField { gamma, k } => {
            let t_grid = start_times(cfg);
            let nodes = time_nodes(cfg);
            let rate = alpha + gamma - k as f64;
            // per start time: (weight, params) of the s-quadrature
            let mut plans: Vec<Vec<(f64, KernelParams)>> = Vec::new();
            for &t in &t_grid {
                let mut plan = Vec::new();
                for &(tau, wt) in &nodes {
                    let s = t + tau * (cfg.horizon - t);
                    if s > t {
                        let p = KernelParams::new(alpha, cfg.a.eval_a(t, s)?)?;
                        plan.push((wt * (cfg.horizon - t), p));
                    }
                }
                plans.push(plan);
            }
            // J(x) = sup_t ∫_t^T |D^k G_{s,t}(x)| ds on a log grid x = e^{-i du}
            let j = |x: f64| -> f64 {
                plans
                    .iter()
                    .map(|plan| {
                        plan.iter()
                            .map(|(w, p)| w * deriv_g_ts(x, p, k).unwrap_or(f64::NAN).abs())
                            .sum::<f64>()
                    })
                    .fold(0.0, f64::max)
            };
            let n = (18.0 / cfg.du).round() as usize;
            let h = 18.0 / n as f64;
            // integrand in u = ln x, ascending in x
            let vals: Vec<(f64, f64)> = (0..=n)
                .rev()
                .map(|i| {
                    let x = (-(i as f64) * h).exp();
                    (x, j(x) * x.powf(gamma + 1.0))
                })
                .collect();
            let mut m = 0.0_f64;
            let mut cum = 0.0;
            let mut targets = logspace(0.05, 1.0, 5).into_iter().peekable();
            for i in 1..vals.len() {
                cum += 0.5 * h * (vals[i - 1].1 + vals[i].1);
                let x = vals[i].0;
                while let Some(&eta) = targets.peek() {
                    if x < eta * (1.0 - 1e-12) {
                        break;
                    }
                    // nearest grid point at or above eta
                    m = m.max(2.0 * cum / x.powf(rate));
                    targets.next();
                }
            }
            Ok(m)
        }
        BoundCheck::ShortWindow { gamma } => {
            let r_grid: Vec<f64> = (1..=cfg.n_start.max(1))
                .map(|i| cfg.horizon * i as f64 / cfg.n_start.max(1) as f64)
                .collect();
            let nodes = time_nodes(cfg);
            let mut m = 0.0_f64;
            for eps in logspace(1e-3, 0.25 * cfg.horizon, 5) {
                let mut plans: Vec<Vec<(f64, KernelParams)>> = Vec::new();
                for &r in &r_grid {
                    let lo = (r - eps).max(0.0);
                    let mut plan = Vec::new();
                    for &(tau, wt) in &nodes {
                        let u = r - tau * (r - lo);
                        if u < r {
                            let p = KernelParams::new(alpha, cfg.a.eval_a(u, r)?)?;
                            plan.push((wt * (r - lo), p));
                        }
                    }
                    plans.push(plan);
                }
                let j = |x: f64| -> f64 {
                    plans
                        .iter()
                        .map(|plan| {
                            plan.iter()
                                .map(|(w, p)| w * frac_lap_g_ts(x, p, alpha).unwrap_or(f64::NAN).abs())
                                .sum::<f64>()
                        })
                        .fold(0.0, f64::max)
                };
                let w = (cfg.a.lower * 1e-6).powf(1.0 / alpha);
                let hi = (cfg.a.upper * cfg.horizon).powf(1.0 / alpha) / w;
                let v = even_weighted_integral(j, gamma, w, 0.0, hi.ln() + U_HI, cfg.du, 0.0, 1.0 + alpha);
                m = m.max(v / eps.powf(gamma / alpha));
            }
            Ok(m)
        }
        BoundCheck::FarField { gamma, k, l } => {
            if !(k as f64 > gamma + alpha / l as f64) {
                return Err(Error::InvalidExponent {
                    name: "k",
                    value: k as f64,
                    expected: "k > gamma + alpha / l",
                });
            }
            let (_, q) = deriv_decay(alpha, k);
            let rate = (gamma - k as f64) * l as f64 + alpha;
            let taus = logspace(1e-6 * cfg.horizon, cfg.horizon, 8 * cfg.n_tau);
            let mut m = 0.0_f64;
            for eta in logspace(0.05, 1.0, 5) {
                // ∫_0^T (...)^l dt, trapezoid in log(T - t)
                let mut vals = Vec::with_capacity(taus.len());
                for &tau in &taus {
                    let t = cfg.horizon - tau;
                    let a = cfg.a.eval_a(t, cfg.horizon)?;
                    let p = KernelParams::new(alpha, a)?;
                    let w = p.width();
                    let lo = (eta / w).ln();
                    let inner = even_weighted_integral(
                        |x| deriv_g_ts(x, &p, k).unwrap_or(f64::NAN).abs(),
                        gamma,
                        w,
                        lo,
                        lo.max(U_HI),
                        cfg.du,
                        0.0,
                        q,
                    ) - (w * lo.exp()).powf(gamma + 1.0) * deriv_g_ts(eta, &p, k)?.abs() * 2.0
                        / (gamma + 1.0);
                    vals.push(inner.max(0.0).powi(l as i32) * tau);
                }
                let h = (taus[1] / taus[0]).ln();
                let mut acc = 0.5 * h * (vals[0] + vals[vals.len() - 1]);
                acc += h * vals[1..vals.len() - 1].iter().sum::<f64>();
                m = m.max(acc / eta.powf(rate));
            }
            Ok(m)
        }
    }
}

fn start_times(cfg: &BoundConfig) -> Vec<f64> {
    let n = cfg.n_start.max(1);
    (0..n).map(|i| 0.5 * cfg.horizon * i as f64 / n as f64).collect()
}

/// Gauss-Legendre-like nodes on `(0, 1]`, graded toward 0, from the log-time
/// resolution: trapezoid in `ln τ` over `[1e-6, 1]`.
fn time_nodes(cfg: &BoundConfig) -> Vec<(f64, f64)> {
    let n = 4 * cfg.n_tau;
    let taus = logspace(1e-6, 1.0, n);
    let h = (taus[1] / taus[0]).ln();
    taus.iter()
        .enumerate()
        .map(|(i, &t)| {
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            (t, w * h * t)
        })
        .collect()
}

/// Empirical constant at the base and the refined resolution.
pub fn verify_kernel_bounds(check: BoundCheck, cfg: &BoundConfig) -> Result<BoundReport> {
    let c0 = constant(&check, cfg)?;
    let c1 = constant(&check, &cfg.refined())?;
    let finite = c0.is_finite() && c1.is_finite();
    let rel = if c0 == c1 { 0.0 } else { (c1 - c0).abs() / c0.abs().max(c1.abs()) };
    Ok(BoundReport {
        check,
        label: check.label(),
        formula: check.formula().to_string(),
        constant: c0,
        refined_constant: c1,
        relative_change: rel,
        finite,
        stable: finite && rel < cfg.tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(alpha: f64) -> BoundConfig {
        BoundConfig::new(alpha, CoefficientA::constant(1.0))
    }

    #[test]
    fn mass_bound_has_unit_constant() {
        let r = verify_kernel_bounds(BoundCheck::WeightedIntegral { gamma: 0.0, k: 0 }, &unit(1.5)).unwrap();
        assert!((r.constant - 1.0).abs() < 1e-6, "{}", r.constant);
        assert!(r.passed());
    }

    #[test]
    fn first_derivative_integral_is_scale_free() {
        let mut single = unit(1.5);
        single.n_tau = 1;
        single.n_start = 1;
        let at_one = constant(&BoundCheck::WeightedIntegral { gamma: 0.0, k: 1 }, &single).unwrap();
        let swept = constant(&BoundCheck::WeightedIntegral { gamma: 0.0, k: 1 }, &unit(1.5)).unwrap();
        assert!((swept / at_one - 1.0).abs() < 0.02, "{swept} vs {at_one}");
    }

    #[test]
    fn pointwise_decay_is_stable() {
        let r = verify_kernel_bounds(BoundCheck::Pointwise { k: 0 }, &unit(1.5)).unwrap();
        assert!(r.finite && r.relative_change < 0.02);
        let f = verify_kernel_bounds(BoundCheck::FracPointwise { gamma: 1.5 }, &unit(1.5)).unwrap();
        assert!(f.passed());
    }

    #[test]
    fn exponent_preconditions() {
        let cfg = unit(1.5);
        assert!(constant(&BoundCheck::SupWeighted { gamma: 1.6 }, &cfg).is_err());
        assert!(constant(&BoundCheck::FarField { gamma: 0.75, k: 1, l: 2 }, &cfg).is_err());
    }
}
