//! Fourier-cosine integrals `(1/π) ∫_0^∞ η^p cos(η x + φ) e^{-A η^α} dη`.
//!
//! Small `|x|` (relative to the kernel width `A^{1/α}`): composite
//! Gauss-Legendre on panels no wider than a fraction of one oscillation
//! period, with geometric refinement toward `η = 0`. Large `|x|`: the
//! asymptotic expansion obtained from `e^{-Aη^α} = Σ (-A)^j η^{jα}/j!` and
//! `∫_0^∞ η^{s-1} cos(ηx + φ) dη = Γ(s) cos(πs/2 + φ) x^{-s}`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use statrs::function::gamma::ln_gamma;

const GL_ORDER: usize = 20;
/// Scaled distance `|x| / A^{1/α}` beyond which the asymptotic series is used.
pub const SERIES_SWITCH: f64 = 12.0;
/// Integrand magnitude at the truncation point.
const TRUNCATION: f64 = 1e-18;
const GRADED_LEVELS: usize = 30;

fn gauss_legendre() -> &'static [(f64, f64)] {
    static NODES: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    NODES.get_or_init(|| {
        let n = GL_ORDER;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
        out
    })
}

fn push_panel(nodes: &mut Vec<(f64, f64)>, a: f64, b: f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    for &(t, w) in gauss_legendre() {
        nodes.push((mid + half * t, half * w));
    }
}

/// Truncation point where `η^p e^{-Aη^α}` drops below [`TRUNCATION`].
pub fn eta_max(alpha: f64, a_ts: f64, p: f64) -> f64 {
    let target = -TRUNCATION.ln();
    let mut eta: f64 = (target / a_ts).powf(1.0 / alpha);
    for _ in 0..50 {
        let next = ((target + p.max(0.0) * eta.max(1.0).ln()) / a_ts).powf(1.0 / alpha);
        if (next - eta).abs() < 1e-12 * eta {
            break;
        }
        eta = next;
    }
    eta
}

/// Analytic bound on the neglected tail `∫_{η_max}^∞ η^p e^{-Aη^α} dη / π`.
pub fn truncation_bound(alpha: f64, a_ts: f64, p: f64) -> f64 {
    let e = eta_max(alpha, a_ts, p);
    // for η >= e, η^p e^{-Aη^α} <= e^p e^{-Ae^α} exp(-(Aαe^{α-1} - p/e)(η - e))
    let rate = a_ts * alpha * e.powf(alpha - 1.0) - p.max(0.0) / e;
    e.powf(p) * (-a_ts * e.powf(alpha)).exp() / (rate.max(1e-300) * std::f64::consts::PI)
}

/// Quadrature nodes with the weight `w_i η_i^p e^{-Aη_i^α} / π` folded in.
#[derive(Debug)]
pub struct KernelTable {
    pub alpha: f64,
    pub a_ts: f64,
    pub p: f64,
    pub phase: f64,
    width: f64,
    nodes: Vec<(f64, f64)>,
}

impl KernelTable {
    pub fn new(alpha: f64, a_ts: f64, p: f64, phase: f64) -> Self {
        let width = a_ts.powf(1.0 / alpha);
        let e_max = eta_max(alpha, a_ts, p);
        let panel = (std::f64::consts::PI / (SERIES_SWITCH * width)).min(e_max / 32.0);
        let mut raw = Vec::new();
        // graded panels on [0, panel]
        let mut hi = panel;
        for _ in 0..GRADED_LEVELS {
            push_panel(&mut raw, 0.5 * hi, hi);
            hi *= 0.5;
        }
        push_panel(&mut raw, 0.0, hi);
        let n_panels = ((e_max - panel) / panel).ceil().max(1.0) as usize;
        let step = (e_max - panel) / n_panels as f64;
        for i in 0..n_panels {
            let a = panel + i as f64 * step;
            push_panel(&mut raw, a, a + step);
        }
        let inv_pi = 1.0 / std::f64::consts::PI;
        let nodes = raw
            .into_iter()
            .map(|(eta, w)| (eta, w * eta.powf(p) * (-a_ts * eta.powf(alpha)).exp() * inv_pi))
            .collect();
        KernelTable {
            alpha,
            a_ts,
            p,
            phase,
            width,
            nodes,
        }
    }

    /// Shared table for the given parameters.
    pub fn cached(alpha: f64, a_ts: f64, p: f64, phase: f64) -> Arc<KernelTable> {
        type Key = (u64, u64, u64, u64);
        static CACHE: OnceLock<Mutex<HashMap<Key, Arc<KernelTable>>>> = OnceLock::new();
        let key = (alpha.to_bits(), a_ts.to_bits(), p.to_bits(), phase.to_bits());
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().unwrap().get(&key) {
            return t.clone();
        }
        let t = Arc::new(KernelTable::new(alpha, a_ts, p, phase));
        cache.lock().unwrap().insert(key, t.clone());
        t
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x.abs() > SERIES_SWITCH * self.width {
            self.series(x)
        } else {
            self.quadrature(x)
        }
    }

    pub fn quadrature(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &(eta, w) in &self.nodes {
            acc += w * (eta * x + self.phase).cos();
        }
        acc
    }

    /// Asymptotic expansion, valid for `|x| >> A^{1/α}`.
    pub fn series(&self, x: f64) -> f64 {
        asymptotic(self.alpha, self.a_ts, self.p, self.phase, x)
    }
}

/// `(1/π) Σ_j (-A)^j/j! Γ(s_j) cos(π s_j/2 + φ) |x|^{-s_j}` with
/// `s_j = p + jα + 1`, summed until the terms stop shrinking or become
/// negligible. Uses `cos(ηx + φ) = cos(η|x| - φ)` for negative `x`.
pub fn asymptotic(alpha: f64, a_ts: f64, p: f64, phase: f64, x: f64) -> f64 {
    let (ax, phi) = if x < 0.0 { (-x, -phase) } else { (x, phase) };
    let lnx = ax.ln();
    let lna = a_ts.ln();
    let mut sum = 0.0;
    let mut prev = f64::INFINITY;
    let mut ln_fact = 0.0;
    for j in 0..400 {
        if j > 0 {
            ln_fact += (j as f64).ln();
        }
        let s = p + j as f64 * alpha + 1.0;
        if s <= 0.0 {
            continue;
        }
        let c = (0.5 * std::f64::consts::PI * s + phi).cos();
        let mag = (j as f64 * lna + ln_gamma(s) - ln_fact - s * lnx).exp();
        if mag > prev && j > 2 {
            break;
        }
        prev = mag;
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * mag * c;
        if mag < 1e-18 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum / std::f64::consts::PI
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let s: f64 = gauss_legendre().iter().map(|(x, w)| w * x.powi(38)).sum();
        assert!((s - 2.0 / 39.0).abs() < 1e-14);
        let total: f64 = gauss_legendre().iter().map(|(_, w)| w).sum();
        assert!((total - 2.0).abs() < 1e-14);
    }

    #[test]
    fn gaussian_case() {
        let t = KernelTable::new(2.0, 1.0, 0.0, 0.0);
        for &x in &[0.0, 0.7, 3.0, 11.0] {
            let exact = (-x * x / 4.0_f64).exp() / (2.0 * std::f64::consts::PI.sqrt());
            assert!((t.eval(x) - exact).abs() < 1e-14, "{x}");
        }
    }

    #[test]
    fn series_matches_quadrature_past_switch() {
        for &alpha in &[1.2, 1.5, 1.8, 1.95] {
            for &(p, phase) in &[(0.0, 0.0), (1.0, 0.5 * std::f64::consts::PI), (2.0, std::f64::consts::PI), (0.75, 0.0)] {
                let t = KernelTable::new(alpha, 1.0, p, phase);
                for &x in &[12.0, 15.0, -13.0] {
                    let q = t.quadrature(x);
                    let s = t.series(x);
                    assert!((q - s).abs() < 1e-11, "alpha {alpha} p {p} x {x}: {q} vs {s}");
                }
            }
        }
    }

    #[test]
    fn truncation_is_negligible() {
        for &alpha in &[1.2, 2.0] {
            assert!(truncation_bound(alpha, 1.0, 3.0) < 1e-14);
            assert!(truncation_bound(alpha, 1e-3, 0.0) < 1e-14);
        }
    }
}
