use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{c_alpha, FractionalLaplacian};
use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// Quadrature parameters for the singular-integral form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SingularIntegralConfig {
    /// Radius of the Taylor-corrected inner region, in units of `dx`.
    pub inner_cutoff: f64,
    /// Truncation radius of the improper integral; `None` means half the box.
    pub outer_radius: Option<f64>,
    /// Number of quadrature intervals between the inner and outer radius.
    pub quadrature_points: usize,
    /// Node grading exponent: `z = eps + (R - eps) s^grading`.
    pub grading: f64,
}

impl Default for SingularIntegralConfig {
    fn default() -> Self {
        SingularIntegralConfig {
            inner_cutoff: 1.0,
            outer_radius: None,
            quadrature_points: 192,
            grading: 2.0,
        }
    }
}

/// `-|C_α| ∫_0^∞ (f(x+z) + f(x-z) - 2 f(x)) / z^{1+α} dz`.
///
/// Inner region `[0, ε]`: Taylor expansion `f'' z^{1-α} + f'''' z^{3-α}/12`
/// integrated exactly.
/// Middle region: graded trapezoid rule with 8-point Lagrange interpolation
/// of the periodic samples. Tail `[R, ∞)`: `f(x ± z)` replaced by the mean.
#[derive(Debug, Clone, Copy)]
pub struct SingularIntegralLaplacian {
    pub cfg: SingularIntegralConfig,
}

impl SingularIntegralLaplacian {
    pub fn new(cfg: SingularIntegralConfig) -> Self {
        SingularIntegralLaplacian { cfg }
    }
}

const STENCIL: usize = 8;

/// Lagrange weights at `theta` for nodes `-3..=4`.
fn lagrange_weights(theta: f64) -> [f64; STENCIL] {
    let mut w = [0.0; STENCIL];
    for (i, wi) in w.iter_mut().enumerate() {
        let xi = i as f64 - 3.0;
        let mut p = 1.0;
        for j in 0..STENCIL {
            if j != i {
                let xj = j as f64 - 3.0;
                p *= (theta - xj) / (xi - xj);
            }
        }
        *wi = p;
    }
    w
}

/// Interpolation plan for a shift `z = (m + theta) dx`.
struct Shift {
    base: i64,
    w: [f64; STENCIL],
}

impl Shift {
    fn new(z_cells: f64) -> Self {
        let m = z_cells.floor();
        Shift {
            base: m as i64 - 3,
            w: lagrange_weights(z_cells - m),
        }
    }

    fn eval(&self, v: &[f64], j: usize) -> f64 {
        let n = v.len() as i64;
        let mut acc = 0.0;
        for (r, w) in self.w.iter().enumerate() {
            let idx = (j as i64 + self.base + r as i64).rem_euclid(n) as usize;
            acc += w * v[idx];
        }
        acc
    }
}

/// Fourth-order centered fourth difference.
fn fourth_derivative(v: &[f64], j: usize, h: f64) -> f64 {
    const C: [f64; 4] = [28.0 / 3.0, -6.5, 2.0, -1.0 / 6.0];
    let n = v.len() as i64;
    let at = |o: i64| v[(j as i64 + o).rem_euclid(n) as usize];
    let mut acc = C[0] * at(0);
    for (o, c) in C.iter().enumerate().skip(1) {
        acc += c * (at(o as i64) + at(-(o as i64)));
    }
    acc / h.powi(4)
}

/// Sixth-order centered second difference.
fn second_derivative(v: &[f64], j: usize, h: f64) -> f64 {
    const C: [f64; 4] = [-49.0 / 18.0, 1.5, -0.15, 1.0 / 90.0];
    let n = v.len() as i64;
    let at = |o: i64| v[(j as i64 + o).rem_euclid(n) as usize];
    let mut acc = C[0] * at(0);
    for (o, c) in C.iter().enumerate().skip(1) {
        acc += c * (at(o as i64) + at(-(o as i64)));
    }
    acc / (h * h)
}

impl FractionalLaplacian for SingularIntegralLaplacian {
    fn name(&self) -> &'static str {
        "integral"
    }

    fn apply(&self, f: &GridFunction, alpha: f64) -> Result<GridFunction> {
        let c = c_alpha(alpha)?;
        let cfg = &self.cfg;
        let g = f.grid;
        let dx = g.dx();
        if !(cfg.inner_cutoff >= 1.0) {
            return Err(Error::ResolutionError(format!(
                "inner_cutoff = {} dx is below one grid cell",
                cfg.inner_cutoff
            )));
        }
        let eps = cfg.inner_cutoff * dx;
        let r = cfg.outer_radius.unwrap_or(0.5 * g.length());
        if !(r <= 0.5 * g.length() + 1e-12 * g.length()) || r <= eps {
            return Err(Error::OutOfRange {
                name: "outer_radius",
                value: r,
                expected: "inner_cutoff * dx < outer_radius <= half the box",
            });
        }
        if cfg.quadrature_points < 2 || !(cfg.grading >= 1.0) {
            return Err(Error::OutOfRange {
                name: "quadrature_points",
                value: cfg.quadrature_points as f64,
                expected: ">= 2 with grading >= 1",
            });
        }

        // nodes and trapezoid-in-s weights including the Jacobian and kernel
        let q = cfg.quadrature_points;
        let nodes: Vec<(Shift, Shift, f64)> = (0..=q)
            .filter_map(|i| {
                let s = i as f64 / q as f64;
                let z = eps + (r - eps) * s.powf(cfg.grading);
                let jac = if i == 0 && cfg.grading > 1.0 {
                    0.0
                } else {
                    (r - eps) * cfg.grading * s.powf(cfg.grading - 1.0)
                };
                let tw = if i == 0 || i == q { 0.5 } else { 1.0 } / q as f64;
                let w = tw * jac / z.powf(1.0 + alpha);
                (w != 0.0).then(|| (Shift::new(z / dx), Shift::new(-z / dx), w))
            })
            .collect();
        let inner2 = eps.powf(2.0 - alpha) / (2.0 - alpha);
        let inner4 = eps.powf(4.0 - alpha) / (12.0 * (4.0 - alpha));
        let tail = 2.0 * r.powf(-alpha) / alpha;
        let mean = crate::sum::pairwise(&f.values) / g.n as f64;
        let v = &f.values;

        let values: Vec<f64> = (0..g.n)
            .into_par_iter()
            .map(|j| {
                let fx = v[j];
                let mid = crate::sum::neumaier(
                    nodes
                        .iter()
                        .map(|(p, m, w)| w * (p.eval(v, j) + m.eval(v, j) - 2.0 * fx)),
                );
                let taylor = second_derivative(v, j, dx) * inner2 + fourth_derivative(v, j, dx) * inner4;
                let total = taylor + mid + (mean - fx) * tail;
                -c * total
            })
            .collect();
        Ok(GridFunction { grid: g, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fraclap::SpectralLaplacian;
    use crate::grid::Grid1D;
    use std::f64::consts::PI;

    #[test]
    fn lagrange_reproduces_cubic() {
        let w = lagrange_weights(0.37);
        let p = |x: f64| 1.0 - 2.0 * x + 0.5 * x.powi(3);
        let approx: f64 = (0..STENCIL).map(|i| w[i] * p(i as f64 - 3.0)).sum();
        assert!((approx - p(0.37)).abs() < 1e-12);
    }

    #[test]
    fn constant_maps_to_zero() {
        let g = Grid1D::new(-8.0, 8.0, 256).unwrap();
        let op = SingularIntegralLaplacian::new(SingularIntegralConfig::default());
        let out = op.apply(&GridFunction::constant(g, 2.0), 1.5).unwrap();
        assert!(out.sup_norm() < 1e-12);
    }

    #[test]
    fn sine_has_unit_multiplier() {
        let g = Grid1D::new(-32.0 * PI, 32.0 * PI, 2048).unwrap();
        let f = GridFunction::from_fn(g, |x| x.sin());
        let op = SingularIntegralLaplacian::new(SingularIntegralConfig::default());
        let out = op.apply(&f, 1.5).unwrap();
        assert!(out.max_abs_diff(&f) < 1e-3, "{}", out.max_abs_diff(&f));
    }

    #[test]
    fn gaussian_matches_spectral() {
        let g = Grid1D::standard();
        let f = GridFunction::from_fn(g, |x| (-x * x).exp());
        let op = SingularIntegralLaplacian::new(SingularIntegralConfig::default());
        let a = op.apply(&f, 1.5).unwrap();
        let b = SpectralLaplacian.apply(&f, 1.5).unwrap();
        assert!(a.max_abs_diff(&b) < 5e-3, "{}", a.max_abs_diff(&b));
    }

    #[test]
    fn config_errors() {
        let g = Grid1D::new(-8.0, 8.0, 64).unwrap();
        let f = GridFunction::constant(g, 1.0);
        let bad = SingularIntegralConfig {
            inner_cutoff: 0.5,
            ..Default::default()
        };
        assert!(matches!(
            SingularIntegralLaplacian::new(bad).apply(&f, 1.5),
            Err(Error::ResolutionError(_))
        ));
        let op = SingularIntegralLaplacian::new(SingularIntegralConfig::default());
        assert!(matches!(op.apply(&f, 2.0), Err(Error::OutOfRange { .. })));
        let far = SingularIntegralConfig {
            outer_radius: Some(9.0),
            ..Default::default()
        };
        assert!(SingularIntegralLaplacian::new(far).apply(&f, 1.5).is_err());
    }
}
