//! Periodic uniform grid, grid functions and the dx-weighted discrete Fourier
//! transform.
//!
//! Forward transform: `c_k = dx * sum_j u_j exp(+i xi_k x_j)`, which
//! approximates the continuum transform `int u(x) exp(i xi x) dx`.
//! Inverse: `u_j = (1/L) sum_k c_k exp(-i xi_k x_j)`.

pub mod io;
pub mod norms;

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use norms::{
    embedding_constant, ensemble_holder_norm, ensemble_process_norms, holder_norm,
    holder_seminorm, holder_seminorm_with, norm_report, sobolev_norm, EnsembleNormReport,
    NormReport, PairBudget, ProcessNorms, ProcessSamples, TimeNorm,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub n: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if !(x_min.is_finite() && x_max.is_finite()) || x_max <= x_min {
            return Err(Error::OutOfRange {
                name: "x_max - x_min",
                value: x_max - x_min,
                expected: "finite and > 0",
            });
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::OutOfRange {
                name: "n",
                value: n as f64,
                expected: "a power of two >= 2",
            });
        }
        Ok(Grid1D { x_min, x_max, n })
    }

    /// Symmetric box `[-half_width, half_width)`.
    pub fn centered(half_width: f64, n: usize) -> Result<Self> {
        Self::new(-half_width, half_width, n)
    }

    /// `[-32, 32)` with 2048 points.
    pub fn standard() -> Self {
        Grid1D {
            x_min: -32.0,
            x_max: 32.0,
            n: 2048,
        }
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min + j as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Signed frequency index of storage slot `j`: `0..n/2-1, -n/2..-1`.
    pub fn freq_index(&self, j: usize) -> i64 {
        if j < self.n / 2 {
            j as i64
        } else {
            j as i64 - self.n as i64
        }
    }

    /// Storage slot of signed frequency index `k`.
    pub fn slot(&self, k: i64) -> usize {
        k.rem_euclid(self.n as i64) as usize
    }

    pub fn xi(&self, j: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.freq_index(j) as f64 / self.length()
    }

    pub fn xis(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.xi(j)).collect()
    }

    pub fn nyquist_slot(&self) -> usize {
        self.n / 2
    }

    pub fn check_same(&self, other: &Grid1D) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    /// Same box with `factor` times as many points.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Grid1D::new(self.x_min, self.x_max, self.n * factor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: Grid1D,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.n
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::OutOfRange {
                name: "field value",
                value: *v,
                expected: "finite",
            });
        }
        Ok(GridFunction { grid, values })
    }

    pub fn from_fn(grid: Grid1D, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n).map(|j| f(grid.x(j))).collect();
        GridFunction { grid, values }
    }

    pub fn zeros(grid: Grid1D) -> Self {
        GridFunction {
            grid,
            values: vec![0.0; grid.n],
        }
    }

    pub fn constant(grid: Grid1D, c: f64) -> Self {
        GridFunction {
            grid,
            values: vec![c; grid.n],
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(dx sum u^2)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        let sq: Vec<f64> = self.values.iter().map(|v| v * v).collect();
        (self.grid.dx() * crate::sum::pairwise(&sq)).sqrt()
    }

    /// Periodic rectangle rule, `dx sum u`.
    pub fn integral(&self) -> f64 {
        self.grid.dx() * crate::sum::pairwise(&self.values)
    }

    /// `dx sum u v`.
    pub fn inner(&self, other: &GridFunction) -> f64 {
        let prod: Vec<f64> = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .collect();
        self.grid.dx() * crate::sum::pairwise(&prod)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(x, y)| a * x + b * y)
                .collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Cyclic shift by `m` cells: `out[j] = in[j - m]`.
    pub fn shifted(&self, m: i64) -> GridFunction {
        let n = self.grid.n as i64;
        let values = (0..n)
            .map(|j| self.values[(j - m).rem_euclid(n) as usize])
            .collect();
        GridFunction {
            grid: self.grid,
            values,
        }
    }

    /// Reflection `x -> -x` on a symmetric grid: `out[j] = in[(n - j) mod n]`.
    pub fn reflected(&self) -> GridFunction {
        let n = self.grid.n;
        let values = (0..n).map(|j| self.values[(n - j) % n]).collect();
        GridFunction {
            grid: self.grid,
            values,
        }
    }
}

/// Spectral coefficients in FFT storage order (see [`Grid1D::freq_index`]).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    pub grid: Grid1D,
    pub coeffs: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn zeros(grid: Grid1D) -> Self {
        SpectralCoeffs {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.n],
        }
    }

    pub fn at(&self, k: i64) -> Complex64 {
        self.coeffs[self.grid.slot(k)]
    }

    pub fn set(&mut self, k: i64, c: Complex64) {
        let s = self.grid.slot(k);
        self.coeffs[s] = c;
    }

    /// `(1/L) sum |c_k|^2`, equal to `dx sum u_j^2` by Parseval.
    pub fn energy(&self) -> f64 {
        let sq: Vec<f64> = self.coeffs.iter().map(|c| c.norm_sqr()).collect();
        crate::sum::pairwise(&sq) / self.grid.length()
    }
}

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<(usize, bool), Arc<dyn Fft<f64>>>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, direction: FftDirection) -> Arc<dyn Fft<f64>> {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        let key = (n, direction == FftDirection::Forward);
        if let Some(plan) = p.1.get(&key) {
            return plan.clone();
        }
        let plan = p.0.plan_fft(n, direction);
        p.1.insert(key, plan.clone());
        plan
    })
}

/// In-place unnormalized FFT with kernel `exp(-2 pi i jk/n)`.
pub(crate) fn fft_forward(buf: &mut [Complex64]) {
    plan(buf.len(), FftDirection::Forward).process(buf);
}

/// In-place unnormalized FFT with kernel `exp(+2 pi i jk/n)`.
pub(crate) fn fft_inverse(buf: &mut [Complex64]) {
    plan(buf.len(), FftDirection::Inverse).process(buf);
}

pub fn dft(f: &GridFunction) -> SpectralCoeffs {
    let g = f.grid;
    let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_inverse(&mut buf);
    let dx = g.dx();
    for (j, c) in buf.iter_mut().enumerate() {
        let phase = g.xi(j) * g.x_min;
        *c *= Complex64::from_polar(dx, phase);
    }
    SpectralCoeffs {
        grid: g,
        coeffs: buf,
    }
}

/// Inverse transform. Imaginary residue up to `1e-10 * max(1, max|u|)` is
/// dropped; larger residue means the input was not conjugate symmetric.
pub fn idft(c: &SpectralCoeffs) -> Result<GridFunction> {
    let g = c.grid;
    let inv_l = 1.0 / g.length();
    let mut buf: Vec<Complex64> = c
        .coeffs
        .iter()
        .enumerate()
        .map(|(j, &ck)| ck * Complex64::from_polar(inv_l, -g.xi(j) * g.x_min))
        .collect();
    fft_forward(&mut buf);
    let scale = buf.iter().fold(1.0_f64, |m, z| m.max(z.re.abs()));
    let residue = buf.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
    if residue > 1e-10 * scale {
        return Err(Error::SymmetryViolation { residue });
    }
    Ok(GridFunction {
        grid: g,
        values: buf.into_iter().map(|z| z.re).collect(),
    })
}

/// Applies a Fourier symbol to a real periodic field.
///
/// `symbol(xi)` acts on the mode `exp(i xi x)` (so `d/dx` has symbol `i xi`).
/// At the Nyquist slot the real part of the symbol is used, which keeps the
/// output real for symbols with `s(-xi) = conj(s(xi))`.
pub fn apply_symbol(values: &[f64], grid: &Grid1D, symbol: impl Fn(f64) -> Complex64) -> Vec<f64> {
    let n = grid.n;
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut buf);
    let nyq = grid.nyquist_slot();
    for (j, c) in buf.iter_mut().enumerate() {
        let s = symbol(grid.xi(j));
        let s = if j == nyq { Complex64::new(s.re, 0.0) } else { s };
        *c *= s;
    }
    fft_inverse(&mut buf);
    let inv_n = 1.0 / n as f64;
    buf.into_iter().map(|z| z.re * inv_n).collect()
}

/// Same as [`apply_symbol`] for a real, even symbol given per storage slot.
pub fn apply_real_multiplier(values: &[f64], multiplier: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut buf);
    for (c, m) in buf.iter_mut().zip(multiplier) {
        *c *= m;
    }
    fft_inverse(&mut buf);
    let inv_n = 1.0 / n as f64;
    buf.into_iter().map(|z| z.re * inv_n).collect()
}

/// Raw FFT slots of a real field, indexed like [`Grid1D::xi`]. Diagonal
/// operators act on these directly; [`from_modes`] undoes the transform.
pub fn to_modes(values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_forward(&mut buf);
    buf
}

/// Real part of the inverse of [`to_modes`].
pub fn from_modes(mut modes: Vec<Complex64>) -> Vec<f64> {
    let inv_n = 1.0 / modes.len() as f64;
    fft_inverse(&mut modes);
    modes.into_iter().map(|z| z.re * inv_n).collect()
}

/// Spectral derivative of order `k`.
pub fn spectral_derivative(f: &GridFunction, k: u32) -> GridFunction {
    if k == 0 {
        return f.clone();
    }
    let values = apply_symbol(&f.values, &f.grid, |xi| Complex64::new(0.0, xi).powu(k));
    GridFunction {
        grid: f.grid,
        values,
    }
}

/// Trigonometric interpolation of a periodic grid function at an arbitrary
/// point.
pub fn spectral_interpolate(f: &GridFunction, x: f64) -> f64 {
    let g = f.grid;
    let c = dft(f);
    let nyq = g.nyquist_slot();
    let mut acc = Vec::with_capacity(g.n);
    for (j, ck) in c.coeffs.iter().enumerate() {
        let xi = g.xi(j);
        let term = if j == nyq {
            let r = (*ck * Complex64::from_polar(1.0, -xi * g.x_min)).re;
            r * (xi * (x - g.x_min)).cos()
        } else {
            (*ck * Complex64::from_polar(1.0, -xi * x)).re
        };
        acc.push(term);
    }
    crate::sum::pairwise(&acc) / g.length()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn white_noise(grid: Grid1D, seed: u64) -> GridFunction {
        let mut s = seed;
        let values = (0..grid.n)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        GridFunction::new(grid, values).unwrap()
    }

    #[test]
    fn grid_rejects_bad_sizes() {
        assert!(Grid1D::new(0.0, 1.0, 100).is_err());
        assert!(Grid1D::new(1.0, 1.0, 64).is_err());
        assert!(Grid1D::new(0.0, 1.0, 64).is_ok());
    }

    #[test]
    fn frequencies_cover_signed_range() {
        let g = Grid1D::new(0.0, 2.0 * PI, 8).unwrap();
        let ks: Vec<i64> = (0..8).map(|j| g.freq_index(j)).collect();
        assert_eq!(ks, vec![0, 1, 2, 3, -4, -3, -2, -1]);
        assert!((g.xi(1) - 1.0).abs() < 1e-15);
        assert_eq!(g.slot(-4), 4);
    }

    #[test]
    fn constant_has_only_zero_mode() {
        let g = Grid1D::new(-3.0, 5.0, 64).unwrap();
        let c = dft(&GridFunction::constant(g, 2.5));
        assert!((c.at(0).re - 2.5 * g.length()).abs() < 1e-12);
        for j in 1..g.n {
            assert!(c.coeffs[j].norm() < 1e-12);
        }
    }

    #[test]
    fn sine_occupies_one_conjugate_pair() {
        let g = Grid1D::new(0.0, 2.0 * PI, 32).unwrap();
        let c = dft(&GridFunction::from_fn(g, |x| (x).sin()));
        for j in 0..g.n {
            let k = g.freq_index(j);
            if k.abs() == 1 {
                assert!((c.coeffs[j].norm() - PI).abs() < 1e-12);
            } else {
                assert!(c.coeffs[j].norm() < 1e-12);
            }
        }
        assert!((c.at(1) - c.at(-1).conj()).norm() < 1e-12);
    }

    #[test]
    fn parseval_against_direct_sum() {
        let g = Grid1D::new(-4.0, 4.0, 256).unwrap();
        let f = white_noise(g, 11);
        let direct: f64 = f.values.iter().map(|v| v * v).sum::<f64>() * g.dx();
        let e = dft(&f).energy();
        assert!((direct - e).abs() <= 1e-12 * direct);
    }

    #[test]
    fn round_trip_white_noise() {
        let g = Grid1D::new(-1.0, 3.0, 512).unwrap();
        let f = white_noise(g, 3);
        let back = idft(&dft(&f)).unwrap();
        assert!(f.max_abs_diff(&back) < 1e-10);
    }

    #[test]
    fn zero_coefficients_give_zero_field() {
        let g = Grid1D::new(0.0, 1.0, 16).unwrap();
        let f = idft(&SpectralCoeffs::zeros(g)).unwrap();
        assert!(f.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_mode_three_is_cosine() {
        let g = Grid1D::new(-2.0, 6.0, 128).unwrap();
        let mut c = SpectralCoeffs::zeros(g);
        // u = (1/L)(c_3 e^{-i xi x} + c_{-3} e^{i xi x}) = cos(xi_3 x) for c = L/2
        c.set(3, Complex64::new(g.length() / 2.0, 0.0));
        c.set(-3, Complex64::new(g.length() / 2.0, 0.0));
        let f = idft(&c).unwrap();
        let xi3 = 2.0 * PI * 3.0 / g.length();
        for (j, v) in f.values.iter().enumerate() {
            assert!((v - (xi3 * g.x(j)).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn asymmetric_coefficients_rejected() {
        let g = Grid1D::new(0.0, 1.0, 16).unwrap();
        let mut c = SpectralCoeffs::zeros(g);
        c.set(2, Complex64::new(1.0, 0.0));
        assert!(matches!(idft(&c), Err(Error::SymmetryViolation { .. })));
    }

    #[test]
    fn spectral_derivative_of_sine() {
        let g = Grid1D::new(0.0, 2.0 * PI, 64).unwrap();
        let f = GridFunction::from_fn(g, |x| (2.0 * x).sin());
        let d = spectral_derivative(&f, 1);
        let exact = GridFunction::from_fn(g, |x| 2.0 * (2.0 * x).cos());
        assert!(d.max_abs_diff(&exact) < 1e-12);
        let d3 = spectral_derivative(&f, 3);
        let exact3 = GridFunction::from_fn(g, |x| -8.0 * (2.0 * x).cos());
        assert!(d3.max_abs_diff(&exact3) < 1e-9);
    }

    #[test]
    fn interpolation_reproduces_trig_polynomial() {
        let g = Grid1D::new(-PI, PI, 32).unwrap();
        let f = GridFunction::from_fn(g, |x| 1.0 + (3.0 * x).cos() - 0.5 * (x).sin());
        for &x in &[0.123_f64, -2.9, 1.7] {
            let exact = 1.0 + (3.0 * x).cos() - 0.5 * x.sin();
            assert!((spectral_interpolate(&f, x) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_and_reflect() {
        let g = Grid1D::new(-1.0, 1.0, 8).unwrap();
        let f = GridFunction::new(g, (0..8).map(|v| v as f64).collect()).unwrap();
        assert_eq!(f.shifted(1).values[0], 7.0);
        assert_eq!(f.reflected().values, vec![0.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
    }
}
