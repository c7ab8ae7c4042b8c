//! Discrete Hölder and Sobolev norms, pointwise and for random space-time
//! ensembles.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dft, spectral_derivative, Grid1D, GridFunction};
use crate::error::{Error, Result};

/// Which grid offsets enter the Hölder seminorm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairBudget {
    /// Every offset `1..n-1`.
    Exact,
    /// Offsets `m * 2^j` with `m in 1..=8`.
    Dyadic,
    /// Exact up to 4096 points, dyadic above.
    Auto,
}

pub const EXACT_PAIR_LIMIT: usize = 4096;

pub(crate) fn offsets(n: usize, budget: PairBudget) -> Vec<usize> {
    let exact = match budget {
        PairBudget::Exact => true,
        PairBudget::Dyadic => false,
        PairBudget::Auto => n <= EXACT_PAIR_LIMIT,
    };
    if exact {
        return (1..n).collect();
    }
    let mut out = Vec::new();
    let mut p = 1usize;
    while p < n {
        for m in 1..=8 {
            if m * p < n {
                out.push(m * p);
            }
        }
        p *= 2;
    }
    out.sort_unstable();
    out.dedup();
    out
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent {
            name: "beta",
            value: beta,
            expected: "0 < beta < 1",
        })
    }
}

/// Max over non-wrapping grid pairs of `|f(x)-f(y)| / |x-y|^beta`.
pub fn holder_seminorm(f: &GridFunction, beta: f64) -> Result<f64> {
    holder_seminorm_with(f, beta, PairBudget::Auto)
}

pub fn holder_seminorm_with(f: &GridFunction, beta: f64, budget: PairBudget) -> Result<f64> {
    check_beta(beta)?;
    Ok(seminorm_values(&f.values, f.grid.dx(), beta, budget))
}

fn seminorm_values(v: &[f64], dx: f64, beta: f64, budget: PairBudget) -> f64 {
    offsets(v.len(), budget)
        .par_iter()
        .map(|&d| {
            let mut m = 0.0_f64;
            for i in 0..v.len() - d {
                m = m.max((v[i + d] - v[i]).abs());
            }
            m / (d as f64 * dx).powf(beta)
        })
        .reduce(|| 0.0, f64::max)
}

/// `sqrt((1/L) sum (1 + xi^2)^gamma |c_k|^2)`.
pub fn sobolev_norm(f: &GridFunction, gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidExponent {
            name: "gamma",
            value: gamma,
            expected: "gamma >= 0",
        });
    }
    let c = dft(f);
    let terms: Vec<f64> = c
        .coeffs
        .iter()
        .enumerate()
        .map(|(j, z)| (1.0 + f.grid.xi(j).powi(2)).powf(gamma) * z.norm_sqr())
        .collect();
    Ok((crate::sum::pairwise(&terms) / f.grid.length()).sqrt())
}

/// `sum_{k<=m} sup|D^k f| + [D^m f]_beta` for `order = m + beta`, with
/// spectral derivatives. Integer orders carry no seminorm term.
pub fn holder_norm(f: &GridFunction, order: f64, budget: PairBudget) -> Result<f64> {
    if !(order >= 0.0) || order >= 4.0 {
        return Err(Error::InvalidExponent {
            name: "order",
            value: order,
            expected: "0 <= order < 4",
        });
    }
    let m = order.floor() as u32;
    let beta = order - m as f64;
    let mut total = 0.0;
    let mut top = f.clone();
    for k in 0..=m {
        top = spectral_derivative(f, k);
        total += top.sup_norm();
    }
    if beta > 1e-12 {
        total += seminorm_values(&top.values, f.grid.dx(), beta, budget);
    }
    Ok(total)
}

/// `max(1, L^{beta1 - beta2})`: bounds `||f||_{beta2} <= C ||f||_{beta1}` on a
/// box of length `L` for `beta2 < beta1`.
pub fn embedding_constant(grid: &Grid1D, beta1: f64, beta2: f64) -> f64 {
    grid.length().powf(beta1 - beta2).max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub sup_norm: f64,
    pub beta: f64,
    pub holder_seminorm: f64,
    pub gamma: f64,
    pub sobolev_norm: f64,
}

pub fn norm_report(f: &GridFunction, beta: f64, gamma: f64) -> Result<NormReport> {
    Ok(NormReport {
        sup_norm: f.sup_norm(),
        beta,
        holder_seminorm: holder_seminorm(f, beta)?,
        gamma,
        sobolev_norm: sobolev_norm(f, gamma)?,
    })
}

/// Random space-time field sampled on a common grid, stored
/// `[path][time][x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessSamples {
    pub grid: Grid1D,
    pub times: Vec<f64>,
    pub n_paths: usize,
    pub data: Vec<f64>,
}

impl ProcessSamples {
    pub fn new(grid: Grid1D, times: Vec<f64>, n_paths: usize, data: Vec<f64>) -> Result<Self> {
        if n_paths == 0 || times.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if data.len() != n_paths * times.len() * grid.n {
            return Err(Error::GridMismatch(format!(
                "{} samples for {} paths x {} times x {} points",
                data.len(),
                n_paths,
                times.len(),
                grid.n
            )));
        }
        Ok(ProcessSamples {
            grid,
            times,
            n_paths,
            data,
        })
    }

    /// From snapshots indexed `[time][path]`.
    pub fn from_snapshots(times: Vec<f64>, snaps: &[Vec<GridFunction>]) -> Result<Self> {
        let first = snaps
            .first()
            .and_then(|s| s.first())
            .ok_or(Error::EmptyEnsemble)?;
        let grid = first.grid;
        let n_paths = snaps[0].len();
        if snaps.len() != times.len() {
            return Err(Error::GridMismatch("snapshot count differs from times".into()));
        }
        let mut data = vec![0.0; n_paths * times.len() * grid.n];
        for (i, row) in snaps.iter().enumerate() {
            if row.len() != n_paths {
                return Err(Error::GridMismatch("ragged path count".into()));
            }
            for (p, f) in row.iter().enumerate() {
                grid.check_same(&f.grid)?;
                let off = (p * times.len() + i) * grid.n;
                data[off..off + grid.n].copy_from_slice(&f.values);
            }
        }
        Self::new(grid, times, n_paths, data)
    }

    /// A deterministic field replicated over `n_paths` paths.
    pub fn replicated(times: Vec<f64>, snaps: &[GridFunction], n_paths: usize) -> Result<Self> {
        let rows: Vec<Vec<GridFunction>> = snaps.iter().map(|f| vec![f.clone(); n_paths]).collect();
        Self::from_snapshots(times, &rows)
    }

    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn row(&self, path: usize, time: usize) -> &[f64] {
        let n = self.grid.n;
        let off = (path * self.n_times() + time) * n;
        &self.data[off..off + n]
    }

    /// Applies `D^k` to every snapshot.
    pub fn derivative(&self, k: u32) -> ProcessSamples {
        if k == 0 {
            return self.clone();
        }
        let n = self.grid.n;
        let mut data = self.data.clone();
        data.par_chunks_mut(n).for_each(|chunk| {
            let f = GridFunction {
                grid: self.grid,
                values: chunk.to_vec(),
            };
            chunk.copy_from_slice(&spectral_derivative(&f, k).values);
        });
        ProcessSamples {
            grid: self.grid,
            times: self.times.clone(),
            n_paths: self.n_paths,
            data,
        }
    }

    fn time_weights(&self) -> Vec<f64> {
        let t = &self.times;
        let m = t.len();
        if m == 1 {
            return vec![0.0];
        }
        (0..m)
            .map(|i| {
                let lo = if i == 0 { t[0] } else { t[i - 1] };
                let hi = if i + 1 == m { t[m - 1] } else { t[i + 1] };
                0.5 * (hi - lo)
            })
            .collect()
    }
}

/// Time part of the X-norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TimeNorm {
    /// `E sup_t |.|^2`.
    Sup,
    /// `E int_0^T |.|^2 dt`, trapezoid in time.
    L2,
}

/// Squared X-norm of `phi(x_j + d) - phi(x_j)` (or of `phi(x_j)` when
/// `d == 0`) for each admissible `j`.
fn x_norm_sq(s: &ProcessSamples, d: usize, kind: TimeNorm, w: &[f64]) -> Vec<f64> {
    let n = s.grid.n;
    let len = if d == 0 { n } else { n - d };
    let mut acc = vec![0.0; len];
    let mut per_path = vec![0.0_f64; len];
    for p in 0..s.n_paths {
        per_path.iter_mut().for_each(|v| *v = 0.0);
        for (t, wt) in w.iter().enumerate() {
            let r = s.row(p, t);
            for i in 0..len {
                let diff = if d == 0 { r[i] } else { r[i + d] - r[i] };
                let sq = diff * diff;
                match kind {
                    TimeNorm::Sup => per_path[i] = per_path[i].max(sq),
                    TimeNorm::L2 => per_path[i] += wt * sq,
                }
            }
        }
        for i in 0..len {
            acc[i] += per_path[i];
        }
    }
    let inv = 1.0 / s.n_paths as f64;
    acc.iter_mut().for_each(|v| *v *= inv);
    acc
}

fn process_sup(s: &ProcessSamples, kind: TimeNorm, w: &[f64]) -> f64 {
    x_norm_sq(s, 0, kind, w)
        .into_iter()
        .fold(0.0, f64::max)
        .sqrt()
}

fn process_seminorm(s: &ProcessSamples, beta: f64, kind: TimeNorm, w: &[f64], budget: PairBudget) -> f64 {
    let dx = s.grid.dx();
    offsets(s.grid.n, budget)
        .par_iter()
        .map(|&d| {
            let m = x_norm_sq(s, d, kind, w).into_iter().fold(0.0, f64::max);
            m.sqrt() / (d as f64 * dx).powf(beta)
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessNorms {
    /// `sup_x ||phi(x)||_X`.
    pub zero: f64,
    /// `[phi]_{beta,X}`.
    pub seminorm: f64,
    /// `zero + seminorm`.
    pub norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleNormReport {
    pub beta: f64,
    pub s2: ProcessNorms,
    pub l2: ProcessNorms,
}

pub fn ensemble_process_norms(samples: &ProcessSamples, beta: f64) -> Result<EnsembleNormReport> {
    check_beta(beta)?;
    if samples.n_paths == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let w = samples.time_weights();
    let mk = |kind| {
        let zero = process_sup(samples, kind, &w);
        let seminorm = process_seminorm(samples, beta, kind, &w, PairBudget::Auto);
        ProcessNorms {
            zero,
            seminorm,
            norm: zero + seminorm,
        }
    };
    Ok(EnsembleNormReport {
        beta,
        s2: mk(TimeNorm::Sup),
        l2: mk(TimeNorm::L2),
    })
}

/// `||phi||_{m+beta,X} = sum_{k<=m} sup_x ||D^k phi(x)||_X + [D^m phi]_{beta,X}`.
pub fn ensemble_holder_norm(
    samples: &ProcessSamples,
    order: f64,
    kind: TimeNorm,
    budget: PairBudget,
) -> Result<f64> {
    if samples.n_paths == 0 {
        return Err(Error::EmptyEnsemble);
    }
    if !(order >= 0.0) || order >= 4.0 {
        return Err(Error::InvalidExponent {
            name: "order",
            value: order,
            expected: "0 <= order < 4",
        });
    }
    let w = samples.time_weights();
    let m = order.floor() as u32;
    let beta = order - m as f64;
    let mut total = 0.0;
    let mut top = samples.clone();
    for k in 0..=m {
        top = samples.derivative(k);
        total += process_sup(&top, kind, &w);
    }
    if beta > 1e-12 {
        total += process_seminorm(&top, beta, kind, &w, budget);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn brute_force(f: &GridFunction, beta: f64) -> f64 {
        let mut m = 0.0_f64;
        for i in 0..f.grid.n {
            for j in i + 1..f.grid.n {
                let r = (f.values[j] - f.values[i]).abs()
                    / (f.grid.x(j) - f.grid.x(i)).abs().powf(beta);
                m = m.max(r);
            }
        }
        m
    }

    #[test]
    fn constant_seminorm_is_zero() {
        let g = Grid1D::new(0.0, 1.0, 64).unwrap();
        assert_eq!(holder_seminorm(&GridFunction::constant(g, 4.0), 0.5).unwrap(), 0.0);
    }

    #[test]
    fn identity_on_unit_interval() {
        let g = Grid1D::new(0.0, 1.0, 256).unwrap();
        let f = GridFunction::from_fn(g, |x| x);
        let s = holder_seminorm(&f, 0.5).unwrap();
        assert!((s - brute_force(&f, 0.5)).abs() < 1e-14);
        assert!((s - 1.0).abs() < g.dx());
    }

    #[test]
    fn power_cusp() {
        let g = Grid1D::new(-1.0, 1.0, 512).unwrap();
        let beta = 0.4;
        let f = GridFunction::from_fn(g, |x| x.abs().powf(beta));
        let s = holder_seminorm(&f, beta).unwrap();
        assert!((s - brute_force(&f, beta)).abs() < 1e-14);
        assert!((s - 1.0).abs() < 0.02);
    }

    #[test]
    fn invalid_beta() {
        let g = Grid1D::new(0.0, 1.0, 8).unwrap();
        let f = GridFunction::zeros(g);
        assert!(matches!(holder_seminorm(&f, 1.0), Err(Error::InvalidExponent { .. })));
        assert!(matches!(holder_seminorm(&f, 0.0), Err(Error::InvalidExponent { .. })));
        assert!(matches!(sobolev_norm(&f, -0.1), Err(Error::InvalidExponent { .. })));
    }

    #[test]
    fn dyadic_offsets_shape() {
        let o = offsets(64, PairBudget::Dyadic);
        assert_eq!(&o[..8], &[1, 2, 3, 4, 5, 6, 7, 8]);
        assert!(o.contains(&40) && o.contains(&56) && !o.contains(&9));
        assert_eq!(offsets(8, PairBudget::Exact), vec![1, 2, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn sobolev_gamma_zero_is_l2() {
        let g = Grid1D::new(-3.0, 3.0, 128).unwrap();
        let f = GridFunction::from_fn(g, |x| (-x * x).exp() * (1.0 + x));
        let s = sobolev_norm(&f, 0.0).unwrap();
        assert!((s - f.l2_norm()).abs() < 1e-12 * s);
    }

    #[test]
    fn sobolev_single_mode() {
        let g = Grid1D::new(0.0, 2.0 * PI, 64).unwrap();
        let f = GridFunction::from_fn(g, |x| (3.0 * x).sin());
        let s = sobolev_norm(&f, 1.0).unwrap();
        let expect = (1.0 + 9.0_f64).sqrt() * f.l2_norm();
        assert!((s - expect).abs() < 1e-12 * expect);
        assert_eq!(sobolev_norm(&GridFunction::zeros(g), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn holder_norm_of_sine() {
        let g = Grid1D::new(0.0, 2.0 * PI, 256).unwrap();
        let f = GridFunction::from_fn(g, |x| x.sin());
        let n1 = holder_norm(&f, 1.0, PairBudget::Exact).unwrap();
        assert!((n1 - 2.0).abs() < 1e-10);
        let n15 = holder_norm(&f, 1.5, PairBudget::Exact).unwrap();
        assert!(n15 > n1);
    }

    #[test]
    fn replicated_ensemble_equals_deterministic() {
        let g = Grid1D::new(-2.0, 2.0, 64).unwrap();
        let times = vec![0.0, 0.5, 1.0];
        let snaps: Vec<GridFunction> = times
            .iter()
            .map(|t| GridFunction::from_fn(g, |x| (1.0 + t) * (-x * x).exp()))
            .collect();
        let one = ProcessSamples::replicated(times.clone(), &snaps, 1).unwrap();
        let many = ProcessSamples::replicated(times, &snaps, 7).unwrap();
        let a = ensemble_process_norms(&one, 0.5).unwrap();
        let b = ensemble_process_norms(&many, 0.5).unwrap();
        assert!((a.s2.norm - b.s2.norm).abs() < 1e-14 * a.s2.norm);
        assert!((a.l2.norm - b.l2.norm).abs() < 1e-14 * a.l2.norm);
        // sup over t of |u|^2 is attained at t = 1
        assert!((a.s2.zero - 2.0).abs() < 1e-14);
        // deterministic seminorm equals pathwise seminorm of the t = 1 slice
        let direct = holder_seminorm(&snaps[2], 0.5).unwrap();
        assert!((a.s2.seminorm - direct).abs() < 1e-12);
    }

    #[test]
    fn empty_ensemble_rejected() {
        let g = Grid1D::new(0.0, 1.0, 8).unwrap();
        assert!(matches!(
            ProcessSamples::new(g, vec![0.0], 0, vec![]),
            Err(Error::EmptyEnsemble)
        ));
        assert!(matches!(
            ProcessSamples::from_snapshots(vec![], &[]),
            Err(Error::EmptyEnsemble)
        ));
    }
}
