//! Forward SDE `dX = b dt + a^{1/α} dM` and the Feynman-Kac estimator.

use std::sync::Arc;

use rayon::prelude::*;

use super::{ChambersMallowsStuck, PathGrid, RngStream, StableSampler};
use crate::error::{Error, Result};
use crate::fraclap::FracOrder;
use crate::sum;

/// Coefficient `(t, x) -> value`.
pub type SpaceTimeFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

pub fn space_time(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> SpaceTimeFn {
    Arc::new(f)
}

pub fn constant_field(c: f64) -> SpaceTimeFn {
    Arc::new(move |_, _| c)
}

/// Euler scheme with left-point coefficients:
/// `X_{k+1} = X_k + b(t_k, X_k) dt + a(t_k, X_k)^{1/α} ΔM_k`.
pub fn simulate_forward_sde(
    b: &SpaceTimeFn,
    a: &SpaceTimeFn,
    alpha: f64,
    x0: f64,
    grid: &PathGrid,
    stream: RngStream,
) -> Result<Vec<f64>> {
    FracOrder::new(alpha)?;
    Ok(forward_path(b, a, alpha, x0, grid, &ChambersMallowsStuck, stream))
}

fn forward_path(
    b: &SpaceTimeFn,
    a: &SpaceTimeFn,
    alpha: f64,
    x0: f64,
    grid: &PathGrid,
    sampler: &dyn StableSampler,
    stream: RngStream,
) -> Vec<f64> {
    let mut rng = stream.rng();
    let dt = grid.dt();
    let mut xs = Vec::with_capacity(grid.steps + 1);
    let mut x = x0;
    xs.push(x);
    for k in 0..grid.steps {
        let t = grid.time(k);
        let drift = b(t, x);
        let scale = a(t, x).max(0.0).powf(1.0 / alpha);
        let dm = sampler.sample(alpha, dt, &mut rng);
        x += drift * dt + scale * dm;
        xs.push(x);
    }
    xs
}

/// `X_T` for `paths` independent paths, path `i` on `stream.child(i)`.
pub fn terminal_samples(
    b: &SpaceTimeFn,
    a: &SpaceTimeFn,
    alpha: f64,
    x0: f64,
    grid: &PathGrid,
    paths: usize,
    stream: RngStream,
) -> Result<Vec<f64>> {
    FracOrder::new(alpha)?;
    Ok((0..paths)
        .into_par_iter()
        .map(|i| *forward_path(b, a, alpha, x0, grid, &ChambersMallowsStuck, stream.child(i as u64)).last().unwrap())
        .collect())
}

/// Data of `u(t,x) = E[e^{∫_t^T c} g(X_T) + ∫_t^T e^{∫_t^s c} f ds | X_t = x]`.
#[derive(Clone)]
pub struct FeynmanKac {
    pub alpha: f64,
    pub t_end: f64,
    pub b: SpaceTimeFn,
    pub a: SpaceTimeFn,
    pub c: SpaceTimeFn,
    pub f: SpaceTimeFn,
    pub g: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    /// Time steps over `[t, T]`.
    pub steps: usize,
}

impl FeynmanKac {
    pub fn new(alpha: f64, t_end: f64, g: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        FeynmanKac {
            alpha,
            t_end,
            b: constant_field(0.0),
            a: constant_field(1.0),
            c: constant_field(0.0),
            f: constant_field(0.0),
            g: Arc::new(g),
            steps: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

fn path_functional(p: &FeynmanKac, x: f64, grid: &PathGrid, stream: RngStream) -> f64 {
    let xs = forward_path(&p.b, &p.a, p.alpha, x, grid, &ChambersMallowsStuck, stream);
    let dt = grid.dt();
    // trapezoid in time for both the discount exponent and the running term
    let mut log_disc = 0.0;
    let mut running = 0.0;
    let mut prev_c = (p.c)(grid.time(0), xs[0]);
    let mut prev_f = (p.f)(grid.time(0), xs[0]);
    for k in 1..xs.len() {
        let t = grid.time(k);
        let ck = (p.c)(t, xs[k]);
        let fk = (p.f)(t, xs[k]);
        let next_log = log_disc + 0.5 * dt * (prev_c + ck);
        running += 0.5 * dt * (log_disc.exp() * prev_f + next_log.exp() * fk);
        log_disc = next_log;
        prev_c = ck;
        prev_f = fk;
    }
    log_disc.exp() * (p.g)(xs[xs.len() - 1]) + running
}

/// Monte Carlo value of `u(t, x)`. Paths are simulated in parallel on child
/// streams and reduced in path order, so the result does not depend on the
/// thread count.
pub fn feynman_kac_estimate(
    problem: &FeynmanKac,
    x: f64,
    t: f64,
    paths: usize,
    stream: RngStream,
) -> Result<Estimate> {
    FracOrder::new(problem.alpha)?;
    if paths == 0 {
        return Err(Error::EmptyEnsemble);
    }
    let grid = PathGrid::new(t, problem.t_end, problem.steps)?;
    let values: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|i| path_functional(problem, x, &grid, stream.child(i as u64)))
        .collect();
    let (mean, stderr) = sum::mean_stderr(&values);
    Ok(Estimate {
        mean,
        stderr,
        n: paths,
    })
}
