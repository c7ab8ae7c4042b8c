//! Symmetric α-stable and Brownian increments with reproducible,
//! splittable random streams.

pub mod sde;
pub mod stats;

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fraclap::{c_alpha, FracOrder};
use crate::registry::Registry;

pub use sde::{feynman_kac_estimate, simulate_forward_sde, Estimate, FeynmanKac};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Identity of a random stream: identical `(seed, stream_id)` pairs give
/// bit-identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Stream derived from this one by an index (path number, purpose tag).
    pub fn child(&self, index: u64) -> RngStream {
        RngStream {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(index.wrapping_add(0x5151_5151))),
        }
    }

    /// ChaCha20 keyed by the seed, positioned on this stream at counter 0.
    pub fn rng(&self) -> ChaCha20Rng {
        let mut r = ChaCha20Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream_id);
        r.set_word_pos(0);
        r
    }
}

/// Uniform time grid `t0 + k dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub t0: f64,
    pub t_end: f64,
    pub steps: usize,
}

impl PathGrid {
    pub fn new(t0: f64, t_end: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::OutOfRange {
                name: "steps",
                value: 0.0,
                expected: ">= 1",
            });
        }
        if !(t_end > t0) {
            return Err(Error::OrderViolation { s: t0, t: t_end });
        }
        Ok(PathGrid { t0, t_end, steps })
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t_end
        } else {
            self.t0 + k as f64 * self.dt()
        }
    }
}

fn cumulative(start: f64, increments: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut x = start;
    out.push(x);
    for d in increments {
        x += d;
        out.push(x);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevyPath {
    pub grid: PathGrid,
    pub alpha: f64,
    pub increments: Vec<f64>,
}

impl LevyPath {
    /// `M_{t_k}`, `k = 0..=N`, starting from 0.
    pub fn values(&self) -> Vec<f64> {
        cumulative(0.0, &self.increments)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub grid: PathGrid,
    pub increments: Vec<f64>,
}

impl BrownianPath {
    pub fn values(&self) -> Vec<f64> {
        cumulative(0.0, &self.increments)
    }

    /// `W_t` at an arbitrary time by linear interpolation between grid nodes.
    pub fn value_at(&self, t: f64) -> f64 {
        let w = self.values();
        let dt = self.grid.dt();
        let s = ((t - self.grid.t0) / dt).clamp(0.0, self.grid.steps as f64);
        let k = (s.floor() as usize).min(self.grid.steps - 1);
        let th = s - k as f64;
        w[k] + th * (w[k + 1] - w[k])
    }
}

/// Sampler for increments of the symmetric α-stable process with
/// `E e^{iξ M_t} = e^{-t|ξ|^α}`.
pub trait StableSampler: Send + Sync {
    fn name(&self) -> &'static str;
    fn sample(&self, alpha: f64, dt: f64, rng: &mut ChaCha20Rng) -> f64;
}

/// Chambers-Mallows-Stuck transform (exact in law).
#[derive(Debug, Clone, Copy, Default)]
pub struct ChambersMallowsStuck;

impl StableSampler for ChambersMallowsStuck {
    fn name(&self) -> &'static str {
        "cms"
    }

    fn sample(&self, alpha: f64, dt: f64, rng: &mut ChaCha20Rng) -> f64 {
        if alpha == 2.0 {
            let z: f64 = StandardNormal.sample(rng);
            return (2.0 * dt).sqrt() * z;
        }
        // open interval (-π/2, π/2)
        let v = PI * (rng.random::<f64>() - 0.5);
        let v = if v <= -0.5 * PI { -0.5 * PI + 1e-300 } else { v };
        let w: f64 = Exp1.sample(rng);
        let s = (alpha * v).sin() / v.cos().powf(1.0 / alpha)
            * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha);
        dt.powf(1.0 / alpha) * s
    }
}

/// Compound-Poisson cross-check: jumps with `|x| >= eps` from the Lévy
/// measure `|C_α| |x|^{-1-α} dx`, small jumps replaced by a Gaussian of the
/// same variance.
#[derive(Debug, Clone, Copy)]
pub struct PoissonSeries {
    /// Jump threshold relative to the step scale `dt^{1/α}`.
    pub threshold: f64,
}

impl Default for PoissonSeries {
    fn default() -> Self {
        PoissonSeries { threshold: 0.05 }
    }
}

impl StableSampler for PoissonSeries {
    fn name(&self) -> &'static str {
        "poisson"
    }

    fn sample(&self, alpha: f64, dt: f64, rng: &mut ChaCha20Rng) -> f64 {
        if alpha >= 2.0 {
            let z: f64 = StandardNormal.sample(rng);
            return (2.0 * dt).sqrt() * z;
        }
        let c = c_alpha(alpha).unwrap_or(0.0);
        let eps = self.threshold * dt.powf(1.0 / alpha);
        let rate = dt * 2.0 * c * eps.powf(-alpha) / alpha;
        let small_var = dt * 2.0 * c * eps.powf(2.0 - alpha) / (2.0 - alpha);
        let z: f64 = StandardNormal.sample(rng);
        let mut x = small_var.sqrt() * z;
        let count = if rate > 0.0 {
            Poisson::new(rate).map(|p| p.sample(rng)).unwrap_or(0.0) as u64
        } else {
            0
        };
        for _ in 0..count {
            let u: f64 = 1.0 - rng.random::<f64>();
            let size = eps * u.powf(-1.0 / alpha);
            x += if rng.random::<bool>() { size } else { -size };
        }
        x
    }
}

pub fn sampler_registry() -> Registry<dyn StableSampler> {
    let mut r: Registry<dyn StableSampler> = Registry::new("stable sampler");
    r.register("cms", Box::new(ChambersMallowsStuck));
    r.register("poisson", Box::new(PoissonSeries::default()));
    r
}

/// One increment `dt^{1/α} S`.
pub fn sample_stable(alpha: f64, dt: f64, rng: &mut ChaCha20Rng) -> Result<f64> {
    FracOrder::new(alpha)?;
    if !(dt > 0.0) {
        return Err(Error::OutOfRange {
            name: "dt",
            value: dt,
            expected: "> 0",
        });
    }
    Ok(ChambersMallowsStuck.sample(alpha, dt, rng))
}

pub fn simulate_levy_path(
    alpha: f64,
    grid: &PathGrid,
    sampler: &dyn StableSampler,
    stream: RngStream,
) -> Result<LevyPath> {
    FracOrder::new(alpha)?;
    let mut rng = stream.rng();
    let dt = grid.dt();
    let increments = (0..grid.steps).map(|_| sampler.sample(alpha, dt, &mut rng)).collect();
    Ok(LevyPath {
        grid: *grid,
        alpha,
        increments,
    })
}

pub fn simulate_brownian_path(grid: &PathGrid, stream: RngStream) -> BrownianPath {
    let mut rng = stream.rng();
    let sd = grid.dt().sqrt();
    let increments = (0..grid.steps)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sd * z
        })
        .collect();
    BrownianPath {
        grid: *grid,
        increments,
    }
}
