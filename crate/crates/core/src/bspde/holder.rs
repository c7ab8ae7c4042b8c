//! Ratio `LHS / RHS` of the a priori Hölder estimate
//! `||u||_{α+β,L²} + ||u||_{β,S²} + ||v||_{β,L²} <= C (||g||_{α/2+β,L²} + ||f||_{β,L²})`
//! on solver output, and its stability under refinement.

use std::sync::Arc;

use serde::Serialize;

use super::{linear_gaussian_form, BSPDEData, RandomFieldSpec, SolveOptions, Source, SpatialFn, Terminal, WTime};
use crate::bspde::PathFunctional;
use crate::error::Result;
use crate::grid::{ensemble_holder_norm, Grid1D, GridFunction, PairBudget, ProcessSamples, TimeNorm};
use crate::kernel::CoefficientA;
use crate::levy::sde::SpaceTimeFn;
use crate::levy::{simulate_brownian_path, PathGrid, RngStream};

/// `f(t, x)` and `g = g0 + g1 W_T`.
#[derive(Clone)]
pub struct HolderInstance {
    pub f: SpaceTimeFn,
    pub g0: SpatialFn,
    pub g1: Option<SpatialFn>,
}

/// Everything but the data.
#[derive(Clone)]
pub struct HolderSetup {
    pub alpha: f64,
    pub beta: f64,
    pub horizon: f64,
    pub a: CoefficientA,
    pub grid: Grid1D,
    pub steps: usize,
    pub paths: usize,
    pub stream: RngStream,
    /// Relative change of the max ratio allowed under refinement.
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioReport {
    /// Per instance; `None` when both sides vanish.
    pub ratios: Vec<Option<f64>>,
    pub refined_ratios: Vec<Option<f64>>,
    pub max_ratio: Option<f64>,
    pub refined_max_ratio: Option<f64>,
    pub relative_change: Option<f64>,
    pub finite: bool,
    pub stable: bool,
}

impl RatioReport {
    pub fn passed(&self) -> bool {
        self.finite && self.stable
    }
}

fn instance_ratio(setup: &HolderSetup, inst: &HolderInstance, grid: Grid1D, steps: usize, fine: usize) -> Result<Option<f64>> {
    let phi0 = GridFunction::from_fn(grid, |x| (inst.g0)(x));
    let mut terms = vec![(phi0.clone(), PathFunctional::Constant)];
    let phi1 = inst.g1.as_ref().map(|g1| GridFunction::from_fn(grid, |x| g1(x)));
    if let Some(p1) = &phi1 {
        terms.push((p1.clone(), PathFunctional::Linear(WTime::Terminal)));
    }
    let mut data = BSPDEData::new(setup.alpha, setup.horizon, grid, Terminal::Random(RandomFieldSpec::new(terms)));
    data.a = super::Diffusion::Time(setup.a.clone());
    data.beta = setup.beta;
    data.f = Source::Field(inst.f.clone());
    let opts = SolveOptions {
        steps,
        ..Default::default()
    };
    let form = linear_gaussian_form(&data, &opts)?;
    let times = form.times.clone();
    let n_paths = if phi1.is_some() { setup.paths } else { 1 };

    // Brownian values at this level's nodes, from a path on the finest grid
    let stride = fine / steps;
    let pg = PathGrid::new(0.0, setup.horizon, fine)?;
    let w_nodes: Vec<Vec<f64>> = (0..n_paths)
        .map(|p| {
            let w = simulate_brownian_path(&pg, setup.stream.child(p as u64)).values();
            (0..=steps).map(|i| w[i * stride]).collect()
        })
        .collect();

    let u_snaps: Vec<Vec<GridFunction>> = w_nodes
        .iter()
        .map(|w| (0..times.len()).map(|i| form.u(i, w[i])).collect())
        .collect();
    let v_snaps: Vec<Vec<GridFunction>> = (0..n_paths).map(|_| form.sensitivity.clone()).collect();
    let g_snaps: Vec<Vec<GridFunction>> = w_nodes
        .iter()
        .map(|w| vec![form.phi0.combine(1.0, &form.phi1, w[steps])])
        .collect();
    let f_row: Vec<GridFunction> = times.iter().map(|&t| data.source_field(t)).collect::<Result<_>>()?;

    let u = ProcessSamples::from_snapshots(times.clone(), &transpose(u_snaps))?;
    let v = ProcessSamples::from_snapshots(times.clone(), &transpose(v_snaps))?;
    let g = ProcessSamples::from_snapshots(vec![setup.horizon], &transpose(g_snaps))?;
    let f = ProcessSamples::replicated(times, &f_row, 1)?;

    let (alpha, beta) = (setup.alpha, setup.beta);
    let budget = PairBudget::Auto;
    let lhs = ensemble_holder_norm(&u, alpha + beta, TimeNorm::L2, budget)?
        + ensemble_holder_norm(&u, beta, TimeNorm::Sup, budget)?
        + ensemble_holder_norm(&v, beta, TimeNorm::L2, budget)?;
    // a single time node: the Sup norm is the L²(Ω) norm of g
    let rhs = ensemble_holder_norm(&g, 0.5 * alpha + beta, TimeNorm::Sup, budget)?
        + ensemble_holder_norm(&f, beta, TimeNorm::L2, budget)?;
    Ok(if rhs == 0.0 && lhs == 0.0 { None } else { Some(lhs / rhs) })
}

/// `[path][time] -> [time][path]`.
fn transpose(s: Vec<Vec<GridFunction>>) -> Vec<Vec<GridFunction>> {
    let n_t = s[0].len();
    (0..n_t).map(|t| s.iter().map(|row| row[t].clone()).collect()).collect()
}

fn max_of(r: &[Option<f64>]) -> Option<f64> {
    r.iter().flatten().copied().reduce(f64::max)
}

/// Ratios on the base level and on the level with both the space and time
/// steps halved. Brownian paths are drawn on the finer time grid and
/// subsampled, so both levels see the same noise.
pub fn verify_holder_estimate(setup: &HolderSetup, instances: &[HolderInstance]) -> Result<RatioReport> {
    use rayon::prelude::*;
    let fine_grid = setup.grid.refined(2)?;
    let fine_steps = 2 * setup.steps;
    let ratios: Vec<Option<f64>> = instances
        .par_iter()
        .map(|inst| instance_ratio(setup, inst, setup.grid, setup.steps, fine_steps))
        .collect::<Result<_>>()?;
    let refined_ratios: Vec<Option<f64>> = instances
        .par_iter()
        .map(|inst| instance_ratio(setup, inst, fine_grid, fine_steps, fine_steps))
        .collect::<Result<_>>()?;
    let max_ratio = max_of(&ratios);
    let refined_max_ratio = max_of(&refined_ratios);
    let finite = ratios.iter().chain(&refined_ratios).flatten().all(|r| r.is_finite());
    let relative_change = match (max_ratio, refined_max_ratio) {
        (Some(a), Some(b)) => Some((b - a).abs() / a.abs()),
        _ => None,
    };
    let stable = relative_change.is_some_and(|c| c < setup.tolerance);
    Ok(RatioReport {
        ratios,
        refined_ratios,
        max_ratio,
        refined_max_ratio,
        relative_change,
        finite,
        stable,
    })
}

impl HolderInstance {
    pub fn deterministic(f: SpaceTimeFn, g: SpatialFn) -> Self {
        HolderInstance { f, g0: g, g1: None }
    }

    pub fn scaled(&self, c: f64) -> Self {
        let (f, g0) = (self.f.clone(), self.g0.clone());
        HolderInstance {
            f: Arc::new(move |t, x| c * f(t, x)),
            g0: Arc::new(move |x| c * g0(x)),
            g1: self.g1.clone().map(|g1| Arc::new(move |x| c * g1(x)) as SpatialFn),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspde::spatial;
    use crate::levy::sde::{constant_field, space_time};

    fn setup() -> HolderSetup {
        HolderSetup {
            alpha: 1.5,
            beta: 0.75,
            horizon: 1.0,
            a: CoefficientA::constant(1.0),
            grid: Grid1D::centered(16.0, 256).unwrap(),
            steps: 10,
            paths: 8,
            stream: RngStream::new(9, 0),
            tolerance: 0.1,
        }
    }

    #[test]
    fn single_mode_matches_closed_form_process() {
        let s = setup();
        let grid = Grid1D::new(-4.0 * std::f64::consts::PI, 4.0 * std::f64::consts::PI, 128).unwrap();
        let inst = HolderInstance::deterministic(constant_field(0.0), spatial(|x| (2.0 * x).sin()));
        let r = instance_ratio(&s, &inst, grid, 10, 20).unwrap().unwrap();
        let times = super::super::time_nodes(1.0, 10);
        let snaps: Vec<Vec<GridFunction>> = times
            .iter()
            .map(|t| {
                let d = (-(1.0 - t) * 2f64.powf(1.5)).exp();
                vec![GridFunction::from_fn(grid, |x| d * (2.0 * x).sin())]
            })
            .collect();
        let u = ProcessSamples::from_snapshots(times, &snaps).unwrap();
        let g = GridFunction::from_fn(grid, |x| (2.0 * x).sin());
        let b = PairBudget::Auto;
        let lhs = ensemble_holder_norm(&u, 2.25, TimeNorm::L2, b).unwrap() + ensemble_holder_norm(&u, 0.75, TimeNorm::Sup, b).unwrap();
        let rhs = crate::grid::holder_norm(&g, 1.5, b).unwrap();
        assert!((r - lhs / rhs).abs() < 1e-6 * r, "{r} vs {}", lhs / rhs);
    }

    #[test]
    fn linear_scaling_and_zero_data() {
        let s = setup();
        let inst = HolderInstance {
            f: space_time(|t, x| t * (-x * x).exp()),
            g0: spatial(|x| (-(x - 1.0).powi(2)).exp()),
            g1: Some(spatial(|x| 0.5 * (-x * x / 2.0).exp())),
        };
        let r1 = instance_ratio(&s, &inst, s.grid, 10, 20).unwrap().unwrap();
        let r2 = instance_ratio(&s, &inst.scaled(2.0), s.grid, 10, 20).unwrap().unwrap();
        assert!((r1 - r2).abs() < 1e-12 * r1);
        let zero = HolderInstance::deterministic(constant_field(0.0), spatial(|_| 0.0));
        assert_eq!(instance_ratio(&s, &zero, s.grid, 10, 20).unwrap(), None);
    }

    #[test]
    fn report_is_stable() {
        let s = setup();
        let inst = vec![
            HolderInstance {
                f: space_time(|t, x| (1.0 - t) * (-x * x).exp()),
                g0: spatial(|x| (-(x - 1.0).powi(2)).exp()),
                g1: Some(spatial(|x| 0.5 * (-x * x / 2.0).exp())),
            },
            HolderInstance::deterministic(space_time(|_, x| 0.3 * (-(x + 2.0).powi(2)).exp()), spatial(|x| (-x * x).exp())),
        ];
        let r = verify_holder_estimate(&s, &inst).unwrap();
        assert!(r.passed(), "{r:?}");
    }
}
