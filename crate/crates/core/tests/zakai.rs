use std::f64::consts::PI;
use std::sync::Arc;

use fbspde::grid::{Grid1D, GridFunction};
use fbspde::levy::{simulate_brownian_path, PathGrid, RngStream};
use fbspde::zakai::{
    brute_force_optimal_control, control_field, cost_functional, observation_ensemble, solve_zakai,
    verify_maximum_principle, ControlPolicy, ControlProblem,
};

fn target_cost(x: f64) -> f64 {
    1.0 - (-(x - 2.0).powi(2) / 2.0).exp()
}

fn toy(steps: usize) -> ControlProblem {
    let grid = Grid1D::new(-16.0, 16.0, 128).unwrap();
    let p0 = GridFunction::from_fn(grid, |x| (-x * x / 2.0).exp() / (2.0 * PI).sqrt());
    let mut p = ControlProblem::new(1.5, 1.0, p0, vec![-1.0, 0.0, 1.0]);
    p.steps = steps;
    p.k = control_field(|_, _, v| v);
    p.f = control_field(|_, x, v| 0.1 * v * v + target_cost(x));
    p.g = Arc::new(target_cost);
    p.h = Arc::new(|_, x| 0.5 * (-(x - 1.0).powi(2)).exp());
    p
}

#[test]
fn argmin_survives_fresh_noise() {
    let p = toy(12);
    let ys = observation_ensemble(&p, 1500, RngStream::new(21, 0)).unwrap();
    let bf = brute_force_optimal_control(&p, 2, &ys, 256).unwrap();
    let fresh = observation_ensemble(&p, 1500, RngStream::new(22, 0)).unwrap();
    let again = brute_force_optimal_control(&p, 2, &fresh, 256).unwrap();
    let chosen = cost_functional(&p, &bf.policy, &fresh).unwrap();
    let band = 3.0 * (chosen.stderr.powi(2) + again.cost.stderr.powi(2)).sqrt();
    assert!(chosen.mean - again.cost.mean <= band, "{chosen:?} vs {:?}", again.cost);
}

#[test]
fn toy_maximum_principle_small() {
    let p = toy(12);
    let ys = observation_ensemble(&p, 1000, RngStream::new(23, 0)).unwrap();
    let bf = brute_force_optimal_control(&p, 3, &ys, 256).unwrap();
    let rep = verify_maximum_principle(&p, &bf.policy, &ys, &Default::default()).unwrap();
    assert!(rep.passed, "{rep:?}");
    assert_eq!(rep.margins.len(), 12);
}

#[test]
fn filter_stays_positive() {
    let p = toy(24);
    let y = &observation_ensemble(&p, 1, RngStream::new(24, 0)).unwrap()[0];
    let st = solve_zakai(&p, &ControlPolicy::uniform(1.0, vec![1.0, -1.0, 0.0]), y).unwrap();
    assert!(st.negativity() < 1e-6, "{}", st.negativity());
}

/// Self-convergence on a non-commuting case: drift varies in x and the
/// observation function is not constant. Successive differences in RMS
/// over paths.
#[test]
fn splitting_is_first_order() {
    let mut p = toy(8);
    p.k = control_field(|_, x, v| 0.5 * x.sin() + v);
    p.h = Arc::new(|_, x| (-(x - 1.0).powi(2) / 2.0).exp());
    let pol = ControlPolicy::uniform(1.0, vec![1.0, 0.0]);
    let levels = [8, 16, 32, 64, 128, 256];
    let paths = 200;
    let mut strong = vec![0.0; levels.len() - 1];
    for k in 0..paths {
        let y = simulate_brownian_path(&PathGrid::new(0.0, 1.0, 256).unwrap(), RngStream::new(25, 0).child(k));
        let sols: Vec<GridFunction> = levels
            .iter()
            .map(|&s| {
                let mut q = p.clone();
                q.steps = s;
                solve_zakai(&q, &pol, &y).unwrap().terminal().clone()
            })
            .collect();
        for (j, w) in sols.windows(2).enumerate() {
            strong[j] += w[0].max_abs_diff(&w[1]).powi(2) / paths as f64;
        }
    }
    let strong: Vec<f64> = strong.iter().map(|v| v.sqrt()).collect();
    for w in strong.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..2.6).contains(&ratio), "{strong:?}");
    }
}
