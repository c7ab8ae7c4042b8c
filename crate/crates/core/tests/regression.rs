use std::sync::Arc;

use fbspde::bspde::{
    linear_gaussian_form, solve_bspde_regression, solve_fourier_deterministic, spatial, BSPDEData, PathFunctional,
    RandomFieldSpec, SolveOptions, Source, Terminal, WTime,
};
use fbspde::grid::{Grid1D, GridFunction};
use fbspde::levy::sde::space_time;
use fbspde::Error;

fn grid() -> Grid1D {
    Grid1D::centered(8.0, 128).unwrap()
}

fn deterministic() -> BSPDEData {
    let mut d = BSPDEData::new(1.5, 1.0, grid(), Terminal::Field(spatial(|x| (-x * x).exp())));
    d.f = Source::Field(space_time(|t, x| (1.0 + t) * (-0.5 * x * x).exp()));
    d
}

fn opts(paths: usize) -> SolveOptions {
    SolveOptions {
        steps: 20,
        paths,
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn deterministic_data_collapse_to_fourier() {
    let d = deterministic();
    let r = solve_bspde_regression(&d, &opts(500)).unwrap();
    let f = solve_fourier_deterministic(&d, &opts(1)).unwrap();
    let err = r.initial().max_abs_diff(f.initial());
    assert!(err < 1e-6, "{err}");
    for i in 0..r.times.len() {
        assert!(r.u[0][i].max_abs_diff(&f.u[0][i]) < 1e-6);
    }
}

#[test]
fn deterministic_data_give_no_martingale_part() {
    let d = deterministic();
    let r = solve_bspde_regression(&d, &opts(10_000)).unwrap();
    let (_, se_v) = r.initial_stderr.as_ref().unwrap();
    let v0 = &r.v[0][0];
    assert!(v0.sup_norm() < 3.0 * se_v.sup_norm(), "{} vs {}", v0.sup_norm(), se_v.sup_norm());
}

#[test]
fn linear_gaussian_terminal() {
    let phi = GridFunction::from_fn(grid(), |x| (-x * x).exp());
    let (c0, c1) = (1.0, 0.8);
    let spec = RandomFieldSpec::new(vec![
        (phi.scaled(c0), PathFunctional::Constant),
        (phi.scaled(c1), PathFunctional::Linear(WTime::Terminal)),
    ]);
    let mut d = BSPDEData::new(1.5, 1.0, grid(), Terminal::Random(spec));
    d.f = Source::Field(space_time(|t, x| t * (-0.5 * x * x).exp()));
    let o = opts(10_000);
    let r = solve_bspde_regression(&d, &o).unwrap();
    let exact = linear_gaussian_form(&d, &o).unwrap();
    let (se_u, se_v) = r.initial_stderr.clone().unwrap();
    for j in 0..grid().n {
        let du = (r.u[0][0].values[j] - exact.base[0].values[j]).abs();
        let dv = (r.v[0][0].values[j] - exact.sensitivity[0].values[j]).abs();
        assert!(du <= 3.0 * se_u.values[j] + 1e-12, "u at {j}: {du} vs {}", se_u.values[j]);
        assert!(dv <= 3.0 * se_v.values[j] + 1e-12, "v at {j}: {dv} vs {}", se_v.values[j]);
    }
    // terminal value pathwise
    let diag = r.diagnostics.as_ref().unwrap();
    assert!(diag.condition.iter().all(|c| c.is_finite()));
}

#[test]
fn constant_sigma_leaves_deterministic_solution() {
    // The σ v̂ term only feeds regression noise into u; across independent
    // replications its effect averages out.
    let d = deterministic();
    let base = solve_bspde_regression(&d, &opts(100)).unwrap();
    let mut ds = d.clone();
    ds.sigma = Arc::new(|_| 0.5);
    let centre = grid().n / 2;
    let diffs: Vec<f64> = (0..12)
        .map(|seed| {
            let o = SolveOptions { seed, ..opts(2000) };
            let r = solve_bspde_regression(&ds, &o).unwrap();
            r.initial().values[centre] - base.initial().values[centre]
        })
        .collect();
    let (m, se) = fbspde::sum::mean_stderr(&diffs);
    assert!(m.abs() <= 3.0 * se, "{m} ± {se}");
    assert!(se < 1e-2 * base.initial().values[centre]);
}

#[test]
fn too_few_paths_are_ill_conditioned() {
    let phi = GridFunction::from_fn(grid(), |x| (-x * x).exp());
    let spec = RandomFieldSpec::new(vec![(phi, PathFunctional::Quadratic(WTime::Terminal, WTime::Terminal))]);
    let d = BSPDEData::new(1.5, 1.0, grid(), Terminal::Random(spec));
    let o = SolveOptions {
        coarse_times: 8,
        ..opts(12)
    };
    assert!(matches!(solve_bspde_regression(&d, &o), Err(Error::IllConditioned { .. })));
}
