//! Subcommands, one [`Subcommand`] each, looked up by name.

use std::path::{Path, PathBuf};

use fbspde::bspde::{self, SolutionField, SolveOptions};
use fbspde::fraclap;
use fbspde::grid::{io, spectral_derivative, spectral_interpolate, GridFunction};
use fbspde::kernel::{
    grid_mass, semigroup_apply_a, tabulate_g_ts, verify_kernel_bounds, BoundConfig, CoefficientA, KernelParams,
};
use fbspde::levy::stats::{empirical_char_function, ks_critical_one_sample, ks_one_sample};
use fbspde::levy::{sampler_registry, simulate_brownian_path, simulate_levy_path, PathGrid, RngStream};
use fbspde::registry::Registry;
use fbspde::verify::{self, VerifyConfig};
use fbspde::zakai::{
    brute_force_optimal_control, observation_ensemble, solve_zakai, verify_maximum_principle, ControlPolicy,
    MaximumPrincipleOptions,
};
use fbspde::{Error, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{at, KernelMode, LevyEmit, RunConfig};

/// Stream id of observation paths, shared with the acceptance suite.
const OBSERVATION_STREAM: u64 = 13;
const LEVY_STREAM: u64 = 3;
const BSPDE_STREAM: u64 = 0;

pub struct Context<'a> {
    pub config: &'a RunConfig,
    /// Directory that relative paths in the config resolve against.
    pub base: &'a Path,
}

impl Context<'_> {
    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.config.output_dir.clone();
        std::fs::create_dir_all(&dir).map_err(|e| Error::config("output_dir", format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }

    fn output(&self, name: &Path) -> Result<PathBuf> {
        Ok(self.out_dir()?.join(name))
    }

    /// Writes `{command, config, report}` and returns the file path.
    fn write_report(&self, command: &str, report: impl Serialize) -> Result<PathBuf> {
        let doc = json!({
            "command": command,
            "config": self.config.resolved(command)?,
            "report": serde_json::to_value(report)?,
        });
        let path = self.output(Path::new(&format!("{command}.json")))?;
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Outcome of a run: whether every check it performs passed.
pub type Passed = bool;

pub trait Subcommand: Send + Sync {
    fn name(&self) -> &'static str;
    fn run(&self, ctx: &Context) -> Result<Passed>;
}

pub fn registry() -> Registry<dyn Subcommand> {
    let mut r: Registry<dyn Subcommand> = Registry::new("subcommand");
    let all: Vec<Box<dyn Subcommand>> = vec![
        Box::new(Kernel),
        Box::new(Fraclap),
        Box::new(Levy),
        Box::new(SolvePde),
        Box::new(SolveBspde),
        Box::new(Zakai),
        Box::new(Control),
        Box::new(VerifyAll),
    ];
    for c in all {
        r.register(c.name(), c);
    }
    r
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush()?;
    Ok(())
}

struct Kernel;

impl Subcommand for Kernel {
    fn name(&self) -> &'static str {
        "kernel"
    }

    fn run(&self, ctx: &Context) -> Result<Passed> {
        let s = &ctx.config.kernel;
        let grid = s.validate()?;
        let params = KernelParams::new(s.alpha, s.a_ts)?;
        let (g, dg, d2g) = match s.mode {
            KernelMode::Periodic => {
                let zero = (0..grid.n)
                    .find(|&j| grid.x(j).abs() <= 1e-12 * grid.length())
                    .ok_or_else(|| Error::config("kernel.xrange", "x = 0 must be a grid node in periodic mode"))?;
                let mut delta = GridFunction::zeros(grid);
                delta.values[zero] = 1.0 / grid.dx();
                let g = semigroup_apply_a(&delta, s.alpha, s.a_ts)?;
                let dg = spectral_derivative(&g, 1);
                let d2g = spectral_derivative(&g, 2);
                (g, dg, d2g)
            }
            KernelMode::Line => (
                tabulate_g_ts(&grid, &params, 0)?,
                tabulate_g_ts(&grid, &params, 1)?,
                tabulate_g_ts(&grid, &params, 2)?,
            ),
        };
        let csv = ctx.output(Path::new("kernel.csv"))?;
        write_rows(
            &csv,
            &["x", "G", "DG", "D2G"],
            (0..grid.n).map(|j| vec![grid.x(j), g.values[j], dg.values[j], d2g.values[j]]),
        )?;
        let bound_cfg = BoundConfig::new(s.alpha, CoefficientA::constant(1.0));
        let bounds = s
            .bounds
            .iter()
            .map(|&c| verify_kernel_bounds(c, &bound_cfg))
            .collect::<Result<Vec<_>>>()?;
        let passed = bounds.iter().all(|b| b.passed());
        let report = json!({
            "mass": {
                "grid_sum": g.integral(),
                "line": grid_mass(&grid, &params)?,
            },
            "bounds": bounds,
            "passed": passed,
        });
        let path = ctx.write_report(self.name(), report)?;
        println!("kernel: {} rows -> {}, report -> {}", grid.n, csv.display(), path.display());
        Ok(passed)
    }
}

struct Fraclap;

impl Subcommand for Fraclap {
    fn name(&self) -> &'static str {
        "fraclap"
    }

    fn run(&self, ctx: &Context) -> Result<Passed> {
        let s = &ctx.config.fraclap;
        at("fraclap.alpha", fraclap::FracOrder::new(s.alpha))?;
        let input = match &s.input {
            Some(p) => at("fraclap.input", io::load(&ctx.base.join(p)))?,
            None => {
                let grid = s.grid.build("fraclap.grid")?;
                let f = s.field.compile("fraclap.field", ctx.base)?;
                GridFunction::from_fn(grid, |x| f(x))
            }
        };
        let reg = fraclap::registry(s.integral);
        let op = at("fraclap.method", reg.get(&s.method))?;
        let out = at("fraclap.integral", op.apply(&input, s.alpha))?;
        let csv = ctx.output(&s.output)?;
        io::save(&out, &csv)?;
        let report = json!({
            "method": op.name(),
            "grid": out.grid,
            "sup_norm": out.sup_norm(),
            "integral": out.integral(),
            "output": csv.display().to_string(),
        });
        let path = ctx.write_report(self.name(), report)?;
        println!("fraclap: {} -> {}, report -> {}", op.name(), csv.display(), path.display());
        Ok(true)
    }
}

struct Levy;

impl Subcommand for Levy {
    fn name(&self) -> &'static str {
        "levy"
    }

    fn run(&self, ctx: &Context) -> Result<Passed> {
        let s = &ctx.config.levy;
        s.validate()?;
        let reg = sampler_registry();
        let sampler = at("levy.sampler", reg.get(&s.sampler))?;
        let grid = PathGrid::new(0.0, s.horizon, s.steps)?;
        let stream = RngStream::new(ctx.config.seed, LEVY_STREAM);
        let paths = (0..s.paths)
            .into_par_iter()
            .map(|k| simulate_levy_path(s.alpha, &grid, sampler, stream.child(k as u64)))
            .collect::<Result<Vec<_>>>()?;
        let values: Vec<Vec<f64>> = paths.iter().map(|p| p.values()).collect();
        let terminal: Vec<f64> = values.iter().map(|v| v[s.steps]).collect();

        let mut written = None;
        if s.emit == LevyEmit::Paths {
            let csv = ctx.output(Path::new("levy_paths.csv"))?;
            let rows = values
                .iter()
                .enumerate()
                .flat_map(|(k, v)| v.iter().enumerate().map(move |(i, x)| vec![k as f64, grid.time(i), *x]));
            write_rows(&csv, &["path", "t", "value"], rows)?;
            written = Some(csv.display().to_string());
        }

        let params = KernelParams::new(s.alpha, s.horizon)?;
        // parameters were validated above, so the cdf cannot fail
        let ks = ks_one_sample(&terminal, |x| fbspde::kernel::kernel_cdf(x, &params).unwrap_or(f64::NAN));
        let char_fn: Vec<Value> = s
            .frequencies
            .iter()
            .map(|&xi| {
                let (re, im) = empirical_char_function(&terminal, xi);
                json!({
                    "xi": xi,
                    "exact": (-s.horizon * xi.abs().powf(s.alpha)).exp(),
                    "re": re.mean,
                    "re_stderr": re.stderr,
                    "im": im.mean,
                    "im_stderr": im.stderr,
                })
            })
            .collect();
        let mut sorted = terminal.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| sorted[((p * (sorted.len() - 1) as f64).round() as usize).min(sorted.len() - 1)];
        let report = json!({
            "sampler": sampler.name(),
            "paths": s.paths,
            "quantiles": {"q05": q(0.05), "q25": q(0.25), "q50": q(0.5), "q75": q(0.75), "q95": q(0.95)},
            "characteristic_function": char_fn,
            "ks_statistic": ks,
            "ks_critical_1pct": ks_critical_one_sample(terminal.len(), 0.01),
            "paths_csv": written,
        });
        let path = ctx.write_report(self.name(), report)?;
        println!("levy: {} paths, KS {ks:.3e}, report -> {}", s.paths, path.display());
        Ok(true)
    }
}

fn probe_values(sol: &SolutionField, probes: &[[f64; 2]], key: &str) -> Result<Vec<Value>> {
    probes
        .iter()
        .enumerate()
        .map(|(i, &[t, x])| {
            let k = at(&format!("{key}.probes[{i}]"), sol.time_index(t))?;
            let mut v = json!({"t": t, "x": x, "u": spectral_interpolate(&sol.u[0][k], x)});
            if let (0, Some((su, _))) = (k, &sol.initial_stderr) {
                v["u_stderr"] = spectral_interpolate(su, x).into();
            }
            Ok(v)
        })
        .collect()
}

struct SolvePde;

impl Subcommand for SolvePde {
    fn name(&self) -> &'static str {
        "solve-pde"
    }

    fn run(&self, ctx: &Context) -> Result<Passed> {
        let s = &ctx.config.solve_pde;
        let data = s.data(ctx.base)?;
        let opts = SolveOptions {
            steps: s.steps,
            stability_limit: s.stability_limit,
            seed: ctx.config.seed,
            ..Default::default()
        };
        let reg = bspde::registry();
        let solver = at("solve-pde.solver", reg.get(&s.solver))?;
        let sol = solver.solve(&data, &opts)?;
        let csv = ctx.output(Path::new("solution.csv"))?;
        sol.write_csv(0, &csv)?;
        let comparison = match &s.compare {
            Some(name) => {
                let other = at("solve-pde.compare", reg.get(name))?.solve(&data, &opts)?;
                let diff = sol.u[0]
                    .iter()
                    .zip(&other.u[0])
                    .map(|(a, b)| a.max_abs_diff(b))
                    .fold(0.0, f64::max);
                Some(json!({"solver": name, "max_abs_diff": diff}))
            }
            None => None,
        };
        let report = json!({
            "meta": sol.meta,
            "probes": probe_values(&sol, &s.probes, "solve-pde")?,
            "initial_sup_norm": sol.initial().sup_norm(),
            "comparison": comparison,
            "solution_csv": csv.display().to_string(),
        });
        let path = ctx.write_report(self.name(), report)?;
        println!("solve-pde: {} -> {}, report -> {}", solver.name(), csv.display(), path.display());
        Ok(true)
    }
}

struct SolveBspde;

impl Subcommand for SolveBspde {
    fn name(&self) -> &'static str {
        "solve-bspde"
    }

    fn run(&self, ctx: &Context) -> Result<Passed> {
        let s = &ctx.config.solve_bspde;
        let data = s.data(ctx.base)?;
        let opts = SolveOptions {
            steps: s.steps,
            paths: s.paths,
            basis_degree: s.basis_degree,
            coarse_times: s.coarse_times,
            seed: ctx.config.seed,
            stream_id: BSPDE_STREAM,
            store_paths: s.store_paths.max(1),
            cond_limit: s.cond_limit,
            ..Default::default()
        };
        let reg = bspde::registry();
        let solver = at("solve-bspde.solver", reg.get(&s.solver))?;
        let sol = solver.solve(&data, &opts)?;
        let grid = sol.initial().grid;
        let initial = ctx.output(Path::new("bspde_initial.csv"))?;
        let (u0, v0) = (sol.initial(), &sol.v[0][0]);
        let zeros = GridFunction::zeros(grid);
        let (su, sv) = sol
            .initial_stderr
            .as_ref()
            .map_or((&zeros, &zeros), |(a, b)| (a, b));
        write_rows(
            &initial,
            &["x", "u", "v", "u_stderr", "v_stderr"],
            (0..grid.n).map(|j| vec![grid.x(j), u0.values[j], v0.values[j], su.values[j], sv.values[j]]),
        )?;
        let path0 = ctx.output(Path::new("bspde_path0.csv"))?;
        sol.write_csv(0, &path0)?;
        let report = json!({
            "meta": sol.meta,
            "probes": probe_values(&sol, &s.probes, "solve-bspde")?,
            "diagnostics": sol.diagnostics,
            "initial_csv": initial.display().to_string(),
            "path_csv": path0.display().to_string(),
        });
        let path = ctx.write_report(self.name(), report)?;
        println!("solve-bspde: {} -> {}, report -> {}", solver.name(), initial.display(), path.display());
        Ok(true)
    }
}

struct Zakai;

impl Subcommand for Zakai {
    fn name(&self) -> &'static str {
        "zakai"
    }

    fn run(&self, ctx: &Context) -> Result<Passed> {
        let s = &ctx.config.zakai;
        let problem = s.problem.build("zakai.problem", ctx.base)?;
        if s.policy.is_empty() || s.stride == 0 {
            return Err(Error::config("zakai.policy", "need at least one value and stride >= 1"));
        }
        let policy = ControlPolicy::uniform(problem.horizon, s.policy.clone());
        at("zakai.policy", policy.validate(&problem))?;
        let grid = PathGrid::new(0.0, problem.horizon, problem.steps)?;
        let y = simulate_brownian_path(&grid, RngStream::new(ctx.config.seed, OBSERVATION_STREAM).child(s.path));
        let state = solve_zakai(&problem, &policy, &y)?;
        let csv = ctx.output(Path::new("density.csv"))?;
        let keep: Vec<usize> = (0..state.times.len())
            .filter(|i| i % s.stride == 0 || *i + 1 == state.times.len())
            .collect();
        let g = problem.grid;
        write_rows(
            &csv,
            &["t", "x", "p"],
            keep.iter()
                .flat_map(|&i| (0..g.n).map(move |j| (i, j)))
                .map(|(i, j)| vec![state.times[i], g.x(j), state.p[i].values[j]]),
        )?;
        let masses = state.masses();
        let p_t = state.terminal();
        let mean = GridFunction::from_fn(g, |x| x).inner(p_t) / p_t.integral();
        let report = json!({
            "times": keep.iter().map(|&i| state.times[i]).collect::<Vec<_>>(),
            "masses": keep.iter().map(|&i| masses[i]).collect::<Vec<_>>(),
            "negativity": state.negativity(),
            "terminal_mass": p_t.integral(),
            "terminal_mean": mean,
            "observation_terminal": y.values()[grid.steps],
            "density_csv": csv.display().to_string(),
        });
        let path = ctx.write_report(self.name(), report)?;
        println!("zakai: {} nodes -> {}, report -> {}", keep.len(), csv.display(), path.display());
        Ok(true)
    }
}

struct Control;

impl Subcommand for Control {
    fn name(&self) -> &'static str {
        "control"
    }

    fn run(&self, ctx: &Context) -> Result<Passed> {
        let s = &ctx.config.control;
        let problem = s.problem.build("control.problem", ctx.base)?;
        if s.paths == 0 {
            return Err(Error::config("control.paths", "must be at least 1"));
        }
        let ys = observation_ensemble(&problem, s.paths, RngStream::new(ctx.config.seed, OBSERVATION_STREAM))?;
        let bf = match brute_force_optimal_control(&problem, s.intervals, &ys, s.budget) {
            Err(e @ Error::BudgetExceeded { .. }) => return Err(Error::config("control.budget", e.to_string())),
            r => r?,
        };
        let opts = MaximumPrincipleOptions {
            coarse_level: s.coarse_level,
            sigmas: s.sigmas,
            ..Default::default()
        };
        let mp = match verify_maximum_principle(&problem, &bf.policy, &ys, &opts) {
            // check times must be nodes of the fine and the coarse solver grid
            Err(e @ Error::OutOfRange { .. }) => return Err(Error::config("control.intervals", e.to_string())),
            r => r?,
        };
        let report = json!({
            "policy": bf.policy,
            "cost": bf.cost,
            "evaluated": bf.evaluated,
            "maximum_principle": mp,
            "passed": mp.passed,
        });
        let path = ctx.write_report(self.name(), report)?;
        println!(
            "control: policy {:?}, cost {:.6} +- {:.1e}, maximum principle {}, report -> {}",
            bf.policy.values,
            bf.cost.mean,
            bf.cost.stderr,
            if mp.passed { "holds" } else { "FAILS" },
            path.display()
        );
        Ok(mp.passed)
    }
}

struct VerifyAll;

impl Subcommand for VerifyAll {
    fn name(&self) -> &'static str {
        "verify-all"
    }

    fn run(&self, ctx: &Context) -> Result<Passed> {
        let s = &ctx.config.verify_all;
        let cfg = VerifyConfig {
            seed: ctx.config.seed,
            tier: s.tier,
            only: s.only.clone(),
        };
        let timed = at("verify-all.only", verify::verify_all(&cfg))?;
        print!("{}", timed.table());
        let path = ctx.write_report(self.name(), &timed.report)?;
        println!(
            "verify-all: {} -> {}",
            if timed.report.passed { "all passed" } else { "FAILED" },
            path.display()
        );
        Ok(timed.report.passed)
    }
}
